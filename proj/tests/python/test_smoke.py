import json

import numpy as np
import pytest

import nlrank


BOX = (np.array([-5.0, 0.5, 0.2]), np.array([5.0, 5.0, 3.0]))


def exponential_data(n=40, seed=3):
    rng = np.random.default_rng(seed)
    x = rng.uniform(0.0, 4.0, size=(n, 1))
    z = np.where(np.arange(n) < n // 2, 0.5, -0.5).reshape(-1, 1)
    y = 1.0 + 2.0 * np.exp(-x[:, 0]) + 0.5 * rng.standard_normal(n)
    return nlrank.Dataset(y, x, z)


def test_intercept_only_rank_scores_are_hajek_scores():
    y = np.array([0.3, -1.2, 2.5, 0.9, 1.7])
    data = nlrank.Dataset(y, np.zeros((5, 0)))
    model = nlrank.Model("constant", np.array([-10.0]), np.array([10.0]))
    grid = nlrank.rank_score_grid(data, model, 0.05, 11)
    ranks = np.argsort(np.argsort(y)) + 1
    for k, alpha in enumerate(grid.alphas):
        expected = [nlrank.hajek_score(int(r), 5, alpha) for r in ranks]
        assert np.allclose(grid.a[:, k], expected, atol=1e-8)


def test_fit_and_test():
    data = exponential_data()
    model = nlrank.Model("exponential", *BOX)
    fit = nlrank.fit_quantile(data, model, 0.5)
    assert fit.converged
    assert fit.theta_hat.shape == (3,)
    opts = nlrank.TestOptions()
    opts.grid_m = 21
    res = nlrank.statistic_Tn(data, model, nlrank.ScoreFunction.wilcoxon(0.05), opts)
    assert res.df == 1
    assert 0.0 <= res.p_value <= 1.0


def test_errors_map_to_python_exceptions():
    with pytest.raises(ValueError):
        nlrank.Model("exponential", np.array([1.0, 0.0, 0.0]), np.array([0.0, 1.0, 1.0]))
    with pytest.raises(ValueError):
        nlrank.hajek_score(0, 5, 0.5)


def test_cli_entry_point():
    code, out, err = nlrank.run_cli(["hajek", "--hajek-n", "3", "--grid-m", "3"])
    assert code == 0, err
    doc = json.loads(out)
    assert doc["result"]["matrix"][0] == [0.05, 0.5, 0.95]
    code, _, err = nlrank.run_cli(["nonsense"])
    assert code == 2
    assert "unknown command" in err
