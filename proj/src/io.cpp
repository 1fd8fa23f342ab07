#include "nlrank/io.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <vector>

#include "nlrank/errors.hpp"

namespace nlrank {

namespace {

std::string trim(std::string s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

char detect_delimiter(const std::string& header) {
  for (char c : {',', '\t', ';'}) {
    if (header.find(c) != std::string::npos) return c;
  }
  return ',';
}

std::vector<std::string> split(const std::string& line, char delim) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, delim)) cells.push_back(trim(cell));
  if (!line.empty() && line.back() == delim) cells.emplace_back();
  return cells;
}

// Parses "<prefix><k>" with k >= 1; returns 0 otherwise.
int column_index(const std::string& name, char prefix) {
  if (name.size() < 2 || name[0] != prefix) return 0;
  int k = 0;
  const auto* begin = name.data() + 1;
  const auto* end = name.data() + name.size();
  const auto [ptr, ec] = std::from_chars(begin, end, k);
  if (ec != std::errc() || ptr != end || k < 1) return 0;
  return k;
}

std::string format17(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

Dataset parse_csv(std::istream& in, const std::string& source) {
  std::string line;
  int line_no = 0;
  std::string header;
  while (std::getline(in, line)) {
    ++line_no;
    if (!trim(line).empty()) {
      header = line;
      break;
    }
  }
  if (header.empty()) throw SchemaError(source + ": empty file, expected a header with y and x1");
  if (header.size() >= 3 && header.compare(0, 3, "\xEF\xBB\xBF") == 0) header.erase(0, 3);
  const char delim = detect_delimiter(header);
  const std::vector<std::string> names = split(header, delim);

  int y_col = -1;
  std::map<int, int> x_cols, z_cols;
  for (std::size_t c = 0; c < names.size(); ++c) {
    const std::string& nm = names[c];
    const int col = static_cast<int>(c);
    if (nm == "y") {
      if (y_col >= 0) throw SchemaError(source + ": duplicate column 'y'");
      y_col = col;
    } else if (int k = column_index(nm, 'x'); k > 0) {
      if (!x_cols.emplace(k, col).second) throw SchemaError(source + ": duplicate column '" + nm + "'");
    } else if (int k2 = column_index(nm, 'z'); k2 > 0) {
      if (!z_cols.emplace(k2, col).second) throw SchemaError(source + ": duplicate column '" + nm + "'");
    } else {
      throw SchemaError(source + ": unexpected column '" + nm + "' (expected y, x1..xq, z1..zr)");
    }
  }
  std::vector<std::string> missing;
  if (y_col < 0) missing.push_back("y");
  if (x_cols.empty()) missing.push_back("x1");
  const int q = x_cols.empty() ? 0 : x_cols.rbegin()->first;
  const int r = z_cols.empty() ? 0 : z_cols.rbegin()->first;
  for (int k = 1; k < q; ++k) {
    if (!x_cols.count(k)) missing.push_back("x" + std::to_string(k));
  }
  for (int k = 1; k < r; ++k) {
    if (!z_cols.count(k)) missing.push_back("z" + std::to_string(k));
  }
  if (!missing.empty()) {
    std::string list;
    for (const auto& m : missing) list += (list.empty() ? "" : ", ") + m;
    throw SchemaError(source + ": missing columns: " + list);
  }

  std::vector<std::vector<double>> rows;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const std::vector<std::string> cells = split(line, delim);
    if (cells.size() != names.size()) {
      throw ParseError(source + ": line " + std::to_string(line_no) + " has " +
                       std::to_string(cells.size()) + " cells, header has " +
                       std::to_string(names.size()));
    }
    std::vector<double> values(cells.size());
    for (std::size_t c = 0; c < cells.size(); ++c) {
      const std::string& cell = cells[c];
      double v = 0.0;
      const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
      if (cell.empty() || ec != std::errc() || ptr != cell.data() + cell.size() || !std::isfinite(v)) {
        throw ParseError(source + ": line " + std::to_string(line_no) + ", column '" + names[c] +
                         "': " + (cell.empty() ? "missing value" : "not a finite number: '" + cell + "'"));
      }
      values[c] = v;
    }
    rows.push_back(std::move(values));
  }
  if (rows.empty()) throw SchemaError(source + ": no data rows");

  const auto n = static_cast<Eigen::Index>(rows.size());
  Vector y(n);
  Matrix x(n, q);
  Matrix z(n, r);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& row = rows[static_cast<std::size_t>(i)];
    y[i] = row[static_cast<std::size_t>(y_col)];
    for (const auto& [k, col] : x_cols) x(i, k - 1) = row[static_cast<std::size_t>(col)];
    for (const auto& [k, col] : z_cols) z(i, k - 1) = row[static_cast<std::size_t>(col)];
  }
  try {
    return Dataset(std::move(y), std::move(x), r > 0 ? std::optional<Matrix>(std::move(z)) : std::nullopt);
  } catch (const DomainError& e) {
    throw SchemaError(source + ": " + e.what());
  }
}

Dataset load_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw SchemaError("cannot open data file '" + path + "'");
  return parse_csv(in, path);
}

void write_csv(const Dataset& data, std::ostream& out) {
  out << "y";
  for (Eigen::Index k = 0; k < data.q(); ++k) out << ",x" << k + 1;
  for (Eigen::Index k = 0; k < data.r(); ++k) out << ",z" << k + 1;
  out << '\n';
  for (Eigen::Index i = 0; i < data.n(); ++i) {
    out << format17(data.y()[i]);
    for (Eigen::Index k = 0; k < data.q(); ++k) out << ',' << format17(data.x()(i, k));
    for (Eigen::Index k = 0; k < data.r(); ++k) out << ',' << format17(data.z()(i, k));
    out << '\n';
  }
}

void write_csv(const Dataset& data, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw SchemaError("cannot write '" + path + "'");
  write_csv(data, out);
}

double round_output(double value) {
  if (!std::isfinite(value) || value == 0.0) return value;
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.12g", value);
  return std::strtod(buf, nullptr);
}

void write_grid_csv(const RankScoreGrid& grid, std::ostream& out) {
  char buf[32];
  auto put = [&](double v, bool first) {
    std::snprintf(buf, sizeof buf, "%.12g", v);
    if (!first) out << ',';
    out << buf;
  };
  for (Eigen::Index k = 0; k < grid.m(); ++k) put(grid.alphas[k], k == 0);
  out << '\n';
  for (Eigen::Index i = 0; i < grid.n(); ++i) {
    for (Eigen::Index k = 0; k < grid.m(); ++k) put(grid.a(i, k), k == 0);
    out << '\n';
  }
}

}  // namespace nlrank
