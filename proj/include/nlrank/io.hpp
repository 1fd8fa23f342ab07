#pragma once

#include <iosfwd>
#include <string>

#include "nlrank/model.hpp"
#include "nlrank/rank_scores.hpp"

namespace nlrank {

// Delimited text with a header naming `y`, `x1..xq` and optionally `z1..zr`.
// Columns may appear in any order; blank lines are skipped. Throws
// ParseError (with line and column) for malformed or missing cells and
// SchemaError listing absent required columns.
Dataset load_csv(const std::string& path);
Dataset parse_csv(std::istream& in, const std::string& source = "<stream>");

// Writes with 17 significant digits so that parse_csv(write_csv(d)) == d.
void write_csv(const Dataset& data, std::ostream& out);
void write_csv(const Dataset& data, const std::string& path);

// First row holds the alpha grid, row i + 1 the scores of observation i.
void write_grid_csv(const RankScoreGrid& grid, std::ostream& out);

// Rounds to the 12 significant digits used in structured output.
double round_output(double value);

}  // namespace nlrank
