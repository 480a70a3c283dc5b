#pragma once

#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace affreal::csv {

/// Shortest text that parses back to the same double.
std::string format_double(double v);

void write_row(std::ostream& out, std::span<const std::string> cells);
void write_row(std::ostream& out, std::span<const double> values);

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;
};

struct TextTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

TextTable read_text_table(std::istream& in);
/// Header plus numeric body; throws ParseError on ragged or non-numeric rows.
Table read_table(std::istream& in);

}  // namespace affreal::csv
