#pragma once

#include <string>
#include <vector>

namespace latelab {

// Minimal comma-separated table IO.  Fields are plain (no quoting), the first
// non-comment line is the header, and lines starting with '#' are skipped so
// artifact files can carry provenance comments (seed, version) that a reload
// ignores.
struct CsvTable {
  std::vector<std::string> columns;
  std::vector<std::vector<std::string>> rows;

  std::size_t column_index(const std::string& name) const;  // throws MissingColumn
};

CsvTable read_csv_file(const std::string& path);
CsvTable read_csv_string(const std::string& text);

// comment_lines are emitted verbatim before the header, each prefixed with "# ".
void write_csv_file(const std::string& path, const CsvTable& table,
                    const std::vector<std::string>& comment_lines = {});
std::string write_csv_string(const CsvTable& table,
                             const std::vector<std::string>& comment_lines = {});

// Shortest round-trip decimal form (std::to_chars), so save → load reproduces
// doubles bit for bit.
std::string format_double(double x);
double parse_double(const std::string& s);  // throws NonFiniteValue on garbage

}  // namespace latelab
