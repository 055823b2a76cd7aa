#include "latelab/csv.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <system_error>

#include "latelab/errors.hpp"

namespace latelab {

namespace {

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (;;) {
    const std::size_t pos = line.find(',', start);
    if (pos == std::string::npos) {
      out.push_back(line.substr(start));
      break;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
  return out;
}

}  // namespace

std::size_t CsvTable::column_index(const std::string& name) const {
  for (std::size_t j = 0; j < columns.size(); ++j) {
    if (columns[j] == name) return j;
  }
  fail(errc::missing_column, "column '" + name + "' not found");
}

CsvTable read_csv_string(const std::string& text) {
  CsvTable table;
  std::istringstream in(text);
  std::string line;
  bool have_header = false;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line[0] == '#') continue;
    if (!have_header) {
      table.columns = split_fields(line);
      have_header = true;
      continue;
    }
    auto fields = split_fields(line);
    if (fields.size() != table.columns.size()) {
      fail(errc::missing_column,
           "row with " + std::to_string(fields.size()) + " fields, header has " +
               std::to_string(table.columns.size()));
    }
    table.rows.push_back(std::move(fields));
  }
  if (!have_header) fail(errc::missing_column, "no header row found");
  return table;
}

CsvTable read_csv_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(errc::bad_argument, "cannot open '" + path + "' for reading");
  std::ostringstream buf;
  buf << in.rdbuf();
  return read_csv_string(buf.str());
}

std::string write_csv_string(const CsvTable& table,
                             const std::vector<std::string>& comment_lines) {
  std::string out;
  for (const auto& c : comment_lines) {
    out += "# ";
    out += c;
    out += '\n';
  }
  for (std::size_t j = 0; j < table.columns.size(); ++j) {
    if (j) out += ',';
    out += table.columns[j];
  }
  out += '\n';
  for (const auto& row : table.rows) {
    for (std::size_t j = 0; j < row.size(); ++j) {
      if (j) out += ',';
      out += row[j];
    }
    out += '\n';
  }
  return out;
}

void write_csv_file(const std::string& path, const CsvTable& table,
                    const std::vector<std::string>& comment_lines) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(errc::bad_argument, "cannot open '" + path + "' for writing");
  out << write_csv_string(table, comment_lines);
}

std::string format_double(double x) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), x);
  return std::string(buf, res.ptr);
}

double parse_double(const std::string& s) {
  double value = 0.0;
  const char* first = s.data();
  const char* last = s.data() + s.size();
  // Tolerate leading spaces so hand-edited files load.
  while (first < last && (*first == ' ' || *first == '\t')) ++first;
  const auto res = std::from_chars(first, last, value);
  if (res.ec != std::errc() || res.ptr != last) {
    fail(errc::non_finite_value, "cannot parse '" + s + "' as a number");
  }
  return value;
}

}  // namespace latelab
