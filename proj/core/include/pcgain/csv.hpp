#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace pcgain {

// Raw CSV contents: header plus string fields, before any typing.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::size_t n_rows() const { return rows.size(); }
  std::size_t n_cols() const { return header.size(); }
};

// Parses an RFC-4180-style file: comma separators, optional quoted fields
// with doubled quotes, LF / CRLF line endings. Requires a header row and
// rejects rows whose field count differs from the header's.
CsvTable read_csv(const std::string& path);
CsvTable parse_csv(const std::string& text);

void write_csv(const CsvTable& table, const std::string& path);
std::string csv_to_string(const CsvTable& table);

// Shortest decimal string that round-trips the value exactly.
std::string format_double(double v);

// Strict full-field parse; false when the field is not a complete number.
bool parse_double(const std::string& field, double& out);

}  // namespace pcgain
