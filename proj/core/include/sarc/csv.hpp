#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace sarc {

// RFC 4180 style: comma separated, double quotes escape commas and quotes.
std::vector<std::string> parse_csv_line(const std::string& line);
std::string csv_field(const std::string& value);

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::vector<std::size_t> line_numbers;  // 1-based source line of each row

  // Index of a header column, or npos.
  std::size_t column(const std::string& name) const;
};

// Reads a UTF-8 CSV with a mandatory header row; throws ParseError on ragged rows.
CsvTable read_csv(const std::filesystem::path& path);

}  // namespace sarc
