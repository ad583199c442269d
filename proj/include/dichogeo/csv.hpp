#ifndef DICHOGEO_CSV_HPP
#define DICHOGEO_CSV_HPP

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace dichogeo {

/// Header plus rows of raw fields. Quoted fields may hold commas, doubled
/// quotes and newlines; a UTF-8 BOM and CRLF line ends are accepted.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::vector<long> line_of_row;  // 1-based file row, header is row 1

  std::optional<std::size_t> column(const std::string& name) const;
  std::size_t require_column(const std::string& name) const;  // IngestionError when absent
};

/// Every row must have as many fields as the header; blank lines are skipped.
CsvTable read_csv(std::istream& in);
CsvTable read_csv_file(const std::filesystem::path& path);

/// Header line only, for fail-fast column checks.
std::vector<std::string> read_csv_header(const std::filesystem::path& path);

/// Strict number parse: the whole field, surrounding blanks allowed, finite.
std::optional<double> parse_number(const std::string& field);

}  // namespace dichogeo

#endif  // DICHOGEO_CSV_HPP
