#ifndef DICHOGEO_FORMAT_HPP
#define DICHOGEO_FORMAT_HPP

#include <string>

namespace dichogeo {

/// Shortest text that reads back to the same double. Machine CSVs use this.
std::string format_full(double x);

/// 6 significant digits, for reports and tables.
std::string format_report(double x);

/// Quotes a CSV field when it holds a comma, quote or newline.
std::string csv_field(const std::string& s);

}  // namespace dichogeo

#endif  // DICHOGEO_FORMAT_HPP
