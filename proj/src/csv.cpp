#include "dichogeo/csv.hpp"

#include "dichogeo/errors.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <sstream>

namespace dichogeo {

std::optional<std::size_t> CsvTable::column(const std::string& name) const {
  for (std::size_t j = 0; j < header.size(); ++j)
    if (header[j] == name) return j;
  return std::nullopt;
}

std::size_t CsvTable::require_column(const std::string& name) const {
  if (auto j = column(name)) return *j;
  throw IngestionError("missing column", 1, name);
}

namespace {

/// Reads one record; `line` counts every newline consumed, quoted ones too.
bool next_record(std::istream& in, std::vector<std::string>& fields, long& line) {
  fields.clear();
  std::string field;
  bool quoted = false, any = false, was_quoted = false;
  int ch;
  while ((ch = in.get()) != EOF) {
    any = true;
    const char c = static_cast<char>(ch);
    if (quoted) {
      if (c == '"') {
        if (in.peek() == '"') {
          field += '"';
          in.get();
        } else {
          quoted = false;
        }
      } else {
        if (c == '\n') ++line;
        field += c;
      }
      continue;
    }
    if (c == '"' && field.empty() && !was_quoted) {
      quoted = was_quoted = true;
    } else if (c == ',') {
      fields.push_back(std::move(field));
      field.clear();
      was_quoted = false;
    } else if (c == '\n') {
      ++line;
      break;
    } else if (c == '\r') {
      if (in.peek() == '\n') continue;
      ++line;
      break;
    } else {
      if (was_quoted) throw IngestionError("text after closing quote", line);
      field += c;
    }
  }
  if (quoted) throw IngestionError("unterminated quoted field", line);
  if (!any) return false;
  fields.push_back(std::move(field));
  return true;
}

bool blank(const std::vector<std::string>& fields) { return fields.size() == 1 && fields[0].empty(); }

void strip_bom(std::istream& in) {
  char bom[3];
  if (in.read(bom, 3) && bom[0] == '\xEF' && bom[1] == '\xBB' && bom[2] == '\xBF') return;
  in.clear();
  in.seekg(0);
}

}  // namespace

CsvTable read_csv(std::istream& in) {
  strip_bom(in);
  CsvTable t;
  long line = 1;
  std::vector<std::string> fields;
  if (!next_record(in, fields, line) || blank(fields)) throw IngestionError("empty file: no header row", 1);
  t.header = fields;
  for (std::size_t j = 0; j < t.header.size(); ++j) {
    if (t.header[j].empty()) throw IngestionError("empty column name in header", 1);
    for (std::size_t k = 0; k < j; ++k)
      if (t.header[k] == t.header[j]) throw IngestionError("duplicate column in header", 1, t.header[j]);
  }
  for (;;) {
    const long row = line;
    if (!next_record(in, fields, line)) break;
    if (blank(fields)) continue;
    if (fields.size() != t.header.size())
      throw IngestionError("expected " + std::to_string(t.header.size()) + " fields, found " +
                               std::to_string(fields.size()),
                           row);
    t.rows.push_back(fields);
    t.line_of_row.push_back(row);
  }
  return t;
}

CsvTable read_csv_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IngestionError("cannot open " + path.string());
  try {
    return read_csv(in);
  } catch (const IngestionError& e) {
    throw e.prefixed(path.filename().string() + ": ");
  }
}

std::vector<std::string> read_csv_header(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IngestionError("cannot open " + path.string());
  strip_bom(in);
  std::vector<std::string> fields;
  long line = 1;
  if (!next_record(in, fields, line) || blank(fields)) throw IngestionError(path.string() + ": no header row", 1);
  return fields;
}

std::optional<double> parse_number(const std::string& field) {
  std::size_t a = 0, b = field.size();
  while (a < b && (field[a] == ' ' || field[a] == '\t')) ++a;
  while (b > a && (field[b - 1] == ' ' || field[b - 1] == '\t')) --b;
  if (a == b) return std::nullopt;
  if (field[a] == '+' && b - a > 1 && field[a + 1] != '-') ++a;
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(field.data() + a, field.data() + b, v);
  if (ec != std::errc() || ptr != field.data() + b || !std::isfinite(v)) return std::nullopt;
  return v;
}

}  // namespace dichogeo
