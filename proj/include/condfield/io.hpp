#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace condfield::io {

using Json = nlohmann::ordered_json;

/// Number with 17 significant digits; NaN and infinities become null.
std::string format_double(double value);

/// JSON text with every floating-point value written by format_double.
std::string dump_json(const Json& value, int indent = 2);

std::string sha256_hex(std::string_view data);
std::string sha256_file(const std::filesystem::path& path);

/// Writes `text` to `path`, throwing std::runtime_error on failure.
void write_text(const std::filesystem::path& path, std::string_view text);

/// Comma-separated table; doubles are written by format_double (NaN as "nan").
class CsvTable {
 public:
  explicit CsvTable(std::vector<std::string> columns);

  class Row {
   public:
    Row& operator<<(double v);
    Row& operator<<(int v);
    Row& operator<<(long v);
    Row& operator<<(unsigned long v);
    Row& operator<<(unsigned long long v);
    Row& operator<<(const std::string& v);
    Row& operator<<(const char* v) { return *this << std::string(v); }

   private:
    friend class CsvTable;
    std::vector<std::string> cells_;
  };

  Row& row();
  std::string str() const;
  std::size_t rows() const { return rows_.size(); }

 private:
  std::vector<std::string> columns_;
  std::vector<Row> rows_;
};

}  // namespace condfield::io
