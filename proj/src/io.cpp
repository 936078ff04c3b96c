#include "condfield/io.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <openssl/evp.h>

namespace condfield::io {

std::string format_double(double value) {
  if (!std::isfinite(value)) return "null";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", value);
  return buf;
}

namespace {

void dump(const Json& v, int indent, int depth, std::string& out) {
  const auto pad = [&](int d) {
    if (indent >= 0) {
      out += '\n';
      out.append(static_cast<std::size_t>(indent * d), ' ');
    }
  };
  switch (v.type()) {
    case Json::value_t::number_float:
      out += format_double(v.get<double>());
      return;
    case Json::value_t::object: {
      if (v.empty()) {
        out += "{}";
        return;
      }
      out += '{';
      bool first = true;
      for (auto it = v.begin(); it != v.end(); ++it) {
        if (!first) out += ',';
        first = false;
        pad(depth + 1);
        out += Json(it.key()).dump();
        out += indent >= 0 ? ": " : ":";
        dump(it.value(), indent, depth + 1, out);
      }
      pad(depth);
      out += '}';
      return;
    }
    case Json::value_t::array: {
      if (v.empty()) {
        out += "[]";
        return;
      }
      out += '[';
      bool first = true;
      for (const auto& e : v) {
        if (!first) out += ',';
        first = false;
        pad(depth + 1);
        dump(e, indent, depth + 1, out);
      }
      pad(depth);
      out += ']';
      return;
    }
    default:
      out += v.dump();
  }
}

}  // namespace

std::string dump_json(const Json& value, int indent) {
  std::string out;
  dump(value, indent, 0, out);
  out += '\n';
  return out;
}

std::string sha256_hex(std::string_view data) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), digest, &len, EVP_sha256(), nullptr) != 1)
    throw std::runtime_error("sha256 failed");
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out += hex[digest[i] >> 4];
    out += hex[digest[i] & 15];
  }
  return out;
}

std::string sha256_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return sha256_hex(ss.str());
}

void write_text(const std::filesystem::path& path, std::string_view text) {
  std::ofstream out(path, std::ios::binary);
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) throw std::runtime_error("cannot write " + path.string());
}

CsvTable::CsvTable(std::vector<std::string> columns) : columns_(std::move(columns)) {}

CsvTable::Row& CsvTable::Row::operator<<(double v) {
  cells_.push_back(std::isnan(v) ? "nan" : std::isinf(v) ? (v > 0 ? "inf" : "-inf") : format_double(v));
  return *this;
}
CsvTable::Row& CsvTable::Row::operator<<(int v) { cells_.push_back(std::to_string(v)); return *this; }
CsvTable::Row& CsvTable::Row::operator<<(long v) { cells_.push_back(std::to_string(v)); return *this; }
CsvTable::Row& CsvTable::Row::operator<<(unsigned long v) { cells_.push_back(std::to_string(v)); return *this; }
CsvTable::Row& CsvTable::Row::operator<<(unsigned long long v) { cells_.push_back(std::to_string(v)); return *this; }
CsvTable::Row& CsvTable::Row::operator<<(const std::string& v) {
  if (v.find_first_of(",\"\n") == std::string::npos) {
    cells_.push_back(v);
  } else {
    std::string q = "\"";
    for (char c : v) q += c == '"' ? std::string("\"\"") : std::string(1, c);
    cells_.push_back(q + "\"");
  }
  return *this;
}

CsvTable::Row& CsvTable::row() {
  rows_.emplace_back();
  return rows_.back();
}

std::string CsvTable::str() const {
  std::string out;
  for (std::size_t i = 0; i < columns_.size(); ++i) out += (i ? "," : "") + columns_[i];
  out += '\n';
  for (const auto& r : rows_) {
    if (r.cells_.size() != columns_.size())
      throw std::logic_error("csv row has " + std::to_string(r.cells_.size()) + " cells, expected " +
                             std::to_string(columns_.size()));
    for (std::size_t i = 0; i < r.cells_.size(); ++i) out += (i ? "," : "") + r.cells_[i];
    out += '\n';
  }
  return out;
}

}  // namespace condfield::io
