#pragma once

// Minimal CSV output: RFC 4180 quoting and shortest round-trip doubles, so
// identical inputs always produce identical bytes.

#include <charconv>
#include <cmath>
#include <cstdint>
#include <ostream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <type_traits>
#include <vector>

namespace zshot::io {

inline std::string format_double(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, x);
  if (ec != std::errc{}) throw std::runtime_error("format_double failed");
  return {buf, end};
}

inline std::string csv_field(std::string_view s) {
  if (s.find_first_of(",\"\n\r") == std::string_view::npos) return std::string(s);
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + '"';
}

class CsvWriter {
 public:
  CsvWriter(std::ostream& out, std::vector<std::string> header)
      : out_(out), width_(header.size()) {
    write_row(header);
  }

  template <class... Fields>
  void row(const Fields&... fields) {
    static_assert(sizeof...(Fields) > 0);
    std::vector<std::string> cells{cell(fields)...};
    if (cells.size() != width_) throw std::invalid_argument("csv row width does not match header");
    write_row(cells);
  }

 private:
  template <class T>
  static std::string cell(const T& v) {
    if constexpr (std::is_same_v<T, bool>) {
      return v ? "true" : "false";
    } else if constexpr (std::is_floating_point_v<T>) {
      return format_double(static_cast<double>(v));
    } else if constexpr (std::is_integral_v<T>) {
      return std::to_string(v);
    } else {
      return std::string(std::string_view(v));
    }
  }

  void write_row(const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (i) out_ << ',';
      out_ << csv_field(cells[i]);
    }
    out_ << '\n';
  }

  std::ostream& out_;
  std::size_t width_;
};

}  // namespace zshot::io
