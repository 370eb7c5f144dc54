#pragma once

#include <charconv>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace trimforest {

// All library failures surface as Error so callers can catch a single type.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

// A variance estimate stayed below the floor even after the terminal-node
// fallback; the cure is refitting with a larger min node size.
class VarianceFloorError : public Error {
 public:
  explicit VarianceFloorError(const std::string& what) : Error(what) {}
};

inline constexpr double kVarianceFloor = 1e-15;
inline constexpr double kTwoPi = 6.283185307179586476925286766559;

// Shortest decimal form that parses back to the same bits. Keeps CSV and
// model files byte-stable across runs and lossless on reload.
inline std::string real_to_string(double v) {
  char buf[40];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

// Strict parse of a full token as a finite real. Empty result means the
// token is not a finite number.
inline std::optional<double> parse_real(std::string_view text) {
  double v = 0.0;
  const char* first = text.data();
  const char* last = text.data() + text.size();
  auto res = std::from_chars(first, last, v);
  if (res.ec != std::errc() || res.ptr != last) return std::nullopt;
  if (!(v == v) || v > 1.7976931348623157e308 || v < -1.7976931348623157e308)
    return std::nullopt;
  return v;
}

inline std::optional<long long> parse_int(std::string_view text) {
  long long v = 0;
  const char* first = text.data();
  const char* last = text.data() + text.size();
  auto res = std::from_chars(first, last, v);
  if (res.ec != std::errc() || res.ptr != last) return std::nullopt;
  return v;
}

}  // namespace trimforest
