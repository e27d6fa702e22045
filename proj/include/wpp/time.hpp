#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <ctime>
#include <string>
#include <string_view>

#include "wpp/error.hpp"

namespace wpp {

// Parses "YYYY-MM-DDTHH:MM:SSZ" to seconds since the Unix epoch.
inline std::int64_t parse_utc(std::string_view text) {
  int y = 0, mo = 0, d = 0, h = 0, mi = 0, s = 0;
  char z = 0;
  const std::string buf(text);
  if (std::sscanf(buf.c_str(), "%4d-%2d-%2dT%2d:%2d:%2d%c", &y, &mo, &d, &h, &mi, &s, &z) != 7 || z != 'Z' ||
      buf.size() != 20) {
    throw Error(Errc::InvalidRequest, "timestamp must look like 2025-01-01T00:00:00Z, got '" + buf + "'");
  }
  std::tm tm{};
  tm.tm_year = y - 1900;
  tm.tm_mon = mo - 1;
  tm.tm_mday = d;
  tm.tm_hour = h;
  tm.tm_min = mi;
  tm.tm_sec = s;
  return static_cast<std::int64_t>(timegm(&tm));
}

inline std::string format_utc(std::int64_t epoch_seconds) {
  const auto t = static_cast<std::time_t>(epoch_seconds);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char out[32];
  std::strftime(out, sizeof out, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return out;
}

// Simulated seconds since the fleet epoch <-> wall-clock UTC strings.
class SimClock {
 public:
  explicit SimClock(std::string_view epoch = "2025-01-01T00:00:00Z") : epoch_(parse_utc(epoch)) {}

  std::string to_utc(double sim_seconds) const {
    return format_utc(epoch_ + static_cast<std::int64_t>(std::floor(sim_seconds)));
  }
  double from_utc(std::string_view text) const { return static_cast<double>(parse_utc(text) - epoch_); }
  std::int64_t epoch() const { return epoch_; }

 private:
  std::int64_t epoch_;
};

}  // namespace wpp
