#pragma once

#include <chrono>
#include <charconv>
#include <optional>
#include <string>
#include <string_view>

#include <fmt/format.h>

namespace volnet {

using Timestamp = std::chrono::sys_seconds;
using Seconds = std::chrono::seconds;

inline constexpr Seconds kDay{86400};
inline constexpr Seconds kWeek{7 * 86400};
/// Months are fixed 30-day blocks throughout the library.
inline constexpr Seconds kMonth{30 * 86400};

namespace detail {

inline bool read_int(std::string_view s, std::size_t pos, std::size_t len, int& out) {
  if (pos + len > s.size()) return false;
  for (std::size_t i = pos; i < pos + len; ++i)
    if (s[i] < '0' || s[i] > '9') return false;
  auto res = std::from_chars(s.data() + pos, s.data() + pos + len, out);
  return res.ec == std::errc{};
}

}  // namespace detail

/// Parses an RFC 3339 timestamp ("2020-03-01T12:00:00Z", optional fractional
/// seconds, numeric offsets). Fractions are truncated to whole seconds.
inline std::optional<Timestamp> parse_rfc3339(std::string_view s) {
  using namespace std::chrono;
  int y, mo, d, h, mi, se;
  if (s.size() < 20) return std::nullopt;
  if (!detail::read_int(s, 0, 4, y) || s[4] != '-' || !detail::read_int(s, 5, 2, mo) ||
      s[7] != '-' || !detail::read_int(s, 8, 2, d) || (s[10] != 'T' && s[10] != 't' && s[10] != ' ') ||
      !detail::read_int(s, 11, 2, h) || s[13] != ':' || !detail::read_int(s, 14, 2, mi) ||
      s[16] != ':' || !detail::read_int(s, 17, 2, se))
    return std::nullopt;
  if (h > 23 || mi > 59 || se > 60) return std::nullopt;
  year_month_day ymd{year{y}, month{static_cast<unsigned>(mo)}, day{static_cast<unsigned>(d)}};
  if (!ymd.ok()) return std::nullopt;

  std::size_t pos = 19;
  if (pos < s.size() && s[pos] == '.') {
    ++pos;
    std::size_t start = pos;
    while (pos < s.size() && s[pos] >= '0' && s[pos] <= '9') ++pos;
    if (pos == start) return std::nullopt;
  }
  if (pos >= s.size()) return std::nullopt;
  long offset = 0;
  if (s[pos] == 'Z' || s[pos] == 'z') {
    ++pos;
  } else if (s[pos] == '+' || s[pos] == '-') {
    int oh, om;
    int sign = s[pos] == '-' ? -1 : 1;
    if (!detail::read_int(s, pos + 1, 2, oh) || pos + 3 >= s.size() || s[pos + 3] != ':' ||
        !detail::read_int(s, pos + 4, 2, om))
      return std::nullopt;
    offset = sign * (oh * 3600L + om * 60L);
    pos += 6;
  } else {
    return std::nullopt;
  }
  if (pos != s.size()) return std::nullopt;

  Timestamp t = sys_days{ymd} + hours{h} + minutes{mi} + seconds{se};
  return t - seconds{offset};
}

/// Canonical UTC form, e.g. "2020-03-01T12:00:00Z".
inline std::string format_rfc3339(Timestamp t) {
  using namespace std::chrono;
  auto day_point = floor<days>(t);
  year_month_day ymd{day_point};
  hh_mm_ss<seconds> tod{t - day_point};
  return fmt::format("{:04d}-{:02d}-{:02d}T{:02d}:{:02d}:{:02d}Z", static_cast<int>(ymd.year()),
                     static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()),
                     tod.hours().count(), tod.minutes().count(), tod.seconds().count());
}

/// ISO-8601 week of a UTC instant, encoded as iso_year * 100 + week.
inline int iso_week_key(Timestamp t) {
  using namespace std::chrono;
  sys_days d = floor<days>(t);
  unsigned wd = weekday{d}.iso_encoding();  // Mon=1 .. Sun=7
  sys_days thursday = d + days{4 - static_cast<int>(wd)};
  year iso_year = year_month_day{thursday}.year();
  sys_days jan1 = iso_year / January / 1;
  int week = static_cast<int>((thursday - jan1).count() / 7) + 1;
  return static_cast<int>(iso_year) * 100 + week;
}

}  // namespace volnet
