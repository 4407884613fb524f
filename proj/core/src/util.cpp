#include "hiertrade/util.hpp"

#include <cstdio>
#include <ctime>

#include "hiertrade/errors.hpp"

namespace hiertrade {

std::string fmt_double(double x) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

namespace {

bool all_digits(std::string_view s) {
  if (s.empty()) return false;
  for (char c : s)
    if (c < '0' || c > '9') return false;
  return true;
}

int to_int(std::string_view s) {
  int v = 0;
  for (char c : s) v = v * 10 + (c - '0');
  return v;
}

}  // namespace

std::int64_t parse_iso8601_utc(std::string_view s) {
  // Accepted shapes, both 19 chars of payload:
  //   YYYY-MM-DDTHH:MM:SSZ
  //   YYYY-MM-DD HH:MM:SS
  bool zulu = s.size() == 20 && s.back() == 'Z';
  if (zulu) s.remove_suffix(1);
  if (s.size() != 19) throw DataError("bad timestamp: '" + std::string(s) + "'");

  char date_sep = s[10];
  if ((zulu && date_sep != 'T') || (!zulu && date_sep != 'T' && date_sep != ' '))
    throw DataError("bad timestamp separator: '" + std::string(s) + "'");
  if (s[4] != '-' || s[7] != '-' || s[13] != ':' || s[16] != ':')
    throw DataError("bad timestamp punctuation: '" + std::string(s) + "'");

  auto field = [&](std::size_t off, std::size_t len) {
    std::string_view f = s.substr(off, len);
    if (!all_digits(f)) throw DataError("non-numeric timestamp field: '" + std::string(s) + "'");
    return to_int(f);
  };
  int year = field(0, 4), month = field(5, 2), day = field(8, 2);
  int hour = field(11, 2), minute = field(14, 2), second = field(17, 2);

  if (month < 1 || month > 12 || day < 1 || day > 31 || hour > 23 || minute > 59 || second > 60)
    throw DataError("timestamp component out of range: '" + std::string(s) + "'");

  std::tm tm{};
  tm.tm_year = year - 1900;
  tm.tm_mon = month - 1;
  tm.tm_mday = day;
  tm.tm_hour = hour;
  tm.tm_min = minute;
  tm.tm_sec = second;
  std::time_t t = timegm(&tm);
  if (t == static_cast<std::time_t>(-1))
    throw DataError("unrepresentable timestamp: '" + std::string(s) + "'");
  // timegm normalizes out-of-range days (e.g. Feb 30); reject those.
  if (tm.tm_mday != day || tm.tm_mon != month - 1)
    throw DataError("nonexistent calendar date: '" + std::string(s) + "'");
  return static_cast<std::int64_t>(t);
}

std::string format_iso8601_utc(std::int64_t unix_seconds) {
  std::time_t t = static_cast<std::time_t>(unix_seconds);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[24];
  std::snprintf(buf, sizeof(buf), "%04d-%02d-%02dT%02d:%02d:%02dZ", tm.tm_year + 1900,
                tm.tm_mon + 1, tm.tm_mday, tm.tm_hour, tm.tm_min, tm.tm_sec);
  return buf;
}

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ull);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

std::uint64_t derive_seed(std::uint64_t master, std::string_view purpose) {
  std::uint64_t state = master ^ fnv1a64(purpose);
  return splitmix64(state);
}

}  // namespace hiertrade
