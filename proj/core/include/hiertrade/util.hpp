#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace hiertrade {

// Positive part [x]^+.  The subgradient at the kink is taken as 0 throughout,
// so pos_grad(0) == 0.
inline double pos(double x) { return x > 0.0 ? x : 0.0; }
inline double pos_grad(double x) { return x > 0.0 ? 1.0 : 0.0; }

// Shortest decimal form that round-trips a double exactly ("%.17g" contract:
// parsing the string recovers the identical bit pattern).
std::string fmt_double(double x);

// Parses a strict subset of ISO-8601 UTC: "YYYY-MM-DDTHH:MM:SSZ" or
// "YYYY-MM-DD HH:MM:SS".  Returns Unix seconds.  Throws DataError on any
// deviation (missing fields, out-of-range components, trailing junk).
std::int64_t parse_iso8601_utc(std::string_view s);

// Formats Unix seconds as "YYYY-MM-DDTHH:MM:SSZ".
std::string format_iso8601_utc(std::int64_t unix_seconds);

// FNV-1a 64-bit over the bytes of a string.  Used to fingerprint resolved
// configurations in report headers.
std::uint64_t fnv1a64(std::string_view bytes);

// splitmix64 step; the standard way to expand one seed into many.
std::uint64_t splitmix64(std::uint64_t& state);

// Derives a stream-specific seed from a master seed and a purpose label, so
// that e.g. the synthesizer and the trainer never share a generator even
// when the user passes a single --seed.
std::uint64_t derive_seed(std::uint64_t master, std::string_view purpose);

}  // namespace hiertrade
