#pragma once

#include <boost/rational.hpp>

#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <string>

#include "wavedecay/errors.hpp"

namespace wavedecay {

// Exact rational exponents. Inputs have denominators <= 10^6 (the nudge step),
// so int64 never overflows in the arithmetic the calculus performs.
using Rat = boost::rational<long long>;

inline Rat rat(long long n, long long d = 1) { return Rat(n, d); }

inline double to_double(const Rat& r) {
  return static_cast<double>(r.numerator()) / static_cast<double>(r.denominator());
}

inline Rat rat_min(const Rat& a, const Rat& b) { return a < b ? a : b; }
inline Rat rat_max(const Rat& a, const Rat& b) { return a > b ? a : b; }

// Renders "13/10", or "3" when the denominator is 1.
inline std::string to_string(const Rat& r) {
  std::string s = std::to_string(r.numerator());
  if (r.denominator() != 1) s += "/" + std::to_string(r.denominator());
  return s;
}

// Parses "3/10", "-1/2", "0.3", "2", "1.25e1". Decimal forms are converted
// exactly (digits over a power of ten); plain fractions are taken verbatim.
Rat parse_rational(const std::string& text);

// Recovers the intended rational from a double via the shortest decimal string
// that round-trips (0.3 -> "0.3" -> 3/10). Deterministic.
inline Rat rat_from_double(double x) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), x);
  return parse_rational(std::string(buf, res.ptr));
}

inline Rat parse_rational(const std::string& text) {
  std::string s = text;
  // trim
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.erase(s.begin());
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t')) s.pop_back();
  if (s.empty()) throw ConfigError("empty rational literal");

  auto slash = s.find('/');
  if (slash != std::string::npos) {
    long long n = 0, d = 0;
    auto r1 = std::from_chars(s.data(), s.data() + slash, n);
    auto r2 = std::from_chars(s.data() + slash + 1, s.data() + s.size(), d);
    if (r1.ec != std::errc() || r1.ptr != s.data() + slash ||
        r2.ec != std::errc() || r2.ptr != s.data() + s.size() || d == 0)
      throw ConfigError("bad rational literal: " + text);
    return Rat(n, d);
  }

  bool neg = false;
  std::size_t i = 0;
  if (s[i] == '+' || s[i] == '-') {
    neg = (s[i] == '-');
    ++i;
  }
  long long mant = 0;
  long long den = 1;
  int exp10 = 0;
  bool saw_digit = false, saw_dot = false;
  for (; i < s.size(); ++i) {
    char c = s[i];
    if (c >= '0' && c <= '9') {
      if (mant > (INT64_MAX - 9) / 10) throw ConfigError("rational literal too long: " + text);
      mant = mant * 10 + (c - '0');
      if (saw_dot) den *= 10;
      saw_digit = true;
    } else if (c == '.' && !saw_dot) {
      saw_dot = true;
    } else if ((c == 'e' || c == 'E') && saw_digit) {
      int e = std::atoi(s.c_str() + i + 1);
      exp10 = e;
      break;
    } else {
      throw ConfigError("bad rational literal: " + text);
    }
  }
  if (!saw_digit) throw ConfigError("bad rational literal: " + text);
  Rat out(neg ? -mant : mant, den);
  for (int k = 0; k < exp10; ++k) out *= 10;
  for (int k = 0; k < -exp10; ++k) out /= 10;
  return out;
}

}  // namespace wavedecay
