#pragma once

#include <charconv>
#include <cstdio>
#include <string>
#include <string_view>

namespace stepguard {

// Shortest round-trip decimal form of a double. All text output of floating
// values outside JSON goes through this so reruns are byte-identical.
inline std::string fmt_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

inline std::string lowercase_ascii(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  for (char c : s) out.push_back((c >= 'A' && c <= 'Z') ? char(c - 'A' + 'a') : c);
  return out;
}

// Trim, collapse whitespace runs to single spaces, lowercase. Used for the
// step-equality labels in teacher forcing.
inline std::string normalize_for_match(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  bool in_ws = true;  // leading whitespace dropped
  for (char c : s) {
    bool ws = (c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v');
    if (ws) {
      in_ws = true;
      continue;
    }
    if (in_ws && !out.empty()) out.push_back(' ');
    in_ws = false;
    out.push_back((c >= 'A' && c <= 'Z') ? char(c - 'A' + 'a') : c);
  }
  return out;
}

// Scorer names may contain ':' (e.g. "precomputed:foo"); file names must not.
inline std::string sanitize_for_filename(std::string_view s) {
  std::string out(s);
  for (char& c : out) {
    if (c == ':' || c == '/' || c == '\\' || c == ' ') c = '_';
  }
  return out;
}

}  // namespace stepguard
