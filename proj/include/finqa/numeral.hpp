#pragma once

#include <cctype>
#include <charconv>
#include <cmath>
#include <optional>
#include <string>
#include <string_view>

#include "finqa/errors.hpp"

namespace finqa {

namespace detail {

inline std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r' ||
                          s.front() == '\n'))
        s.remove_prefix(1);
    while (!s.empty() &&
           (s.back() == ' ' || s.back() == '\t' || s.back() == '\r' || s.back() == '\n'))
        s.remove_suffix(1);
    return s;
}

// Currency prefixes understood by the normalizer. The multi-byte entries are
// UTF-8 for the euro, pound and yen signs.
inline bool strip_currency(std::string_view& s) {
    static constexpr std::string_view symbols[] = {"$", "\xe2\x82\xac", "\xc2\xa3", "\xc2\xa5"};
    for (auto sym : symbols) {
        if (s.substr(0, sym.size()) == sym) {
            s.remove_prefix(sym.size());
            return true;
        }
    }
    return false;
}

// Removes thousands separators, requiring well-formed 3-digit groups
// ("1,234,567"). Returns false for stray commas.
inline bool strip_thousands(std::string_view s, std::string& out) {
    out.clear();
    out.reserve(s.size());
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (s[i] != ',') {
            out.push_back(s[i]);
            continue;
        }
        if (i == 0 || !std::isdigit(static_cast<unsigned char>(s[i - 1]))) return false;
        for (std::size_t j = i + 1; j <= i + 3; ++j) {
            if (j >= s.size() || !std::isdigit(static_cast<unsigned char>(s[j]))) return false;
        }
        if (i + 4 < s.size() && std::isdigit(static_cast<unsigned char>(s[i + 4]))) return false;
    }
    return true;
}

}  // namespace detail

// Parses a numeral token the way financial text writes them:
//   "1,234" -> 1234       "$5,829" -> 5829
//   "12%"   -> 0.12       "(5.2)"  -> -5.2 (accounting negative)
// Plain decimals and exponent notation pass through. Returns nullopt when
// the token is not a numeral.
inline std::optional<double> try_normalize_numeral(std::string_view token) {
    std::string_view s = detail::trim(token);
    if (s.empty()) return std::nullopt;

    bool negate = false;
    if (s.front() == '(' && s.back() == ')' && s.size() >= 3) {
        s = detail::trim(s.substr(1, s.size() - 2));
        negate = true;
        if (s.empty()) return std::nullopt;
    }

    bool sign_seen = false;
    if (s.front() == '-' || s.front() == '+') {
        if (s.front() == '-') negate = !negate;
        s.remove_prefix(1);
        s = detail::trim(s);
        if (s.empty()) return std::nullopt;
        sign_seen = true;
    }
    if (detail::strip_currency(s)) {
        s = detail::trim(s);  // "$ 5,829" appears in financial tables
        if (s.empty()) return std::nullopt;
    }
    if (!sign_seen && (s.front() == '-' || s.front() == '+')) {
        if (s.front() == '-') negate = !negate;  // "$-5" form
        s.remove_prefix(1);
        s = detail::trim(s);
        if (s.empty()) return std::nullopt;
    }

    bool percent = false;
    if (!s.empty() && s.back() == '%') {
        percent = true;
        s.remove_suffix(1);
        s = detail::trim(s);
    }
    if (s.empty()) return std::nullopt;

    std::string digits;
    if (!detail::strip_thousands(s, digits)) return std::nullopt;

    double value = 0.0;
    const char* first = digits.data();
    const char* last = digits.data() + digits.size();
    auto [ptr, ec] = std::from_chars(first, last, value);
    if (ec != std::errc() || ptr != last) return std::nullopt;
    if (percent) value /= 100.0;
    if (negate) value = -value;
    // Collapse -0 so downstream text renderings are canonical.
    if (value == 0.0) value = 0.0;
    return value;
}

inline double normalize_numeral(std::string_view token) {
    auto v = try_normalize_numeral(token);
    if (!v) throw NotANumber(std::string(token));
    return *v;
}

// Shortest decimal text that parses back to exactly the same double.
inline std::string format_number(double v) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    (void)ec;
    return std::string(buf, ptr);
}

// Rounded to `digits` significant digits, minimal form ("25", "0.104667").
inline std::string format_significant(double v, int digits) {
    if (v == 0.0) v = 0.0;  // avoid "-0"
    char buf[64];
    auto [ptr, ec] =
        std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::general, digits);
    (void)ec;
    return std::string(buf, ptr);
}

}  // namespace finqa
