#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace finqa {

// 64-bit FNV-1a. Used for content keys (transcript entries, table hashes,
// config digests), not for security. Stable across platforms.
inline std::uint64_t fnv1a64(std::string_view data, std::uint64_t seed = 0xcbf29ce484222325ULL) {
    std::uint64_t h = seed;
    for (unsigned char c : data) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline std::string to_hex(std::uint64_t v) {
    static const char* digits = "0123456789abcdef";
    std::string out(16, '0');
    for (int i = 15; i >= 0; --i) {
        out[static_cast<std::size_t>(i)] = digits[v & 0xF];
        v >>= 4;
    }
    return out;
}

inline std::string digest_hex(std::string_view data) { return to_hex(fnv1a64(data)); }

// Digest of multiple parts. Parts are length-prefixed so that ("ab","c")
// and ("a","bc") hash differently.
inline std::string digest_hex(std::initializer_list<std::string_view> parts) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (auto part : parts) {
        h = fnv1a64(std::to_string(part.size()), h);
        h = fnv1a64(":", h);
        h = fnv1a64(part, h);
    }
    return to_hex(h);
}

}  // namespace finqa
