#pragma once

#include <complex>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace pairshift {

using int128 = __int128;
using cplx = std::complex<double>;

// Desk-scale integer contract: values are 128-bit capable, overflow is a
// hard error, never silent wraparound.
struct OverflowError : std::runtime_error {
    explicit OverflowError(const std::string &msg) : std::runtime_error(msg) {}
};
struct NotInvertible : std::runtime_error {
    explicit NotInvertible(const std::string &msg) : std::runtime_error(msg) {}
};
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string &msg) : std::runtime_error(msg) {}
};
struct WindowTooLarge : ConfigError {
    explicit WindowTooLarge(const std::string &msg) : ConfigError(msg) {}
};
struct SupportTooLarge : ConfigError {
    explicit SupportTooLarge(const std::string &msg) : ConfigError(msg) {}
};
struct AccessibilityViolation : std::runtime_error {
    explicit AccessibilityViolation(const std::string &msg) : std::runtime_error(msg) {}
};
struct NoAccessiblePrime : std::runtime_error {
    explicit NoAccessiblePrime(const std::string &msg) : std::runtime_error(msg) {}
};
struct DstNotZero : std::runtime_error {
    explicit DstNotZero(const std::string &msg) : std::runtime_error(msg) {}
};
struct ScratchNotRestored : std::runtime_error {
    explicit ScratchNotRestored(const std::string &msg) : std::runtime_error(msg) {}
};

inline std::string to_string_i128(int128 x) {
    if (x == 0) {
        return "0";
    }
    bool neg = x < 0;
    unsigned __int128 u = neg ? -(unsigned __int128)x : (unsigned __int128)x;
    std::string digits;
    while (u) {
        digits.push_back(char('0' + int(u % 10)));
        u /= 10;
    }
    if (neg) {
        digits.push_back('-');
    }
    return std::string(digits.rbegin(), digits.rend());
}

inline int128 parse_i128(const std::string &s) {
    if (s.empty()) {
        throw ConfigError("empty integer literal");
    }
    size_t i = 0;
    bool neg = false;
    if (s[0] == '+' || s[0] == '-') {
        neg = s[0] == '-';
        i = 1;
    }
    if (i == s.size()) {
        throw ConfigError("bad integer literal: " + s);
    }
    unsigned __int128 u = 0;
    const unsigned __int128 cap = ~(unsigned __int128)0;
    for (; i < s.size(); i++) {
        if (s[i] < '0' || s[i] > '9') {
            throw ConfigError("bad integer literal: " + s);
        }
        if (u > (cap - 9) / 10) {
            throw OverflowError("integer literal exceeds 128 bits: " + s);
        }
        u = u * 10 + (unsigned __int128)(s[i] - '0');
    }
    if (!neg && u > (unsigned __int128)1 << 126) {
        throw OverflowError("integer literal exceeds desk-scale range: " + s);
    }
    return neg ? -(int128)u : (int128)u;
}

inline int128 checked_add(int128 a, int128 b) {
    int128 r;
    if (__builtin_add_overflow(a, b, &r)) {
        throw OverflowError("128-bit addition overflow");
    }
    return r;
}

inline int128 checked_sub(int128 a, int128 b) {
    int128 r;
    if (__builtin_sub_overflow(a, b, &r)) {
        throw OverflowError("128-bit subtraction overflow");
    }
    return r;
}

inline int128 checked_mul(int128 a, int128 b) {
    int128 r;
    if (__builtin_mul_overflow(a, b, &r)) {
        throw OverflowError("128-bit multiplication overflow");
    }
    return r;
}

inline int bit_width_i128(int128 x) {
    if (x < 0) {
        x = -x;
    }
    int w = 0;
    while (x) {
        w++;
        x >>= 1;
    }
    return w;
}

// FNV-1a, used for support hashing and run-trace checksums.
inline uint64_t fnv1a(const void *data, size_t len, uint64_t h = 0xcbf29ce484222325ULL) {
    const unsigned char *p = static_cast<const unsigned char *>(data);
    for (size_t i = 0; i < len; i++) {
        h ^= p[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

}  // namespace pairshift
