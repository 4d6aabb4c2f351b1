#pragma once

#include <algorithm>
#include <vector>

#include "pairshift/common.hpp"

namespace pairshift {

/// A modulus q >= 2. Houses the ring moduli used throughout (M2, P, D^2, p_eta).
struct Modulus {
    int128 q;

    explicit Modulus(int128 q_) : q(q_) {
        if (q < 2) {
            throw ConfigError("modulus must be >= 2, got " + to_string_i128(q_));
        }
    }
};

/// Canonical representative in [0, q).
inline int128 canonical_mod(int128 x, int128 q) {
    int128 r = x % q;
    if (r < 0) {
        r += q;
    }
    return r;
}

/// Balanced representative in (-q/2, q/2].
inline int128 balanced_mod(int128 x, int128 q) {
    int128 r = canonical_mod(x, q);
    if (2 * r > q) {
        r -= q;
    }
    return r;
}

/// An integer with an attached modulus, stored in the balanced range (-q/2, q/2].
struct Residue {
    int128 value;
    Modulus modulus;

    Residue(int128 v, Modulus m) : value(balanced_mod(v, m.q)), modulus(m) {}

    /// Non-negative form in [0, q), for hashing and table indexing.
    int128 canonical() const { return canonical_mod(value, modulus.q); }
};

inline Residue mod_reduce(int128 x, Modulus q) { return Residue(x, q); }

struct ExtGcdResult {
    int128 g, s, t;  // g = gcd(a,b) = s*a + t*b
};

inline ExtGcdResult ext_gcd(int128 a, int128 b) {
    if (a == 0 && b == 0) {
        throw ConfigError("ext_gcd(0, 0) is undefined");
    }
    int128 old_r = a, r = b;
    int128 old_s = 1, s = 0;
    int128 old_t = 0, t = 1;
    while (r != 0) {
        int128 q = old_r / r;
        int128 tmp = checked_sub(old_r, checked_mul(q, r));
        old_r = r;
        r = tmp;
        tmp = checked_sub(old_s, checked_mul(q, s));
        old_s = s;
        s = tmp;
        tmp = checked_sub(old_t, checked_mul(q, t));
        old_t = t;
        t = tmp;
    }
    if (old_r < 0) {
        old_r = -old_r;
        old_s = -old_s;
        old_t = -old_t;
    }
    return {old_r, old_s, old_t};
}

inline int128 gcd_i128(int128 a, int128 b) {
    if (a < 0) a = -a;
    if (b < 0) b = -b;
    while (b) {
        int128 r = a % b;
        a = b;
        b = r;
    }
    return a;
}

/// Inverse of a modulo p. Throws NotInvertible when gcd(a, p) != 1; at a
/// CRT prime that signals a residue-accessibility violation.
inline int128 mod_inverse_value(int128 a, int128 p) {
    ExtGcdResult e = ext_gcd(canonical_mod(a, p), p);
    if (e.g != 1) {
        throw NotInvertible("no inverse of " + to_string_i128(a) + " modulo " + to_string_i128(p));
    }
    return balanced_mod(e.s, p);
}

inline Residue mod_inverse(Residue a, Modulus p) {
    if (a.modulus.q != p.q) {
        throw ConfigError("mod_inverse: residue modulus mismatch");
    }
    return Residue(mod_inverse_value(a.value, p.q), p);
}

inline int128 mod_mul(int128 a, int128 b, int128 q) {
    return balanced_mod(checked_mul(balanced_mod(a, q), balanced_mod(b, q)), q);
}

inline bool is_prime_u64(int128 n) {
    if (n < 2) return false;
    if (n % 2 == 0) return n == 2;
    for (int128 d = 3; d * d <= n; d += 2) {
        if (n % d == 0) return false;
    }
    return true;
}

/// An ordered list of distinct odd primes p_1..p_kappa with product P.
struct PrimeSet {
    std::vector<int64_t> primes;
    int128 product;

    explicit PrimeSet(std::vector<int64_t> ps) : primes(std::move(ps)), product(1) {
        if (primes.empty()) {
            throw ConfigError("prime set must be nonempty");
        }
        for (size_t i = 0; i < primes.size(); i++) {
            int64_t p = primes[i];
            if (p < 3 || p % 2 == 0 || !is_prime_u64(p)) {
                throw ConfigError("prime set entries must be distinct odd primes, got " +
                                  std::to_string(p));
            }
            for (size_t k = 0; k < i; k++) {
                if (primes[k] == p) {
                    throw ConfigError("duplicate prime " + std::to_string(p));
                }
            }
            product = checked_mul(product, p);
        }
    }

    size_t count() const { return primes.size(); }
};

namespace detail {

inline int128 crt_tree_combine(const std::vector<int128> &vals, const std::vector<int64_t> &primes,
                               size_t lo, size_t hi, int128 *modulus_out) {
    if (hi - lo == 1) {
        *modulus_out = primes[lo];
        return balanced_mod(vals[lo], primes[lo]);
    }
    size_t mid = lo + (hi - lo) / 2;
    int128 m_left = 0, m_right = 0;
    int128 x_left = crt_tree_combine(vals, primes, lo, mid, &m_left);
    int128 x_right = crt_tree_combine(vals, primes, mid, hi, &m_right);
    // x = x_left + m_left * ((x_right - x_left) / m_left mod m_right)
    int128 diff = balanced_mod(checked_sub(x_right, x_left), m_right);
    int128 lift = mod_mul(diff, mod_inverse_value(m_left, m_right), m_right);
    int128 combined_mod = checked_mul(m_left, m_right);
    int128 x = balanced_mod(checked_add(x_left, checked_mul(m_left, lift)), combined_mod);
    *modulus_out = combined_mod;
    return x;
}

}  // namespace detail

/// Mixed-radix CRT recombination, quadratic in the prime count.
inline Residue crt_garner(const std::vector<Residue> &residues, const PrimeSet &primes) {
    if (residues.size() != primes.count()) {
        throw ConfigError("crt_garner: need one residue per prime");
    }
    // x = d_0 + d_1*p_0 + d_2*p_0*p_1 + ...; digits found by peeling each prime.
    int128 x = 0;
    int128 base = 1;
    for (size_t k = 0; k < primes.count(); k++) {
        int128 p = primes.primes[k];
        if (residues[k].modulus.q != p) {
            throw ConfigError("crt_garner: residue modulus does not match prime");
        }
        int128 digit = mod_mul(checked_sub(residues[k].value, x), mod_inverse_value(base, p), p);
        digit = canonical_mod(digit, p);
        x = checked_add(x, checked_mul(digit, base));
        base = checked_mul(base, p);
    }
    return Residue(x, Modulus(primes.product));
}

/// Divide-and-conquer CRT recombination; same contract as crt_garner.
inline Residue crt_product_tree(const std::vector<Residue> &residues, const PrimeSet &primes) {
    if (residues.size() != primes.count()) {
        throw ConfigError("crt_product_tree: need one residue per prime");
    }
    std::vector<int128> vals(residues.size());
    for (size_t k = 0; k < residues.size(); k++) {
        if (residues[k].modulus.q != primes.primes[k]) {
            throw ConfigError("crt_product_tree: residue modulus does not match prime");
        }
        vals[k] = residues[k].value;
    }
    int128 modulus = 0;
    int128 x = detail::crt_tree_combine(vals, primes.primes, 0, primes.count(), &modulus);
    return Residue(x, Modulus(primes.product));
}

}  // namespace pairshift
