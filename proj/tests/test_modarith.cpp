#include <catch2/catch_amalgamated.hpp>

#include <numeric>
#include <random>

#include "pairshift/modarith.hpp"

using namespace pairshift;

// ---------------------------------------------------------------------------
// Oracles: independent brute-force implementations used to pin expectations.
// Each scans the full solution space instead of reusing library arithmetic.
// ---------------------------------------------------------------------------

// Scan the balanced window (-q/2, q/2] for the unique representative of x.
static int128 oracle_balanced(int128 x, int128 q) {
    for (int128 y = -q / 2; ; y++) {
        if (2 * y > q) {
            FAIL("balanced oracle: no representative found");
        }
        bool in_window = (2 * y > -q) && (2 * y <= q);
        if (in_window && (x - y) % q == 0) {
            return y;
        }
    }
}

// Scan [0, q) for a multiplicative inverse of a; -1 when none exists.
static int128 oracle_inverse(int128 a, int128 q) {
    for (int128 x = 0; x < q; x++) {
        if (canonical_mod(a * x, q) == 1) {
            return x;
        }
    }
    return -1;
}

// Scan the balanced window modulo the product for the unique simultaneous
// solution of x = r_k (mod p_k).
static int128 oracle_crt(const std::vector<int128> &rs, const std::vector<int64_t> &ps) {
    int128 prod = 1;
    for (int64_t p : ps) prod *= p;
    int128 start = -(prod / 2);
    if (2 * start <= -prod) start++;  // even product: -prod/2 itself is excluded
    for (int128 x = start; 2 * x <= prod; x++) {
        bool ok = true;
        for (size_t k = 0; k < ps.size(); k++) {
            if (canonical_mod(x - rs[k], ps[k]) != 0) {
                ok = false;
                break;
            }
        }
        if (ok) return x;
    }
    FAIL("crt oracle: no solution found");
    return 0;
}

// ---------------------------------------------------------------------------

TEST_CASE("balanced reduction lands in (-q/2, q/2]", "[modarith]") {
    // Frozen spot values, checked against the window by hand:
    CHECK(balanced_mod(-8, 15) == 7);
    CHECK(balanced_mod(7, 4) == -1);   // 3 is outside (-2, 2]; -1 is the representative
    CHECK(balanced_mod(2, 4) == 2);    // upper boundary q/2 is included
    CHECK(balanced_mod(-2, 4) == 2);   // lower boundary -q/2 is excluded
    CHECK(balanced_mod(0, 7) == 0);
    CHECK(balanced_mod(60, 60) == 0);

    std::mt19937_64 rng(0x5eed0001);
    std::uniform_int_distribution<int64_t> xs(-5000, 5000);
    std::uniform_int_distribution<int64_t> qs(2, 97);
    for (int it = 0; it < 2000; it++) {
        int128 x = xs(rng), q = qs(rng);
        int128 got = balanced_mod(x, q);
        CHECK(got == oracle_balanced(x, q));
        CHECK(2 * got > -q);
        CHECK(2 * got <= q);
        CHECK((x - got) % q == 0);
    }
}

TEST_CASE("Residue normalizes on construction and exposes canonical form", "[modarith]") {
    Residue r = mod_reduce(13, Modulus(15));
    CHECK(r.value == -2);
    CHECK(r.canonical() == 13);

    CHECK_THROWS_AS(Modulus(1), ConfigError);
    CHECK_THROWS_AS(Modulus(-4), ConfigError);
}

TEST_CASE("ext_gcd returns Bezout certificates", "[modarith]") {
    ExtGcdResult e = ext_gcd(6, 4);
    CHECK(e.g == 2);
    CHECK(e.s == 1);
    CHECK(e.t == -1);

    std::mt19937_64 rng(0x5eed0002);
    std::uniform_int_distribution<int64_t> vals(-100000, 100000);
    for (int it = 0; it < 2000; it++) {
        int128 a = vals(rng), b = vals(rng);
        if (a == 0 && b == 0) continue;
        ExtGcdResult r = ext_gcd(a, b);
        CHECK(r.g == (int128)std::gcd((long long)a, (long long)b));
        CHECK(r.s * a + r.t * b == r.g);
        CHECK(r.g > 0);
    }
    CHECK_THROWS_AS(ext_gcd(0, 0), ConfigError);
}

TEST_CASE("mod_inverse agrees with exhaustive search", "[modarith]") {
    // Frozen: 7 * 13 = 91 = 6*15 + 1.
    Residue inv = mod_inverse(mod_reduce(7, Modulus(15)), Modulus(15));
    CHECK(inv.canonical() == 13);
    CHECK(inv.value == -2);

    CHECK_THROWS_AS(mod_inverse(mod_reduce(3, Modulus(15)), Modulus(15)), NotInvertible);
    CHECK_THROWS_AS(mod_inverse(mod_reduce(0, Modulus(7)), Modulus(7)), NotInvertible);

    std::mt19937_64 rng(0x5eed0003);
    std::uniform_int_distribution<int64_t> as(-200, 200);
    std::uniform_int_distribution<int64_t> qs(2, 61);
    for (int it = 0; it < 1500; it++) {
        int128 a = as(rng), q = qs(rng);
        int128 want = oracle_inverse(canonical_mod(a, q), q);
        if (want < 0) {
            CHECK_THROWS_AS(mod_inverse_value(a, q), NotInvertible);
        } else {
            int128 got = mod_inverse_value(a, q);
            CHECK(canonical_mod(got, q) == want);
            CHECK(canonical_mod(a * got, q) == 1);
            CHECK(2 * got > -q);
            CHECK(2 * got <= q);
        }
    }
}

TEST_CASE("PrimeSet validates distinct odd primes", "[modarith]") {
    PrimeSet ps({3, 5, 7});
    CHECK(ps.product == 105);
    CHECK(ps.count() == 3);

    CHECK_THROWS_AS(PrimeSet({}), ConfigError);
    CHECK_THROWS_AS(PrimeSet({2, 3}), ConfigError);   // even
    CHECK_THROWS_AS(PrimeSet({3, 9}), ConfigError);   // composite
    CHECK_THROWS_AS(PrimeSet({5, 5}), ConfigError);   // duplicate
    CHECK_THROWS_AS(PrimeSet({3, -5}), ConfigError);  // negative
}

TEST_CASE("CRT recombination matches the scan oracle", "[modarith]") {
    // Frozen: x = 2 (mod 3), x = 3 (mod 5) has x = 8 (mod 15), balanced -7.
    PrimeSet ps({3, 5});
    std::vector<Residue> rs = {mod_reduce(2, Modulus(3)), mod_reduce(3, Modulus(5))};
    Residue g = crt_garner(rs, ps);
    Residue t = crt_product_tree(rs, ps);
    CHECK(g.value == -7);
    CHECK(g.canonical() == 8);
    CHECK(t.value == -7);

    CHECK(oracle_crt({2, 3}, {3, 5}) == -7);
}

TEST_CASE("Garner and product-tree recombination are interchangeable", "[modarith]") {
    const std::vector<int64_t> pool = {3, 5, 7, 11, 13, 17, 19, 23};
    std::mt19937_64 rng(0x5eed0004);
    for (int it = 0; it < 600; it++) {
        std::vector<int64_t> chosen(pool);
        std::shuffle(chosen.begin(), chosen.end(), rng);
        size_t kappa = 1 + (size_t)(rng() % 4);
        chosen.resize(kappa);
        PrimeSet ps(chosen);

        std::vector<Residue> rs;
        std::vector<int128> raw;
        for (int64_t p : chosen) {
            int128 r = (int128)(rng() % (uint64_t)p);
            raw.push_back(balanced_mod(r, p));
            rs.emplace_back(r, Modulus(p));
        }
        Residue a = crt_garner(rs, ps);
        Residue b = crt_product_tree(rs, ps);
        CHECK(a.value == b.value);
        CHECK(a.value == oracle_crt(raw, chosen));
        CHECK(2 * a.value > -ps.product);
        CHECK(2 * a.value <= ps.product);
    }
}

TEST_CASE("CRT round-trips residue splitting", "[modarith]") {
    PrimeSet ps({3, 5, 7, 11});
    std::mt19937_64 rng(0x5eed0005);
    for (int it = 0; it < 500; it++) {
        int128 t = (int128)(rng() % 1155);
        std::vector<Residue> rs;
        for (int64_t p : ps.primes) rs.emplace_back(t, Modulus(p));
        CHECK(crt_garner(rs, ps).value == balanced_mod(t, ps.product));
        CHECK(crt_product_tree(rs, ps).value == balanced_mod(t, ps.product));
    }
}

TEST_CASE("CRT rejects mismatched residue lists", "[modarith]") {
    PrimeSet ps({3, 5});
    std::vector<Residue> too_few = {mod_reduce(1, Modulus(3))};
    CHECK_THROWS_AS(crt_garner(too_few, ps), ConfigError);
    std::vector<Residue> wrong_mod = {mod_reduce(1, Modulus(3)), mod_reduce(1, Modulus(7))};
    CHECK_THROWS_AS(crt_garner(wrong_mod, ps), ConfigError);
    CHECK_THROWS_AS(crt_product_tree(wrong_mod, ps), ConfigError);
}

TEST_CASE("checked arithmetic refuses 128-bit overflow", "[modarith]") {
    int128 big = (int128)1 << 100;
    CHECK_THROWS_AS(checked_mul(big, big), OverflowError);
    CHECK(checked_mul(big, 2) == (int128)1 << 101);
    int128 max = ~(int128)0 ^ ((int128)1 << 127);  // 2^127 - 1
    CHECK_THROWS_AS(checked_add(max, 1), OverflowError);
    CHECK(checked_sub(max, 1) == max - 1);
}

TEST_CASE("int128 string round-trip", "[modarith]") {
    CHECK(to_string_i128(0) == "0");
    CHECK(to_string_i128(-60) == "-60");
    int128 big = ((int128)1 << 100) + 12345;
    CHECK(parse_i128(to_string_i128(big)) == big);
    CHECK(parse_i128("-7") == -7);
    CHECK_THROWS_AS(parse_i128("12x"), ConfigError);
    CHECK_THROWS_AS(parse_i128(""), ConfigError);
}
