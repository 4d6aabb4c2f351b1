#pragma once

#include <cmath>
#include <complex>
#include <memory>
#include <numbers>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "pairshift/distribution.hpp"
#include "pairshift/modarith.hpp"

namespace pairshift {

// ---------------------------------------------------------------------------
// Instance: the full problem description. The register modulus is M2 = D^2*P
// with P odd and gcd(D, P) = 1, so 2D^2 is a unit mod P. The data register
// follows the affine law X(j) = 2D^2*j*b_star + v_star (mod M2), windowed to
// j in [j_lo, j_hi] with quadratic envelope exp(2*pi*i*(a*j^2+b*j+c)/M2).
// ---------------------------------------------------------------------------

struct Instance {
    static constexpr int64_t kWindowCap = 1 << 20;

    size_t n;
    PrimeSet primes;
    int64_t D;
    int128 P;   // product of the primes
    int128 M2;  // D^2 * P
    std::vector<int128> b_star;  // balanced mod M2
    std::vector<int128> v_star;  // balanced mod M2
    int64_t a = 0, b = 0, c = 0;
    int64_t j_lo = 0, j_hi = 0;
    uint64_t seed = 0;
    // Optional per-j magnitude profile over the window (empty = flat). The
    // Z-marginal is provably insensitive to it; it exists for sweep tests.
    std::vector<double> window_weights;

    Instance(size_t n_, PrimeSet primes_, int64_t D_, std::vector<int128> b_star_,
             std::vector<int128> v_star_, int64_t a_ = 0, int64_t b_ = 0, int64_t c_ = 0,
             int64_t j_lo_ = 0, int64_t j_hi_ = -1, uint64_t seed_ = 0)
        : n(n_),
          primes(std::move(primes_)),
          D(D_),
          P(primes.product),
          M2(0),
          b_star(std::move(b_star_)),
          v_star(std::move(v_star_)),
          a(a_),
          b(b_),
          c(c_),
          j_lo(j_lo_),
          j_hi(j_hi_),
          seed(seed_) {
        if (n < 2) {
            throw ConfigError("coordinate count must be >= 2, got " + std::to_string(n));
        }
        if (D < 1) {
            throw ConfigError("D must be a positive integer");
        }
        if (gcd_i128(D, P) != 1) {
            throw ConfigError("gcd(D, P) must be 1");
        }
        M2 = checked_mul(checked_mul((int128)D, (int128)D), P);
        if (b_star.size() != n || v_star.size() != n) {
            throw ConfigError("b_star and v_star must each have n entries");
        }
        for (size_t i = 0; i < n; i++) {
            b_star[i] = balanced_mod(b_star[i], M2);
            v_star[i] = balanced_mod(v_star[i], M2);
        }
        if (j_hi == -1 && j_lo == 0) {
            j_hi = (int64_t)P - 1;  // default window covers one full period
        }
        if (j_hi < j_lo) {
            throw ConfigError("window is empty (j_hi < j_lo)");
        }
        if (j_hi - j_lo + 1 > kWindowCap) {
            throw WindowTooLarge("window size " + std::to_string(j_hi - j_lo + 1) +
                                 " exceeds cap " + std::to_string(kWindowCap));
        }
    }

    int64_t window_size() const { return j_hi - j_lo + 1; }
};

/// True when the first data coordinate equals the product of all primes after
/// the first — the form used by the upstream pipeline this subroutine serves.
inline bool b1_is_trailing_prime_product(const Instance &inst) {
    int128 prod = 1;
    for (size_t k = 1; k < inst.primes.count(); k++) {
        prod = checked_mul(prod, inst.primes.primes[k]);
    }
    return canonical_mod(inst.b_star[0], inst.M2) == canonical_mod(prod, inst.M2);
}

// ---------------------------------------------------------------------------
// Instance config I/O: flat "key = value" text, one key per line.
// ---------------------------------------------------------------------------

namespace detail {

inline std::vector<int128> split_i128(const std::string &s) {
    std::vector<int128> out;
    std::string cur;
    std::stringstream ss(s);
    while (std::getline(ss, cur, ',')) {
        out.push_back(parse_i128(cur));
    }
    if (out.empty()) {
        throw ConfigError("empty list value");
    }
    return out;
}

inline std::string trim(const std::string &s) {
    size_t b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    size_t e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

}  // namespace detail

inline std::string serialize_instance_config(const Instance &inst) {
    std::ostringstream out;
    out << "n = " << inst.n << "\n";
    out << "primes = ";
    for (size_t k = 0; k < inst.primes.count(); k++) {
        if (k) out << ",";
        out << inst.primes.primes[k];
    }
    out << "\n";
    out << "D = " << inst.D << "\n";
    out << "b_star = ";
    for (size_t i = 0; i < inst.n; i++) {
        if (i) out << ",";
        out << to_string_i128(canonical_mod(inst.b_star[i], inst.M2));
    }
    out << "\n";
    out << "v_star = ";
    for (size_t i = 0; i < inst.n; i++) {
        if (i) out << ",";
        out << to_string_i128(canonical_mod(inst.v_star[i], inst.M2));
    }
    out << "\n";
    out << "a = " << inst.a << "\n";
    out << "b = " << inst.b << "\n";
    out << "c = " << inst.c << "\n";
    out << "j_lo = " << inst.j_lo << "\n";
    out << "j_hi = " << inst.j_hi << "\n";
    out << "seed = " << inst.seed << "\n";
    return out.str();
}

inline Instance parse_instance_config(const std::string &text) {
    std::unordered_map<std::string, std::string> kv;
    std::stringstream ss(text);
    std::string line;
    while (std::getline(ss, line)) {
        std::string t = detail::trim(line);
        if (t.empty() || t[0] == '#') continue;
        size_t eq = t.find('=');
        if (eq == std::string::npos) {
            throw ConfigError("config line missing '=': " + t);
        }
        std::string key = detail::trim(t.substr(0, eq));
        std::string val = detail::trim(t.substr(eq + 1));
        if (kv.count(key)) {
            throw ConfigError("duplicate config key: " + key);
        }
        kv[key] = val;
    }
    const char *required[] = {"n", "primes", "D", "b_star", "v_star", "a",
                              "b", "c", "j_lo", "j_hi", "seed"};
    for (const char *k : required) {
        if (!kv.count(k)) {
            throw ConfigError(std::string("missing config key: ") + k);
        }
    }
    for (const auto &[k, v] : kv) {
        bool known = false;
        for (const char *r : required) {
            if (k == r) known = true;
        }
        if (!known) {
            throw ConfigError("unknown config key: " + k);
        }
    }
    std::vector<int64_t> primes;
    for (int128 p : detail::split_i128(kv["primes"])) {
        primes.push_back((int64_t)p);
    }
    return Instance((size_t)parse_i128(kv["n"]), PrimeSet(primes), (int64_t)parse_i128(kv["D"]),
                    detail::split_i128(kv["b_star"]), detail::split_i128(kv["v_star"]),
                    (int64_t)parse_i128(kv["a"]), (int64_t)parse_i128(kv["b"]),
                    (int64_t)parse_i128(kv["c"]), (int64_t)parse_i128(kv["j_lo"]),
                    (int64_t)parse_i128(kv["j_hi"]), (uint64_t)parse_i128(kv["seed"]));
}

// ---------------------------------------------------------------------------
// Register layout: named slots with fixed moduli. Harvested data (V, Delta)
// is classical and identical on every branch, so it is stored once here as
// read-only vectors rather than duplicated into every basis state; gates
// receive it by const reference, which makes post-harvest mutation
// impossible by construction.
// ---------------------------------------------------------------------------

inline constexpr size_t npos = (size_t)-1;

struct SlotInfo {
    std::string name;
    int128 modulus;
};

struct RegisterLayout {
    std::vector<SlotInfo> slots;
    std::vector<size_t> x, y, z;  // data / copy / difference blocks (n slots each)
    size_t t = npos, j = npos, tprime = npos;
    std::vector<size_t> scratch;  // ladder + recombination trail, audited to zero
    std::vector<int128> v_data, delta_data;  // harvested, read-only

    size_t add_slot(const std::string &name, int128 modulus) {
        if (modulus < 2) {
            throw ConfigError("slot modulus must be >= 2: " + name);
        }
        slots.push_back({name, modulus});
        return slots.size() - 1;
    }

    size_t size() const { return slots.size(); }
    int128 modulus(size_t i) const { return slots[i].modulus; }
};

// ---------------------------------------------------------------------------
// Sparse states: amplitude maps keyed by one balanced integer per slot.
// ---------------------------------------------------------------------------

struct BasisState {
    std::vector<int128> v;

    bool operator==(const BasisState &o) const { return v == o.v; }
};

struct BasisStateHash {
    size_t operator()(const BasisState &s) const {
        // Balanced representatives are unique per residue, so raw bytes hash.
        return (size_t)fnv1a(s.v.data(), s.v.size() * sizeof(int128));
    }
};

struct SparseState {
    static constexpr size_t kSupportCap = (size_t)1 << 24;

    std::shared_ptr<const RegisterLayout> layout;
    std::unordered_map<BasisState, cplx, BasisStateHash> amps;

    double norm_sq() const {
        double s = 0.0;
        for (const auto &[k, a] : amps) s += std::norm(a);
        return s;
    }

    void check_normalized(double tol = 1e-12) const {
        double s = norm_sq();
        if (std::abs(s - 1.0) > tol) {
            throw ConfigError("state norm^2 " + std::to_string(s) + " outside 1 +/- tol");
        }
    }

    size_t support_size() const { return amps.size(); }

    /// Every entry must sit in its slot's balanced range.
    void validate_reduced() const {
        for (const auto &[k, a] : amps) {
            if (k.v.size() != layout->size()) {
                throw ConfigError("basis state width does not match layout");
            }
            for (size_t i = 0; i < k.v.size(); i++) {
                int128 q = layout->modulus(i);
                if (2 * k.v[i] <= -q || 2 * k.v[i] > q) {
                    throw ConfigError("slot " + layout->slots[i].name +
                                      " holds an unreduced value");
                }
            }
        }
    }
};

/// Amplitudes sorted lexicographically by (re, im): the gate layer must
/// preserve this multiset exactly (permutations move labels, never values).
inline std::vector<cplx> sorted_amplitudes(const SparseState &s) {
    std::vector<cplx> out;
    out.reserve(s.amps.size());
    for (const auto &[k, a] : s.amps) out.push_back(a);
    std::sort(out.begin(), out.end(), [](cplx p, cplx q) {
        if (p.real() != q.real()) return p.real() < q.real();
        return p.imag() < q.imag();
    });
    return out;
}

// ---------------------------------------------------------------------------
// Affine register law and harvesting.
// ---------------------------------------------------------------------------

/// X(j) = 2*D^2*j*b_star + v_star (mod M2), componentwise, balanced.
inline std::vector<int128> affine_X(const Instance &inst, int128 j) {
    std::vector<int128> out(inst.n);
    int128 twoD2 = checked_mul((int128)2, checked_mul((int128)inst.D, (int128)inst.D));
    int128 step = mod_mul(twoD2, balanced_mod(j, inst.M2), inst.M2);
    for (size_t i = 0; i < inst.n; i++) {
        out[i] = balanced_mod(checked_add(mod_mul(step, inst.b_star[i], inst.M2), inst.v_star[i]),
                              inst.M2);
    }
    return out;
}

struct Harvest {
    std::vector<int128> V;      // X(0) = v_star
    std::vector<int128> Delta;  // X(1) - X(0) = 2*D^2*b_star (mod M2)
};

inline Harvest harvest(const Instance &inst) {
    Harvest h;
    h.V = affine_X(inst, 0);
    std::vector<int128> x1 = affine_X(inst, 1);
    h.Delta.resize(inst.n);
    for (size_t i = 0; i < inst.n; i++) {
        h.Delta[i] = balanced_mod(checked_sub(x1[i], h.V[i]), inst.M2);
    }
    return h;
}

// ---------------------------------------------------------------------------
// State preparation.
// ---------------------------------------------------------------------------

/// The windowed data state: support {X(j) : j in [j_lo, j_hi]}, amplitude at
/// j proportional to weight(j) * exp(2*pi*i*(a*j^2+b*j+c)/M2), normalized.
/// Branches whose labels collide (e.g. windows longer than one period) add
/// coherently. When the layout carries a J slot it is loaded with j mod P.
/// All other slots start at zero.
inline SparseState prepare_affine_state(const Instance &inst,
                                        std::shared_ptr<const RegisterLayout> layout) {
    if (layout->x.size() != inst.n) {
        throw ConfigError("layout X block does not match instance width");
    }
    int64_t w = inst.window_size();
    if (w > Instance::kWindowCap) {
        throw WindowTooLarge("window size " + std::to_string(w) + " exceeds cap");
    }
    if (!inst.window_weights.empty() && (int64_t)inst.window_weights.size() != w) {
        throw ConfigError("window_weights must match the window size");
    }

    SparseState st;
    st.layout = layout;
    for (int64_t jj = inst.j_lo; jj <= inst.j_hi; jj++) {
        std::vector<int128> xv = affine_X(inst, jj);
        BasisState key;
        key.v.assign(layout->size(), 0);
        for (size_t i = 0; i < inst.n; i++) {
            key.v[layout->x[i]] = xv[i];
        }
        if (layout->j != npos) {
            key.v[layout->j] = balanced_mod(jj, inst.P);
        }
        // Exact phase reduction: evaluate a*j^2 + b*j + c modulo M2 in integer
        // arithmetic first, so the angle never loses precision to huge j.
        int128 ph = checked_add(
            checked_add(checked_mul((int128)inst.a, checked_mul((int128)jj, (int128)jj)),
                        checked_mul((int128)inst.b, (int128)jj)),
            (int128)inst.c);
        double angle =
            2.0 * std::numbers::pi * (double)canonical_mod(ph, inst.M2) / (double)inst.M2;
        double mag = inst.window_weights.empty() ? 1.0
                                                 : inst.window_weights[(size_t)(jj - inst.j_lo)];
        st.amps[key] += std::polar(mag, angle);
        if (st.amps.size() > SparseState::kSupportCap) {
            throw SupportTooLarge("state support exceeds cap");
        }
    }
    double norm = std::sqrt(st.norm_sq());
    if (norm == 0.0) {
        throw ConfigError("window amplitudes cancelled to zero");
    }
    for (auto &[k, a] : st.amps) a /= norm;
    return st;
}

/// Uniform superposition over Z_P on a fresh single-slot layout. per_prime
/// selects the per-prime tensor construction whose support indexing runs
/// through CRT recombination; both constructions assign the amplitude as
/// 1/sqrt(P) and must agree bit for bit.
inline SparseState prepare_uniform_T(const PrimeSet &primes, bool per_prime = true) {
    auto layout = std::make_shared<RegisterLayout>();
    layout->t = layout->add_slot("T", primes.product);

    SparseState st;
    st.layout = layout;
    double amp = 1.0 / std::sqrt((double)primes.product);
    if (!per_prime) {
        for (int128 t = 0; t < primes.product; t++) {
            BasisState key;
            key.v = {balanced_mod(t, primes.product)};
            st.amps[key] = amp;
        }
        return st;
    }
    // Odometer over per-prime digits; each tuple lands at its CRT image.
    std::vector<int64_t> digits(primes.count(), 0);
    while (true) {
        std::vector<Residue> rs;
        for (size_t k = 0; k < primes.count(); k++) {
            rs.emplace_back(digits[k], Modulus(primes.primes[k]));
        }
        BasisState key;
        key.v = {crt_garner(rs, primes).value};
        st.amps[key] = amp;
        size_t k = 0;
        while (k < primes.count() && ++digits[k] == primes.primes[k]) {
            digits[k] = 0;
            k++;
        }
        if (k == primes.count()) break;
    }
    return st;
}

/// Expand each branch with a uniform shift label: the T slot (currently zero)
/// fans out over all of Z_P with amplitude scaled by 1/sqrt(P).
inline SparseState expand_uniform_T(const SparseState &st, const PrimeSet &primes) {
    size_t t_slot = st.layout->t;
    if (t_slot == npos) {
        throw ConfigError("layout has no T slot");
    }
    SparseState out;
    out.layout = st.layout;
    double scale = 1.0 / std::sqrt((double)primes.product);
    out.amps.reserve(st.amps.size() * (size_t)primes.product);
    for (const auto &[k, a] : st.amps) {
        if (k.v[t_slot] != 0) {
            throw DstNotZero("T slot must be zero before the uniform expansion");
        }
        for (int128 t = 0; t < primes.product; t++) {
            BasisState nk = k;
            nk.v[t_slot] = balanced_mod(t, primes.product);
            out.amps[nk] = a * scale;
        }
    }
    if (out.amps.size() > SparseState::kSupportCap) {
        throw SupportTooLarge("state support exceeds cap");
    }
    return out;
}

// ---------------------------------------------------------------------------
// Marginals.
// ---------------------------------------------------------------------------

/// Probability of each assignment to the selected slots, summing |amp|^2 over
/// everything else. Keys are canonical (non-negative) representatives.
inline Distribution marginal_distribution(const SparseState &st, const std::vector<size_t> &slots) {
    Distribution d;
    for (size_t s : slots) {
        if (s >= st.layout->size()) {
            throw ConfigError("marginal slot index out of range");
        }
        d.moduli.push_back(st.layout->modulus(s));
    }
    for (const auto &[k, a] : st.amps) {
        std::vector<int128> u(slots.size());
        for (size_t i = 0; i < slots.size(); i++) {
            u[i] = canonical_mod(k.v[slots[i]], st.layout->modulus(slots[i]));
        }
        d.prob[u] += std::norm(a);
    }
    return d;
}

}  // namespace pairshift
