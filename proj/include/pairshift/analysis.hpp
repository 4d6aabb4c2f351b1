#pragma once

#include <algorithm>
#include <map>
#include <random>
#include <vector>

#include <Eigen/Dense>
#include <boost/math/distributions/chi_squared.hpp>
#include <nlohmann/json.hpp>

#include "pairshift/circuits.hpp"
#include "pairshift/groupstate.hpp"

namespace pairshift {

// ---------------------------------------------------------------------------
// Annihilator of the synthesized coset: {u : <b*, u> = 0 (mod P)}, the exact
// support of Fourier sampling. Membership is always decided by integer
// arithmetic; the materialized list exists for counting and uniform tests.
// ---------------------------------------------------------------------------

struct Annihilator {
    size_t n;
    int128 M2, P;
    std::vector<int128> b_star;                 // balanced mod M2
    std::vector<std::vector<int128>> outcomes;  // canonical u vectors, sorted

    bool contains(const std::vector<int128> &u) const {
        int128 acc = 0;
        for (size_t i = 0; i < n; i++) {
            acc = balanced_mod(acc + mod_mul(b_star[i], u[i], P), P);
        }
        return acc == 0;
    }
};

inline constexpr size_t kEnumerationCap = (size_t)1 << 24;

/// Exhaustive scan of (Z_M2)^n for the annihilator members.
inline Annihilator enumerate_annihilator(const Instance &inst) {
    Annihilator ann;
    ann.n = inst.n;
    ann.M2 = inst.M2;
    ann.P = inst.P;
    ann.b_star = inst.b_star;

    int128 space = 1;
    for (size_t i = 0; i < inst.n; i++) {
        space = checked_mul(space, inst.M2);
        if (space > (int128)kEnumerationCap) {
            throw SupportTooLarge("outcome space exceeds the enumeration cap");
        }
    }
    std::vector<int128> u(inst.n, 0);
    while (true) {
        if (ann.contains(u)) ann.outcomes.push_back(u);
        size_t i = 0;
        while (i < inst.n && ++u[i] == inst.M2) {
            u[i] = 0;
            i++;
        }
        if (i == inst.n) break;
    }
    std::sort(ann.outcomes.begin(), ann.outcomes.end());
    return ann;
}

// ---------------------------------------------------------------------------
// Fourier sampling by direct character sums over the Z block. Exact integer
// phase indices into a precomputed root table keep the arithmetic stable.
// ---------------------------------------------------------------------------

inline constexpr size_t kDftCap = (size_t)1 << 20;

namespace detail {

inline std::vector<cplx> root_table(int128 m2) {
    std::vector<cplx> w((size_t)m2);
    for (size_t k = 0; k < (size_t)m2; k++) {
        w[k] = std::polar(1.0, 2.0 * std::numbers::pi * (double)k / (double)m2);
    }
    return w;
}

}  // namespace detail

/// Apply the full-block DFT to the selected slots: the output amplitude at
/// (label, u) is M2^{-n/2} * sum_z amp(label, z) * exp(2*pi*i*<z,u>/M2),
/// where "label" ranges over the untransformed slots. Brute force, desk
/// scale only.
inline SparseState qft_state(const SparseState &st, const std::vector<size_t> &zslots) {
    if (zslots.empty()) {
        throw ConfigError("qft_state needs at least one slot");
    }
    int128 m2 = st.layout->modulus(zslots[0]);
    for (size_t s : zslots) {
        if (st.layout->modulus(s) != m2) {
            throw ConfigError("qft_state: transformed slots must share a modulus");
        }
    }
    size_t n = zslots.size();
    double out_space = 1.0;
    for (size_t i = 0; i < n; i++) out_space *= (double)m2;
    if (out_space > (double)kDftCap) {
        throw SupportTooLarge("DFT outcome space exceeds cap");
    }
    size_t total_points = (size_t)out_space;
    std::vector<cplx> w = detail::root_table(m2);

    // Group branches by the untransformed label.
    struct ZGroup {
        BasisState key;  // template with z slots zeroed
        std::vector<std::pair<std::vector<int128>, cplx>> zs;
    };
    std::unordered_map<BasisState, size_t, BasisStateHash> index;
    std::vector<ZGroup> groups;
    for (const auto &[k, a] : st.amps) {
        BasisState label = k;
        std::vector<int128> zv(n);
        for (size_t i = 0; i < n; i++) {
            zv[i] = canonical_mod(k.v[zslots[i]], m2);
            label.v[zslots[i]] = 0;
        }
        auto [it, fresh] = index.emplace(label, groups.size());
        if (fresh) {
            groups.push_back({label, {}});
        }
        groups[it->second].zs.push_back({zv, a});
    }
    if (groups.size() * total_points > SparseState::kSupportCap) {
        throw SupportTooLarge("DFT output support exceeds cap");
    }

    double scale = std::pow((double)m2, -(double)n / 2.0);
    SparseState out;
    out.layout = st.layout;
    out.amps.reserve(groups.size() * total_points);
    for (const ZGroup &g : groups) {
        std::vector<int128> u(n, 0);
        while (true) {
            cplx acc = 0.0;
            for (const auto &[zv, a] : g.zs) {
                int128 dot = 0;
                for (size_t i = 0; i < n; i++) {
                    dot = canonical_mod(dot + zv[i] * u[i], m2);
                }
                acc += a * w[(size_t)dot];
            }
            BasisState nk = g.key;
            for (size_t i = 0; i < n; i++) {
                nk.v[zslots[i]] = balanced_mod(u[i], m2);
            }
            out.amps[nk] = acc * scale;
            size_t i = 0;
            while (i < n && ++u[i] == m2) {
                u[i] = 0;
                i++;
            }
            if (i == n) break;
        }
    }
    return out;
}

/// Fourier-sample the Z block: QFT, then the probability of each outcome u.
/// Entries whose probability is float-zero (below 1e-18, pure rounding dust
/// from exact character-sum cancellations) are dropped; membership claims
/// about the survivors are still decided by exact integer predicates.
inline Distribution fourier_sample(const SparseState &st, const std::vector<size_t> &zslots) {
    SparseState f = qft_state(st, zslots);
    Distribution d = marginal_distribution(f, zslots);
    for (auto it = d.prob.begin(); it != d.prob.end();) {
        if (it->second <= 1e-18) {
            it = d.prob.erase(it);
        } else {
            ++it;
        }
    }
    return d;
}

/// The closed form for post-cleanup amplitudes: sqrt(P)/M2^{n/2} when u lies
/// in the annihilator (every character term collapses to 1), else exactly 0
/// (a full cyclic sum of nontrivial roots). Global phase fixed real-positive.
inline cplx closed_form_amplitude(const Instance &inst, const std::vector<int128> &u) {
    int128 acc = 0;
    for (size_t i = 0; i < inst.n; i++) {
        acc = balanced_mod(acc + mod_mul(inst.b_star[i], u[i], inst.P), inst.P);
    }
    if (acc != 0) return 0.0;
    return std::sqrt((double)inst.P) * std::pow((double)inst.M2, -(double)inst.n / 2.0);
}

// ---------------------------------------------------------------------------
// Injectivity of t -> t*b* (mod P) versus per-prime accessibility.
// ---------------------------------------------------------------------------

struct InjectivityReport {
    bool injective = false;
    bool accessible = false;               // every prime has a unit coordinate
    std::vector<int128> kernel;            // all t with t*b* = 0 (mod P)
    std::vector<int64_t> failing_primes;   // primes with no unit coordinate

    nlohmann::json to_json() const {
        nlohmann::json k = nlohmann::json::array();
        for (int128 t : kernel) k.push_back(to_string_i128(t));
        return nlohmann::json{{"injective", injective},
                              {"accessible", accessible},
                              {"kernel", k},
                              {"failing_primes", failing_primes}};
    }
};

inline InjectivityReport check_injectivity(const Instance &inst) {
    InjectivityReport rep;
    // Exhaustive kernel scan of t -> t*b* (mod P).
    for (int128 t = 0; t < inst.P; t++) {
        bool zero = true;
        for (size_t i = 0; i < inst.n; i++) {
            if (mod_mul(t, inst.b_star[i], inst.P) != 0) {
                zero = false;
                break;
            }
        }
        if (zero) rep.kernel.push_back(t);
    }
    rep.injective = rep.kernel.size() == 1;  // only t = 0

    // Per-prime accessibility, independently.
    for (size_t k = 0; k < inst.primes.count(); k++) {
        int64_t p = inst.primes.primes[k];
        bool unit = false;
        for (size_t i = 0; i < inst.n; i++) {
            if (canonical_mod(inst.b_star[i], p) != 0) unit = true;
        }
        if (!unit) rep.failing_primes.push_back(p);
    }
    rep.accessible = rep.failing_primes.empty();
    return rep;
}

// ---------------------------------------------------------------------------
// Uniformity statistics.
// ---------------------------------------------------------------------------

struct ChiSquareReport {
    double statistic = 0.0;
    double dof = 0.0;
    double p_value = 1.0;
    size_t sample_count = 0;
    std::vector<std::vector<int128>> violations;  // samples outside the support

    bool passes(double alpha) const { return violations.empty() && p_value > alpha; }

    nlohmann::json to_json() const {
        nlohmann::json v = nlohmann::json::array();
        for (const auto &u : violations) {
            nlohmann::json row = nlohmann::json::array();
            for (int128 x : u) row.push_back(to_string_i128(x));
            v.push_back(row);
        }
        return nlohmann::json{{"statistic", statistic},
                              {"dof", dof},
                              {"p_value", p_value},
                              {"sample_count", sample_count},
                              {"violation_count", violations.size()},
                              {"violations", v}};
    }
};

/// Pearson chi-square of the samples against uniform over the annihilator
/// list. Samples outside the list are excluded from the statistic and
/// reported as membership violations (there must be none for a sound run).
inline ChiSquareReport uniformity_test(const std::vector<std::vector<int128>> &samples,
                                       const Annihilator &ann) {
    ChiSquareReport rep;
    rep.sample_count = samples.size();
    std::map<std::vector<int128>, size_t> counts;
    for (const auto &u : samples) {
        if (!ann.contains(u)) {
            rep.violations.push_back(u);
            continue;
        }
        counts[u]++;
    }
    size_t kept = samples.size() - rep.violations.size();
    size_t cells = ann.outcomes.size();
    if (cells < 2 || kept == 0) {
        return rep;
    }
    double expected = (double)kept / (double)cells;
    double stat = 0.0;
    for (const auto &u : ann.outcomes) {
        auto it = counts.find(u);
        double obs = (it == counts.end()) ? 0.0 : (double)it->second;
        stat += (obs - expected) * (obs - expected) / expected;
    }
    rep.statistic = stat;
    rep.dof = (double)(cells - 1);
    boost::math::chi_squared dist(rep.dof);
    rep.p_value = boost::math::cdf(boost::math::complement(dist, stat));
    return rep;
}

// ---------------------------------------------------------------------------
// Schmidt rank across a slot bipartition: the factorization witness. Rank 1
// means the state is a product across the cut; the pre-cleanup state has
// rank P instead.
// ---------------------------------------------------------------------------

inline size_t schmidt_rank(const SparseState &st, const std::vector<size_t> &slots_a,
                           double threshold = 1e-9) {
    std::vector<char> in_a(st.layout->size(), 0);
    for (size_t s : slots_a) in_a[s] = 1;

    std::map<std::vector<int128>, size_t> ai, bi;
    std::vector<std::tuple<size_t, size_t, cplx>> entries;
    for (const auto &[k, amp] : st.amps) {
        std::vector<int128> ka, kb;
        for (size_t s = 0; s < k.v.size(); s++) {
            (in_a[s] ? ka : kb).push_back(k.v[s]);
        }
        size_t ia = ai.emplace(ka, ai.size()).first->second;
        size_t ib = bi.emplace(kb, bi.size()).first->second;
        entries.push_back({ia, ib, amp});
    }
    Eigen::MatrixXcd m = Eigen::MatrixXcd::Zero((Eigen::Index)ai.size(), (Eigen::Index)bi.size());
    for (const auto &[ia, ib, amp] : entries) {
        m((Eigen::Index)ia, (Eigen::Index)ib) = amp;
    }
    Eigen::JacobiSVD<Eigen::MatrixXcd> svd(m);
    size_t rank = 0;
    for (Eigen::Index i = 0; i < svd.singularValues().size(); i++) {
        if (svd.singularValues()(i) > threshold) rank++;
    }
    return rank;
}

// ---------------------------------------------------------------------------
// Approximate-QFT leakage: perturb the single-register DFT unitary within
// operator norm epsilon and measure how much probability escapes the ideal
// annihilator. The model family is U_tilde = exp(i*eps*H) * U with H a
// seeded random Hermitian of unit operator norm.
// ---------------------------------------------------------------------------

struct LeakageReport {
    double epsilon_requested = 0.0;
    double epsilon_actual = 0.0;  // operator norm of U_tilde - U
    double leakage = 0.0;         // probability mass off the annihilator
    double bound = 0.0;           // n * epsilon_requested, the asserted cap

    nlohmann::json to_json() const {
        return nlohmann::json{{"epsilon_requested", epsilon_requested},
                              {"epsilon_actual", epsilon_actual},
                              {"leakage", leakage},
                              {"bound", bound}};
    }
};

namespace detail {

// Deterministic standard normals: Box-Muller over mt19937_64 uniforms.
inline double gaussian(std::mt19937_64 &rng) {
    double u1 = ((double)(rng() >> 11) + 0.5) / 9007199254740992.0;
    double u2 = ((double)(rng() >> 11) + 0.5) / 9007199254740992.0;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

}  // namespace detail

inline LeakageReport approx_qft_experiment(const Instance &inst, double epsilon,
                                           uint64_t seed = 1) {
    if (epsilon < 0.0 || epsilon > 0.1) {
        throw ConfigError("perturbation epsilon must lie in [0, 0.1]");
    }
    size_t m2 = (size_t)inst.M2;
    double space = std::pow((double)m2, (double)inst.n);
    if (space > (double)kDftCap) {
        throw SupportTooLarge("perturbation experiment exceeds the DFT cap");
    }

    // Ideal single-register DFT.
    Eigen::MatrixXcd U(m2, m2);
    double scale = 1.0 / std::sqrt((double)m2);
    std::vector<cplx> w = detail::root_table(inst.M2);
    for (size_t r = 0; r < m2; r++) {
        for (size_t c = 0; c < m2; c++) {
            U((Eigen::Index)r, (Eigen::Index)c) = w[(r * c) % m2] * scale;
        }
    }

    Eigen::MatrixXcd Ut = U;
    double eps_actual = 0.0;
    if (epsilon > 0.0) {
        std::mt19937_64 rng(seed);
        Eigen::MatrixXcd H(m2, m2);
        for (size_t r = 0; r < m2; r++) {
            H((Eigen::Index)r, (Eigen::Index)r) = detail::gaussian(rng);
            for (size_t c = r + 1; c < m2; c++) {
                cplx v(detail::gaussian(rng), detail::gaussian(rng));
                H((Eigen::Index)r, (Eigen::Index)c) = v;
                H((Eigen::Index)c, (Eigen::Index)r) = std::conj(v);
            }
        }
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(H);
        double hnorm = std::max(std::abs(es.eigenvalues().minCoeff()),
                                std::abs(es.eigenvalues().maxCoeff()));
        // exp(i*eps*H/||H||) via the eigendecomposition of H.
        Eigen::VectorXcd phases(m2);
        for (size_t i = 0; i < m2; i++) {
            phases((Eigen::Index)i) =
                std::polar(1.0, epsilon * es.eigenvalues()((Eigen::Index)i) / hnorm);
        }
        Eigen::MatrixXcd expH = es.eigenvectors() * phases.asDiagonal() *
                                es.eigenvectors().adjoint();
        Ut = expH * U;
        Eigen::JacobiSVD<Eigen::MatrixXcd> svd(Ut - U);
        eps_actual = svd.singularValues()(0);
    }

    // The post-cleanup coset state over the Z block alone.
    Harvest h = harvest(inst);
    size_t points = (size_t)space;
    Eigen::VectorXcd psi = Eigen::VectorXcd::Zero((Eigen::Index)points);
    double amp = 1.0 / std::sqrt((double)inst.P);
    for (int128 t = 0; t < inst.P; t++) {
        size_t idx = 0;
        for (size_t i = inst.n; i-- > 0;) {
            int128 zi = canonical_mod(-t * canonical_mod(h.Delta[i], inst.M2), inst.M2);
            idx = idx * m2 + (size_t)zi;
        }
        psi((Eigen::Index)idx) += amp;
    }

    // Apply U_tilde along each of the n axes (reshape trick).
    for (size_t axis = 0; axis < inst.n; axis++) {
        Eigen::VectorXcd next = Eigen::VectorXcd::Zero((Eigen::Index)points);
        size_t stride = 1;
        for (size_t i = 0; i < axis; i++) stride *= m2;
        for (size_t base = 0; base < points; base++) {
            size_t digit = (base / stride) % m2;
            size_t rest = base - digit * stride;
            cplx v = psi((Eigen::Index)base);
            if (v == cplx(0.0, 0.0)) continue;
            for (size_t o = 0; o < m2; o++) {
                next((Eigen::Index)(rest + o * stride)) += Ut((Eigen::Index)o, (Eigen::Index)digit) * v;
            }
        }
        psi = next;
    }

    // Mass off the annihilator, membership decided exactly.
    Annihilator ann = enumerate_annihilator(inst);
    double leak = 0.0;
    std::vector<int128> u(inst.n, 0);
    for (size_t idx = 0; idx < points; idx++) {
        size_t rem = idx;
        for (size_t i = 0; i < inst.n; i++) {
            u[i] = (int128)(rem % m2);
            rem /= m2;
        }
        if (!ann.contains(u)) {
            leak += std::norm(psi((Eigen::Index)idx));
        }
    }

    LeakageReport rep;
    rep.epsilon_requested = epsilon;
    rep.epsilon_actual = eps_actual;
    rep.leakage = leak;
    rep.bound = (double)inst.n * epsilon;
    if (leak > rep.bound + 1e-12) {
        throw ConfigError("leakage " + std::to_string(leak) + " exceeds the n*epsilon bound " +
                          std::to_string(rep.bound));
    }
    return rep;
}

// ---------------------------------------------------------------------------
// Random-instance accessibility failure rate, against the union bound
// sum over eta >= 2 of p_eta^{-(n-1)} (the first coordinate is pinned to the
// trailing prime product, which is a unit modulo p_1).
// ---------------------------------------------------------------------------

struct FailureRateReport {
    double estimate = 0.0;
    double union_bound = 0.0;
    size_t trials = 0;

    nlohmann::json to_json() const {
        return nlohmann::json{
            {"estimate", estimate}, {"union_bound", union_bound}, {"trials", trials}};
    }
};

inline FailureRateReport accessibility_failure_probability(size_t n, const PrimeSet &primes,
                                                           size_t trials, uint64_t seed) {
    if (n < 2) {
        throw ConfigError("failure-rate estimate needs n >= 2");
    }
    FailureRateReport rep;
    rep.trials = trials;
    for (size_t k = 1; k < primes.count(); k++) {
        rep.union_bound += std::pow((double)primes.primes[k], -(double)(n - 1));
    }

    // b_1 fixed to the trailing prime product; b_2..b_n uniform mod P.
    int128 b1 = 1;
    for (size_t k = 1; k < primes.count(); k++) b1 *= primes.primes[k];
    std::mt19937_64 rng(seed);
    size_t failures = 0;
    for (size_t t = 0; t < trials; t++) {
        std::vector<int128> b(n);
        b[0] = b1;
        for (size_t i = 1; i < n; i++) {
            b[i] = (int128)(rng() % (uint64_t)primes.product);
        }
        bool fail = false;
        for (size_t k = 0; k < primes.count(); k++) {
            int64_t p = primes.primes[k];
            bool unit = false;
            for (size_t i = 0; i < n; i++) {
                if (canonical_mod(b[i], p) != 0) unit = true;
            }
            if (!unit) fail = true;
        }
        if (fail) failures++;
    }
    rep.estimate = (double)failures / (double)trials;
    return rep;
}

}  // namespace pairshift
