#pragma once

#include <cstdio>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "pairshift/analysis.hpp"
#include "pairshift/circuits.hpp"
#include "pairshift/groupstate.hpp"

namespace pairshift {

// ---------------------------------------------------------------------------
// Route configuration.
// ---------------------------------------------------------------------------

enum class Route { JFree, ReEval };
enum class Fallback { None, PartialP, Postselect };

struct RouteConfig {
    Route route = Route::JFree;
    CrtScheme crt_scheme = CrtScheme::Garner;
    bool cleanup = true;
    Fallback fallback = Fallback::None;
    double qft_perturbation = 0.0;  // side study; the main distribution stays exact
    uint64_t rng_seed = 1;

    void validate() const {
        if (!cleanup && fallback != Fallback::None) {
            throw ConfigError("cleanup=off is a diagnostic mode; it excludes fallbacks");
        }
        if (qft_perturbation < 0.0 || qft_perturbation > 0.1) {
            throw ConfigError("qft_perturbation must lie in [0, 0.1]");
        }
    }
};

// ---------------------------------------------------------------------------
// Run results.
// ---------------------------------------------------------------------------

struct AccessibilityEntry {
    int64_t prime;
    size_t coordinate;  // npos = inaccessible

    bool accessible() const { return coordinate != npos; }
};

struct RunResult {
    SparseState final_state;
    Distribution z_distribution;
    GateLog gate_log;
    std::vector<std::pair<std::string, uint64_t>> trace;  // named state checksums
    std::vector<AccessibilityEntry> accessibility;
    std::optional<double> success_probability;  // postselection only
    std::optional<LeakageReport> leakage;       // when qft_perturbation > 0
};

/// Order-independent checksum of an amplitude map: FNV over the sorted
/// (basis key, amplitude bits) stream. Used for the step-by-step run trace.
inline uint64_t state_checksum(const SparseState &st) {
    std::vector<const BasisState *> keys;
    keys.reserve(st.amps.size());
    for (const auto &[k, a] : st.amps) keys.push_back(&k);
    std::sort(keys.begin(), keys.end(),
              [](const BasisState *a, const BasisState *b) { return a->v < b->v; });
    uint64_t h = 0xcbf29ce484222325ULL;
    for (const BasisState *k : keys) {
        h = fnv1a(k->v.data(), k->v.size() * sizeof(int128), h);
        cplx a = st.amps.at(*k);
        double re = a.real(), im = a.imag();
        h = fnv1a(&re, sizeof re, h);
        h = fnv1a(&im, sizeof im, h);
    }
    return h;
}

namespace detail {

struct RunContext {
    RouteSlots rs;
    PriorityTable table;
    std::vector<AccessibilityEntry> accessibility;
};

inline RunContext open_run(const Instance &inst, const PrimeSet &t_primes, bool with_y_and_j) {
    RunContext ctx{make_route_layout(inst, t_primes, with_y_and_j), {}, {}};
    Harvest h = harvest(inst);
    ctx.rs.layout->v_data = h.V;
    ctx.rs.layout->delta_data = h.Delta;
    ctx.table = gate_priority_encoder(h.Delta, t_primes, nullptr);
    for (size_t k = 0; k < t_primes.count(); k++) {
        ctx.accessibility.push_back({t_primes.primes[k], ctx.table.index[k]});
    }
    return ctx;
}

inline void note(RunResult &rr, const std::string &step, const SparseState &st) {
    rr.trace.push_back({step, state_checksum(st)});
    st.check_normalized(1e-9);
}

inline void attach_perturbation_study(RunResult &rr, const Instance &inst,
                                      const RouteConfig &cfg) {
    if (cfg.qft_perturbation > 0.0) {
        rr.leakage = approx_qft_experiment(inst, cfg.qft_perturbation, cfg.rng_seed);
    }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Default J-free route: prepare, fan out the shift label, multiply it into Z
// directly (no copy, no Y, no J), clean up, Fourier-sample.
// ---------------------------------------------------------------------------

inline RunResult run_jfree(const Instance &inst, const RouteConfig &cfg) {
    cfg.validate();
    detail::RunContext ctx = detail::open_run(inst, inst.primes, /*with_y_and_j=*/false);
    auto lay = ctx.rs.layout;

    RunResult rr;
    rr.accessibility = ctx.accessibility;
    SparseState st = prepare_affine_state(inst, lay);
    detail::note(rr, "prepared", st);
    st = expand_uniform_T(st, inst.primes);
    detail::note(rr, "uniform_T", st);
    st = apply_gate(st, gate_mul_data_neg(ctx.rs, inst.primes), &rr.gate_log);
    audit_scratch_zero(st);
    detail::note(rr, "shift_multiplied", st);
    if (cfg.cleanup) {
        st = apply_gates(st, gate_cleanup_jfree(ctx.rs, inst.primes, ctx.table, cfg.crt_scheme),
                         &rr.gate_log);
        audit_scratch_zero(st);
        audit_slots_zero(st, {lay->t, lay->tprime}, "cleanup postcondition");
        detail::note(rr, "cleaned", st);
    }
    rr.z_distribution = fourier_sample(st, lay->z);
    rr.z_distribution.check_normalized(1e-9);
    rr.final_state = std::move(st);
    detail::attach_perturbation_study(rr, inst, cfg);
    return rr;
}

// ---------------------------------------------------------------------------
// Re-evaluation route: copy X into Y, advance Y to X(J+T), difference into Z,
// then the extended cleanup (rewind Y, zero T, uncopy, erase T').
// ---------------------------------------------------------------------------

inline RunResult run_reeval(const Instance &inst, const RouteConfig &cfg) {
    cfg.validate();
    detail::RunContext ctx = detail::open_run(inst, inst.primes, /*with_y_and_j=*/true);
    auto lay = ctx.rs.layout;

    RunResult rr;
    rr.accessibility = ctx.accessibility;
    SparseState st = prepare_affine_state(inst, lay);
    detail::note(rr, "prepared", st);
    st = expand_uniform_T(st, inst.primes);
    detail::note(rr, "uniform_T", st);
    st = apply_gate(st, gate_copy(lay, lay->x, lay->y), &rr.gate_log);
    detail::note(rr, "copied", st);
    st = apply_gate(st, gate_reeval_shift(ctx.rs, inst.primes), &rr.gate_log);
    audit_scratch_zero(st);
    detail::note(rr, "shifted", st);
    st = apply_gate(st, gate_difference(lay), &rr.gate_log);
    detail::note(rr, "differenced", st);
    if (cfg.cleanup) {
        st = apply_gates(st, gate_cleanup_reeval(ctx.rs, inst.primes, ctx.table, cfg.crt_scheme),
                         &rr.gate_log);
        audit_scratch_zero(st);
        audit_slots_zero(st, {lay->t, lay->tprime}, "cleanup postcondition");
        audit_slots_zero(st, lay->y, "uncopy postcondition");
        detail::note(rr, "cleaned", st);
    }
    rr.z_distribution = fourier_sample(st, lay->z);
    rr.z_distribution.check_normalized(1e-9);
    rr.final_state = std::move(st);
    detail::attach_perturbation_study(rr, inst, cfg);
    return rr;
}

// ---------------------------------------------------------------------------
// Fallback 1: enforce the relation only modulo the accessible sub-product P'.
// The shift label lives in Z_{P'}, where recovery is guaranteed, and the
// sampled support becomes {u : <b*, u> = 0 (mod P')}.
// ---------------------------------------------------------------------------

inline RunResult run_partial_P(const Instance &inst, const RouteConfig &cfg) {
    cfg.validate();
    Harvest h = harvest(inst);
    PriorityTable full = gate_priority_encoder(h.Delta, inst.primes, nullptr);
    std::vector<int64_t> accessible;
    for (size_t k = 0; k < inst.primes.count(); k++) {
        if (full.index[k] != npos) accessible.push_back(inst.primes.primes[k]);
    }
    if (accessible.empty()) {
        throw NoAccessiblePrime("every prime lacks an invertible coordinate");
    }
    PrimeSet sub(accessible);

    detail::RunContext ctx = detail::open_run(inst, sub, /*with_y_and_j=*/false);
    auto lay = ctx.rs.layout;

    RunResult rr;
    // Report accessibility of the full prime set (that is the finding).
    for (size_t k = 0; k < inst.primes.count(); k++) {
        rr.accessibility.push_back({inst.primes.primes[k], full.index[k]});
    }
    SparseState st = prepare_affine_state(inst, lay);
    detail::note(rr, "prepared", st);
    st = expand_uniform_T(st, sub);
    detail::note(rr, "uniform_T_partial", st);
    st = apply_gate(st, gate_mul_data_neg(ctx.rs, sub), &rr.gate_log);
    audit_scratch_zero(st);
    detail::note(rr, "shift_multiplied", st);
    st = apply_gates(st, gate_cleanup_jfree(ctx.rs, sub, ctx.table, cfg.crt_scheme),
                     &rr.gate_log);
    audit_scratch_zero(st);
    audit_slots_zero(st, {lay->t, lay->tprime}, "cleanup postcondition");
    detail::note(rr, "cleaned", st);
    rr.z_distribution = fourier_sample(st, lay->z);
    rr.z_distribution.check_normalized(1e-9);
    rr.final_state = std::move(st);
    return rr;
}

// ---------------------------------------------------------------------------
// Fallback 2: postselection. Undo the shift on Y against the still-present T,
// uncopy, then project the T register onto its zero frequency. Needs no
// recovery, hence no accessibility; succeeds with probability exactly
// |kernel| / P (1/P in the accessible case).
// ---------------------------------------------------------------------------

inline std::pair<RunResult, double> run_postselect(const Instance &inst, const RouteConfig &cfg) {
    cfg.validate();
    detail::RunContext ctx = detail::open_run(inst, inst.primes, /*with_y_and_j=*/true);
    auto lay = ctx.rs.layout;

    RunResult rr;
    rr.accessibility = ctx.accessibility;
    SparseState st = prepare_affine_state(inst, lay);
    detail::note(rr, "prepared", st);
    st = expand_uniform_T(st, inst.primes);
    detail::note(rr, "uniform_T", st);
    PermutationGate cp = gate_copy(lay, lay->x, lay->y);
    PermutationGate shift = gate_reeval_shift(ctx.rs, inst.primes);
    st = apply_gate(st, cp, &rr.gate_log);
    st = apply_gate(st, shift, &rr.gate_log);
    st = apply_gate(st, gate_difference(lay), &rr.gate_log);
    detail::note(rr, "differenced", st);
    // Unshift and uncopy against the known T: Y returns to zero.
    st = apply_gate(st, inverted(shift), &rr.gate_log);
    st = apply_gate(st, inverted(cp), &rr.gate_log);
    audit_scratch_zero(st);
    audit_slots_zero(st, lay->y, "unshift/uncopy postcondition");
    detail::note(rr, "unshifted", st);

    // Project T onto its zero Fourier frequency: the surviving amplitude of
    // each residual label is the mean of its T-branch amplitudes times
    // sqrt(P); the projector's norm gives the success probability.
    std::unordered_map<BasisState, cplx, BasisStateHash> projected;
    for (const auto &[k, a] : st.amps) {
        BasisState nk = k;
        nk.v[lay->t] = 0;
        projected[nk] += a / std::sqrt((double)inst.P);
    }
    double prob = 0.0;
    for (const auto &[k, a] : projected) prob += std::norm(a);

    // Exact value: |kernel of t -> t*b* (mod P)| / P, integers only.
    InjectivityReport inj = check_injectivity(inst);
    double exact = (double)inj.kernel.size() / (double)inst.P;
    if (std::abs(prob - exact) > 1e-9) {
        throw ConfigError("postselection probability drifted from the exact kernel count");
    }

    SparseState post;
    post.layout = lay;
    double renorm = 1.0 / std::sqrt(prob);
    for (const auto &[k, a] : projected) {
        if (std::norm(a) > 1e-30) post.amps[k] = a * renorm;
    }
    detail::note(rr, "postselected", post);
    rr.z_distribution = fourier_sample(post, lay->z);
    rr.z_distribution.check_normalized(1e-9);
    rr.final_state = std::move(post);
    rr.success_probability = exact;
    return {std::move(rr), exact};
}

/// Dispatch on the configured fallback/route.
inline RunResult run(const Instance &inst, const RouteConfig &cfg) {
    switch (cfg.fallback) {
        case Fallback::PartialP:
            return run_partial_P(inst, cfg);
        case Fallback::Postselect:
            return run_postselect(inst, cfg).first;
        case Fallback::None:
            break;
    }
    return cfg.route == Route::JFree ? run_jfree(inst, cfg) : run_reeval(inst, cfg);
}

// ---------------------------------------------------------------------------
// Sampling.
// ---------------------------------------------------------------------------

/// Seeded i.i.d. samples from the Z distribution by inverse-CDF over the
/// (ordered) outcome map; byte-reproducible per seed.
inline std::vector<std::vector<int128>> sample_outcomes(const RunResult &result, size_t count,
                                                        uint64_t seed) {
    const Distribution &d = result.z_distribution;
    std::vector<const std::vector<int128> *> keys;
    std::vector<double> cum;
    keys.reserve(d.prob.size());
    double acc = 0.0;
    for (const auto &[u, p] : d.prob) {
        acc += p;
        keys.push_back(&u);
        cum.push_back(acc);
    }
    if (keys.empty()) {
        throw ConfigError("cannot sample from an empty distribution");
    }
    std::mt19937_64 rng(seed);
    std::vector<std::vector<int128>> out;
    out.reserve(count);
    for (size_t i = 0; i < count; i++) {
        double x = ((double)(rng() >> 11)) / 9007199254740992.0 * acc;
        size_t lo = (size_t)(std::lower_bound(cum.begin(), cum.end(), x) - cum.begin());
        if (lo >= keys.size()) lo = keys.size() - 1;
        out.push_back(*keys[lo]);
    }
    return out;
}

// ---------------------------------------------------------------------------
// The contested one-coordinate domain extension, simulated faithfully enough
// to exhibit its failure: the index range is prolonged to ext_factor * P, the
// first coordinate is continued by honest affine evaluation, and the other
// coordinates are continued by translating the known subgroup structure —
// which misses the unknown offsets. With any nonzero offset the pipeline's
// final support escapes the annihilator; with zero offsets it collapses back
// to the correct behavior.
// ---------------------------------------------------------------------------

struct DomainExtensionReport {
    size_t annihilator_size = 0;
    size_t support_size = 0;
    std::vector<std::vector<int128>> violations;  // off-annihilator outcomes
    double violating_mass = 0.0;

    bool clean() const { return violations.empty(); }

    nlohmann::json to_json() const {
        nlohmann::json v = nlohmann::json::array();
        for (const auto &u : violations) {
            nlohmann::json row = nlohmann::json::array();
            for (int128 x : u) row.push_back((int64_t)x);
            v.push_back(row);
        }
        return nlohmann::json{{"annihilator_size", annihilator_size},
                              {"support_size", support_size},
                              {"violation_count", violations.size()},
                              {"violating_mass", violating_mass},
                              {"clean", clean()}};
    }
};

inline DomainExtensionReport demo_domain_extension_failure(const Instance &inst,
                                                           int64_t ext_factor = 2) {
    if (ext_factor < 2) {
        throw ConfigError("extension factor must be at least 2");
    }
    Harvest h = harvest(inst);
    int128 LP = (int128)ext_factor * inst.P;

    // The flawed extended register: honest in coordinate 1 for all j, but the
    // continuation of coordinates 2..n only translates the subgroup part
    // (j mod P) * Delta and forgets the offset once j leaves [0, P).
    auto x_ext = [&](int128 j) {
        std::vector<int128> x(inst.n);
        int128 jm = canonical_mod(j, LP);
        x[0] = balanced_mod(canonical_mod(jm, inst.M2) * canonical_mod(h.Delta[0], inst.M2) +
                                inst.v_star[0],
                            inst.M2);
        bool in_true_window = jm < inst.P;
        for (size_t i = 1; i < inst.n; i++) {
            int128 base = canonical_mod(jm, inst.P) * canonical_mod(h.Delta[i], inst.M2);
            if (in_true_window) base += inst.v_star[i];
            x[i] = balanced_mod(base, inst.M2);
        }
        return x;
    };

    // Pair-shift difference over the extended index domain, then the standard
    // cleanup performed as if Z were a clean coset point.
    auto lay = std::make_shared<RegisterLayout>();
    size_t jslot = lay->add_slot("Jext", LP);
    for (size_t i = 0; i < inst.n; i++) {
        lay->z.push_back(lay->add_slot("Z" + std::to_string(i + 1), inst.M2));
    }
    lay->t = lay->add_slot("T", inst.P);

    PriorityTable table = gate_priority_encoder(h.Delta, inst.primes, nullptr);
    if (!table.fully_accessible()) {
        throw AccessibilityViolation("extension demo needs an accessible instance");
    }

    SparseState st;
    st.layout = lay;
    double amp = 1.0 / std::sqrt((double)(LP * inst.P));
    for (int128 j = 0; j < LP; j++) {
        std::vector<int128> xj = x_ext(j);
        for (int128 t = 0; t < inst.P; t++) {
            std::vector<int128> xjt = x_ext(j + t);
            BasisState k;
            k.v.assign(lay->size(), 0);
            k.v[jslot] = balanced_mod(j, LP);
            for (size_t i = 0; i < inst.n; i++) {
                k.v[lay->z[i]] = balanced_mod(xj[i] - xjt[i], inst.M2);
            }
            // cleanup as the maneuver intends: recover t from Z, subtract
            std::vector<int128> zvec(inst.n);
            for (size_t i = 0; i < inst.n; i++) zvec[i] = k.v[lay->z[i]];
            int128 rec = recover_shift(zvec, h.Delta, inst.primes, table);
            k.v[lay->t] = balanced_mod(t - rec, inst.P);
            st.amps[k] += amp;
        }
    }
    st.check_normalized(1e-9);

    Distribution d = fourier_sample(st, lay->z);
    Annihilator ann = enumerate_annihilator(inst);
    DomainExtensionReport rep;
    rep.annihilator_size = ann.outcomes.size();
    rep.support_size = d.prob.size();
    for (const auto &[u, p] : d.prob) {
        if (p > 1e-12 && !ann.contains(u)) {
            rep.violations.push_back(u);
            rep.violating_mass += p;
        }
    }
    return rep;
}

// ---------------------------------------------------------------------------
// Exports.
// ---------------------------------------------------------------------------

inline std::string format_probability(double p) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", p);
    return buf;
}

inline nlohmann::json instance_json(const Instance &inst) {
    nlohmann::json b = nlohmann::json::array(), v = nlohmann::json::array(),
                   ps = nlohmann::json::array();
    for (int128 x : inst.b_star) b.push_back((int64_t)canonical_mod(x, inst.M2));
    for (int128 x : inst.v_star) v.push_back((int64_t)canonical_mod(x, inst.M2));
    for (int64_t p : inst.primes.primes) ps.push_back(p);
    return nlohmann::json{{"n", inst.n},         {"primes", ps},
                          {"D", inst.D},         {"P", (int64_t)inst.P},
                          {"M2", (int64_t)inst.M2}, {"b_star", b},
                          {"v_star", v},         {"a", inst.a},
                          {"b", inst.b},         {"c", inst.c},
                          {"j_lo", inst.j_lo},   {"j_hi", inst.j_hi},
                          {"seed", inst.seed}};
}

/// CSV with one row per outcome: u_1..u_n, probability, in_annihilator
/// (decided by the exact integer predicate).
inline std::string distribution_csv(const Distribution &d, const Annihilator &ann) {
    std::string out;
    for (size_t i = 0; i < d.coords(); i++) {
        out += "u_" + std::to_string(i + 1) + ",";
    }
    out += "probability,in_annihilator\n";
    for (const auto &[u, p] : d.prob) {
        for (int128 x : u) {
            out += to_string_i128(x) + ",";
        }
        out += format_probability(p) + ",";
        out += ann.contains(u) ? "1" : "0";
        out += "\n";
    }
    return out;
}

inline nlohmann::json accessibility_json(const std::vector<AccessibilityEntry> &entries) {
    nlohmann::json arr = nlohmann::json::array();
    for (const AccessibilityEntry &e : entries) {
        nlohmann::json row{{"prime", e.prime}, {"accessible", e.accessible()}};
        if (e.accessible()) {
            row["coordinate"] = e.coordinate + 1;  // 1-based, matching the math convention
        } else {
            row["coordinate"] = nullptr;
        }
        arr.push_back(row);
    }
    return arr;
}

inline nlohmann::json run_result_json(const Instance &inst, const RouteConfig &cfg,
                                      const RunResult &rr) {
    nlohmann::json dist = nlohmann::json::array();
    for (const auto &[u, p] : rr.z_distribution.prob) {
        nlohmann::json uu = nlohmann::json::array();
        for (int128 x : u) uu.push_back((int64_t)x);
        dist.push_back(nlohmann::json{{"u", uu}, {"probability", p}});
    }
    nlohmann::json trace = nlohmann::json::array();
    for (const auto &[name, sum] : rr.trace) {
        trace.push_back(nlohmann::json{{"step", name}, {"checksum", sum}});
    }
    nlohmann::json j{
        {"schema_version", 1},
        {"instance", instance_json(inst)},
        {"route",
         nlohmann::json{
             {"route", cfg.route == Route::JFree ? "jfree" : "reeval"},
             {"crt_scheme", cfg.crt_scheme == CrtScheme::Garner ? "garner" : "product_tree"},
             {"cleanup", cfg.cleanup},
             {"fallback", cfg.fallback == Fallback::None
                              ? "none"
                              : (cfg.fallback == Fallback::PartialP ? "partial_p" : "postselect")},
             {"qft_perturbation", cfg.qft_perturbation},
             {"rng_seed", cfg.rng_seed}}},
        {"accessibility", accessibility_json(rr.accessibility)},
        {"gate_log", rr.gate_log.to_json()},
        {"trace", trace},
        {"z_distribution", dist}};
    if (rr.success_probability) {
        j["success_probability"] = *rr.success_probability;
    }
    if (rr.leakage) {
        j["leakage"] = rr.leakage->to_json();
    }
    return j;
}

}  // namespace pairshift
