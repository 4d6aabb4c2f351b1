#pragma once

#include <functional>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "pairshift/groupstate.hpp"

namespace pairshift {

// ---------------------------------------------------------------------------
// Gate cost accounting. Counters are static properties of a gate (the
// physical circuit contains every controlled primitive regardless of branch
// values), accumulated once per application.
// ---------------------------------------------------------------------------

struct GateCounts {
    uint64_t modular_add = 0;
    uint64_t modular_double = 0;
    uint64_t controlled_add = 0;
    uint64_t ext_euclid_call = 0;
    uint64_t crt_step = 0;
    uint64_t copy_cnot = 0;
    uint64_t priority_scan = 0;

    GateCounts &operator+=(const GateCounts &o) {
        modular_add += o.modular_add;
        modular_double += o.modular_double;
        controlled_add += o.controlled_add;
        ext_euclid_call += o.ext_euclid_call;
        crt_step += o.crt_step;
        copy_cnot += o.copy_cnot;
        priority_scan += o.priority_scan;
        return *this;
    }

    uint64_t total() const {
        return modular_add + modular_double + controlled_add + ext_euclid_call + crt_step +
               copy_cnot + priority_scan;
    }

    nlohmann::json to_json() const {
        return nlohmann::json{{"modular_add", modular_add},
                              {"modular_double", modular_double},
                              {"controlled_add", controlled_add},
                              {"ext_euclid_call", ext_euclid_call},
                              {"crt_step", crt_step},
                              {"copy_cnot", copy_cnot},
                              {"priority_scan", priority_scan}};
    }
};

using GateLog = GateCounts;

// ---------------------------------------------------------------------------
// Permutation gates. A gate rewrites basis labels only: application moves
// each amplitude to its image key untouched, so no gate can introduce a
// data-dependent phase even in principle. A collision among image keys would
// mean the action is not a permutation and aborts the run.
// ---------------------------------------------------------------------------

struct PermutationGate {
    std::string name;
    GateCounts cost;
    std::function<void(BasisState &)> forward;
    std::function<void(BasisState &)> inverse;
    // Optional precondition, checked on every support point before applying.
    std::function<void(const BasisState &)> precheck;
};

/// Swap forward/inverse; cost is the same circuit run backwards.
inline PermutationGate inverted(const PermutationGate &g) {
    PermutationGate inv = g;
    inv.name = g.name + "_inverse";
    std::swap(inv.forward, inv.inverse);
    inv.precheck = nullptr;
    return inv;
}

inline SparseState apply_gate(const SparseState &st, const PermutationGate &g, GateLog *log) {
    if (g.precheck) {
        for (const auto &[k, a] : st.amps) g.precheck(k);
    }
    SparseState out;
    out.layout = st.layout;
    out.amps.reserve(st.amps.size());
    for (const auto &[k, a] : st.amps) {
        BasisState nk = k;
        g.forward(nk);
        auto [it, fresh] = out.amps.emplace(std::move(nk), a);
        if (!fresh) {
            throw ConfigError("gate " + g.name + " is not a permutation: image collision");
        }
    }
    if (log) *log += g.cost;
    return out;
}

inline SparseState apply_gates(const SparseState &st, const std::vector<PermutationGate> &gs,
                               GateLog *log) {
    SparseState cur = st;
    for (const PermutationGate &g : gs) cur = apply_gate(cur, g, log);
    return cur;
}

// ---------------------------------------------------------------------------
// Audits.
// ---------------------------------------------------------------------------

/// Every scratch slot must be zero on every support point.
inline void audit_scratch_zero(const SparseState &st) {
    for (const auto &[k, a] : st.amps) {
        for (size_t s : st.layout->scratch) {
            if (k.v[s] != 0) {
                throw ScratchNotRestored("scratch slot " + st.layout->slots[s].name +
                                         " nonzero after composite");
            }
        }
    }
}

inline void audit_slots_zero(const SparseState &st, const std::vector<size_t> &slots,
                             const std::string &what) {
    for (const auto &[k, a] : st.amps) {
        for (size_t s : slots) {
            if (k.v[s] != 0) {
                throw ConfigError(what + ": slot " + st.layout->slots[s].name +
                                  " nonzero on a support point");
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Primitive gates.
// ---------------------------------------------------------------------------

/// dst <- dst + src (mod each slot modulus). On zeroed destinations this is
/// the coherent basis copy; on a superposition it entangles rather than
/// clones. Precondition (checked): dst is zero on every support point.
inline PermutationGate gate_copy(std::shared_ptr<const RegisterLayout> lay,
                                 std::vector<size_t> src, std::vector<size_t> dst) {
    if (src.size() != dst.size()) {
        throw ConfigError("gate_copy: src/dst width mismatch");
    }
    PermutationGate g;
    g.name = "copy";
    g.cost.copy_cnot = src.size();
    g.precheck = [dst](const BasisState &k) {
        for (size_t s : dst) {
            if (k.v[s] != 0) {
                throw DstNotZero("copy destination not zero");
            }
        }
    };
    g.forward = [lay, src, dst](BasisState &k) {
        for (size_t i = 0; i < src.size(); i++) {
            k.v[dst[i]] = balanced_mod(k.v[dst[i]] + k.v[src[i]], lay->modulus(dst[i]));
        }
    };
    g.inverse = [lay, src, dst](BasisState &k) {
        for (size_t i = 0; i < src.size(); i++) {
            k.v[dst[i]] = balanced_mod(k.v[dst[i]] - k.v[src[i]], lay->modulus(dst[i]));
        }
    };
    return g;
}

/// a_slot <- a_slot - b_slot (mod the slot modulus). Used for T <- T - T'.
inline PermutationGate gate_sub_slot(std::shared_ptr<const RegisterLayout> lay, size_t a_slot,
                                     size_t b_slot) {
    PermutationGate g;
    g.name = "sub_slot";
    g.cost.modular_add = 1;
    g.forward = [lay, a_slot, b_slot](BasisState &k) {
        k.v[a_slot] = balanced_mod(k.v[a_slot] - k.v[b_slot], lay->modulus(a_slot));
    };
    g.inverse = [lay, a_slot, b_slot](BasisState &k) {
        k.v[a_slot] = balanced_mod(k.v[a_slot] + k.v[b_slot], lay->modulus(a_slot));
    };
    return g;
}

namespace detail {

// The double-and-add ladder. Forward, on one basis label:
//   1. compute  R_0 <- data, R_l <- 2 R_{l-1}  (into zeroed scratch slots)
//   2. for each bit l of the control slot's value, dst +/- R_l (read from the
//      ladder slots themselves, so the scratch is load-bearing, not cosmetic)
//   3. uncompute the ladder back to zero
// The control slot is read only; sign -1 realizes dst <- dst - ctrl*data.
struct LadderSpec {
    std::shared_ptr<const RegisterLayout> lay;
    size_t ctrl_slot;                        // value in [0, ctrl_mod)
    int128 ctrl_mod;                         // P or a sub-product
    std::vector<size_t> dst;                 // n slots mod M2
    std::vector<int128> data;                // classical n-vector mod M2
    std::vector<std::vector<size_t>> ladder; // L levels x n slots
    int sign = +1;

    size_t levels() const { return ladder.size(); }

    void run(BasisState &k, int dir) const {
        size_t n = dst.size();
        int128 m2 = lay->modulus(dst[0]);
        // compute ladder
        for (size_t l = 0; l < levels(); l++) {
            for (size_t i = 0; i < n; i++) {
                int128 prev = (l == 0) ? balanced_mod(data[i], m2)
                                       : balanced_mod(2 * k.v[ladder[l - 1][i]], m2);
                k.v[ladder[l][i]] = balanced_mod(k.v[ladder[l][i]] + prev, m2);
            }
        }
        // controlled additions off the control slot's bits
        int128 bits = canonical_mod(k.v[ctrl_slot], ctrl_mod);
        for (size_t l = 0; l < levels(); l++) {
            if ((bits >> l) & 1) {
                for (size_t i = 0; i < n; i++) {
                    int128 step = dir * sign * k.v[ladder[l][i]];
                    k.v[dst[i]] = balanced_mod(k.v[dst[i]] + step, m2);
                }
            }
        }
        // uncompute ladder (reverse order so each doubling sees its source)
        for (size_t l = levels(); l-- > 0;) {
            for (size_t i = 0; i < n; i++) {
                int128 prev = (l == 0) ? balanced_mod(data[i], m2)
                                       : balanced_mod(2 * k.v[ladder[l - 1][i]], m2);
                k.v[ladder[l][i]] = balanced_mod(k.v[ladder[l][i]] - prev, m2);
                if (k.v[ladder[l][i]] != 0) {
                    throw ScratchNotRestored("ladder slot not restored to zero");
                }
            }
        }
    }

    GateCounts cost() const {
        GateCounts c;
        size_t n = dst.size(), L = levels();
        c.modular_add = 2 * n;                       // R_0 load + unload
        c.modular_double = 2 * n * (L ? L - 1 : 0);  // doublings, both phases
        c.controlled_add = n * L;                    // one controlled add per bit
        return c;
    }
};

}  // namespace detail

// ---------------------------------------------------------------------------
// Route layouts. Scratch = the doubling ladder (L levels x n slots mod M2,
// L = ceil(log2 of the T modulus)) plus one recombination digit slot per
// prime. All scratch is audited back to zero after every composite.
// ---------------------------------------------------------------------------

struct RouteSlots {
    std::shared_ptr<RegisterLayout> layout;
    std::vector<std::vector<size_t>> ladder;  // L x n
    std::vector<size_t> digits;               // one per prime
};

inline RouteSlots make_route_layout(const Instance &inst, const PrimeSet &t_primes,
                                    bool with_y_and_j) {
    RouteSlots rs;
    rs.layout = std::make_shared<RegisterLayout>();
    RegisterLayout &lay = *rs.layout;
    for (size_t i = 0; i < inst.n; i++) {
        lay.x.push_back(lay.add_slot("X" + std::to_string(i + 1), inst.M2));
    }
    if (with_y_and_j) {
        for (size_t i = 0; i < inst.n; i++) {
            lay.y.push_back(lay.add_slot("Y" + std::to_string(i + 1), inst.M2));
        }
        lay.j = lay.add_slot("J", inst.P);
    }
    for (size_t i = 0; i < inst.n; i++) {
        lay.z.push_back(lay.add_slot("Z" + std::to_string(i + 1), inst.M2));
    }
    int128 tp = t_primes.product;
    lay.t = lay.add_slot("T", tp);
    lay.tprime = lay.add_slot("Tprime", tp);
    size_t L = (size_t)bit_width_i128(tp - 1);
    for (size_t l = 0; l < L; l++) {
        std::vector<size_t> row;
        for (size_t i = 0; i < inst.n; i++) {
            size_t s = lay.add_slot("R" + std::to_string(l) + "_" + std::to_string(i + 1),
                                    inst.M2);
            lay.scratch.push_back(s);
            row.push_back(s);
        }
        rs.ladder.push_back(row);
    }
    for (size_t k = 0; k < t_primes.count(); k++) {
        size_t s = lay.add_slot("digit_p" + std::to_string(t_primes.primes[k]),
                                t_primes.primes[k]);
        lay.scratch.push_back(s);
        rs.digits.push_back(s);
    }
    return rs;
}

// ---------------------------------------------------------------------------
// Shift arithmetic gates.
// ---------------------------------------------------------------------------

/// Z <- -T*Delta (mod M2), double-and-add with Delta as read-only data and
/// the ladder as materialized scratch. Precondition: Z zero everywhere.
inline PermutationGate gate_mul_data_neg(const RouteSlots &rs, const PrimeSet &t_primes) {
    auto lay = std::shared_ptr<const RegisterLayout>(rs.layout);
    detail::LadderSpec spec{lay,       lay->t, t_primes.product, lay->z, lay->delta_data,
                            rs.ladder, -1};
    PermutationGate g;
    g.name = "mul_data_neg";
    g.cost = spec.cost();
    g.precheck = [lay](const BasisState &k) {
        for (size_t s : lay->z) {
            if (k.v[s] != 0) {
                throw DstNotZero("Z must be zero before the shift multiply");
            }
        }
    };
    g.forward = [spec](BasisState &k) { spec.run(k, +1); };
    g.inverse = [spec](BasisState &k) { spec.run(k, -1); };
    return g;
}

/// Y <- Y + T*Delta (mod M2): advances the copied evaluation from X(J) to
/// X(J+T) using the affine law. J itself is untouched.
inline PermutationGate gate_reeval_shift(const RouteSlots &rs, const PrimeSet &t_primes) {
    auto lay = std::shared_ptr<const RegisterLayout>(rs.layout);
    if (lay->y.empty()) {
        throw ConfigError("gate_reeval_shift requires a Y block");
    }
    detail::LadderSpec spec{lay,       lay->t, t_primes.product, lay->y, lay->delta_data,
                            rs.ladder, +1};
    PermutationGate g;
    g.name = "reeval_shift";
    g.cost = spec.cost();
    g.forward = [spec](BasisState &k) { spec.run(k, +1); };
    g.inverse = [spec](BasisState &k) { spec.run(k, -1); };
    return g;
}

/// Z <- X - Y (mod M2). Precondition: Z zero everywhere.
inline PermutationGate gate_difference(std::shared_ptr<const RegisterLayout> lay) {
    if (lay->y.empty()) {
        throw ConfigError("gate_difference requires a Y block");
    }
    PermutationGate g;
    g.name = "difference";
    g.cost.modular_add = 2 * lay->x.size();
    g.precheck = [lay](const BasisState &k) {
        for (size_t s : lay->z) {
            if (k.v[s] != 0) {
                throw DstNotZero("Z must be zero before the difference");
            }
        }
    };
    g.forward = [lay](BasisState &k) {
        for (size_t i = 0; i < lay->x.size(); i++) {
            k.v[lay->z[i]] = balanced_mod(k.v[lay->z[i]] + k.v[lay->x[i]] - k.v[lay->y[i]],
                                          lay->modulus(lay->z[i]));
        }
    };
    g.inverse = [lay](BasisState &k) {
        for (size_t i = 0; i < lay->x.size(); i++) {
            k.v[lay->z[i]] = balanced_mod(k.v[lay->z[i]] - k.v[lay->x[i]] + k.v[lay->y[i]],
                                          lay->modulus(lay->z[i]));
        }
    };
    return g;
}

// ---------------------------------------------------------------------------
// Priority encoder and shift recovery.
// ---------------------------------------------------------------------------

/// For each prime, the lexicographically first coordinate whose Delta entry
/// is a unit; npos marks an inaccessible prime.
struct PriorityTable {
    std::vector<size_t> index;  // one entry per prime; npos = missing

    bool fully_accessible() const {
        for (size_t i : index) {
            if (i == npos) return false;
        }
        return true;
    }

    std::vector<size_t> missing_positions() const {
        std::vector<size_t> out;
        for (size_t k = 0; k < index.size(); k++) {
            if (index[k] == npos) out.push_back(k);
        }
        return out;
    }
};

inline PriorityTable gate_priority_encoder(const std::vector<int128> &delta,
                                           const PrimeSet &primes, GateLog *log = nullptr) {
    PriorityTable t;
    for (size_t k = 0; k < primes.count(); k++) {
        int64_t p = primes.primes[k];
        size_t pick = npos;
        for (size_t i = 0; i < delta.size(); i++) {
            if (canonical_mod(delta[i], p) != 0) {
                pick = i;
                break;
            }
        }
        t.index.push_back(pick);
    }
    if (log) log->priority_scan += delta.size() * primes.count();
    return t;
}

enum class CrtScheme { Garner, ProductTree };

/// Classical core of shift recovery: the unique t with z = -t*delta per
/// accessible prime, recombined mod the product of the accessible primes.
/// Inaccessible primes are skipped (the controlled inversion degenerates to
/// the identity there); callers that require full accessibility check the
/// table first.
inline int128 recover_shift(const std::vector<int128> &z, const std::vector<int128> &delta,
                            const PrimeSet &primes, const PriorityTable &table,
                            CrtScheme scheme = CrtScheme::Garner) {
    std::vector<Residue> rs;
    std::vector<int64_t> used;
    for (size_t k = 0; k < primes.count(); k++) {
        if (table.index[k] == npos) continue;
        int64_t p = primes.primes[k];
        size_t i = table.index[k];
        int128 inv = mod_inverse_value(delta[i], p);
        rs.emplace_back(balanced_mod(-inv * balanced_mod(z[i], p), p), Modulus(p));
        used.push_back(p);
    }
    if (rs.empty()) {
        throw NoAccessiblePrime("no prime admits an invertible coordinate");
    }
    PrimeSet sub(used);
    Residue r = (scheme == CrtScheme::Garner) ? crt_garner(rs, sub) : crt_product_tree(rs, sub);
    return r.canonical();
}

/// Tprime <- Tprime + t(Z) where t(Z) is the recovered shift. The per-prime
/// digits pass through materialized trail slots: written from Z, combined
/// into Tprime, then uncomputed from Z again — so the inverse is exact and
/// the trail is auditable. Requires full accessibility of its prime set.
inline PermutationGate gate_recover_T(const RouteSlots &rs, const PrimeSet &t_primes,
                                      const PriorityTable &table,
                                      CrtScheme scheme = CrtScheme::Garner) {
    if (!table.fully_accessible()) {
        std::string msg = "inaccessible prime(s):";
        for (size_t k : table.missing_positions()) {
            msg += " " + std::to_string(t_primes.primes[k]);
        }
        throw AccessibilityViolation(msg);
    }
    auto lay = std::shared_ptr<const RegisterLayout>(rs.layout);
    std::vector<size_t> digits = rs.digits;
    std::vector<int128> delta = lay->delta_data;

    auto run = [lay, digits, delta, t_primes, table, scheme](BasisState &k, int dir) {
        // write digit trail from Z
        for (size_t e = 0; e < t_primes.count(); e++) {
            int64_t p = t_primes.primes[e];
            size_t i = table.index[e];
            int128 inv = mod_inverse_value(delta[i], p);
            int128 r = balanced_mod(-inv * balanced_mod(k.v[lay->z[i]], p), p);
            k.v[digits[e]] = balanced_mod(k.v[digits[e]] + r, p);
        }
        // recombine the trail into Tprime
        std::vector<Residue> rs2;
        for (size_t e = 0; e < t_primes.count(); e++) {
            rs2.emplace_back(k.v[digits[e]], Modulus(t_primes.primes[e]));
        }
        Residue t =
            (scheme == CrtScheme::Garner) ? crt_garner(rs2, t_primes) : crt_product_tree(rs2, t_primes);
        k.v[lay->tprime] = balanced_mod(k.v[lay->tprime] + dir * t.value, t_primes.product);
        // uncompute the trail (recompute each digit from Z and subtract)
        for (size_t e = 0; e < t_primes.count(); e++) {
            int64_t p = t_primes.primes[e];
            size_t i = table.index[e];
            int128 inv = mod_inverse_value(delta[i], p);
            int128 r = balanced_mod(-inv * balanced_mod(k.v[lay->z[i]], p), p);
            k.v[digits[e]] = balanced_mod(k.v[digits[e]] - r, p);
            if (k.v[digits[e]] != 0) {
                throw ScratchNotRestored("digit trail slot not restored");
            }
        }
    };

    PermutationGate g;
    g.name = "recover_T";
    g.cost.ext_euclid_call = 2 * t_primes.count();
    g.cost.modular_add = 2 * t_primes.count() + 1;
    g.cost.crt_step = t_primes.count();
    g.precheck = [lay](const BasisState &k) {
        if (k.v[lay->tprime] != 0) {
            throw DstNotZero("Tprime must be zero before recovery");
        }
    };
    g.forward = [run](BasisState &k) { run(k, +1); };
    g.inverse = [run](BasisState &k) { run(k, -1); };
    return g;
}

// ---------------------------------------------------------------------------
// Cleanup composites. Both leave Z bit-identical and return T (and, on the
// re-evaluation route, Y and Tprime) to zero on every support point, which
// disentangles the coset register.
// ---------------------------------------------------------------------------

/// (i) recover T' from Z, (ii) T <- T - T', (iii) erase T' against Z.
inline std::vector<PermutationGate> gate_cleanup_jfree(const RouteSlots &rs,
                                                       const PrimeSet &t_primes,
                                                       const PriorityTable &table,
                                                       CrtScheme scheme = CrtScheme::Garner) {
    auto lay = std::shared_ptr<const RegisterLayout>(rs.layout);
    PermutationGate rec = gate_recover_T(rs, t_primes, table, scheme);
    return {rec, gate_sub_slot(lay, lay->t, lay->tprime), inverted(rec)};
}

/// Re-evaluation cleanup: (i) recover T' from Z, (ii) rewind Y by T'*Delta
/// (equivalently re-evaluate at J+T-T'), (iii) T <- T - T', (iv) uncopy Y,
/// (v) erase T' against Z.
inline std::vector<PermutationGate> gate_cleanup_reeval(const RouteSlots &rs,
                                                        const PrimeSet &t_primes,
                                                        const PriorityTable &table,
                                                        CrtScheme scheme = CrtScheme::Garner) {
    auto lay = std::shared_ptr<const RegisterLayout>(rs.layout);
    if (lay->y.empty()) {
        throw ConfigError("re-evaluation cleanup requires a Y block");
    }
    PermutationGate rec = gate_recover_T(rs, t_primes, table, scheme);

    // Y <- Y - Tprime*Delta, double-and-add controlled on the Tprime slot.
    detail::LadderSpec unwind{lay,       lay->tprime, t_primes.product, lay->y, lay->delta_data,
                              rs.ladder, -1};
    PermutationGate rewind;
    rewind.name = "reeval_rewind";
    rewind.cost = unwind.cost();
    rewind.forward = [unwind](BasisState &k) { unwind.run(k, +1); };
    rewind.inverse = [unwind](BasisState &k) { unwind.run(k, -1); };

    PermutationGate uncopy = inverted(gate_copy(lay, lay->x, lay->y));
    uncopy.name = "uncopy";

    return {rec, rewind, gate_sub_slot(lay, lay->t, lay->tprime), uncopy, inverted(rec)};
}

// ---------------------------------------------------------------------------
// Static cost of the default route, for gate-count reporting and the
// asymptotic growth check: no state is ever built here.
// ---------------------------------------------------------------------------

inline GateCounts jfree_route_static_counts(size_t n, const PrimeSet &primes) {
    GateCounts total;
    size_t L = (size_t)bit_width_i128(primes.product - 1);
    size_t kappa = primes.count();
    // shift multiply (ladder)
    GateCounts mul;
    mul.modular_add = 2 * n;
    mul.modular_double = 2 * n * (L ? L - 1 : 0);
    mul.controlled_add = n * L;
    total += mul;
    // priority scan
    total.priority_scan += n * kappa;
    // cleanup: recover + subtract + inverse recover
    GateCounts rec;
    rec.ext_euclid_call = 2 * kappa;
    rec.modular_add = 2 * kappa + 1;
    rec.crt_step = kappa;
    total += rec;
    total.modular_add += 1;  // T <- T - T'
    total += rec;            // erase T'
    return total;
}

}  // namespace pairshift
