#pragma once

#include <map>
#include <vector>

#include "pairshift/common.hpp"

namespace pairshift {

/// A probability distribution over outcome vectors u, one modulus per
/// coordinate. Keys are canonical (non-negative) representatives; the map is
/// ordered so exports iterate deterministically.
struct Distribution {
    std::vector<int128> moduli;
    std::map<std::vector<int128>, double> prob;

    size_t coords() const { return moduli.size(); }

    double total_mass() const {
        double s = 0.0;
        for (const auto &[u, p] : prob) s += p;
        return s;
    }

    void check_normalized(double tol = 1e-9) const {
        double s = total_mass();
        if (s < 1.0 - tol || s > 1.0 + tol) {
            throw ConfigError("distribution mass " + std::to_string(s) + " outside 1 +/- tol");
        }
        for (const auto &[u, p] : prob) {
            if (p < -tol) {
                throw ConfigError("negative probability " + std::to_string(p));
            }
        }
    }
};

/// Total variation distance; outcomes absent from a map count as probability 0.
inline double total_variation(const Distribution &a, const Distribution &b) {
    double tv = 0.0;
    for (const auto &[u, p] : a.prob) {
        auto it = b.prob.find(u);
        double q = (it == b.prob.end()) ? 0.0 : it->second;
        tv += std::abs(p - q);
    }
    for (const auto &[u, q] : b.prob) {
        if (!a.prob.count(u)) tv += q;
    }
    return tv / 2.0;
}

}  // namespace pairshift
