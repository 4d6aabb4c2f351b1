// End-to-end library walkthrough on the bundled reference instance:
// build the instance, run both routes, inspect the distribution, and
// cross-check the closed-form support prediction.

#include <cstdio>

#include "pairshift/pipeline.hpp"

using namespace pairshift;

int main() {
    // n = 2 coordinates over modulus M2 = D^2 * P = 4 * 15 = 60,
    // slope b* = (5, 7), offsets v* = (0, 13), window j = 0..14.
    Instance inst(2, PrimeSet({3, 5}), 2, {5, 7}, {0, 13}, 1, 0, 0, 0, 14);
    std::printf("instance: P = %s, M2 = %s\n", to_string_i128(inst.P).c_str(),
                to_string_i128(inst.M2).c_str());

    // The harvested pair determines everything the circuit reads.
    Harvest h = harvest(inst);
    std::printf("harvest: V = (%s, %s), Delta = (%s, %s)\n",
                to_string_i128(canonical_mod(h.V[0], inst.M2)).c_str(),
                to_string_i128(canonical_mod(h.V[1], inst.M2)).c_str(),
                to_string_i128(canonical_mod(h.Delta[0], inst.M2)).c_str(),
                to_string_i128(canonical_mod(h.Delta[1], inst.M2)).c_str());

    // Run the direct route and the re-evaluation route; both must agree.
    RouteConfig cfg;
    RunResult direct = run_jfree(inst, cfg);
    cfg.route = Route::ReEval;
    RunResult reeval = run(inst, cfg);
    std::printf("direct route: %zu outcomes, gate total %llu\n",
                direct.z_distribution.prob.size(),
                (unsigned long long)direct.gate_log.total());
    std::printf("re-evaluation route: %zu outcomes, distance %.3g\n",
                reeval.z_distribution.prob.size(),
                total_variation(direct.z_distribution, reeval.z_distribution));

    // The support is exactly the annihilator {u : <b*, u> = 0 (mod P)}.
    Annihilator ann = enumerate_annihilator(inst);
    std::printf("annihilator: %zu outcomes (M2^n / P = %s)\n", ann.outcomes.size(),
                to_string_i128(inst.M2 * inst.M2 / inst.P).c_str());

    // Draw a few samples and print them with their membership check.
    auto samples = sample_outcomes(direct, 5, 1);
    for (const auto &u : samples) {
        std::printf("sample u = (%s, %s)  in_annihilator = %d\n",
                    to_string_i128(u[0]).c_str(), to_string_i128(u[1]).c_str(),
                    ann.contains(u) ? 1 : 0);
    }
    return 0;
}
