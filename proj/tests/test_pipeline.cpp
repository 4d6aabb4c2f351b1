#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "pairshift/pipeline.hpp"
#include "test_support.hpp"

using namespace pairshift;

TEST_CASE("J-free route: exact annihilator support, uniform", "[pipeline]") {
    Instance ref = make_reference_instance();
    RouteConfig cfg;
    RunResult rr = run_jfree(ref, cfg);

    CHECK(rr.z_distribution.prob.size() == 240);
    Annihilator ann = enumerate_annihilator(ref);
    for (const auto &[u, p] : rr.z_distribution.prob) {
        CHECK(ann.contains(u));
        CHECK(p == Catch::Approx(1.0 / 240.0).margin(1e-9));
    }

    // Accessibility report: coordinate 1 carries p=3, coordinate 2 carries p=5.
    REQUIRE(rr.accessibility.size() == 2);
    CHECK(rr.accessibility[0].prime == 3);
    CHECK(rr.accessibility[0].coordinate == 0);
    CHECK(rr.accessibility[1].prime == 5);
    CHECK(rr.accessibility[1].coordinate == 1);

    // Trace covers the pipeline steps.
    REQUIRE(rr.trace.size() == 4);
    CHECK(rr.trace[0].first == "prepared");
    CHECK(rr.trace[3].first == "cleaned");

    // Gate work was logged.
    CHECK(rr.gate_log.total() > 0);
}

TEST_CASE("cleanup off: uniform over the whole cube, Schmidt rank P", "[pipeline]") {
    Instance ref = make_reference_instance();
    RouteConfig cfg;
    cfg.cleanup = false;
    RunResult rr = run_jfree(ref, cfg);

    CHECK(rr.z_distribution.prob.size() == 3600);
    for (const auto &[u, p] : rr.z_distribution.prob) {
        CHECK(p == Catch::Approx(1.0 / 3600.0).margin(1e-9));
    }

    // Pre-cleanup: Z marginal is already the uniform coset mixture...
    auto lay = rr.final_state.layout;
    Distribution dz = marginal_distribution(rr.final_state, lay->z);
    CHECK(dz.prob.size() == 15);
    for (const auto &[u, p] : dz.prob) {
        CHECK(p == Catch::Approx(1.0 / 15.0).margin(1e-12));
    }
    // ...but the state is entangled across the Z / rest cut: rank P.
    CHECK(schmidt_rank(rr.final_state, lay->z) == 15);

    // Post-cleanup: rank 1 (the factorization the interference needs).
    RouteConfig on;
    RunResult rr2 = run_jfree(ref, on);
    CHECK(schmidt_rank(rr2.final_state, rr2.final_state.layout->z) == 1);
}

TEST_CASE("offset and envelope invariance", "[pipeline]") {
    Instance ref = make_reference_instance();
    RouteConfig cfg;
    Distribution base = run_jfree(ref, cfg).z_distribution;

    // Zero offsets.
    Instance zref(2, PrimeSet({3, 5}), 2, {5, 7}, {0, 0}, 1, 0, 0, 0, 14);
    CHECK(total_variation(run_jfree(zref, cfg).z_distribution, base) < 1e-9);

    // Five random offsets.
    std::mt19937_64 rng(0x5eed0401);
    for (int it = 0; it < 5; it++) {
        std::vector<int128> v = {(int128)(rng() % 60), (int128)(rng() % 60)};
        Instance moved(2, PrimeSet({3, 5}), 2, {5, 7}, v, 1, 0, 0, 0, 14);
        CHECK(total_variation(run_jfree(moved, cfg).z_distribution, base) < 1e-9);
    }

    // Five envelope triples, both routes.
    for (auto [a, b, c] : {std::tuple<int64_t, int64_t, int64_t>{0, 0, 0},
                           {1, 2, 3},
                           {5, 0, 1},
                           {0, 7, 0},
                           {3, 3, 3}}) {
        Instance env(2, PrimeSet({3, 5}), 2, {5, 7}, {0, 13}, a, b, c, 0, 14);
        CHECK(total_variation(run_jfree(env, cfg).z_distribution, base) < 1e-9);
        CHECK(total_variation(run_reeval(env, cfg).z_distribution, base) < 1e-9);
    }
}

TEST_CASE("window independence", "[pipeline]") {
    Instance ref = make_reference_instance();
    RouteConfig cfg;
    Distribution base = run_jfree(ref, cfg).z_distribution;

    // Window of size 1.
    Instance w1(2, PrimeSet({3, 5}), 2, {5, 7}, {0, 13}, 1, 0, 0, 3, 3);
    CHECK(total_variation(run_jfree(w1, cfg).z_distribution, base) < 1e-9);

    // Window of size 3P (labels collide and add coherently).
    Instance w3(2, PrimeSet({3, 5}), 2, {5, 7}, {0, 13}, 1, 0, 0, 0, 44);
    CHECK(total_variation(run_jfree(w3, cfg).z_distribution, base) < 1e-9);
    CHECK(total_variation(run_reeval(w3, cfg).z_distribution, base) < 1e-9);
}

TEST_CASE("route equivalence on random accessible instances", "[pipeline]") {
    std::mt19937_64 rng(0x5eed0402);
    RouteConfig cfg;
    for (int it = 0; it < 6; it++) {
        Instance inst = make_random_accessible_instance(rng);
        Distribution a = run_jfree(inst, cfg).z_distribution;
        Distribution b = run_reeval(inst, cfg).z_distribution;
        CHECK(total_variation(a, b) < 1e-9);
    }
}

TEST_CASE("CRT scheme choice does not alter results", "[pipeline]") {
    Instance ref = make_reference_instance();
    RouteConfig g, t;
    g.crt_scheme = CrtScheme::Garner;
    t.crt_scheme = CrtScheme::ProductTree;
    CHECK(total_variation(run_jfree(ref, g).z_distribution, run_jfree(ref, t).z_distribution) <
          1e-12);
    CHECK(total_variation(run_reeval(ref, g).z_distribution, run_reeval(ref, t).z_distribution) <
          1e-12);
}

TEST_CASE("accessibility violation surfaces on the default route", "[pipeline]") {
    Instance bad(2, PrimeSet({3, 5}), 2, {5, 10}, {0, 13}, 1, 0, 0, 0, 14);
    RouteConfig cfg;
    CHECK_THROWS_AS(run_jfree(bad, cfg), AccessibilityViolation);
    CHECK_THROWS_AS(run_reeval(bad, cfg), AccessibilityViolation);
    // Diagnostic mode still runs (no recovery attempted).
    cfg.cleanup = false;
    CHECK_NOTHROW(run_jfree(bad, cfg));
}

TEST_CASE("partial-P fallback restricts to the accessible sub-product", "[pipeline]") {
    RouteConfig cfg;

    // b* = (5, 10): only p = 3 is accessible, so P' = 3.
    Instance bad(2, PrimeSet({3, 5}), 2, {5, 10}, {0, 13}, 1, 0, 0, 0, 14);
    RunResult rr = run_partial_P(bad, cfg);
    CHECK(rr.z_distribution.prob.size() == 1200);  // 60^2 / 3
    for (const auto &[u, p] : rr.z_distribution.prob) {
        int128 dot = balanced_mod(bad.b_star[0] * u[0] + bad.b_star[1] * u[1], 3);
        CHECK(dot == 0);
        CHECK(p == Catch::Approx(1.0 / 1200.0).margin(1e-9));
    }
    // The report covers the full prime set, flagging the failure at 5.
    REQUIRE(rr.accessibility.size() == 2);
    CHECK(rr.accessibility[0].accessible());
    CHECK_FALSE(rr.accessibility[1].accessible());

    // Fully accessible instance: partial-P degenerates to the default route.
    Instance ref = make_reference_instance();
    CHECK(total_variation(run_partial_P(ref, cfg).z_distribution,
                          run_jfree(ref, cfg).z_distribution) < 1e-9);

    // Nothing accessible at all.
    Instance none(2, PrimeSet({3, 5}), 2, {15, 30}, {0, 13}, 1, 0, 0, 0, 14);
    CHECK_THROWS_AS(run_partial_P(none, cfg), NoAccessiblePrime);
}

TEST_CASE("postselection succeeds with probability |kernel|/P", "[pipeline]") {
    RouteConfig cfg;
    Instance ref = make_reference_instance();
    auto [rr, prob] = run_postselect(ref, cfg);
    CHECK(prob == 1.0 / 15.0);  // exact: kernel is trivial
    REQUIRE(rr.success_probability.has_value());
    CHECK(*rr.success_probability == prob);

    // Post-selected distribution = the default route's annihilator support.
    CHECK(total_variation(rr.z_distribution, run_jfree(ref, cfg).z_distribution) < 1e-9);
    CHECK(rr.z_distribution.prob.size() == 240);

    // Inaccessible instance: no recovery needed, success probability 1/3
    // (kernel has 5 of the 15 shifts), support still the mod-P relation
    // (whose mod-5 part is vacuous here).
    Instance bad(2, PrimeSet({3, 5}), 2, {5, 10}, {0, 13}, 1, 0, 0, 0, 14);
    auto [rb, pb] = run_postselect(bad, cfg);
    CHECK(pb == 5.0 / 15.0);
    CHECK(rb.z_distribution.prob.size() == 1200);
    Annihilator annb = enumerate_annihilator(bad);
    for (const auto &[u, p] : rb.z_distribution.prob) {
        CHECK(annb.contains(u));
    }
}

TEST_CASE("run() dispatches on fallback and route", "[pipeline]") {
    Instance ref = make_reference_instance();
    RouteConfig cfg;
    cfg.route = Route::ReEval;
    Distribution via_dispatch = run(ref, cfg).z_distribution;
    CHECK(total_variation(via_dispatch, run_reeval(ref, cfg).z_distribution) < 1e-12);

    cfg.fallback = Fallback::Postselect;
    RunResult rr = run(ref, cfg);
    CHECK(rr.success_probability.has_value());
}

TEST_CASE("route config validation", "[pipeline]") {
    RouteConfig cfg;
    cfg.cleanup = false;
    cfg.fallback = Fallback::PartialP;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg.fallback = Fallback::None;
    CHECK_NOTHROW(cfg.validate());
    cfg.qft_perturbation = 0.5;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("sampling is reproducible and sound", "[pipeline]") {
    Instance ref = make_reference_instance();
    RouteConfig cfg;
    RunResult rr = run_jfree(ref, cfg);

    auto s1 = sample_outcomes(rr, 10000, 77);
    auto s2 = sample_outcomes(rr, 10000, 77);
    CHECK(s1 == s2);
    auto s3 = sample_outcomes(rr, 10000, 78);
    CHECK(s1 != s3);

    Annihilator ann = enumerate_annihilator(ref);
    ChiSquareReport rep = uniformity_test(s1, ann);
    CHECK(rep.violations.empty());
    CHECK(rep.p_value > 0.001);

    // No-cleanup sampling leaks off the annihilator at rate about 14/15.
    RouteConfig off;
    off.cleanup = false;
    RunResult rr_off = run_jfree(ref, off);
    auto bad = sample_outcomes(rr_off, 10000, 79);
    ChiSquareReport repb = uniformity_test(bad, ann);
    double rate = (double)repb.violations.size() / 10000.0;
    CHECK(rate == Catch::Approx(14.0 / 15.0).margin(0.02));
}

TEST_CASE("state checksums are deterministic and sensitive", "[pipeline]") {
    Instance ref = make_reference_instance();
    RouteConfig cfg;
    RunResult a = run_jfree(ref, cfg);
    RunResult b = run_jfree(ref, cfg);
    CHECK(a.trace == b.trace);

    // A different instance produces a different trace tail.
    Instance moved(2, PrimeSet({3, 5}), 2, {5, 7}, {1, 13}, 1, 0, 0, 0, 14);
    RunResult c = run_jfree(moved, cfg);
    CHECK(a.trace[0].second != c.trace[0].second);
}

TEST_CASE("domain-extension demo: offsets break the support", "[pipeline]") {
    // Reference offsets (0, 13) != 0: the flawed maneuver leaks.
    Instance ref = make_reference_instance();
    DomainExtensionReport rep = demo_domain_extension_failure(ref);
    CHECK_FALSE(rep.clean());
    CHECK(rep.violations.size() > 0);
    CHECK(rep.violating_mass > 1e-6);
    CHECK(rep.annihilator_size == 240);

    // Determinism.
    DomainExtensionReport rep2 = demo_domain_extension_failure(ref);
    CHECK(rep2.violations == rep.violations);
    CHECK(rep2.violating_mass == rep.violating_mass);

    // Zero offsets restore the original premise: no violations.
    Instance zero(2, PrimeSet({3, 5}), 2, {5, 7}, {0, 0}, 1, 0, 0, 0, 14);
    DomainExtensionReport repz = demo_domain_extension_failure(zero);
    CHECK(repz.clean());

    // Report serializes.
    nlohmann::json j = rep.to_json();
    CHECK(j["clean"].get<bool>() == false);
    CHECK(j["violation_count"].get<size_t>() == rep.violations.size());
}

TEST_CASE("perturbation study rides along when requested", "[pipeline]") {
    Instance ref = make_reference_instance();
    RouteConfig cfg;
    cfg.qft_perturbation = 0.01;
    RunResult rr = run_jfree(ref, cfg);
    REQUIRE(rr.leakage.has_value());
    CHECK(rr.leakage->leakage <= 0.02);
    // The main distribution stays exact: still 240 uniform outcomes.
    CHECK(rr.z_distribution.prob.size() == 240);
}

TEST_CASE("JSON and CSV exports carry the declared schema", "[pipeline]") {
    Instance ref = make_reference_instance();
    RouteConfig cfg;
    RunResult rr = run_jfree(ref, cfg);
    Annihilator ann = enumerate_annihilator(ref);

    nlohmann::json j = run_result_json(ref, cfg, rr);
    CHECK(j["schema_version"].get<int>() == 1);
    CHECK(j["instance"]["P"].get<int64_t>() == 15);
    CHECK(j["route"]["route"].get<std::string>() == "jfree");
    CHECK(j["z_distribution"].size() == 240);
    CHECK(j["gate_log"].contains("controlled_add"));
    CHECK(j["accessibility"].size() == 2);

    std::string csv = distribution_csv(rr.z_distribution, ann);
    size_t lines = (size_t)std::count(csv.begin(), csv.end(), '\n');
    CHECK(lines == 241);  // header + one row per outcome
    CHECK(csv.rfind("u_1,u_2,probability,in_annihilator\n", 0) == 0);
    // Every row of a cleaned run is in the annihilator.
    CHECK(csv.find(",0\n") == std::string::npos);

    // With cleanup off the CSV marks both kinds.
    RouteConfig off;
    off.cleanup = false;
    RunResult rr_off = run_jfree(ref, off);
    std::string csv_off = distribution_csv(rr_off.z_distribution, ann);
    CHECK(csv_off.find(",0\n") != std::string::npos);
    CHECK(csv_off.find(",1\n") != std::string::npos);

    // Byte-identical across repeated exports.
    CHECK(distribution_csv(rr.z_distribution, ann) == csv);
}
