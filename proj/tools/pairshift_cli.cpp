// Batch frontend: instance generation, route execution, verification suites,
// sampling statistics, the domain-extension failure demo, the perturbed-QFT
// study, and a gate-count sweep.  All outputs are deterministic given
// (instance file, flags, seed).

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>

#include "pairshift/pipeline.hpp"

namespace fs = std::filesystem;
using namespace pairshift;

// Exit codes: 0 success, 1 unexpected error, 2 configuration problem,
// 3 accessibility failure, 4 support/window overflow, 5 verification failure.
constexpr int kExitOk = 0;
constexpr int kExitError = 1;
constexpr int kExitConfig = 2;
constexpr int kExitAccessibility = 3;
constexpr int kExitSupport = 4;
constexpr int kExitVerifyFailed = 5;

namespace {

std::string read_file(const std::string &path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw ConfigError("cannot open instance file: " + path);
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const fs::path &path, const std::string &text) {
    if (path.has_parent_path()) {
        fs::create_directories(path.parent_path());
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw ConfigError("cannot write file: " + path.string());
    }
    out << text;
}

void write_json(const fs::path &path, const nlohmann::json &doc) {
    write_file(path, doc.dump(2) + "\n");
}

Instance load_instance(const std::string &path) {
    return parse_instance_config(read_file(path));
}

// ---------------------------------------------------------------------------
// gen
// ---------------------------------------------------------------------------

struct GenParams {
    std::string out_path;
    size_t n = 2;
    std::vector<int64_t> primes;
    int64_t D = 1;
    uint64_t seed = 0;
    bool b1_product = false;           // pin b_1 to the trailing prime product
    bool force_accessible = false;     // rejection-sample until accessible
    int64_t force_inaccessible = 0;    // make every b_i divisible by this prime
    int64_t a = 0, b = 0, c = 0;
};

Instance generate_instance(const GenParams &gp) {
    PrimeSet ps(gp.primes);
    int128 M2 = (int128)gp.D * gp.D * ps.product;
    std::mt19937_64 rng(gp.seed);

    if (gp.force_inaccessible != 0) {
        bool member = false;
        for (int64_t p : ps.primes) {
            if (p == gp.force_inaccessible) member = true;
        }
        if (!member) {
            throw ConfigError("forced-inaccessible prime is not in the prime set");
        }
        if (gp.b1_product && ps.product / ps.primes[0] % gp.force_inaccessible != 0) {
            throw ConfigError(
                "trailing prime product is a unit modulo the forced-inaccessible prime");
        }
    }

    for (int attempt = 0; attempt < 10000; attempt++) {
        std::vector<int128> b_star(gp.n), v_star(gp.n);
        for (size_t i = 0; i < gp.n; i++) {
            b_star[i] = (int128)(rng() % (uint64_t)M2);
            v_star[i] = (int128)(rng() % (uint64_t)M2);
        }
        if (gp.b1_product) {
            b_star[0] = ps.product / ps.primes[0];
        }
        if (gp.force_inaccessible != 0) {
            int64_t p = gp.force_inaccessible;
            for (size_t i = 0; i < gp.n; i++) {
                if (i == 0 && gp.b1_product) continue;
                b_star[i] -= canonical_mod(b_star[i], p);
            }
        }
        Instance inst(gp.n, ps, gp.D, b_star, v_star, gp.a, gp.b, gp.c, 0,
                      (int64_t)ps.product - 1, gp.seed);
        if (gp.force_accessible && !check_injectivity(inst).accessible) {
            continue;
        }
        return inst;
    }
    throw ConfigError("could not generate an accessible instance; prime set too constrained");
}

int cmd_gen(const GenParams &gp) {
    Instance inst = generate_instance(gp);
    write_file(gp.out_path, serialize_instance_config(inst));
    InjectivityReport rep = check_injectivity(inst);
    std::cout << "wrote " << gp.out_path << "  (P=" << to_string_i128(inst.P)
              << ", M2=" << to_string_i128(inst.M2)
              << ", accessible=" << (rep.accessible ? "yes" : "no") << ")\n";
    return kExitOk;
}

// ---------------------------------------------------------------------------
// run
// ---------------------------------------------------------------------------

int cmd_run(const std::string &instance_path, const RouteConfig &cfg,
            const std::string &out_dir) {
    Instance inst = load_instance(instance_path);
    RunResult rr = run(inst, cfg);

    fs::path dir(out_dir);
    write_json(dir / "result.json", run_result_json(inst, cfg, rr));
    write_json(dir / "gate_log.json", rr.gate_log.to_json());
    Annihilator ann = enumerate_annihilator(inst);
    write_file(dir / "distribution.csv", distribution_csv(rr.z_distribution, ann));

    std::cout << "outcomes: " << rr.z_distribution.prob.size() << "\n";
    if (rr.success_probability) {
        std::cout << "success probability: " << format_probability(*rr.success_probability)
                  << "\n";
    }
    std::cout << "gate total: " << rr.gate_log.total() << "\n";
    std::cout << "wrote " << (dir / "result.json").string() << ", "
              << (dir / "distribution.csv").string() << ", "
              << (dir / "gate_log.json").string() << "\n";
    return kExitOk;
}

// ---------------------------------------------------------------------------
// verify
// ---------------------------------------------------------------------------

struct SuiteResult {
    std::string name;
    bool pass = false;
    std::string detail;
};

SuiteResult suite_counts(const Instance &inst) {
    SuiteResult r{"counts", false, ""};
    Annihilator ann = enumerate_annihilator(inst);
    int128 cube = 1;
    for (size_t i = 0; i < inst.n; i++) cube *= inst.M2;
    int128 expected = cube / inst.P;
    std::ostringstream ss;
    ss << ann.outcomes.size() << " = " << to_string_i128(inst.M2) << "^" << inst.n << "/"
       << to_string_i128(inst.P);
    r.detail = ss.str();
    r.pass = (int128)ann.outcomes.size() == expected;
    return r;
}

SuiteResult suite_injectivity(const Instance &inst) {
    SuiteResult r{"injectivity", false, ""};
    InjectivityReport rep = check_injectivity(inst);
    r.pass = rep.injective && rep.accessible;
    if (r.pass) {
        r.detail = "shift map injective; every prime has a unit coordinate";
    } else {
        std::ostringstream ss;
        ss << "kernel witness {";
        for (size_t i = 0; i < rep.kernel.size(); i++) {
            ss << (i ? "," : "") << to_string_i128(rep.kernel[i]);
        }
        ss << "}; primes without a unit coordinate:";
        for (int64_t p : rep.failing_primes) ss << " " << p;
        r.detail = ss.str();
    }
    return r;
}

SuiteResult suite_orthogonality(const Instance &inst) {
    SuiteResult r{"orthogonality", false, ""};

    // Build the post-cleanup coset state directly and transform it.
    Harvest h = harvest(inst);
    auto lay = std::make_shared<RegisterLayout>();
    for (size_t i = 0; i < inst.n; i++) {
        lay->z.push_back(lay->add_slot("Z" + std::to_string(i + 1), inst.M2));
    }
    SparseState st(lay);
    double amp = 1.0 / std::sqrt((double)inst.P);
    for (int128 t = 0; t < inst.P; t++) {
        BasisState k;
        k.v.resize(inst.n);
        for (size_t i = 0; i < inst.n; i++) {
            k.v[i] = balanced_mod(-t * h.Delta[i], inst.M2);
        }
        st.amps[k] += cplx(amp, 0.0);
    }
    SparseState ft = qft_state(st, lay->z);

    double worst = 0.0;
    double mass = 0.0;
    for (const auto &[k, a] : ft.amps) {
        std::vector<int128> u(inst.n);
        for (size_t i = 0; i < inst.n; i++) u[i] = canonical_mod(k.v[i], inst.M2);
        worst = std::max(worst, std::abs(a - closed_form_amplitude(inst, u)));
        mass += std::norm(a);
    }
    std::ostringstream ss;
    ss << "max |transform - closed form| = " << worst << "; mass = " << mass;
    r.detail = ss.str();
    r.pass = worst <= 1e-9 && std::abs(mass - 1.0) <= 1e-9;
    return r;
}

SuiteResult suite_factorization(const Instance &inst, const RouteConfig &base) {
    SuiteResult r{"factorization", false, ""};
    RouteConfig off = base;
    off.cleanup = false;
    RouteConfig on = base;
    on.cleanup = true;
    RunResult pre = run_jfree(inst, off);
    RunResult post = run_jfree(inst, on);
    size_t rank_pre = schmidt_rank(pre.final_state, pre.final_state.layout->z);
    size_t rank_post = schmidt_rank(post.final_state, post.final_state.layout->z);
    std::ostringstream ss;
    ss << "rank across shift-register cut: " << rank_pre << " before cleanup, " << rank_post
       << " after (expected " << to_string_i128(inst.P) << " / 1)";
    r.detail = ss.str();
    r.pass = rank_pre == (size_t)inst.P && rank_post == 1;
    return r;
}

SuiteResult suite_route_equivalence(const Instance &inst, const RouteConfig &cfg) {
    SuiteResult r{"route-equivalence", false, ""};
    Distribution a = run_jfree(inst, cfg).z_distribution;
    Distribution b = run_reeval(inst, cfg).z_distribution;
    double tv = total_variation(a, b);
    std::ostringstream ss;
    ss << "total variation between routes = " << tv;
    r.detail = ss.str();
    r.pass = tv <= 1e-9;
    return r;
}

SuiteResult suite_invariance(const Instance &inst, const RouteConfig &cfg) {
    SuiteResult r{"invariance", false, ""};
    Distribution base = run_jfree(inst, cfg).z_distribution;
    double worst = 0.0;
    std::mt19937_64 rng(17);
    for (int it = 0; it < 3; it++) {
        std::vector<int128> v(inst.n);
        for (size_t i = 0; i < inst.n; i++) v[i] = (int128)(rng() % (uint64_t)inst.M2);
        Instance moved(inst.n, inst.primes, inst.D, inst.b_star, v, inst.a, inst.b, inst.c,
                       inst.j_lo, inst.j_hi, inst.seed);
        worst = std::max(worst, total_variation(run_jfree(moved, cfg).z_distribution, base));
    }
    for (auto [a, b, c] :
         {std::tuple<int64_t, int64_t, int64_t>{0, 0, 0}, {1, 2, 3}, {5, 0, 1}}) {
        Instance env(inst.n, inst.primes, inst.D, inst.b_star, inst.v_star, a, b, c, inst.j_lo,
                     inst.j_hi, inst.seed);
        worst = std::max(worst, total_variation(run_jfree(env, cfg).z_distribution, base));
    }
    std::ostringstream ss;
    ss << "max total variation under offset/envelope changes = " << worst;
    r.detail = ss.str();
    r.pass = worst <= 1e-9;
    return r;
}

int cmd_verify(const std::string &instance_path, const std::string &suite,
               const RouteConfig &cfg) {
    Instance inst = load_instance(instance_path);
    std::vector<SuiteResult> results;
    auto want = [&](const char *name) { return suite == "all" || suite == name; };

    if (want("counts")) results.push_back(suite_counts(inst));
    if (want("injectivity")) results.push_back(suite_injectivity(inst));
    if (want("orthogonality")) results.push_back(suite_orthogonality(inst));
    if (want("factorization")) results.push_back(suite_factorization(inst, cfg));
    if (want("route-equivalence")) results.push_back(suite_route_equivalence(inst, cfg));
    if (want("invariance")) results.push_back(suite_invariance(inst, cfg));
    if (results.empty()) {
        throw ConfigError("unknown suite: " + suite);
    }

    bool all_pass = true;
    for (const SuiteResult &r : results) {
        std::cout << (r.pass ? "PASS" : "FAIL") << " " << r.name << ": " << r.detail << "\n";
        all_pass = all_pass && r.pass;
    }
    return all_pass ? kExitOk : kExitVerifyFailed;
}

// ---------------------------------------------------------------------------
// sample
// ---------------------------------------------------------------------------

int cmd_sample(const std::string &instance_path, const RouteConfig &cfg, size_t count,
               uint64_t seed, const std::string &out_dir) {
    Instance inst = load_instance(instance_path);
    RunResult rr = run(inst, cfg);
    auto samples = sample_outcomes(rr, count, seed);
    Annihilator ann = enumerate_annihilator(inst);

    std::ostringstream csv;
    for (size_t i = 0; i < inst.n; i++) csv << (i ? "," : "") << "u_" << (i + 1);
    csv << ",in_annihilator\n";
    for (const auto &u : samples) {
        for (size_t i = 0; i < inst.n; i++) csv << (i ? "," : "") << to_string_i128(u[i]);
        csv << "," << (ann.contains(u) ? 1 : 0) << "\n";
    }

    ChiSquareReport rep = uniformity_test(samples, ann);
    nlohmann::json stats = rep.to_json();
    stats["violation_rate"] = (double)rep.violations.size() / (double)count;
    stats["seed"] = seed;

    fs::path dir(out_dir);
    write_file(dir / "samples.csv", csv.str());
    write_json(dir / "chi_square.json", stats);

    std::cout << "samples: " << count << ", membership violations: " << rep.violations.size()
              << ", chi-square p = " << rep.p_value << "\n";
    std::cout << "wrote " << (dir / "samples.csv").string() << ", "
              << (dir / "chi_square.json").string() << "\n";
    return kExitOk;
}

// ---------------------------------------------------------------------------
// demo-extension-failure
// ---------------------------------------------------------------------------

int cmd_demo_extension(const std::string &instance_path, int64_t factor,
                       const std::string &out_dir) {
    Instance inst = load_instance(instance_path);
    DomainExtensionReport rep = demo_domain_extension_failure(inst, factor);
    write_json(fs::path(out_dir) / "extension_report.json", rep.to_json());

    std::cout << "annihilator size: " << rep.annihilator_size << "\n";
    std::cout << "observed support: " << rep.support_size << "\n";
    std::cout << "off-support outcomes: " << rep.violations.size()
              << " carrying mass " << rep.violating_mass << "\n";
    std::cout << (rep.clean()
                      ? "extension held (offsets are zero: subgroup translation is honest)\n"
                      : "extension failed as predicted: support left the annihilator\n");
    return kExitOk;
}

// ---------------------------------------------------------------------------
// approx-qft
// ---------------------------------------------------------------------------

int cmd_approx_qft(const std::string &instance_path, double epsilon, uint64_t seed,
                   const std::string &out_dir) {
    Instance inst = load_instance(instance_path);
    LeakageReport rep = approx_qft_experiment(inst, epsilon, seed);
    write_json(fs::path(out_dir) / "leakage.json", rep.to_json());
    std::cout << "epsilon requested " << rep.epsilon_requested << ", realized "
              << rep.epsilon_actual << "; off-support leakage " << rep.leakage
              << " (bound " << rep.bound << ")\n";
    return kExitOk;
}

// ---------------------------------------------------------------------------
// bench-gates
// ---------------------------------------------------------------------------

int cmd_bench_gates(const std::string &out_dir) {
    const std::vector<std::vector<int64_t>> prime_sets = {
        {3, 5}, {11, 13}, {101, 103}, {1009, 1013}, {10007, 10009}, {3, 5, 7}};
    const std::vector<size_t> ns = {2, 3, 4};

    nlohmann::json rows = nlohmann::json::array();
    std::cout << "n  primes              bits  total_gates\n";
    for (size_t n : ns) {
        for (const auto &pv : prime_sets) {
            PrimeSet ps(pv);
            GateCounts gc = jfree_route_static_counts(n, ps);
            size_t bits = bit_width_i128(ps.product - 1);
            std::ostringstream pstr;
            for (size_t i = 0; i < pv.size(); i++) pstr << (i ? "," : "") << pv[i];
            std::cout << n << "  " << pstr.str() << std::string(20 - pstr.str().size(), ' ')
                      << bits << "     " << gc.total() << "\n";
            nlohmann::json row = gc.to_json();
            row["n"] = n;
            row["primes"] = pv;
            row["shift_bits"] = bits;
            row["total"] = gc.total();
            rows.push_back(row);
        }
    }
    if (!out_dir.empty()) {
        write_json(fs::path(out_dir) / "gate_bench.json",
                   nlohmann::json{{"schema_version", 1}, {"rows", rows}});
        std::cout << "wrote " << (fs::path(out_dir) / "gate_bench.json").string() << "\n";
    }
    return kExitOk;
}

}  // namespace

int main(int argc, char **argv) {
    CLI::App app{"pair-shift coset sampler: exact simulator and verification harness"};
    app.require_subcommand(1);

    // Shared route flags (mirror RouteConfig field-for-field).
    RouteConfig cfg;
    std::string route_name = "jfree", crt_name = "garner", fallback_name = "none";
    bool no_cleanup = false;
    auto add_route_flags = [&](CLI::App *sub) {
        sub->add_option("--route", route_name, "route: jfree or reeval")
            ->check(CLI::IsMember({"jfree", "reeval"}));
        sub->add_option("--crt", crt_name, "shift recombination: garner or product-tree")
            ->check(CLI::IsMember({"garner", "product-tree"}));
        sub->add_flag("--no-cleanup", no_cleanup,
                      "skip shift cleanup (diagnostic: output stays uniform over the cube)");
        sub->add_option("--fallback", fallback_name,
                        "fallback when a prime is inaccessible: none, partial-p, postselect")
            ->check(CLI::IsMember({"none", "partial-p", "postselect"}));
        sub->add_option("--qft-perturbation", cfg.qft_perturbation,
                        "attach a perturbed-transform leakage study (0 disables)")
            ->check(CLI::Range(0.0, 0.1));
        sub->add_option("--seed", cfg.rng_seed, "seed for any attached stochastic study");
    };
    auto finish_route_cfg = [&]() {
        cfg.route = route_name == "reeval" ? Route::ReEval : Route::JFree;
        cfg.crt_scheme = crt_name == "product-tree" ? CrtScheme::ProductTree : CrtScheme::Garner;
        cfg.cleanup = !no_cleanup;
        if (fallback_name == "partial-p") {
            cfg.fallback = Fallback::PartialP;
        } else if (fallback_name == "postselect") {
            cfg.fallback = Fallback::Postselect;
        } else {
            cfg.fallback = Fallback::None;
        }
        cfg.validate();
    };

    // gen
    GenParams gp;
    CLI::App *gen = app.add_subcommand("gen", "generate an instance config file");
    gen->add_option("--out", gp.out_path, "output config path")->required();
    gen->add_option("--n", gp.n, "number of coordinates (>= 2)")->required();
    gen->add_option("--primes", gp.primes, "comma-separated odd distinct primes")
        ->required()
        ->delimiter(',');
    gen->add_option("--D", gp.D, "square-free scale D with gcd(D, P) = 1");
    gen->add_option("--seed", gp.seed, "generation seed")->required();
    gen->add_flag("--b1-product", gp.b1_product,
                  "pin b_1 to the product of the trailing primes");
    CLI::Option *facc = gen->add_flag("--force-accessible", gp.force_accessible,
                                      "resample until every prime has a unit coordinate");
    gen->add_option("--force-inaccessible", gp.force_inaccessible,
                    "make every coordinate divisible by this prime")
        ->excludes(facc);
    gen->add_option("--a", gp.a, "quadratic envelope coefficient");
    gen->add_option("--b", gp.b, "linear envelope coefficient");
    gen->add_option("--c", gp.c, "constant envelope coefficient");

    // run
    std::string instance_path, out_dir = "out";
    CLI::App *run_cmd = app.add_subcommand("run", "execute a route and export the results");
    run_cmd->add_option("--instance", instance_path, "instance config file")->required();
    run_cmd->add_option("--out", out_dir, "output directory");
    add_route_flags(run_cmd);

    // verify
    std::string suite = "all";
    CLI::App *verify_cmd =
        app.add_subcommand("verify", "run invariant suites against an instance");
    verify_cmd->add_option("--instance", instance_path, "instance config file")->required();
    verify_cmd->add_option("--suite", suite,
                           "counts, injectivity, orthogonality, factorization, "
                           "route-equivalence, invariance, or all");
    add_route_flags(verify_cmd);

    // sample
    size_t sample_count = 10000;
    uint64_t sample_seed = 0;
    CLI::App *sample_cmd =
        app.add_subcommand("sample", "draw measurement outcomes and test uniformity");
    sample_cmd->add_option("--instance", instance_path, "instance config file")->required();
    sample_cmd->add_option("--count", sample_count, "number of samples (>= 1)")
        ->check(CLI::PositiveNumber);
    sample_cmd->add_option("--sample-seed", sample_seed, "sampling seed")->required();
    sample_cmd->add_option("--out", out_dir, "output directory");
    add_route_flags(sample_cmd);

    // demo-extension-failure
    int64_t ext_factor = 2;
    CLI::App *demo_cmd = app.add_subcommand(
        "demo-extension-failure",
        "show how extending the shift window by subgroup translation breaks the support");
    demo_cmd->add_option("--instance", instance_path, "instance config file")->required();
    demo_cmd->add_option("--factor", ext_factor, "window extension factor (>= 2)");
    demo_cmd->add_option("--out", out_dir, "output directory");

    // approx-qft
    double epsilon = 0.01;
    uint64_t aq_seed = 0;
    CLI::App *aq_cmd = app.add_subcommand(
        "approx-qft", "measure off-support leakage under a perturbed transform");
    aq_cmd->add_option("--instance", instance_path, "instance config file")->required();
    aq_cmd->add_option("--epsilon", epsilon, "perturbation size in [0, 0.1]")
        ->check(CLI::Range(0.0, 0.1));
    aq_cmd->add_option("--seed", aq_seed, "perturbation seed")->required();
    aq_cmd->add_option("--out", out_dir, "output directory");

    // bench-gates
    std::string bench_out;
    CLI::App *bench_cmd =
        app.add_subcommand("bench-gates", "tabulate gate counts across instance sizes");
    bench_cmd->add_option("--out", bench_out, "optional output directory");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError &e) {
        int rc = app.exit(e);
        return rc == 0 ? kExitOk : kExitConfig;
    }

    try {
        if (gen->parsed()) return cmd_gen(gp);
        if (run_cmd->parsed()) {
            finish_route_cfg();
            return cmd_run(instance_path, cfg, out_dir);
        }
        if (verify_cmd->parsed()) {
            finish_route_cfg();
            return cmd_verify(instance_path, suite, cfg);
        }
        if (sample_cmd->parsed()) {
            finish_route_cfg();
            return cmd_sample(instance_path, cfg, sample_count, sample_seed, out_dir);
        }
        if (demo_cmd->parsed()) return cmd_demo_extension(instance_path, ext_factor, out_dir);
        if (aq_cmd->parsed()) return cmd_approx_qft(instance_path, epsilon, aq_seed, out_dir);
        if (bench_cmd->parsed()) return cmd_bench_gates(bench_out);
    } catch (const SupportTooLarge &e) {
        std::cerr << "error (support too large): " << e.what() << "\n";
        return kExitSupport;
    } catch (const WindowTooLarge &e) {
        std::cerr << "error (window too large): " << e.what() << "\n";
        return kExitSupport;
    } catch (const AccessibilityViolation &e) {
        std::cerr << "error (accessibility): " << e.what() << "\n"
                  << "hint: rerun with --fallback partial-p or --fallback postselect, or "
                     "--no-cleanup for diagnostics\n";
        return kExitAccessibility;
    } catch (const NoAccessiblePrime &e) {
        std::cerr << "error (accessibility): " << e.what() << "\n";
        return kExitAccessibility;
    } catch (const ConfigError &e) {
        std::cerr << "error (config): " << e.what() << "\n";
        return kExitConfig;
    } catch (const std::exception &e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitError;
    }
    return kExitOk;
}
