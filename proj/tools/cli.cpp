#include "cli.hpp"

#include "manifest.hpp"

#include <cdemr/errors.hpp>
#include <cdemr/inference.hpp>
#include <cdemr/pipeline.hpp>
#include <cdemr/rng.hpp>
#include <cdemr/simulation.hpp>
#include <cdemr/stats.hpp>

#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <ostream>
#include <sstream>

namespace fs = std::filesystem;

namespace cdemr::cli {

namespace {

struct EstimateArgs {
    std::string data;
    std::string roles;
    std::string spec_file;
    int a = 0;
    int m = 0;
    std::optional<int> a_prime;
    std::optional<int> m_prime;
    std::vector<std::string> estimators;
    std::string nu_variant;
    int folds = 0;
    int bootstrap = 0;
    std::uint64_t seed = 1;
    double level = kDefaultLevel;
    std::optional<double> truncation;
    bool br = false;
    bool stratified = false;
    int gcomp_draws = 200;
    unsigned jobs = 1;
    std::string out_dir = ".";
    bool to_stdout = false;
};

struct SimulateArgs {
    std::string config;
    bool default_config = false;
    std::string scenarios = "P1,P2,P3,P4";
    std::string estimators = "dr1,dr2,dr3,dr4,tr1,tr2,qr";
    int reps = 1000;
    Index n = 2000;
    std::uint64_t seed = 1;
    unsigned jobs = 1;
    std::string out_dir = ".";
    bool quick = false;
    int folds = 0;
    int a = 0;
    int m = 1;
    double level = kDefaultLevel;
    int gcomp_draws = 200;
    Index truth_draws = 10'000'000;
    bool to_stdout = false;
};

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

Json read_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw SchemaError("cannot open " + path);
    try {
        return Json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw SchemaError(path + ": " + e.what());
    }
}

void write_file(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << text;
}

std::string dump(const Json& j) { return j.dump(2) + "\n"; }

// Contrast from point estimates only, for estimators without influence values.
ContrastResult point_contrast(ContrastKind kind, std::span<const EstimateResult> results,
                              double level) {
    const auto w = contrast_weights(kind);
    ContrastResult c;
    c.kind = kind;
    c.level = level;
    c.n = results[0].n;
    c.se = c.ci_low = c.ci_high = std::numeric_limits<double>::quiet_NaN();
    for (std::size_t k = 0; k < results.size(); ++k) {
        c.estimate += w[k] * results[k].psi;
        c.targets.push_back(results[k].target);
    }
    c.warnings.push_back("no influence values for this estimator; use --bootstrap for intervals");
    return c;
}

Json estimate_config_json(const EstimateArgs& args, const NuisanceSpec& spec) {
    Json j;
    j["data"] = args.data;
    j["roles"] = args.roles;
    j["target"] = {{"a", args.a}, {"m", args.m}};
    if (args.a_prime) j["target"]["a_prime"] = *args.a_prime;
    if (args.m_prime) j["target"]["m_prime"] = *args.m_prime;
    j["estimators"] = args.estimators;
    j["nuisance_spec"] = to_json(spec);
    j["folds"] = args.folds;
    j["bootstrap"] = args.bootstrap;
    j["level"] = args.level;
    j["gcomp_draws"] = args.gcomp_draws;
    return j;
}

int cmd_estimate(const EstimateArgs& args, const std::vector<std::string>& argv, std::ostream& out,
                 std::ostream& err) {
    const Roles roles = read_roles(args.roles);
    const Dataset data = read_dataset(args.data, roles);

    NuisanceSpec spec =
        args.spec_file.empty() ? default_spec(data) : nuisance_spec_from_json(read_json_file(args.spec_file));
    if (args.truncation) spec.truncation = *args.truncation;
    if (args.br) spec.br_augment = true;
    if (args.stratified) spec.stratified = true;
    if (!args.nu_variant.empty()) spec.nu_variant = nu_variant_from_string(args.nu_variant);
    check_spec(spec);
    wald_multiplier(args.level);

    Target target;
    target.a = args.a;
    target.m = args.m;
    target.a_prime = args.a_prime;
    target.m_prime = args.m_prime;

    std::vector<EstimatorId> ids;
    for (const auto& name : args.estimators) ids.push_back(estimator_from_string(name));
    if (ids.empty()) ids.push_back(EstimatorId::qr);

    std::vector<std::string> warnings = validate(data, target).warnings;
    for (auto t : {args.a_prime ? std::optional<Target>(Target{*args.a_prime, args.m}) : std::nullopt,
                   args.m_prime ? std::optional<Target>(Target{args.a, *args.m_prime}) : std::nullopt}) {
        if (t) {
            for (auto& w : validate(data, *t).warnings) warnings.push_back(w);
        }
    }

    std::vector<ContrastKind> kinds;
    if (args.a_prime) kinds.push_back(ContrastKind::cde);
    if (args.m_prime) kinds.push_back(ContrastKind::cme);
    if (args.a_prime && args.m_prime) kinds.push_back(ContrastKind::interaction);

    Json estimates = Json::array();
    Json contrasts = Json::array();
    std::vector<ContrastResult> contrast_rows;
    for (EstimatorId id : ids) {
        if (!args.nu_variant.empty()) {
            const auto need = required_variant(id);
            if (need && *need != spec.nu_variant) {
                throw VariantMismatch(std::string(to_string(id)) + " needs the " +
                                      std::string(to_string(*need)) + " nu construction, but --nu-variant is " +
                                      args.nu_variant);
            }
        }
        EstimatorConfig config;
        config.id = id;
        config.spec = spec;
        config.folds = args.folds;
        config.fold_seed = derive_seed(args.seed, {0xF01D});
        config.level = args.level;
        if (id == EstimatorId::g_comp) {
            std::vector<std::string> z_terms{"1"};
            for (const auto& x : data.x_names) z_terms.push_back(x);
            z_terms.push_back("a");
            config.gcomp = GcompModel{spec.mu_spec, TermSpec::parse(z_terms), args.gcomp_draws,
                                      derive_seed(args.seed, {0x6C})};
        }
        const std::uint64_t boot_seed = derive_seed(args.seed, {0xB007, static_cast<std::uint64_t>(id)});

        auto one = [&](const Target& t) {
            if (id == EstimatorId::g_comp) return run_estimator(data, t, config);
            NuisanceValues nv = nuisances_for(data, t, config);
            for (auto& w : nv.warnings) warnings.push_back(w);
            return estimate(id, data, t, nv, args.level);
        };

        EstimateResult main;
        if (args.bootstrap > 0) {
            BootstrapResult details;
            main = bootstrap_estimate(data, target, config, args.bootstrap, boot_seed, args.jobs, &details);
            for (auto& w : details.warnings) warnings.push_back(w);
        } else {
            main = one(target);
        }
        Json ej = to_json(main);
        ej["interval"] = args.bootstrap > 0 ? "bootstrap" : (main.se ? "eif" : "none");
        estimates.push_back(ej);

        for (ContrastKind kind : kinds) {
            ContrastResult c;
            if (args.bootstrap > 0) {
                c = bootstrap_contrast(kind, data, target, config, args.bootstrap, boot_seed, args.jobs);
            } else {
                std::vector<EstimateResult> parts;
                for (const auto& t : contrast_targets(kind, target)) parts.push_back(one(t));
                const bool all_eif = std::all_of(parts.begin(), parts.end(),
                                                 [](const EstimateResult& r) { return r.eif.has_value(); });
                c = all_eif ? contrast(kind, parts, args.level) : point_contrast(kind, parts, args.level);
            }
            Json cj = to_json(c);
            if (args.bootstrap == 0 && std::isnan(c.se)) cj["method"] = "none";
            cj["estimator"] = std::string(to_string(id));
            contrasts.push_back(cj);
            contrast_rows.push_back(std::move(c));
        }
    }

    Json result;
    result["estimates"] = estimates;
    if (!kinds.empty()) result["contrasts"] = contrasts;
    result["warnings"] = warnings;
    for (const auto& w : warnings) err << "warning: " << w << '\n';

    if (args.to_stdout) {
        out << dump(result);
        return kExitOk;
    }
    fs::create_directories(args.out_dir);
    write_file(fs::path(args.out_dir) / "estimate.json", dump(result));
    if (!contrast_rows.empty()) {
        std::ostringstream csv;
        write_contrasts_csv(csv, contrast_rows);
        write_file(fs::path(args.out_dir) / "contrasts.csv", csv.str());
    }
    std::vector<fs::path> inputs{args.data, args.roles};
    if (!args.spec_file.empty()) inputs.emplace_back(args.spec_file);
    const auto manifest = make_manifest("estimate", argv, estimate_config_json(args, spec), args.seed, inputs);
    write_file(fs::path(args.out_dir) / "manifest.json", dump(to_json(manifest)));
    err << "wrote " << (fs::path(args.out_dir) / "estimate.json").string() << '\n';
    return kExitOk;
}

bool same_coefficients(const SimConfig& a, const SimConfig& b) {
    return a.beta_x == b.beta_x && a.beta_a == b.beta_a && a.beta_z == b.beta_z &&
           a.beta_m == b.beta_m && a.beta_y == b.beta_y;
}

int cmd_simulate(const SimulateArgs& args, const std::vector<std::string>& argv, std::ostream& out,
                 std::ostream& err) {
    SimConfig config = args.config.empty() ? default_sim_config()
                                           : sim_config_from_json(read_json_file(args.config));
    std::vector<GridCase> cases;
    for (const auto& name : split_list(args.scenarios)) {
        cases.push_back(name == "ALL" ? all_correct_case() : grid_case(scenario_from_string(name)));
    }
    if (cases.empty()) throw ValidationError("--scenarios is empty");
    std::vector<EstimatorId> ids;
    for (const auto& name : split_list(args.estimators)) ids.push_back(estimator_from_string(name));
    if (ids.empty()) throw ValidationError("--estimators is empty");
    if (args.n < 2) throw ValidationError("--n must be at least 2");

    GridOptions opt;
    opt.reps = args.reps;
    opt.n = args.n;
    opt.seed = args.seed;
    opt.jobs = std::max(1u, args.jobs);
    opt.target = Target{args.a, args.m, std::nullopt, std::nullopt};
    opt.level = args.level;
    opt.gcomp_draws = args.gcomp_draws;
    opt.folds = args.folds;
    opt.truth_draws = args.truth_draws;
    if (same_coefficients(config, default_sim_config()) && args.a == 0 && args.m == 1) {
        opt.truth = TruePsi{kDefaultPsi01, kDefaultPsi01McSe};
    }
    config.n = args.n;
    config.seed = args.seed;

    const GridResult result = run_grid(config, cases, ids, opt);

    std::ostringstream csv;
    write_replicates_csv(csv, result.rows);
    const Json summary = summary_to_json(result);

    Json resolved;
    resolved["sim_config"] = to_json(config);
    resolved["scenarios"] = split_list(args.scenarios);
    resolved["estimators"] = split_list(args.estimators);
    resolved["reps"] = args.reps;
    resolved["n"] = args.n;
    resolved["jobs"] = opt.jobs;
    resolved["folds"] = args.folds;
    resolved["target"] = {{"a", args.a}, {"m", args.m}};
    resolved["level"] = args.level;
    resolved["truth"] = {{"psi", result.truth.psi}, {"mc_se", result.truth.mc_se},
                         {"source", opt.truth ? "stored reference" : "true_psi"}};

    err << std::left << std::setw(6) << "case" << std::setw(18) << "estimator" << std::right
        << std::setw(11) << "bias" << std::setw(11) << "3*mc_se" << std::setw(10) << "sd"
        << std::setw(9) << "cover" << std::setw(6) << "fail" << '\n';
    for (const auto& s : result.summary) {
        err << std::left << std::setw(6) << s.scenario << std::setw(18) << to_string(s.estimator)
            << std::right << std::fixed << std::setprecision(4) << std::setw(11) << s.mean_bias
            << std::setw(11) << s.threshold << std::setw(10) << s.sd << std::setw(9)
            << (s.coverage ? *s.coverage : std::numeric_limits<double>::quiet_NaN()) << std::setw(6)
            << s.failed << '\n';
    }
    err.unsetf(std::ios::floatfield);

    if (args.to_stdout) {
        out << dump(summary);
        return kExitOk;
    }
    fs::create_directories(args.out_dir);
    write_file(fs::path(args.out_dir) / "replicates.csv", csv.str());
    write_file(fs::path(args.out_dir) / "summary.json", dump(summary));
    std::vector<fs::path> inputs;
    if (!args.config.empty()) inputs.emplace_back(args.config);
    const auto manifest = make_manifest("simulate", argv, resolved, args.seed, inputs);
    write_file(fs::path(args.out_dir) / "manifest.json", dump(to_json(manifest)));
    err << "wrote " << result.rows.size() << " replicate rows to " << args.out_dir << '\n';
    return kExitOk;
}

std::vector<std::string> without_option(std::vector<std::string> argv, const std::string& name) {
    std::vector<std::string> out;
    for (std::size_t i = 0; i < argv.size(); ++i) {
        if (argv[i] == name) {
            ++i;
            continue;
        }
        if (argv[i].rfind(name + "=", 0) == 0) continue;
        out.push_back(argv[i]);
    }
    return out;
}

}  // namespace

NuisanceSpec default_spec(const Dataset& data) {
    std::vector<std::string> mu{"1"}, nu{"1"}, pi_a{"1"}, pi_m{"1"};
    for (const auto& x : data.x_names) {
        mu.push_back(x);
        nu.push_back(x);
        pi_a.push_back(x);
        pi_m.push_back(x);
    }
    mu.push_back("a");
    nu.push_back("a");
    pi_m.push_back("a");
    for (const auto& z : data.z_names) {
        mu.push_back(z);
        pi_m.push_back(z);
    }
    mu.push_back("m");
    NuisanceSpec spec;
    spec.mu_spec = TermSpec::parse(mu);
    spec.nu_spec = TermSpec::parse(nu);
    spec.pi_a_spec = TermSpec::parse(pi_a);
    spec.pi_m_spec = TermSpec::parse(pi_m);
    return spec;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Controlled direct effect estimation with multiply robust estimators", "cdemr"};
    app.require_subcommand(1);
    app.set_version_flag("--version", tool_version());

    EstimateArgs est;
    auto* e = app.add_subcommand("estimate", "Estimate E[Y(a,m)] and contrasts from a CSV file");
    e->add_option("--data", est.data, "CSV data file")->required();
    e->add_option("--roles", est.roles, "JSON file mapping columns to roles")->required();
    e->add_option("--spec", est.spec_file, "JSON nuisance model spec (default: main effects)");
    e->add_option("--a", est.a, "Treatment level a")->required();
    e->add_option("--m", est.m, "Mediator level m")->required();
    e->add_option("--a-prime", est.a_prime, "Comparison treatment level (CDE)");
    e->add_option("--m-prime", est.m_prime, "Comparison mediator level (CME)");
    e->add_option("--estimator", est.estimators, "Estimator id, repeatable (default qr)");
    e->add_option("--nu-variant", est.nu_variant, "imputation, weighting, or dr");
    e->add_option("--folds", est.folds, "Cross-fitting folds (0 = none)")->check(CLI::NonNegativeNumber);
    e->add_option("--bootstrap", est.bootstrap, "Bootstrap replicates (0 = EIF intervals)")
        ->check(CLI::NonNegativeNumber);
    e->add_option("--seed", est.seed, "Seed for folds, bootstrap, and g-computation draws");
    e->add_option("--level", est.level, "Confidence level");
    e->add_option("--truncation", est.truncation, "Probability truncation floor");
    e->add_flag("--br", est.br, "Bang-Robins augmentation of the outcome regressions");
    e->add_flag("--stratified", est.stratified, "Fit mu, pi_m, nu within the target strata");
    e->add_option("--gcomp-draws", est.gcomp_draws, "Monte Carlo draws per unit for g_comp");
    e->add_option("--jobs", est.jobs, "Parallel bootstrap replicates");
    e->add_option("--out-dir", est.out_dir, "Output directory");
    e->add_flag("--stdout", est.to_stdout, "Print result JSON to stdout instead of writing files");

    SimulateArgs sim;
    auto* s = app.add_subcommand("simulate", "Run the robustness simulation grid");
    auto* cfg = s->add_option("--config", sim.config, "SimConfig JSON");
    s->add_flag("--default-config", sim.default_config, "Use the shipped coefficient set")->excludes(cfg);
    s->add_option("--scenarios", sim.scenarios, "Comma list of P1..P4 and ALL (all models correct)");
    s->add_option("--estimators", sim.estimators, "Comma list of estimator ids");
    auto* reps = s->add_option("--reps", sim.reps, "Monte Carlo replicates")->check(CLI::PositiveNumber);
    auto* n = s->add_option("--n", sim.n, "Sample size per replicate");
    s->add_option("--seed", sim.seed, "Master seed");
    s->add_option("--jobs", sim.jobs, "Parallel replicates");
    s->add_option("--out-dir", sim.out_dir, "Output directory");
    s->add_flag("--quick", sim.quick, "Preset reps=200, n=1000");
    s->add_option("--folds", sim.folds, "Cross-fitting folds (0 = none)");
    s->add_option("--a", sim.a, "Treatment level a");
    s->add_option("--m", sim.m, "Mediator level m");
    s->add_option("--level", sim.level, "Confidence level");
    s->add_option("--gcomp-draws", sim.gcomp_draws, "Monte Carlo draws per unit for g_comp");
    s->add_option("--truth-draws", sim.truth_draws, "Draws for the Monte Carlo truth");
    s->add_flag("--stdout", sim.to_stdout, "Print summary JSON to stdout instead of writing files");

    std::string gen_config, gen_out = "data.csv";
    Index gen_n = 2000;
    std::uint64_t gen_seed = 1;
    auto* g = app.add_subcommand("generate", "Write one simulated dataset and its roles file");
    g->add_option("--config", gen_config, "SimConfig JSON (default: shipped coefficients)");
    g->add_option("--n", gen_n, "Sample size");
    g->add_option("--seed", gen_seed, "Seed");
    g->add_option("--out", gen_out, "CSV path; the roles file is written next to it");

    std::string manifest_path, rerun_out;
    auto* r = app.add_subcommand("rerun", "Repeat the command recorded in a manifest");
    r->add_option("manifest", manifest_path, "manifest.json")->required();
    r->add_option("--out-dir", rerun_out, "Write outputs here instead");

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::CallForHelp& ex) {
        out << app.help();
        return kExitOk;
    } catch (const CLI::CallForVersion&) {
        out << tool_version() << '\n';
        return kExitOk;
    } catch (const CLI::ParseError& ex) {
        err << "error: " << ex.what() << '\n';
        return kExitValidation;
    }

    try {
        if (e->parsed()) return cmd_estimate(est, args, out, err);
        if (s->parsed()) {
            if (sim.quick) {
                if (reps->count() == 0) sim.reps = 200;
                if (n->count() == 0) sim.n = 1000;
            }
            return cmd_simulate(sim, args, out, err);
        }
        if (g->parsed()) {
            SimConfig config = gen_config.empty() ? default_sim_config()
                                                  : sim_config_from_json(read_json_file(gen_config));
            config.n = gen_n;
            const Dataset d = generate(config, gen_seed);
            std::ostringstream csv;
            write_dataset_csv(csv, d);
            const fs::path path(gen_out);
            if (path.has_parent_path()) fs::create_directories(path.parent_path());
            write_file(path, csv.str());
            fs::path roles_path = path;
            roles_path.replace_extension(".roles.json");
            write_file(roles_path, dump(to_json(roles_for(d))));
            err << "wrote " << path.string() << " and " << roles_path.string() << '\n';
            return kExitOk;
        }
        if (r->parsed()) {
            const RunManifest m = manifest_from_json(read_json_file(manifest_path));
            std::vector<std::string> again = m.argv;
            if (!rerun_out.empty()) {
                again = without_option(again, "--out-dir");
                again.push_back("--out-dir");
                again.push_back(rerun_out);
            }
            return run(again, out, err);
        }
    } catch (const ValidationError& ex) {
        err << "error: " << ex.what() << '\n';
        return kExitValidation;
    } catch (const NumericalError& ex) {
        err << "numerical error: " << ex.what() << '\n';
        return kExitNumerical;
    } catch (const std::invalid_argument& ex) {
        err << "error: " << ex.what() << '\n';
        return kExitValidation;
    } catch (const std::exception& ex) {
        err << "error: " << ex.what() << '\n';
        return kExitFailure;
    }
    return kExitFailure;
}

}  // namespace cdemr::cli
