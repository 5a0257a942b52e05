#include "cdemr/simulation.hpp"

#include "cdemr/errors.hpp"
#include "cdemr/parallel.hpp"
#include "cdemr/pipeline.hpp"
#include "cdemr/rng.hpp"

#include <cmath>
#include <limits>
#include <map>

namespace cdemr {

namespace {

double expit(double eta) { return inverse_logit(eta); }

struct Unit {
    double u[4];
    double x;
};

template <typename RngT>
Unit draw_pretreatment(const SimConfig& c, RngT& rng, std::normal_distribution<double>& normal) {
    Unit unit{};
    for (double& u : unit.u) u = normal(rng);
    unit.x = c.beta_x[0] * unit.u[0] + c.beta_x[1] * unit.u[1] + c.beta_x[2] * unit.u[2] +
             c.beta_x[3] * unit.u[3] + normal(rng);
    return unit;
}

double treatment_index(const SimConfig& c, const Unit& s) {
    return c.beta_a[0] + c.beta_a[1] * s.u[0] + c.beta_a[2] * std::abs(s.x);
}

double z_mean(const SimConfig& c, const Unit& s, double a) {
    return c.beta_z[0] + c.beta_z[1] * s.u[1] + c.beta_z[2] * s.x + c.beta_z[3] * s.x * s.x +
           c.beta_z[4] * a;
}

double mediator_index(const SimConfig& c, const Unit& s, double a, double z) {
    const auto& b = c.beta_m;
    return b[0] + b[1] * s.u[2] + b[2] * s.x + b[3] * s.x * s.x + b[4] * a + b[5] * z +
           b[6] * s.x * a + b[7] * s.x * z;
}

double y_mean(const SimConfig& c, const Unit& s, double a, double z, double m) {
    const auto& b = c.beta_y;
    return b[0] + b[1] * s.u[3] + b[2] * s.x + b[3] * s.x * s.x + b[4] * a + b[5] * z +
           b[6] * s.x * z + b[7] * m + b[8] * a * m;
}

std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : s) {
        h ^= ch;
        h *= 0x100000001b3ULL;
    }
    return h;
}

double prob_of(double p1, int level) { return level == 1 ? p1 : 1.0 - p1; }

}  // namespace

SimConfig default_sim_config() {
    SimConfig c;
    // The latent U_XA and U_XM enter X only: with nonzero U coefficients in the
    // treatment or mediator model, conditioning on X would open a path to
    // U_XY and break sequential ignorability.
    c.beta_x = {0.5, 0.4, 0.3, 0.4};
    c.beta_a = {-0.8, 0.0, 0.8};
    c.beta_z = {0.2, 0.6, 0.5, -0.4, 0.8};
    c.beta_m = {0.5, 0.0, 0.4, -0.15, 1.0, 0.6, -0.3, 0.25};
    c.beta_y = {0.5, 0.6, 0.8, 0.7, 1.0, 0.8, 0.6, 1.0, -0.5};
    c.n = 2000;
    c.seed = 1;
    return c;
}

PropensityCheck check_propensities(const SimConfig& config, Index pilot, std::uint64_t seed) {
    Rng rng = make_rng(seed, {0x9170ULL});
    std::normal_distribution<double> normal(0.0, 1.0);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    Index inside = 0;
    for (Index i = 0; i < pilot; ++i) {
        const Unit s = draw_pretreatment(config, rng, normal);
        const double pa = expit(treatment_index(config, s));
        const double a = unif(rng) < pa ? 1.0 : 0.0;
        const double z = z_mean(config, s, a) + normal(rng);
        const double pm = expit(mediator_index(config, s, a, z));
        if (pa > 0.01 && pa < 0.99 && pm > 0.01 && pm < 0.99) ++inside;
    }
    PropensityCheck out;
    out.fraction_inside = static_cast<double>(inside) / static_cast<double>(pilot);
    out.ok = out.fraction_inside > 0.99;
    return out;
}

Dataset generate(const SimConfig& config, std::uint64_t seed) {
    const Index n = config.n;
    if (n < 1) throw ValidationError("sample size must be positive");
    Rng rng = make_rng(seed, {0x5EEDULL});
    std::normal_distribution<double> normal(0.0, 1.0);
    std::uniform_real_distribution<double> unif(0.0, 1.0);

    Dataset d;
    d.x.resize(n, 1);
    d.z.resize(n, 1);
    d.y.resize(n);
    d.a.resize(static_cast<std::size_t>(n));
    d.m.resize(static_cast<std::size_t>(n));
    d.x_names = {"x"};
    d.z_names = {"z"};
    d.a_support = {0, 1};
    d.m_support = {0, 1};
    for (Index i = 0; i < n; ++i) {
        const Unit s = draw_pretreatment(config, rng, normal);
        const int a = unif(rng) < expit(treatment_index(config, s)) ? 1 : 0;
        const double z = z_mean(config, s, a) + normal(rng);
        const int m = unif(rng) < expit(mediator_index(config, s, a, z)) ? 1 : 0;
        const double y = y_mean(config, s, a, z, m) + normal(rng);
        d.x(i, 0) = s.x;
        d.z(i, 0) = z;
        d.y(i) = y;
        d.a[static_cast<std::size_t>(i)] = a;
        d.m[static_cast<std::size_t>(i)] = m;
    }
    return d;
}

TruePsi true_psi(const SimConfig& config, int a, int m, Index draws, std::uint64_t seed,
                 unsigned jobs) {
    if (draws < 2) throw ValidationError("true_psi needs at least 2 draws");
    constexpr Index kChunk = 1'000'000;
    const Index chunks = (draws + kChunk - 1) / kChunk;
    std::vector<double> sums(static_cast<std::size_t>(chunks), 0.0);
    std::vector<double> sq(static_cast<std::size_t>(chunks), 0.0);
    parallel_for(static_cast<std::size_t>(chunks), jobs, [&](std::size_t c) {
        Rng rng = make_rng(seed, {0x7E57ULL, static_cast<std::uint64_t>(a),
                                  static_cast<std::uint64_t>(m), c});
        std::normal_distribution<double> normal(0.0, 1.0);
        const Index begin = static_cast<Index>(c) * kChunk;
        const Index end = std::min(draws, begin + kChunk);
        double s = 0.0, s2 = 0.0;
        for (Index i = begin; i < end; ++i) {
            const Unit u = draw_pretreatment(config, rng, normal);
            const double z = z_mean(config, u, a) + normal(rng);
            const double v = y_mean(config, u, a, z, m);
            s += v;
            s2 += v * v;
        }
        sums[c] = s;
        sq[c] = s2;
    });
    double s = 0.0, s2 = 0.0;
    for (std::size_t c = 0; c < sums.size(); ++c) {
        s += sums[c];
        s2 += sq[c];
    }
    const double nd = static_cast<double>(draws);
    const double mean = s / nd;
    const double var = (s2 - nd * mean * mean) / (nd - 1.0);
    return {mean, std::sqrt(std::max(var, 0.0) / nd)};
}

std::string_view to_string(Scenario s) {
    switch (s) {
        case Scenario::P1: return "P1";
        case Scenario::P2: return "P2";
        case Scenario::P3: return "P3";
        case Scenario::P4: return "P4";
    }
    return "?";
}

Scenario scenario_from_string(std::string_view s) {
    if (s == "P1") return Scenario::P1;
    if (s == "P2") return Scenario::P2;
    if (s == "P3") return Scenario::P3;
    if (s == "P4") return Scenario::P4;
    throw ValidationError("unknown scenario '" + std::string(s) + "' (expected P1..P4)");
}

ModelChoice choice_for(Scenario s) {
    switch (s) {
        case Scenario::P1: return {.mu = true, .nu = false, .pi_a = true, .pi_m = false};
        case Scenario::P2: return {.mu = true, .nu = true, .pi_a = false, .pi_m = false};
        case Scenario::P3: return {.mu = false, .nu = false, .pi_a = true, .pi_m = true};
        case Scenario::P4: return {.mu = false, .nu = true, .pi_a = false, .pi_m = true};
    }
    return {};
}

NuisanceSpec spec_for(const ModelChoice& choice) {
    NuisanceSpec spec;
    spec.mu_spec = choice.mu ? TermSpec::parse({"1", "x", "x^2", "a", "z", "x*z", "m", "a*m"})
                             : TermSpec::parse({"1", "x", "a", "z", "m"});
    spec.nu_spec = choice.nu ? TermSpec::parse({"1", "x", "x^2", "x^3", "a", "x*a"})
                             : TermSpec::parse({"1", "x", "a"});
    spec.pi_a_spec = choice.pi_a ? TermSpec::parse({"1", "abs(x)"}) : TermSpec::parse({"1", "x"});
    spec.pi_m_spec = choice.pi_m
                         ? TermSpec::parse({"1", "x", "x^2", "a", "z", "x*a", "x*z"})
                         : TermSpec::parse({"1", "x"});
    return spec;
}

NuisanceSpec spec_for(Scenario s) { return spec_for(choice_for(s)); }

GcompModel gcomp_for(const ModelChoice& choice, int draws, std::uint64_t seed) {
    GcompModel g;
    g.y_spec = spec_for(choice).mu_spec;
    g.z_spec = choice.nu ? TermSpec::parse({"1", "x", "x^2", "a"})
                         : TermSpec::parse({"1", "x", "a"});
    g.draws = draws;
    g.seed = seed;
    return g;
}

bool proposition_covers(EstimatorId id, const ModelChoice& c) {
    const bool p1 = c.mu && c.pi_a;
    const bool p2 = c.mu && c.nu;
    const bool p3 = c.pi_m && c.pi_a;
    const bool p4 = c.pi_m && c.nu;
    switch (id) {
        case EstimatorId::g_comp: return c.mu && c.nu;
        case EstimatorId::pure_imputation: return p2;
        case EstimatorId::imp_then_weight: return p1;
        case EstimatorId::pure_weighting: return p3;
        case EstimatorId::weight_then_imp: return p4;
        case EstimatorId::dr1: return p1 || p2;
        case EstimatorId::dr2: return p3 || p4;
        case EstimatorId::dr3: return p1 || p3;
        case EstimatorId::dr4: return p2 || p4;
        case EstimatorId::tr1: return p1 || p2 || p3;
        case EstimatorId::tr2: return p1 || p3 || p4;
        case EstimatorId::qr: return p1 || p2 || p3 || p4;
    }
    return false;
}

GridCase grid_case(Scenario s) { return {std::string(to_string(s)), choice_for(s)}; }

GridCase all_correct_case() { return {"ALL", ModelChoice{}}; }

std::uint64_t replicate_seed(std::uint64_t seed, std::string_view scenario, int replicate) {
    return derive_seed(seed, {fnv1a(scenario), static_cast<std::uint64_t>(replicate)});
}

namespace {

std::vector<ReplicateRow> run_replicate(const SimConfig& config, const GridCase& gc, int rep,
                                        std::span<const EstimatorId> estimators,
                                        const GridOptions& opt, double truth) {
    SimConfig sized = config;
    sized.n = opt.n;
    const std::uint64_t seed = replicate_seed(opt.seed, gc.name, rep);
    const Dataset data = generate(sized, seed);
    const NuisanceSpec base = spec_for(gc.choice);

    struct Cached {
        std::optional<NuisanceValues> values;
        std::string error;
    };
    std::map<NuVariant, Cached> cache;
    auto nuisances = [&](NuVariant v) -> const Cached& {
        auto it = cache.find(v);
        if (it != cache.end()) return it->second;
        Cached c;
        try {
            NuisanceSpec spec = base;
            spec.nu_variant = v;
            c.values = opt.folds >= 2
                           ? cross_fit(data, opt.target, spec, opt.folds, derive_seed(seed, {0xC5}))
                           : fit_nuisances(data, opt.target, spec);
        } catch (const Error& e) {
            c.error = e.what();
        }
        return cache.emplace(v, std::move(c)).first->second;
    };

    std::vector<ReplicateRow> rows;
    rows.reserve(estimators.size());
    for (EstimatorId id : estimators) {
        ReplicateRow row;
        row.scenario = gc.name;
        row.estimator = id;
        row.replicate = rep;
        try {
            EstimateResult r;
            if (id == EstimatorId::g_comp) {
                r = estimate_gcomp(data, opt.target,
                                   gcomp_for(gc.choice, opt.gcomp_draws, derive_seed(seed, {0x6C})));
            } else {
                const Cached& c = nuisances(required_variant(id).value_or(NuVariant::imputation));
                if (!c.values) throw NumericalError(c.error);
                r = estimate(id, data, opt.target, *c.values, opt.level);
            }
            row.estimate = r.psi;
            row.bias = r.psi - truth;
            row.se = r.se;
            if (r.ci_low && r.ci_high) row.covered = *r.ci_low <= truth && truth <= *r.ci_high;
        } catch (const Error& e) {
            row.estimate = std::numeric_limits<double>::quiet_NaN();
            row.bias = std::numeric_limits<double>::quiet_NaN();
            row.error = e.what();
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

}  // namespace

std::vector<SummaryRow> summarize(std::span<const GridCase> cases,
                                  std::span<const EstimatorId> estimators,
                                  std::span<const ReplicateRow> rows) {
    std::vector<SummaryRow> out;
    for (const auto& gc : cases) {
        for (EstimatorId id : estimators) {
            SummaryRow s;
            s.scenario = gc.name;
            s.estimator = id;
            s.covered_by_theory = proposition_covers(id, gc.choice);
            double sum = 0.0, sum2 = 0.0, se_sum = 0.0;
            int se_count = 0, cov_count = 0, cov_hits = 0;
            std::vector<double> biases;
            for (const auto& r : rows) {
                if (r.scenario != gc.name || r.estimator != id) continue;
                if (!r.error.empty()) {
                    ++s.failed;
                    continue;
                }
                biases.push_back(r.bias);
                sum += r.bias;
                sum2 += r.bias * r.bias;
                if (r.se) {
                    se_sum += *r.se;
                    ++se_count;
                }
                if (r.covered) {
                    ++cov_count;
                    cov_hits += *r.covered ? 1 : 0;
                }
            }
            s.completed = static_cast<int>(biases.size());
            if (s.completed > 0) {
                const double k = s.completed;
                s.mean_bias = sum / k;
                double ss = 0.0;
                for (double b : biases) ss += (b - s.mean_bias) * (b - s.mean_bias);
                s.sd = s.completed > 1 ? std::sqrt(ss / (k - 1.0)) : 0.0;
                s.mc_se = s.sd / std::sqrt(k);
                s.threshold = 3.0 * s.mc_se;
                s.rmse = std::sqrt(sum2 / k);
            }
            if (se_count) s.mean_se = se_sum / se_count;
            if (cov_count) s.coverage = static_cast<double>(cov_hits) / cov_count;
            out.push_back(std::move(s));
        }
    }
    return out;
}

GridResult run_grid(const SimConfig& config, std::span<const GridCase> cases,
                    std::span<const EstimatorId> estimators, const GridOptions& opt) {
    if (opt.reps < 1) throw ValidationError("reps must be at least 1");
    GridResult result;
    result.truth = opt.truth ? *opt.truth
                             : true_psi(config, opt.target.a, opt.target.m, opt.truth_draws,
                                        derive_seed(opt.seed, {0x7247}), opt.jobs);
    const auto reps = static_cast<std::size_t>(opt.reps);
    std::vector<std::vector<ReplicateRow>> per_task(cases.size() * reps);
    parallel_for(per_task.size(), opt.jobs, [&](std::size_t t) {
        const auto& gc = cases[t / reps];
        per_task[t] = run_replicate(config, gc, static_cast<int>(t % reps), estimators, opt,
                                    result.truth.psi);
    });
    for (auto& rows : per_task) {
        for (auto& r : rows) result.rows.push_back(std::move(r));
    }
    result.summary = summarize(cases, estimators, result.rows);
    return result;
}

// ---------------------------------------------------------------------------
// Discrete population

double DiscretePopulation::cell_probability(int x, int a, int z, int m) const {
    return prob_of(p_x1, x) * prob_of(p_a1[x], a) * prob_of(p_z1[x][a], z) *
           prob_of(p_m1[x][a][z], m);
}

void DiscretePopulation::check() const {
    auto inside = [](double p) { return p > 0.0 && p < 1.0; };
    bool ok = inside(p_x1);
    for (int x = 0; x < 2; ++x) {
        ok = ok && inside(p_a1[x]);
        for (int a = 0; a < 2; ++a) {
            ok = ok && inside(p_z1[x][a]);
            for (int z = 0; z < 2; ++z) ok = ok && inside(p_m1[x][a][z]);
        }
    }
    if (!ok) throw ZeroCell("every conditional probability must lie strictly inside (0, 1)");
}

Dataset DiscretePopulation::as_dataset() const {
    check();
    Dataset d;
    d.x.resize(16, 1);
    d.z.resize(16, 1);
    d.y.resize(16);
    d.weights.resize(16);
    d.a.resize(16);
    d.m.resize(16);
    d.x_names = {"x"};
    d.z_names = {"z"};
    d.a_support = {0, 1};
    d.m_support = {0, 1};
    Index row = 0;
    for (int x = 0; x < 2; ++x)
        for (int a = 0; a < 2; ++a)
            for (int z = 0; z < 2; ++z)
                for (int m = 0; m < 2; ++m, ++row) {
                    d.x(row, 0) = x;
                    d.z(row, 0) = z;
                    d.a[static_cast<std::size_t>(row)] = a;
                    d.m[static_cast<std::size_t>(row)] = m;
                    d.y(row) = y_mean[x][a][z][m];
                    d.weights(row) = cell_probability(x, a, z, m);
                }
    return d;
}

DiscretePopulation DiscretePopulation::random(std::uint64_t seed) {
    Rng rng = make_rng(seed, {0xD15C});
    std::uniform_real_distribution<double> prob(0.15, 0.85);
    std::uniform_real_distribution<double> outcome(-3.0, 3.0);
    DiscretePopulation p;
    p.p_x1 = prob(rng);
    for (int x = 0; x < 2; ++x) {
        p.p_a1[x] = prob(rng);
        for (int a = 0; a < 2; ++a) {
            p.p_z1[x][a] = prob(rng);
            for (int z = 0; z < 2; ++z) {
                p.p_m1[x][a][z] = prob(rng);
                for (int m = 0; m < 2; ++m) p.y_mean[x][a][z][m] = outcome(rng);
            }
        }
    }
    return p;
}

OracleResult discrete_oracle(const DiscretePopulation& pop, int a, int m) {
    pop.check();
    if ((a != 0 && a != 1) || (m != 0 && m != 1)) throw InvalidLabel("labels must be 0 or 1");
    OracleResult r;

    // Factorized route: the g-formula summed directly from the conditionals.
    for (int x = 0; x < 2; ++x) {
        r.pi_a[x] = prob_of(pop.p_a1[x], a);
        double nu = 0.0;
        for (int z = 0; z < 2; ++z) {
            r.mu[x][z] = pop.y_mean[x][a][z][m];
            r.pi_m[x][z] = prob_of(pop.p_m1[x][a][z], m);
            nu += prob_of(pop.p_z1[x][a], z) * r.mu[x][z];
        }
        r.nu[x] = nu;
        r.psi += prob_of(pop.p_x1, x) * nu;
    }

    // Joint-table route for the alternative forms: marginals and conditionals
    // are recomputed from the 16 joint cell probabilities.
    double joint[2][2][2][2];
    for (int x = 0; x < 2; ++x)
        for (int aa = 0; aa < 2; ++aa)
            for (int z = 0; z < 2; ++z)
                for (int mm = 0; mm < 2; ++mm) joint[x][aa][z][mm] = pop.cell_probability(x, aa, z, mm);
    auto p_x = [&](int x) {
        double s = 0.0;
        for (int aa = 0; aa < 2; ++aa)
            for (int z = 0; z < 2; ++z)
                for (int mm = 0; mm < 2; ++mm) s += joint[x][aa][z][mm];
        return s;
    };
    auto p_xa = [&](int x, int aa) {
        double s = 0.0;
        for (int z = 0; z < 2; ++z)
            for (int mm = 0; mm < 2; ++mm) s += joint[x][aa][z][mm];
        return s;
    };
    auto p_xaz = [&](int x, int aa, int z) { return joint[x][aa][z][0] + joint[x][aa][z][1]; };
    auto pr_a_given_x = [&](int x) { return p_xa(x, a) / p_x(x); };
    auto pr_m_given_xaz = [&](int x, int aa, int z) { return joint[x][aa][z][m] / p_xaz(x, aa, z); };

    for (int x = 0; x < 2; ++x) {
        // E[ E[Y | X, A, Z, M=m] | X, A=a ], marginalizing over M.
        double inner_imp = 0.0, inner_wti = 0.0;
        for (int z = 0; z < 2; ++z)
            for (int mm = 0; mm < 2; ++mm) {
                const double w = joint[x][a][z][mm] / p_xa(x, a);
                inner_imp += w * pop.y_mean[x][a][z][m];
                if (mm == m) inner_wti += w * pop.y_mean[x][a][z][mm] / pr_m_given_xaz(x, a, z);
            }
        r.pure_imputation += p_x(x) * inner_imp;
        r.weight_then_imp += p_x(x) * inner_wti;
    }
    for (int x = 0; x < 2; ++x)
        for (int aa = 0; aa < 2; ++aa)
            for (int z = 0; z < 2; ++z)
                for (int mm = 0; mm < 2; ++mm) {
                    const double p = joint[x][aa][z][mm];
                    const double y = pop.y_mean[x][aa][z][mm];
                    const double ia = aa == a ? 1.0 : 0.0;
                    const double iam = ia * (mm == m ? 1.0 : 0.0);
                    r.imp_then_weight += p * ia * pop.y_mean[x][aa][z][m] / pr_a_given_x(x);
                    r.pure_weighting +=
                        p * iam * y / (pr_a_given_x(x) * pr_m_given_xaz(x, aa, z));
                    const double phi = r.nu[x] + ia * (r.mu[x][z] - r.nu[x]) / r.pi_a[x] +
                                       iam * (y - r.mu[x][z]) / (r.pi_a[x] * r.pi_m[x][z]) - r.psi;
                    r.eif_mean += p * phi;
                }

    // Exact nuisances aligned with as_dataset() rows.
    auto& v = r.values;
    for (auto* vec : {&v.mu, &v.nu, &v.pi_a, &v.pi_m, &v.mu_obs, &v.pi_m_obs}) vec->resize(16);
    Index row = 0;
    for (int x = 0; x < 2; ++x)
        for (int aa = 0; aa < 2; ++aa)
            for (int z = 0; z < 2; ++z)
                for (int mm = 0; mm < 2; ++mm, ++row) {
                    v.mu(row) = r.mu[x][z];
                    v.nu(row) = r.nu[x];
                    v.pi_a(row) = r.pi_a[x];
                    v.pi_m(row) = r.pi_m[x][z];
                    v.mu_obs(row) = pop.y_mean[x][aa][z][m];
                    v.pi_m_obs(row) = prob_of(pop.p_m1[x][aa][z], m);
                }
    return r;
}

}  // namespace cdemr
