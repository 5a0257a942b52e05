#include "helpers.hpp"
#include "oracles.hpp"

#include <cdemr/errors.hpp>
#include <cdemr/estimators.hpp>
#include <cdemr/nuisance.hpp>
#include <cdemr/simulation.hpp>

#include <doctest.h>

#include <cmath>
#include <numeric>
#include <random>

using namespace cdemr;
using testing::make_data;
using testing::target;

namespace {

std::vector<EstimatorId> non_gcomp() {
    std::vector<EstimatorId> ids;
    for (EstimatorId id : all_estimators())
        if (id != EstimatorId::g_comp) ids.push_back(id);
    return ids;
}

NuisanceValues with_variant(NuisanceValues v, EstimatorId id) {
    v.nu_variant = required_variant(id).value_or(NuVariant::imputation);
    return v;
}

NuisanceSpec saturated_binary_spec() {
    NuisanceSpec s;
    s.mu_spec = TermSpec::parse({"1", "x", "a", "z", "m", "x*a", "x*z", "x*m", "a*z", "a*m", "z*m",
                                 "x*a*z", "x*a*m", "x*z*m", "a*z*m", "x*a*z*m"});
    s.nu_spec = TermSpec::parse({"1", "x", "a", "x*a"});
    s.pi_a_spec = TermSpec::parse({"1", "x"});
    s.pi_m_spec = TermSpec::parse({"1", "x", "a", "z", "x*a", "x*z", "a*z", "x*a*z"});
    return s;
}

Dataset simulated(Index n, std::uint64_t seed) {
    SimConfig c = default_sim_config();
    c.n = n;
    return generate(c, seed);
}

}  // namespace

TEST_CASE("every estimand form agrees on discrete populations") {
    for (std::uint64_t seed : {1u, 2u, 3u}) {
        const auto pop = DiscretePopulation::random(seed);
        const Dataset d = pop.as_dataset();
        for (int a = 0; a < 2; ++a)
            for (int m = 0; m < 2; ++m) {
                const double truth = oracle::g_formula(pop, a, m);
                const auto ex = discrete_oracle(pop, a, m);
                CHECK(std::abs(ex.psi - truth) < 1e-12);
                CHECK(std::abs(ex.pure_imputation - truth) < 1e-12);
                CHECK(std::abs(ex.imp_then_weight - truth) < 1e-12);
                CHECK(std::abs(ex.pure_weighting - truth) < 1e-12);
                CHECK(std::abs(ex.weight_then_imp - truth) < 1e-12);
                CHECK(std::abs(ex.eif_mean) < 1e-12);
                for (EstimatorId id : non_gcomp()) {
                    const auto r = estimate(id, d, target(a, m), with_variant(ex.values, id));
                    CHECK_MESSAGE(std::abs(r.psi - truth) < 1e-12, to_string(id));
                }
            }
    }
}

TEST_CASE("saturated fits on a weighted population recover the estimand") {
    const auto pop = DiscretePopulation::random(7);
    const Dataset d = pop.as_dataset();
    const double truth = oracle::g_formula(pop, 1, 0);
    for (EstimatorId id : non_gcomp()) {
        NuisanceSpec s = saturated_binary_spec();
        s.nu_variant = required_variant(id).value_or(NuVariant::imputation);
        const auto nv = fit_nuisances(d, target(1, 0), s);
        const auto r = estimate(id, d, target(1, 0), nv);
        CHECK_MESSAGE(std::abs(r.psi - truth) < 1e-9, to_string(id));
    }
}

TEST_CASE("constant outcome with exact-fraction propensities") {
    const double c = -1.75;
    Dataset d = simulated(400, 3);
    d.y.setConstant(c);
    NuisanceSpec s;
    s.mu_spec = TermSpec::parse({"1", "x"});
    s.nu_spec = TermSpec::parse({"1"});
    s.pi_a_spec = TermSpec::parse({"1"});
    s.pi_m_spec = TermSpec::parse({"1", "a"});
    for (EstimatorId id : non_gcomp()) {
        s.nu_variant = required_variant(id).value_or(NuVariant::imputation);
        const auto r = estimate(id, d, target(0, 1), fit_nuisances(d, target(0, 1), s));
        CHECK_MESSAGE(std::abs(r.psi - c) < 1e-10, to_string(id));
    }
    GcompModel g{TermSpec::parse({"1", "x", "a", "z", "m"}), TermSpec::parse({"1", "x", "a"}), 20, 4};
    CHECK(std::abs(estimate_gcomp(d, target(0, 1), g).psi - c) < 1e-10);
}

TEST_CASE("the multiply robust summand extends dr1 by the residual term") {
    const Dataset d = simulated(800, 21);
    const Target t = target(0, 1);
    NuisanceSpec s = spec_for(Scenario::P1);
    const auto nv = fit_nuisances(d, t, s);
    const auto dr1 = estimate(EstimatorId::dr1, d, t, nv);
    const auto tr1 = estimate(EstimatorId::tr1, d, t, nv);
    const Eigen::ArrayXd iam = indicator(d.a, 0).array() * indicator(d.m, 1).array();
    const double extra = (iam * (d.y - nv.mu).array() / (nv.pi_a.array() * nv.pi_m.array())).mean();
    CHECK(std::abs(tr1.psi - (dr1.psi + extra)) < 1e-10);

    // tr1, tr2, qr differ only through nu
    NuisanceValues relabelled = nv;
    relabelled.nu_variant = NuVariant::weighting;
    CHECK(estimate(EstimatorId::tr2, d, t, relabelled).psi == tr1.psi);
    relabelled.nu_variant = NuVariant::dr;
    CHECK(estimate(EstimatorId::qr, d, t, relabelled).psi == tr1.psi);

    // dr3 and the weighting plug-ins written out by hand
    const Eigen::ArrayXd ia = indicator(d.a, 0).array();
    const Eigen::ArrayXd im = indicator(d.m, 1).array();
    const auto& mu = nv.mu.array();
    const auto& pa = nv.pi_a.array();
    const auto& pm = nv.pi_m.array();
    const double dr3 = (ia * (mu + im * (d.y.array() - mu) / pm) / pa).mean();
    CHECK(std::abs(estimate(EstimatorId::dr3, d, t, nv).psi - dr3) < 1e-10);
    const double ipw = (ia * im * d.y.array() / (pa * pm)).mean();
    CHECK(std::abs(estimate(EstimatorId::pure_weighting, d, t, nv).psi - ipw) < 1e-10);
    const double itw = (ia * mu / pa).mean();
    CHECK(std::abs(estimate(EstimatorId::imp_then_weight, d, t, nv).psi - itw) < 1e-10);
}

TEST_CASE("influence values") {
    const Dataset d = simulated(1000, 8);
    const Target t = target(0, 1);
    NuisanceSpec s = spec_for(ModelChoice{});
    s.nu_variant = NuVariant::dr;
    const auto nv = fit_nuisances(d, t, s);
    const auto r = estimate(EstimatorId::qr, d, t, nv);
    REQUIRE(r.eif);
    const Eigen::VectorXd& phi = *r.eif;
    CHECK(std::abs(phi.mean()) < 1e-12);
    for (Index i = 0; i < d.n(); ++i) {
        if (d.a[static_cast<std::size_t>(i)] != 0) CHECK(phi(i) == doctest::Approx(nv.nu(i) - r.psi).epsilon(1e-14));
    }
    REQUIRE(r.se);
    CHECK(std::abs(*r.se - std::sqrt(phi.squaredNorm() / d.n()) / std::sqrt(static_cast<double>(d.n()))) < 1e-14);
    CHECK(*r.ci_low < r.psi);
    CHECK(std::abs((*r.ci_high - *r.ci_low) / 2 - 1.959963984540054 * *r.se) < 1e-9);
    CHECK((eif(d, t, nv, r.psi) - phi).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("affine transformations of the outcome") {
    const Dataset d = simulated(600, 14);
    const Target t = target(0, 1);
    const double scale = -2.5, shift = 4.0;
    const Dataset d2 = d.with_outcome((scale * d.y.array() + shift).matrix());
    for (EstimatorId id : non_gcomp()) {
        NuisanceSpec s = spec_for(Scenario::P2);
        s.nu_variant = required_variant(id).value_or(NuVariant::imputation);
        const auto r1 = estimate(id, d, t, fit_nuisances(d, t, s));
        const auto r2 = estimate(id, d2, t, fit_nuisances(d2, t, s));
        // Forms that weight Y or mu by inverse probabilities without a
        // matching regression term move a shift by P_n[weight] instead.
        if (id == EstimatorId::pure_weighting || id == EstimatorId::imp_then_weight ||
            id == EstimatorId::dr3 || id == EstimatorId::dr2 || id == EstimatorId::weight_then_imp ||
            id == EstimatorId::tr2) {
            continue;
        }
        CHECK_MESSAGE(std::abs(r2.psi - (scale * r1.psi + shift)) < 1e-8, to_string(id));
        if (r1.se) CHECK(std::abs(*r2.se - std::abs(scale) * *r1.se) < 1e-8);
    }
    // Scaling alone carries through every form.
    const Dataset d3 = d.with_outcome(scale * d.y);
    for (EstimatorId id : non_gcomp()) {
        NuisanceSpec s = spec_for(Scenario::P2);
        s.nu_variant = required_variant(id).value_or(NuVariant::imputation);
        const auto r1 = estimate(id, d, t, fit_nuisances(d, t, s));
        const auto r3 = estimate(id, d3, t, fit_nuisances(d3, t, s));
        CHECK_MESSAGE(std::abs(r3.psi - scale * r1.psi) < 1e-8, to_string(id));
    }
}

TEST_CASE("row order does not matter") {
    const Dataset d = simulated(500, 30);
    std::vector<Index> perm(static_cast<std::size_t>(d.n()));
    std::iota(perm.begin(), perm.end(), Index{0});
    std::mt19937_64 rng(2);
    std::shuffle(perm.begin(), perm.end(), rng);
    const Dataset p = d.subset(perm);
    const Target t = target(1, 0);
    for (EstimatorId id : non_gcomp()) {
        NuisanceSpec s = spec_for(Scenario::P4);
        s.nu_variant = required_variant(id).value_or(NuVariant::imputation);
        const auto r1 = estimate(id, d, t, fit_nuisances(d, t, s));
        const auto r2 = estimate(id, p, t, fit_nuisances(p, t, s));
        CHECK_MESSAGE(std::abs(r1.psi - r2.psi) < 1e-10, to_string(id));
    }
}

TEST_CASE("g-computation without Z in the outcome model equals pure imputation") {
    const Dataset d = simulated(700, 5);
    const Target t = target(0, 1);
    NuisanceSpec s;
    s.mu_spec = TermSpec::parse({"1", "x", "x^2", "a", "m", "a*m", "x*m"});
    s.nu_spec = TermSpec::parse({"1", "x", "x^2", "a"});
    s.pi_a_spec = TermSpec::parse({"1", "x"});
    s.pi_m_spec = TermSpec::parse({"1", "x"});
    const auto pi = estimate(EstimatorId::pure_imputation, d, t, fit_nuisances(d, t, s));
    const GcompModel g{s.mu_spec, TermSpec::parse({"1", "x", "a"}), 5, 11};
    CHECK(std::abs(estimate_gcomp(d, t, g).psi - pi.psi) < 1e-10);
}

TEST_CASE("g-computation linear in Z matches the plug-in at the fitted Z mean") {
    const Dataset d = simulated(2000, 6);
    const Target t = target(1, 1);
    NuisanceSpec s;
    s.mu_spec = TermSpec::parse({"1", "x", "a", "z", "m"});
    s.nu_spec = TermSpec::parse({"1", "x", "a"});
    s.pi_a_spec = TermSpec::parse({"1", "x"});
    s.pi_m_spec = TermSpec::parse({"1", "x"});
    const auto nv = fit_nuisances(d, t, s);
    const auto pi = estimate(EstimatorId::pure_imputation, d, t, nv);
    const GcompModel g{s.mu_spec, TermSpec::parse({"1", "x", "a"}), 200, 12};
    const auto gc = estimate_gcomp(d, t, g);
    // Monte Carlo error of the averaged Z draws: |b_z| sd(Z | X, A) / sqrt(n draws).
    CHECK(std::abs(gc.psi - pi.psi) < 0.01);
    CHECK(estimate_gcomp(d, t, g).psi == gc.psi);
}

TEST_CASE("estimator input errors") {
    const Dataset d = simulated(300, 2);
    const Target t = target(0, 1);
    NuisanceSpec s = spec_for(ModelChoice{});
    const auto nv = fit_nuisances(d, t, s);
    CHECK_THROWS_AS(estimate(EstimatorId::qr, d, t, nv), VariantMismatch);
    CHECK_THROWS_AS(estimate(EstimatorId::tr2, d, t, nv), VariantMismatch);
    CHECK_NOTHROW(estimate(EstimatorId::tr1, d, t, nv));
    CHECK_NOTHROW(estimate(EstimatorId::dr3, d, t, nv));
    NuisanceValues short_nv = nv;
    short_nv.mu.conservativeResize(10);
    CHECK_THROWS_AS(estimate(EstimatorId::dr3, d, t, short_nv), DimensionMismatch);
    CHECK_THROWS_AS(estimate(EstimatorId::g_comp, d, t, nv), ValidationError);
    CHECK_THROWS_AS(estimate_plugin(EstimatorId::qr, d, t, nv), ValidationError);
    GcompModel g{s.mu_spec, TermSpec::parse({"1", "x", "a"}), 0, 1};
    CHECK_THROWS_AS(estimate_gcomp(d, t, g), ValidationError);
}
