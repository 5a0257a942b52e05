#pragma once

#include "cdemr/data.hpp"
#include "cdemr/estimators.hpp"
#include "cdemr/nuisance.hpp"

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace cdemr {

// Coefficients of the simulation model
//   (U_XA, U_XZ, U_XM, U_XY) ~ N(0, I4)
//   X ~ N((U_XA, U_XZ, U_XM, U_XY) beta_x, 1)
//   A ~ Bernoulli(expit[(1, U_XA, |X|) beta_a])
//   Z ~ N((1, U_XZ, X, X^2, A) beta_z, 1)
//   M ~ Bernoulli(expit[(1, U_XM, X, X^2, A, Z, XA, XZ) beta_m])
//   Y ~ N((1, U_XY, X, X^2, A, Z, XZ, M, AM) beta_y, 1)
struct SimConfig {
    std::array<double, 4> beta_x{};
    std::array<double, 3> beta_a{};
    std::array<double, 5> beta_z{};
    std::array<double, 8> beta_m{};
    std::array<double, 9> beta_y{};
    Index n = 2000;
    std::uint64_t seed = 1;

    bool operator==(const SimConfig&) const = default;
};

// The fixed coefficient set shipped with the library.
SimConfig default_sim_config();

// psi_01 under default_sim_config(), computed once by
// true_psi(default_sim_config(), 0, 1, 10'000'000, kDefaultPsi01Seed).
inline constexpr std::uint64_t kDefaultPsi01Seed = 20240601;
inline constexpr double kDefaultPsi01 = 2.935011099009079;
inline constexpr double kDefaultPsi01McSe = 0.00083605946758380273;

struct PropensityCheck {
    double fraction_inside = 0.0;  // share of pilot units with both propensities in (0.01, 0.99)
    bool ok = false;
};

PropensityCheck check_propensities(const SimConfig& config, Index pilot = 200000,
                                   std::uint64_t seed = 12345);

// One simulated sample of size config.n. The latent U's are not exported.
Dataset generate(const SimConfig& config, std::uint64_t seed);

struct TruePsi {
    double psi = 0.0;
    double mc_se = 0.0;
};

// Monte Carlo value of E[Y(a, m)]: A and M are set, Z is drawn at A=a, and
// the noise-free conditional mean of Y is averaged.
TruePsi true_psi(const SimConfig& config, int a, int m, Index draws, std::uint64_t seed,
                 unsigned jobs = 1);

// Which working models are correctly specified.
struct ModelChoice {
    bool mu = true;
    bool nu = true;
    bool pi_a = true;
    bool pi_m = true;

    bool operator==(const ModelChoice&) const = default;
};

enum class Scenario { P1, P2, P3, P4 };

std::string_view to_string(Scenario s);
Scenario scenario_from_string(std::string_view s);
ModelChoice choice_for(Scenario s);

// Working-model term lists for the simulation model.
NuisanceSpec spec_for(const ModelChoice& choice);
NuisanceSpec spec_for(Scenario s);
// G-computation model: the outcome model follows mu, the Z model follows nu.
GcompModel gcomp_for(const ModelChoice& choice, int draws, std::uint64_t seed);

// True when the estimator is consistent under the given specification.
bool proposition_covers(EstimatorId id, const ModelChoice& choice);

struct GridCase {
    std::string name;
    ModelChoice choice;
};

GridCase grid_case(Scenario s);
GridCase all_correct_case();

struct GridOptions {
    int reps = 1000;
    Index n = 2000;
    std::uint64_t seed = 1;
    unsigned jobs = 1;
    Target target{0, 1, std::nullopt, std::nullopt};
    double level = kDefaultLevel;
    int gcomp_draws = 200;
    int folds = 0;
    Index truth_draws = 10'000'000;
    // Use this truth instead of running true_psi.
    std::optional<TruePsi> truth;
};

struct ReplicateRow {
    std::string scenario;
    EstimatorId estimator = EstimatorId::qr;
    int replicate = 0;
    double estimate = 0.0;
    double bias = 0.0;
    std::optional<double> se;
    std::optional<bool> covered;
    std::string error;  // non-empty when the replicate failed
};

struct SummaryRow {
    std::string scenario;
    EstimatorId estimator = EstimatorId::qr;
    int completed = 0;
    int failed = 0;
    double mean_bias = 0.0;
    double sd = 0.0;
    double mc_se = 0.0;      // sd / sqrt(completed)
    double threshold = 0.0;  // 3 * mc_se
    double rmse = 0.0;
    std::optional<double> mean_se;
    std::optional<double> coverage;
    bool covered_by_theory = false;
};

struct GridResult {
    TruePsi truth;
    std::vector<ReplicateRow> rows;   // ordered by (case, replicate, estimator)
    std::vector<SummaryRow> summary;  // ordered by (case, estimator)
};

// Seed of one replicate dataset.
std::uint64_t replicate_seed(std::uint64_t seed, std::string_view scenario, int replicate);

GridResult run_grid(const SimConfig& config, std::span<const GridCase> cases,
                    std::span<const EstimatorId> estimators, const GridOptions& options);

std::vector<SummaryRow> summarize(std::span<const GridCase> cases,
                                  std::span<const EstimatorId> estimators,
                                  std::span<const ReplicateRow> rows);

// Finite population with binary X, A, Z, M and a table of outcome means.
struct DiscretePopulation {
    double p_x1 = 0.5;                                       // Pr(X=1)
    std::array<double, 2> p_a1{};                            // Pr(A=1 | x)
    std::array<std::array<double, 2>, 2> p_z1{};             // Pr(Z=1 | x, a)
    std::array<std::array<std::array<double, 2>, 2>, 2> p_m1{};  // Pr(M=1 | x, a, z)
    std::array<std::array<std::array<std::array<double, 2>, 2>, 2>, 2> y_mean{};  // [x][a][z][m]

    double cell_probability(int x, int a, int z, int m) const;
    // Throws ZeroCell when a conditional probability is 0 or 1.
    void check() const;
    // One weighted unit per cell, y equal to the cell mean. Row order is
    // x, a, z, m in binary counting order.
    Dataset as_dataset() const;

    static DiscretePopulation random(std::uint64_t seed);
};

struct OracleResult {
    double psi = 0.0;  // g-formula by exact summation
    double pure_imputation = 0.0;
    double imp_then_weight = 0.0;
    double pure_weighting = 0.0;
    double weight_then_imp = 0.0;
    double eif_mean = 0.0;  // exact expectation of the influence function at the truth

    std::array<std::array<double, 2>, 2> mu{};  // [x][z]
    std::array<double, 2> nu{};                 // [x]
    std::array<double, 2> pi_a{};               // [x]
    std::array<std::array<double, 2>, 2> pi_m{};  // [x][z] at A = a

    // Exact nuisances aligned with the rows of as_dataset().
    NuisanceValues values;
};

OracleResult discrete_oracle(const DiscretePopulation& pop, int a, int m);

}  // namespace cdemr
