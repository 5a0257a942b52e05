#pragma once

#include <Eigen/Dense>

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace cdemr {

using Index = Eigen::Index;

// Observed data O = (X, A, Z, M, Y), one row per unit.
//
// Treatment and mediator labels are integers drawn from declared supports.
// `weights` is empty for an ordinary sample; when present, every sample mean
// P_n[.] becomes a weighted mean and every fit a weighted fit. The discrete
// population oracle uses this to represent a population as weighted cells.
struct Dataset {
    Eigen::MatrixXd x;  // n x p_x pretreatment confounders
    std::vector<std::string> x_names;
    std::vector<int> a;
    Eigen::MatrixXd z;  // n x p_z posttreatment confounders
    std::vector<std::string> z_names;
    std::vector<int> m;
    Eigen::VectorXd y;

    std::vector<int> a_support;
    std::vector<int> m_support;

    Eigen::VectorXd weights;

    // Column names of the treatment, mediator, and outcome in the source
    // table. Terms may refer to them by these names or by "a"/"m".
    std::string a_name = "a";
    std::string m_name = "m";
    std::string y_name = "y";

    Index n() const { return y.size(); }
    bool weighted() const { return weights.size() > 0; }

    Dataset subset(std::span<const Index> rows) const;
    // Same data with the outcome replaced.
    Dataset with_outcome(Eigen::VectorXd new_y) const;
};

// P_n[v]: weighted when the dataset carries weights.
double sample_mean(const Dataset& data, const Eigen::VectorXd& v);

Eigen::VectorXd indicator(std::span<const int> labels, int level);

struct Target {
    int a = 0;
    int m = 0;
    std::optional<int> a_prime = std::nullopt;
    std::optional<int> m_prime = std::nullopt;
};

enum class NuVariant {
    imputation,  // U = mu(X, Z)
    weighting,   // U = 1(M=m) Y / pi_m(X, Z)
    dr,          // U = mu + 1(M=m)(Y - mu) / pi_m
};

std::string_view to_string(NuVariant v);
NuVariant nu_variant_from_string(std::string_view s);

// Per-unit nuisance evaluations at a target (a, m).
struct NuisanceValues {
    Eigen::VectorXd mu;    // E[Y | X_i, A=a, Z_i, M=m]
    Eigen::VectorXd nu;    // E_{Z|X_i,a} mu
    Eigen::VectorXd pi_a;  // Pr[A=a | X_i]
    Eigen::VectorXd pi_m;  // Pr[M=m | X_i, A=a, Z_i]

    // The same outcome and mediator models evaluated at each unit's own
    // treatment. These build the second-stage pseudo-outcome; they coincide
    // with mu and pi_m on units with A=a.
    Eigen::VectorXd mu_obs;
    Eigen::VectorXd pi_m_obs;

    NuVariant nu_variant = NuVariant::imputation;
    bool augmented = false;
    double clipped_fraction = 0.0;
    std::vector<std::string> warnings;

    Index size() const { return mu.size(); }
};

enum class EstimatorId {
    g_comp,
    pure_imputation,
    imp_then_weight,
    pure_weighting,
    weight_then_imp,
    dr1,
    dr2,
    dr3,
    dr4,
    tr1,
    tr2,
    qr,
};

std::string_view to_string(EstimatorId id);
EstimatorId estimator_from_string(std::string_view s);
std::span<const EstimatorId> all_estimators();

struct EstimateResult {
    double psi = 0.0;
    std::optional<Eigen::VectorXd> eif;
    std::optional<double> se;
    std::optional<double> ci_low;
    std::optional<double> ci_high;
    EstimatorId estimator = EstimatorId::qr;
    Target target;
    Index n = 0;
};

struct ValidationReport {
    Index n = 0;
    Index count_a = 0;   // units with A = a
    Index count_am = 0;  // units with A = a and M = m
    double fraction_a = 0.0;
    double fraction_am = 0.0;
    std::vector<std::string> warnings;
};

// Empirical cell fractions below this trigger a positivity warning.
inline constexpr double kSmallCellFraction = 0.01;

// Checks schema and the target stratum. Throws SchemaError, InvalidLabel, or
// EmptyStratum. Warnings are collected in the report.
ValidationReport validate(const Dataset& data, const Target& target);

// Schema-only part of validate (no target).
void validate_schema(const Dataset& data);

}  // namespace cdemr
