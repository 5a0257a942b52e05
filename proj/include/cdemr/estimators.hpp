#pragma once

#include "cdemr/data.hpp"
#include "cdemr/glm.hpp"

#include <cstdint>
#include <optional>

namespace cdemr {

inline constexpr double kDefaultLevel = 0.95;

// The nu construction an estimator requires, or nullopt when it ignores nu.
std::optional<NuVariant> required_variant(EstimatorId id);

bool is_plugin(EstimatorId id);
bool is_doubly_robust(EstimatorId id);
bool is_multiply_robust(EstimatorId id);

// pure_imputation = P_n[nu] (imputation nu)
// imp_then_weight = P_n[1(A=a) mu / pi_a]
// pure_weighting  = P_n[1(A=a)1(M=m) Y / (pi_a pi_m)]
// weight_then_imp = P_n[nu] (weighting nu)
EstimateResult estimate_plugin(EstimatorId id, const Dataset& data, const Target& target,
                               const NuisanceValues& nuisances);

// G-computation with a linear-Gaussian model for Z given (X, A): the inner
// integral over Z is evaluated by `draws` Monte Carlo draws per unit.
struct GcompModel {
    TermSpec y_spec;  // outcome regression over x, a, z, m
    TermSpec z_spec;  // mean model of each Z column over x, a
    int draws = 200;
    std::uint64_t seed = 0;
};

EstimateResult estimate_gcomp(const Dataset& data, const Target& target, const GcompModel& model);

// dr1 = P_n[nu + 1(A=a)(mu - nu)/pi_a]
// dr2 = P_n[nu + 1(A=a)(1(M=m)Y/pi_m - nu)/pi_a]
// dr3 = P_n[1(A=a)(mu + 1(M=m)(Y - mu)/pi_m)/pi_a]
// dr4 = P_n[nu] (doubly robust nu)
EstimateResult estimate_dr(EstimatorId id, const Dataset& data, const Target& target,
                           const NuisanceValues& nuisances);

// tr1, tr2, qr share one summand and differ only in how nu was built. The
// result carries per-unit influence values and a Wald interval.
EstimateResult estimate_mr(EstimatorId id, const Dataset& data, const Target& target,
                           const NuisanceValues& nuisances, double level = kDefaultLevel);

// nu + 1(A=a)(mu - nu)/pi_a + 1(A=a)1(M=m)(Y - mu)/(pi_a pi_m), per unit.
Eigen::VectorXd eif_summand(const Dataset& data, const Target& target,
                            const NuisanceValues& nuisances);

// Influence values: eif_summand - psi.
Eigen::VectorXd eif(const Dataset& data, const Target& target, const NuisanceValues& nuisances,
                    double psi);

// Dispatches any estimator other than g_comp.
EstimateResult estimate(EstimatorId id, const Dataset& data, const Target& target,
                        const NuisanceValues& nuisances, double level = kDefaultLevel);

}  // namespace cdemr
