#pragma once

#include "cdemr/data.hpp"
#include "cdemr/pipeline.hpp"

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace cdemr {

enum class ContrastKind {
    cde,          // psi_am - psi_a'm
    cme,          // psi_am - psi_am'
    interaction,  // (psi_am - psi_am') - (psi_a'm - psi_a'm')
};

enum class IntervalMethod { eif, bootstrap };

std::string_view to_string(ContrastKind kind);
std::string_view to_string(IntervalMethod method);

struct ContrastResult {
    ContrastKind kind = ContrastKind::cde;
    double estimate = 0.0;
    double se = 0.0;
    double ci_low = 0.0;
    double ci_high = 0.0;
    IntervalMethod method = IntervalMethod::eif;
    double level = 0.95;
    Index n = 0;
    std::vector<Target> targets;
    std::vector<std::string> warnings;
};

// CDE from two results with aligned influence values: variance
// P_n[(phi_am - phi_a'm)^2] / n and a Wald interval.
ContrastResult cde_eif(const EstimateResult& am, const EstimateResult& a_prime_m, double level);

// Linear contrast of psi estimates. Result order:
//   cde:          {psi_am, psi_a'm}
//   cme:          {psi_am, psi_am'}
//   interaction:  {psi_am, psi_am', psi_a'm, psi_a'm'}
ContrastResult contrast(ContrastKind kind, std::span<const EstimateResult> results, double level);

// Targets needed for a contrast, in the order `contrast` expects.
std::vector<Target> contrast_targets(ContrastKind kind, const Target& base);
std::vector<double> contrast_weights(ContrastKind kind);

struct BootstrapResult {
    double estimate = 0.0;  // statistic on the original data
    double se = 0.0;        // sd of replicate statistics
    double ci_low = 0.0;    // percentile interval
    double ci_high = 0.0;
    double level = 0.95;
    std::vector<double> replicates;  // NaN marks a skipped resample
    int skipped = 0;
    std::vector<std::string> warnings;
};

using Statistic = std::function<double(const Dataset&)>;

// Nonparametric bootstrap. Replicate b resamples with a stream derived from
// (seed, b). Resamples that empty a target stratum are skipped and counted;
// more than 10% skipped throws TooManySkipped.
BootstrapResult bootstrap(const Dataset& data, const Statistic& statistic, int replicates,
                          std::uint64_t seed, double level, unsigned jobs = 1);

inline constexpr double kMaxSkippedFraction = 0.10;

// Bootstrap se and percentile interval for one estimator at one target.
EstimateResult bootstrap_estimate(const Dataset& data, const Target& target,
                                  const EstimatorConfig& config, int replicates,
                                  std::uint64_t seed, unsigned jobs = 1,
                                  BootstrapResult* details = nullptr);

ContrastResult bootstrap_contrast(ContrastKind kind, const Dataset& data, const Target& base,
                                  const EstimatorConfig& config, int replicates,
                                  std::uint64_t seed, unsigned jobs = 1,
                                  BootstrapResult* details = nullptr);

// Percentile of sorted data with linear interpolation (type 7).
double quantile_sorted(std::span<const double> sorted, double p);

}  // namespace cdemr
