#pragma once

#include "cdemr/data.hpp"
#include "cdemr/estimators.hpp"
#include "cdemr/nuisance.hpp"

#include <cstdint>
#include <optional>

namespace cdemr {

// Everything needed to go from a dataset to one estimate.
struct EstimatorConfig {
    EstimatorId id = EstimatorId::qr;
    NuisanceSpec spec;
    int folds = 0;  // 0 or 1: no cross-fitting
    std::uint64_t fold_seed = 0;
    std::optional<GcompModel> gcomp;  // required for g_comp
    double level = kDefaultLevel;
};

// Copy of `spec` with nu_variant set to what `id` requires.
NuisanceSpec spec_for_estimator(const NuisanceSpec& spec, EstimatorId id);

NuisanceValues nuisances_for(const Dataset& data, const Target& target,
                             const EstimatorConfig& config);

EstimateResult run_estimator(const Dataset& data, const Target& target,
                             const EstimatorConfig& config);

}  // namespace cdemr
