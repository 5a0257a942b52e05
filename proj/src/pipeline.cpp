#include "cdemr/pipeline.hpp"

#include "cdemr/errors.hpp"

namespace cdemr {

NuisanceSpec spec_for_estimator(const NuisanceSpec& spec, EstimatorId id) {
    NuisanceSpec out = spec;
    if (auto v = required_variant(id)) out.nu_variant = *v;
    return out;
}

NuisanceValues nuisances_for(const Dataset& data, const Target& target,
                             const EstimatorConfig& config) {
    const NuisanceSpec spec = spec_for_estimator(config.spec, config.id);
    if (config.folds >= 2) return cross_fit(data, target, spec, config.folds, config.fold_seed);
    return fit_nuisances(data, target, spec);
}

EstimateResult run_estimator(const Dataset& data, const Target& target,
                             const EstimatorConfig& config) {
    if (config.id == EstimatorId::g_comp) {
        if (!config.gcomp) throw ValidationError("g_comp needs an outcome and Z model");
        return estimate_gcomp(data, target, *config.gcomp);
    }
    return estimate(config.id, data, target, nuisances_for(data, target, config), config.level);
}

}  // namespace cdemr
