#pragma once

#include <boost/math/distributions/normal.hpp>

#include <stdexcept>

namespace cdemr {

inline double normal_quantile(double p) {
    return boost::math::quantile(boost::math::normal_distribution<double>(), p);
}

// Two-sided Wald multiplier z_{(1+level)/2}.
inline double wald_multiplier(double level) {
    if (!(level > 0.0 && level < 1.0)) {
        throw std::invalid_argument("confidence level must lie in (0, 1)");
    }
    return normal_quantile(0.5 * (1.0 + level));
}

}  // namespace cdemr
