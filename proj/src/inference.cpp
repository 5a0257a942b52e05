#include "cdemr/inference.hpp"

#include "cdemr/errors.hpp"
#include "cdemr/parallel.hpp"
#include "cdemr/rng.hpp"
#include "cdemr/stats.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numeric>

namespace cdemr {

std::string_view to_string(ContrastKind kind) {
    switch (kind) {
        case ContrastKind::cde: return "CDE";
        case ContrastKind::cme: return "CME";
        case ContrastKind::interaction: return "interaction";
    }
    return "?";
}

std::string_view to_string(IntervalMethod method) {
    return method == IntervalMethod::eif ? "eif" : "bootstrap";
}

std::vector<double> contrast_weights(ContrastKind kind) {
    switch (kind) {
        case ContrastKind::cde:
        case ContrastKind::cme: return {1.0, -1.0};
        case ContrastKind::interaction: return {1.0, -1.0, -1.0, 1.0};
    }
    return {};
}

std::vector<Target> contrast_targets(ContrastKind kind, const Target& base) {
    auto at = [](int a, int m) {
        Target t;
        t.a = a;
        t.m = m;
        return t;
    };
    const bool need_a = kind != ContrastKind::cme;
    const bool need_m = kind != ContrastKind::cde;
    if (need_a && !base.a_prime) {
        throw ValidationError(std::string(to_string(kind)) + " needs a contrast treatment a'");
    }
    if (need_m && !base.m_prime) {
        throw ValidationError(std::string(to_string(kind)) + " needs a contrast mediator m'");
    }
    switch (kind) {
        case ContrastKind::cde: return {at(base.a, base.m), at(*base.a_prime, base.m)};
        case ContrastKind::cme: return {at(base.a, base.m), at(base.a, *base.m_prime)};
        case ContrastKind::interaction:
            return {at(base.a, base.m), at(base.a, *base.m_prime), at(*base.a_prime, base.m),
                    at(*base.a_prime, *base.m_prime)};
    }
    return {};
}

ContrastResult contrast(ContrastKind kind, std::span<const EstimateResult> results, double level) {
    const auto weights = contrast_weights(kind);
    if (results.size() != weights.size()) {
        throw LengthMismatch(std::string(to_string(kind)) + " needs " +
                             std::to_string(weights.size()) + " estimates");
    }
    const Index n = results[0].eif ? results[0].eif->size() : 0;
    Eigen::VectorXd phi = Eigen::VectorXd::Zero(n);
    ContrastResult out;
    out.kind = kind;
    out.method = IntervalMethod::eif;
    out.level = level;
    out.n = n;
    for (std::size_t k = 0; k < results.size(); ++k) {
        const auto& r = results[k];
        if (!r.eif) {
            throw MissingEif(std::string(to_string(r.estimator)) +
                             " result carries no influence values");
        }
        if (r.eif->size() != n) throw LengthMismatch("influence vectors differ in length");
        out.estimate += weights[k] * r.psi;
        phi += weights[k] * *r.eif;
        out.targets.push_back(r.target);
    }
    const double var = n > 0 ? phi.squaredNorm() / static_cast<double>(n) / static_cast<double>(n) : 0.0;
    out.se = std::sqrt(var);
    const double half = wald_multiplier(level) * out.se;
    out.ci_low = out.estimate - half;
    out.ci_high = out.estimate + half;
    return out;
}

ContrastResult cde_eif(const EstimateResult& am, const EstimateResult& a_prime_m, double level) {
    const std::array<EstimateResult, 2> pair{am, a_prime_m};
    return contrast(ContrastKind::cde, pair, level);
}

double quantile_sorted(std::span<const double> sorted, double p) {
    if (sorted.empty()) return std::numeric_limits<double>::quiet_NaN();
    const double h = (static_cast<double>(sorted.size()) - 1.0) * p;
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const auto hi = std::min(lo + 1, sorted.size() - 1);
    return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

BootstrapResult bootstrap(const Dataset& data, const Statistic& statistic, int replicates,
                          std::uint64_t seed, double level, unsigned jobs) {
    if (replicates < 2) throw ValidationError("bootstrap needs at least 2 replicates");
    wald_multiplier(level);  // range check
    BootstrapResult out;
    out.level = level;
    out.estimate = statistic(data);
    out.replicates.assign(static_cast<std::size_t>(replicates),
                          std::numeric_limits<double>::quiet_NaN());
    const Index n = data.n();

    parallel_for(static_cast<std::size_t>(replicates), jobs, [&](std::size_t b) {
        Rng rng = make_rng(seed, {0xB0075ULL, static_cast<std::uint64_t>(b)});
        std::uniform_int_distribution<Index> pick(0, n - 1);
        std::vector<Index> rows(static_cast<std::size_t>(n));
        for (auto& r : rows) r = pick(rng);
        const Dataset resample = data.subset(rows);
        try {
            out.replicates[b] = statistic(resample);
        } catch (const EmptyStratum&) {
            // recorded as NaN
        } catch (const FoldTooSmall&) {
        }
    });

    std::vector<double> ok;
    for (double v : out.replicates) {
        if (std::isnan(v)) {
            ++out.skipped;
        } else {
            ok.push_back(v);
        }
    }
    if (static_cast<double>(out.skipped) > kMaxSkippedFraction * replicates) {
        throw TooManySkipped(std::to_string(out.skipped) + " of " + std::to_string(replicates) +
                             " bootstrap resamples had an empty target stratum");
    }
    if (out.skipped > 0) {
        out.warnings.push_back(std::to_string(out.skipped) +
                               " bootstrap resamples skipped (empty target stratum)");
    }
    const double mean = std::accumulate(ok.begin(), ok.end(), 0.0) / static_cast<double>(ok.size());
    double ss = 0.0;
    for (double v : ok) ss += (v - mean) * (v - mean);
    out.se = ok.size() > 1 ? std::sqrt(ss / static_cast<double>(ok.size() - 1)) : 0.0;
    std::sort(ok.begin(), ok.end());
    out.ci_low = quantile_sorted(ok, 0.5 * (1.0 - level));
    out.ci_high = quantile_sorted(ok, 0.5 * (1.0 + level));
    return out;
}

namespace {

void scoping_warning(const EstimatorConfig& config, std::vector<std::string>& warnings) {
    if (config.folds >= 2 && config.spec.learner != "glm") {
        warnings.push_back(
            "bootstrap combined with cross-fitted data-adaptive learners; the bootstrap is only "
            "justified for parametric nuisance models, prefer EIF-based intervals");
    }
}

}  // namespace

EstimateResult bootstrap_estimate(const Dataset& data, const Target& target,
                                  const EstimatorConfig& config, int replicates,
                                  std::uint64_t seed, unsigned jobs, BootstrapResult* details) {
    EstimateResult point = run_estimator(data, target, config);
    auto stat = [&](const Dataset& d) { return run_estimator(d, target, config).psi; };
    BootstrapResult boot = bootstrap(data, stat, replicates, seed, config.level, jobs);
    scoping_warning(config, boot.warnings);
    point.se = boot.se;
    point.ci_low = boot.ci_low;
    point.ci_high = boot.ci_high;
    if (details) *details = std::move(boot);
    return point;
}

ContrastResult bootstrap_contrast(ContrastKind kind, const Dataset& data, const Target& base,
                                  const EstimatorConfig& config, int replicates,
                                  std::uint64_t seed, unsigned jobs, BootstrapResult* details) {
    const auto targets = contrast_targets(kind, base);
    const auto weights = contrast_weights(kind);
    auto stat = [&](const Dataset& d) {
        double v = 0.0;
        for (std::size_t k = 0; k < targets.size(); ++k) {
            v += weights[k] * run_estimator(d, targets[k], config).psi;
        }
        return v;
    };
    BootstrapResult boot = bootstrap(data, stat, replicates, seed, config.level, jobs);
    scoping_warning(config, boot.warnings);
    ContrastResult out;
    out.kind = kind;
    out.estimate = boot.estimate;
    out.se = boot.se;
    out.ci_low = boot.ci_low;
    out.ci_high = boot.ci_high;
    out.method = IntervalMethod::bootstrap;
    out.level = config.level;
    out.n = data.n();
    out.targets = targets;
    out.warnings = boot.warnings;
    if (details) *details = std::move(boot);
    return out;
}

}  // namespace cdemr
