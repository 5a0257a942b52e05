#include "cdemr/estimators.hpp"

#include "cdemr/errors.hpp"
#include "cdemr/rng.hpp"
#include "cdemr/stats.hpp"

#include <cmath>

namespace cdemr {

namespace {

void check_nuisances(const Dataset& data, const NuisanceValues& nv) {
    const Index n = data.n();
    if (nv.mu.size() != n || nv.nu.size() != n || nv.pi_a.size() != n || nv.pi_m.size() != n) {
        throw DimensionMismatch("nuisance vectors do not match the dataset length");
    }
}

void check_variant(EstimatorId id, const NuisanceValues& nv) {
    const auto need = required_variant(id);
    if (need && *need != nv.nu_variant) {
        throw VariantMismatch(std::string(to_string(id)) + " needs the " +
                              std::string(to_string(*need)) + " nu construction, got " +
                              std::string(to_string(nv.nu_variant)));
    }
}

EstimateResult make_result(EstimatorId id, const Dataset& data, const Target& target, double psi) {
    EstimateResult r;
    r.psi = psi;
    r.estimator = id;
    r.target = target;
    r.n = data.n();
    return r;
}

struct Indicators {
    Eigen::ArrayXd a, am;
};

Indicators indicators(const Dataset& data, const Target& target) {
    Indicators ind;
    ind.a = indicator(data.a, target.a).array();
    ind.am = ind.a * indicator(data.m, target.m).array();
    return ind;
}

void prepare(EstimatorId id, const Dataset& data, const Target& target,
             const NuisanceValues& nv) {
    validate(data, target);
    check_nuisances(data, nv);
    check_variant(id, nv);
}

}  // namespace

std::optional<NuVariant> required_variant(EstimatorId id) {
    switch (id) {
        case EstimatorId::pure_imputation:
        case EstimatorId::dr1:
        case EstimatorId::tr1: return NuVariant::imputation;
        case EstimatorId::weight_then_imp:
        case EstimatorId::dr2:
        case EstimatorId::tr2: return NuVariant::weighting;
        case EstimatorId::dr4:
        case EstimatorId::qr: return NuVariant::dr;
        default: return std::nullopt;
    }
}

bool is_plugin(EstimatorId id) {
    return id == EstimatorId::pure_imputation || id == EstimatorId::imp_then_weight ||
           id == EstimatorId::pure_weighting || id == EstimatorId::weight_then_imp;
}

bool is_doubly_robust(EstimatorId id) {
    return id == EstimatorId::dr1 || id == EstimatorId::dr2 || id == EstimatorId::dr3 ||
           id == EstimatorId::dr4;
}

bool is_multiply_robust(EstimatorId id) {
    return id == EstimatorId::tr1 || id == EstimatorId::tr2 || id == EstimatorId::qr;
}

EstimateResult estimate_plugin(EstimatorId id, const Dataset& data, const Target& target,
                               const NuisanceValues& nv) {
    if (!is_plugin(id)) throw ValidationError(std::string(to_string(id)) + " is not a plug-in estimator");
    prepare(id, data, target, nv);
    const auto ind = indicators(data, target);
    Eigen::VectorXd summand;
    switch (id) {
        case EstimatorId::pure_imputation:
        case EstimatorId::weight_then_imp: summand = nv.nu; break;
        case EstimatorId::imp_then_weight:
            summand = (ind.a * nv.mu.array() / nv.pi_a.array()).matrix();
            break;
        case EstimatorId::pure_weighting:
            summand = (ind.am * data.y.array() / (nv.pi_a.array() * nv.pi_m.array())).matrix();
            break;
        default: break;
    }
    return make_result(id, data, target, sample_mean(data, summand));
}

EstimateResult estimate_dr(EstimatorId id, const Dataset& data, const Target& target,
                           const NuisanceValues& nv) {
    if (!is_doubly_robust(id)) throw ValidationError(std::string(to_string(id)) + " is not a dr estimator");
    prepare(id, data, target, nv);
    const auto ind = indicators(data, target);
    const Eigen::ArrayXd ind_m = indicator(data.m, target.m).array();
    const auto& mu = nv.mu.array();
    const auto& nu = nv.nu.array();
    const auto& pa = nv.pi_a.array();
    const auto& pm = nv.pi_m.array();
    const auto& y = data.y.array();
    Eigen::ArrayXd summand;
    switch (id) {
        case EstimatorId::dr1: summand = nu + ind.a * (mu - nu) / pa; break;
        case EstimatorId::dr2: summand = nu + ind.a * (ind_m * y / pm - nu) / pa; break;
        case EstimatorId::dr3: summand = ind.a * (mu + ind_m * (y - mu) / pm) / pa; break;
        case EstimatorId::dr4: summand = nu; break;
        default: break;
    }
    return make_result(id, data, target, sample_mean(data, summand.matrix()));
}

Eigen::VectorXd eif_summand(const Dataset& data, const Target& target, const NuisanceValues& nv) {
    check_nuisances(data, nv);
    const auto ind = indicators(data, target);
    const auto& mu = nv.mu.array();
    const auto& nu = nv.nu.array();
    const auto& pa = nv.pi_a.array();
    const auto& pm = nv.pi_m.array();
    return (nu + ind.a * (mu - nu) / pa + ind.am * (data.y.array() - mu) / (pa * pm)).matrix();
}

Eigen::VectorXd eif(const Dataset& data, const Target& target, const NuisanceValues& nv,
                    double psi) {
    return eif_summand(data, target, nv).array() - psi;
}

EstimateResult estimate_mr(EstimatorId id, const Dataset& data, const Target& target,
                           const NuisanceValues& nv, double level) {
    if (!is_multiply_robust(id)) {
        throw ValidationError(std::string(to_string(id)) + " is not a multiply robust estimator");
    }
    prepare(id, data, target, nv);
    const Eigen::VectorXd summand = eif_summand(data, target, nv);
    const double psi = sample_mean(data, summand);
    EstimateResult r = make_result(id, data, target, psi);
    Eigen::VectorXd phi = summand.array() - psi;
    const double var = sample_mean(data, phi.cwiseAbs2()) / static_cast<double>(data.n());
    r.se = std::sqrt(var);
    const double half = wald_multiplier(level) * *r.se;
    r.ci_low = psi - half;
    r.ci_high = psi + half;
    r.eif = std::move(phi);
    return r;
}

EstimateResult estimate(EstimatorId id, const Dataset& data, const Target& target,
                        const NuisanceValues& nv, double level) {
    if (is_plugin(id)) return estimate_plugin(id, data, target, nv);
    if (is_doubly_robust(id)) return estimate_dr(id, data, target, nv);
    if (is_multiply_robust(id)) return estimate_mr(id, data, target, nv, level);
    throw ValidationError("g_comp needs a GcompModel; use estimate_gcomp");
}

EstimateResult estimate_gcomp(const Dataset& data, const Target& target, const GcompModel& model) {
    validate(data, target);
    if (model.draws < 1) throw ValidationError("g-computation needs at least one draw");
    const Eigen::VectorXd* w = data.weighted() ? &data.weights : nullptr;
    const Index n = data.n();
    const Index pz = data.z.cols();

    const GlmFit y_fit = fit_ols(build_design(model.y_spec, data), data.y, w);

    // Z | X, A ~ N(mean(X, A), Sigma) with Sigma the residual covariance.
    const Eigen::MatrixXd z_design = build_design(model.z_spec, data);
    const Eigen::MatrixXd z_design_a = build_design(model.z_spec, data, {.a = target.a});
    Eigen::MatrixXd z_mean(n, pz);
    Eigen::MatrixXd resid(n, pz);
    for (Index j = 0; j < pz; ++j) {
        const GlmFit zf = fit_ols(z_design, data.z.col(j), w);
        z_mean.col(j) = predict(zf, z_design_a);
        resid.col(j) = data.z.col(j) - zf.fitted;
    }
    Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(pz, pz);
    if (pz > 0) {
        const Eigen::VectorXd wts = w ? *w : Eigen::VectorXd::Ones(n);
        cov = resid.transpose() * wts.asDiagonal() * resid / wts.sum();
    }
    Eigen::MatrixXd chol = Eigen::MatrixXd::Zero(pz, pz);
    if (pz > 0) {
        Eigen::LLT<Eigen::MatrixXd> llt(cov);
        if (llt.info() != Eigen::Success) {
            throw NumericalError("residual covariance of Z is not positive definite");
        }
        chol = llt.matrixL();
    }

    Rng rng = make_rng(model.seed, {0x6C0FFULL});
    std::normal_distribution<double> normal(0.0, 1.0);
    Eigen::VectorXd inner = Eigen::VectorXd::Zero(n);
    Eigen::MatrixXd z_sim(n, pz);
    Eigen::MatrixXd noise(n, pz);
    for (int d = 0; d < model.draws; ++d) {
        for (Index i = 0; i < n; ++i) {
            for (Index j = 0; j < pz; ++j) noise(i, j) = normal(rng);
        }
        z_sim = z_mean + noise * chol.transpose();
        const Overrides ov{.a = target.a, .m = target.m, .z = &z_sim};
        inner += predict(y_fit, build_design(model.y_spec, data, ov));
    }
    inner /= static_cast<double>(model.draws);
    return make_result(EstimatorId::g_comp, data, target, sample_mean(data, inner));
}

}  // namespace cdemr
