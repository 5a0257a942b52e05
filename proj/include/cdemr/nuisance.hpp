#pragma once

#include "cdemr/data.hpp"
#include "cdemr/glm.hpp"

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <string_view>

namespace cdemr {

enum class Family { gaussian, binomial };

class Predictor {
public:
    virtual ~Predictor() = default;
    virtual Eigen::VectorXd predict(const Eigen::MatrixXd& features) const = 0;
};

// Regression learner over design-matrix features. Implementations must be
// deterministic given identical inputs.
class Learner {
public:
    virtual ~Learner() = default;
    virtual std::shared_ptr<const Predictor> fit(const Eigen::MatrixXd& features,
                                                 const Eigen::VectorXd& response,
                                                 const Eigen::VectorXd* weights,
                                                 Family family) const = 0;
    virtual std::string name() const = 0;
};

class GlmLearner final : public Learner {
public:
    explicit GlmLearner(OlsOptions ols = {}, LogisticOptions logistic = {})
        : ols_(ols), logistic_(logistic) {}
    std::shared_ptr<const Predictor> fit(const Eigen::MatrixXd& features,
                                         const Eigen::VectorXd& response,
                                         const Eigen::VectorXd* weights,
                                         Family family) const override;
    std::string name() const override { return "glm"; }

private:
    OlsOptions ols_;
    LogisticOptions logistic_;
};

using LearnerFactory = std::function<std::shared_ptr<const Learner>()>;

// "glm" is built in; other learners can be registered under new keys.
void register_learner(const std::string& key, LearnerFactory factory);
std::shared_ptr<const Learner> make_learner(std::string_view key);

inline constexpr double kDefaultTruncation = 1e-3;
// Fraction of clipped probabilities above which a warning is raised.
inline constexpr double kTruncationWarnFraction = 0.05;

struct NuisanceSpec {
    TermSpec mu_spec;    // outcome model over x, a, z, m
    TermSpec nu_spec;    // second-stage model over x, a
    TermSpec pi_a_spec;  // treatment model over x
    TermSpec pi_m_spec;  // mediator model over x, a, z
    NuVariant nu_variant = NuVariant::imputation;
    double truncation = kDefaultTruncation;
    bool br_augment = false;
    // Fit mu on the (A=a, M=m) stratum and pi_m, nu on the A=a stratum,
    // dropping terms that involve the fixed labels, instead of pooled fits
    // with counterfactual overrides.
    bool stratified = false;
    std::string learner = "glm";
};

// Throws ValidationError if the truncation floor is outside (0, 0.5).
void check_spec(const NuisanceSpec& spec);

// Nuisance models trained on one dataset, evaluable on any dataset with the
// same columns.
class NuisanceModel {
public:
    NuisanceValues evaluate(const Dataset& data) const;

    const Target& target() const { return target_; }
    const NuisanceSpec& spec() const { return spec_; }

private:
    friend NuisanceModel train_nuisances(const Dataset&, const Target&, const NuisanceSpec&);

    Target target_;
    NuisanceSpec spec_;
    TermSpec mu_terms_, nu_terms_, pi_m_terms_;
    std::shared_ptr<const Predictor> mu_, nu_, pi_a_, pi_m_;
};

NuisanceModel train_nuisances(const Dataset& train, const Target& target,
                              const NuisanceSpec& spec);

// Fits every nuisance on the full sample and evaluates in-sample.
NuisanceValues fit_nuisances(const Dataset& data, const Target& target, const NuisanceSpec& spec);

// Fold label for each unit from a seeded Fisher-Yates permutation; fold
// sizes differ by at most one.
std::vector<int> assign_folds(Index n, int folds, std::uint64_t seed);

// K-fold cross-fitting: every returned value is predicted by models that
// never saw the unit. Throws FoldTooSmall when a training complement has an
// empty target stratum.
NuisanceValues cross_fit(const Dataset& data, const Target& target, const NuisanceSpec& spec,
                         int folds, std::uint64_t seed, unsigned jobs = 1);

// Bang-Robins augmentation: refit mu with the covariate
// 1(A=a)1(M=m)/(pi_a pi_m) and nu with 1(A=a)/pi_a, holding the
// probabilities in `base` fixed.
NuisanceValues br_augment(const Dataset& data, const Target& target, const NuisanceSpec& spec,
                          const NuisanceValues& base);

// Second-stage pseudo-outcome for the given variant.
Eigen::VectorXd pseudo_outcome(NuVariant variant, const Dataset& data, int m,
                               const Eigen::VectorXd& mu_obs, const Eigen::VectorXd& pi_m_obs);

}  // namespace cdemr
