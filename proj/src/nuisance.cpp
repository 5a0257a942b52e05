#include "cdemr/nuisance.hpp"

#include "cdemr/errors.hpp"
#include "cdemr/parallel.hpp"
#include "cdemr/rng.hpp"

#include <map>
#include <mutex>
#include <numeric>
#include <sstream>

namespace cdemr {

namespace {

class GlmPredictor final : public Predictor {
public:
    explicit GlmPredictor(GlmFit fit) : fit_(std::move(fit)) {}
    Eigen::VectorXd predict(const Eigen::MatrixXd& features) const override {
        return cdemr::predict(fit_, features);
    }

private:
    GlmFit fit_;
};

std::mutex& registry_mutex() {
    static std::mutex mu;
    return mu;
}

std::map<std::string, LearnerFactory, std::less<>>& registry() {
    static std::map<std::string, LearnerFactory, std::less<>> r{
        {"glm", [] { return std::make_shared<const GlmLearner>(); }},
    };
    return r;
}

std::vector<Index> rows_where(const Dataset& d, std::optional<int> a, std::optional<int> m) {
    std::vector<Index> rows;
    for (Index i = 0; i < d.n(); ++i) {
        const auto ui = static_cast<std::size_t>(i);
        if (a && d.a[ui] != *a) continue;
        if (m && d.m[ui] != *m) continue;
        rows.push_back(i);
    }
    return rows;
}

Eigen::MatrixXd take_rows(const Eigen::MatrixXd& mat, const std::vector<Index>& rows) {
    Eigen::MatrixXd out(static_cast<Index>(rows.size()), mat.cols());
    for (std::size_t r = 0; r < rows.size(); ++r) out.row(static_cast<Index>(r)) = mat.row(rows[r]);
    return out;
}

Eigen::VectorXd take_rows(const Eigen::VectorXd& v, const std::vector<Index>& rows) {
    Eigen::VectorXd out(static_cast<Index>(rows.size()));
    for (std::size_t r = 0; r < rows.size(); ++r) out(static_cast<Index>(r)) = v(rows[r]);
    return out;
}

Eigen::MatrixXd append_column(const Eigen::MatrixXd& mat, const Eigen::VectorXd& col) {
    Eigen::MatrixXd out(mat.rows(), mat.cols() + 1);
    out << mat, col;
    return out;
}

// Drops every term that mentions the treatment (and the mediator when
// `also_mediator`): those terms are constant within a stratum.
TermSpec drop_fixed_terms(const TermSpec& spec, const Dataset& d, bool also_mediator) {
    std::vector<Term> kept;
    for (const auto& t : spec.terms()) {
        bool fixed = false;
        for (const auto& f : t.factors) {
            if (f.name == "a" || f.name == d.a_name) fixed = true;
            if (also_mediator && (f.name == "m" || f.name == d.m_name)) fixed = true;
        }
        if (!fixed) kept.push_back(t);
    }
    return TermSpec(std::move(kept));
}

struct Truncated {
    Eigen::VectorXd values;
    Index clipped = 0;
};

Truncated truncate(const Eigen::VectorXd& p, double delta) {
    Truncated t;
    t.values = p;
    for (Index i = 0; i < p.size(); ++i) {
        if (p(i) < delta) {
            t.values(i) = delta;
            ++t.clipped;
        } else if (p(i) > 1.0 - delta) {
            t.values(i) = 1.0 - delta;
            ++t.clipped;
        }
    }
    return t;
}


struct FitData {
    Eigen::MatrixXd features;
    Eigen::VectorXd response;
    Eigen::VectorXd weights;  // empty means unit weights
};

std::shared_ptr<const Predictor> fit_on(const Learner& learner, const FitData& fd, Family family) {
    return learner.fit(fd.features, fd.response, fd.weights.size() ? &fd.weights : nullptr, family);
}

FitData restrict(FitData fd, const std::optional<std::vector<Index>>& rows) {
    if (!rows) return fd;
    fd.features = take_rows(fd.features, *rows);
    fd.response = take_rows(fd.response, *rows);
    if (fd.weights.size()) fd.weights = take_rows(fd.weights, *rows);
    return fd;
}

// Outcome-side models: mu and the second-stage nu regression.
struct OutcomeStage {
    std::shared_ptr<const Predictor> mu;
    std::shared_ptr<const Predictor> nu;
};

struct OutcomeEval {
    Eigen::VectorXd mu, mu_obs, nu;
};

struct StageTerms {
    TermSpec mu, nu;
};

OutcomeEval evaluate_stage(const OutcomeStage& stage, const StageTerms& terms, const Dataset& d,
                           const Target& target, bool augmented, const Eigen::VectorXd& pi_a,
                           const Eigen::VectorXd& pi_m) {
    OutcomeEval out;
    Eigen::MatrixXd mu_design = build_design(terms.mu, d, {.a = target.a, .m = target.m});
    Eigen::MatrixXd mu_obs_design = build_design(terms.mu, d, {.m = target.m});
    Eigen::MatrixXd nu_design = build_design(terms.nu, d, {.a = target.a});
    if (augmented) {
        const Eigen::VectorXd inv = (pi_a.cwiseProduct(pi_m)).cwiseInverse();
        mu_design = append_column(mu_design, inv);
        mu_obs_design = append_column(mu_obs_design, indicator(d.a, target.a).cwiseProduct(inv));
        nu_design = append_column(nu_design, pi_a.cwiseInverse());
    }
    out.mu = stage.mu->predict(mu_design);
    out.mu_obs = stage.mu->predict(mu_obs_design);
    out.nu = stage.nu->predict(nu_design);
    return out;
}

OutcomeStage fit_stage(const Learner& learner, const StageTerms& terms, const Dataset& d,
                       const Target& target, const NuisanceSpec& spec, const Eigen::VectorXd& pi_a,
                       const Eigen::VectorXd& pi_m, const Eigen::VectorXd& pi_m_obs) {
    const bool augmented = spec.br_augment;
    const Eigen::VectorXd ind_a = indicator(d.a, target.a);
    const Eigen::VectorXd ind_m = indicator(d.m, target.m);

    std::optional<std::vector<Index>> mu_rows, nu_rows;
    if (spec.stratified) {
        mu_rows = rows_where(d, target.a, target.m);
        nu_rows = rows_where(d, target.a, std::nullopt);
    }

    OutcomeStage stage;
    FitData mu_fd{build_design(terms.mu, d), d.y, d.weighted() ? d.weights : Eigen::VectorXd()};
    if (augmented) {
        const Eigen::VectorXd h =
            ind_a.cwiseProduct(ind_m).cwiseQuotient(pi_a.cwiseProduct(pi_m));
        mu_fd.features = append_column(mu_fd.features, h);
    }
    stage.mu = fit_on(learner, restrict(std::move(mu_fd), mu_rows), Family::gaussian);

    // mu at each unit's own treatment, M = m, feeds the pseudo-outcome.
    Eigen::MatrixXd mu_obs_design = build_design(terms.mu, d, {.m = target.m});
    if (augmented) {
        mu_obs_design = append_column(
            mu_obs_design, ind_a.cwiseQuotient(pi_a.cwiseProduct(pi_m)));
    }
    const Eigen::VectorXd mu_obs = stage.mu->predict(mu_obs_design);
    const Eigen::VectorXd u = pseudo_outcome(spec.nu_variant, d, target.m, mu_obs, pi_m_obs);

    FitData nu_fd{build_design(terms.nu, d), u, d.weighted() ? d.weights : Eigen::VectorXd()};
    if (augmented) nu_fd.features = append_column(nu_fd.features, ind_a.cwiseQuotient(pi_a));
    stage.nu = fit_on(learner, restrict(std::move(nu_fd), nu_rows), Family::gaussian);
    return stage;
}

}  // namespace

std::shared_ptr<const Predictor> GlmLearner::fit(const Eigen::MatrixXd& features,
                                                 const Eigen::VectorXd& response,
                                                 const Eigen::VectorXd* weights,
                                                 Family family) const {
    if (family == Family::gaussian) {
        return std::make_shared<const GlmPredictor>(fit_ols(features, response, weights, ols_));
    }
    return std::make_shared<const GlmPredictor>(
        fit_logistic(features, response, weights, logistic_));
}

void register_learner(const std::string& key, LearnerFactory factory) {
    std::lock_guard<std::mutex> lock(registry_mutex());
    registry()[key] = std::move(factory);
}

std::shared_ptr<const Learner> make_learner(std::string_view key) {
    std::lock_guard<std::mutex> lock(registry_mutex());
    auto it = registry().find(key);
    if (it == registry().end()) {
        throw ValidationError("unknown learner '" + std::string(key) + "'");
    }
    return it->second();
}

void check_spec(const NuisanceSpec& spec) {
    if (!(spec.truncation > 0.0 && spec.truncation < 0.5)) {
        throw ValidationError("truncation floor must lie in (0, 0.5)");
    }
}

Eigen::VectorXd pseudo_outcome(NuVariant variant, const Dataset& data, int m,
                               const Eigen::VectorXd& mu_obs, const Eigen::VectorXd& pi_m_obs) {
    const Eigen::VectorXd ind_m = indicator(data.m, m);
    switch (variant) {
        case NuVariant::imputation: return mu_obs;
        case NuVariant::weighting:
            return ind_m.cwiseProduct(data.y).cwiseQuotient(pi_m_obs);
        case NuVariant::dr:
            return mu_obs + ind_m.cwiseProduct(data.y - mu_obs).cwiseQuotient(pi_m_obs);
    }
    return mu_obs;
}

NuisanceModel train_nuisances(const Dataset& train, const Target& target,
                              const NuisanceSpec& spec) {
    check_spec(spec);
    validate(train, target);
    const auto learner = make_learner(spec.learner);

    NuisanceModel model;
    model.target_ = target;
    model.spec_ = spec;
    if (spec.stratified) {
        model.mu_terms_ = drop_fixed_terms(spec.mu_spec, train, true);
        model.nu_terms_ = drop_fixed_terms(spec.nu_spec, train, false);
        model.pi_m_terms_ = drop_fixed_terms(spec.pi_m_spec, train, false);
    } else {
        model.mu_terms_ = spec.mu_spec;
        model.nu_terms_ = spec.nu_spec;
        model.pi_m_terms_ = spec.pi_m_spec;
    }

    FitData pa_fd{build_design(spec.pi_a_spec, train), indicator(train.a, target.a),
                  train.weighted() ? train.weights : Eigen::VectorXd()};
    model.pi_a_ = fit_on(*learner, pa_fd, Family::binomial);

    FitData pm_fd{build_design(model.pi_m_terms_, train), indicator(train.m, target.m),
                  train.weighted() ? train.weights : Eigen::VectorXd()};
    std::optional<std::vector<Index>> pm_rows;
    if (spec.stratified) pm_rows = rows_where(train, target.a, std::nullopt);
    model.pi_m_ = fit_on(*learner, restrict(std::move(pm_fd), pm_rows), Family::binomial);

    // Probabilities on the training data, truncated, for the outcome stage.
    const double delta = spec.truncation;
    const Eigen::VectorXd pa =
        truncate(model.pi_a_->predict(build_design(spec.pi_a_spec, train)), delta).values;
    const Eigen::VectorXd pm =
        truncate(model.pi_m_->predict(build_design(model.pi_m_terms_, train, {.a = target.a})),
                 delta).values;
    const Eigen::VectorXd pm_obs =
        spec.stratified
            ? pm
            : truncate(model.pi_m_->predict(build_design(model.pi_m_terms_, train)), delta).values;

    const StageTerms terms{model.mu_terms_, model.nu_terms_};
    const OutcomeStage stage = fit_stage(*learner, terms, train, target, spec, pa, pm, pm_obs);
    model.mu_ = stage.mu;
    model.nu_ = stage.nu;
    return model;
}

NuisanceValues NuisanceModel::evaluate(const Dataset& data) const {
    const double delta = spec_.truncation;
    NuisanceValues out;
    out.nu_variant = spec_.nu_variant;
    out.augmented = spec_.br_augment;

    const auto pa = truncate(pi_a_->predict(build_design(spec_.pi_a_spec, data)), delta);
    const auto pm =
        truncate(pi_m_->predict(build_design(pi_m_terms_, data, {.a = target_.a})), delta);
    out.pi_a = pa.values;
    out.pi_m = pm.values;
    out.pi_m_obs = spec_.stratified
                       ? pm.values
                       : truncate(pi_m_->predict(build_design(pi_m_terms_, data)), delta).values;

    const StageTerms terms{mu_terms_, nu_terms_};
    const OutcomeStage stage{mu_, nu_};
    auto ev = evaluate_stage(stage, terms, data, target_, spec_.br_augment, out.pi_a, out.pi_m);
    out.mu = std::move(ev.mu);
    out.mu_obs = spec_.stratified ? out.mu : std::move(ev.mu_obs);
    out.nu = std::move(ev.nu);

    const Index total = 2 * data.n();
    out.clipped_fraction = total ? static_cast<double>(pa.clipped + pm.clipped) / total : 0.0;
    if (out.clipped_fraction > kTruncationWarnFraction) {
        std::ostringstream os;
        os << "TruncationDominates: " << out.clipped_fraction * 100.0
           << "% of estimated probabilities were clipped to [" << delta << ", " << 1.0 - delta
           << "]";
        out.warnings.push_back(os.str());
    }
    return out;
}

NuisanceValues fit_nuisances(const Dataset& data, const Target& target, const NuisanceSpec& spec) {
    return train_nuisances(data, target, spec).evaluate(data);
}

std::vector<int> assign_folds(Index n, int folds, std::uint64_t seed) {
    if (folds < 2) throw ValidationError("cross-fitting needs at least 2 folds");
    if (folds > n) throw ValidationError("more folds than units");
    std::vector<Index> perm(static_cast<std::size_t>(n));
    std::iota(perm.begin(), perm.end(), Index{0});
    Rng rng = make_rng(seed, {0xF01D5ULL, static_cast<std::uint64_t>(folds)});
    for (Index i = n - 1; i > 0; --i) {
        std::uniform_int_distribution<Index> pick(0, i);
        std::swap(perm[static_cast<std::size_t>(i)], perm[static_cast<std::size_t>(pick(rng))]);
    }
    std::vector<int> fold_of(static_cast<std::size_t>(n));
    for (Index pos = 0; pos < n; ++pos) {
        // Position pos of the permutation goes to fold floor(pos * K / n).
        fold_of[static_cast<std::size_t>(perm[static_cast<std::size_t>(pos)])] =
            static_cast<int>((pos * folds) / n);
    }
    return fold_of;
}

NuisanceValues cross_fit(const Dataset& data, const Target& target, const NuisanceSpec& spec,
                         int folds, std::uint64_t seed, unsigned jobs) {
    check_spec(spec);
    validate(data, target);
    const Index n = data.n();
    const auto fold_of = assign_folds(n, folds, seed);

    std::vector<NuisanceValues> per_fold(static_cast<std::size_t>(folds));
    std::vector<std::vector<Index>> held(static_cast<std::size_t>(folds));
    std::vector<std::vector<Index>> train(static_cast<std::size_t>(folds));
    for (Index i = 0; i < n; ++i) {
        const int f = fold_of[static_cast<std::size_t>(i)];
        for (int k = 0; k < folds; ++k) {
            (k == f ? held : train)[static_cast<std::size_t>(k)].push_back(i);
        }
    }

    parallel_for(static_cast<std::size_t>(folds), jobs, [&](std::size_t k) {
        const Dataset train_part = data.subset(train[k]);
        const Dataset held_part = data.subset(held[k]);
        NuisanceModel model;
        try {
            model = train_nuisances(train_part, target, spec);
        } catch (const EmptyStratum& e) {
            throw FoldTooSmall("training complement of fold " + std::to_string(k) +
                               " has an empty target stratum: " + e.what());
        }
        per_fold[k] = model.evaluate(held_part);
    });

    NuisanceValues out;
    out.nu_variant = spec.nu_variant;
    out.augmented = spec.br_augment;
    for (auto* v : {&out.mu, &out.nu, &out.pi_a, &out.pi_m, &out.mu_obs, &out.pi_m_obs}) {
        v->setConstant(n, std::numeric_limits<double>::quiet_NaN());
    }
    Index clipped = 0;
    for (std::size_t k = 0; k < per_fold.size(); ++k) {
        const auto& part = per_fold[k];
        for (std::size_t r = 0; r < held[k].size(); ++r) {
            const Index i = held[k][r];
            const auto ri = static_cast<Index>(r);
            out.mu(i) = part.mu(ri);
            out.nu(i) = part.nu(ri);
            out.pi_a(i) = part.pi_a(ri);
            out.pi_m(i) = part.pi_m(ri);
            out.mu_obs(i) = part.mu_obs(ri);
            out.pi_m_obs(i) = part.pi_m_obs(ri);
        }
        clipped += static_cast<Index>(
            std::llround(part.clipped_fraction * 2.0 * static_cast<double>(held[k].size())));
        for (const auto& w : part.warnings) out.warnings.push_back("fold " + std::to_string(k) + ": " + w);
    }
    out.clipped_fraction = static_cast<double>(clipped) / (2.0 * static_cast<double>(n));
    return out;
}

NuisanceValues br_augment(const Dataset& data, const Target& target, const NuisanceSpec& spec,
                          const NuisanceValues& base) {
    check_spec(spec);
    validate(data, target);
    if (base.size() != data.n()) throw LengthMismatch("base nuisances do not match the dataset");
    NuisanceSpec aug_spec = spec;
    aug_spec.br_augment = true;
    const auto learner = make_learner(spec.learner);

    StageTerms terms{spec.mu_spec, spec.nu_spec};
    if (spec.stratified) {
        terms.mu = drop_fixed_terms(spec.mu_spec, data, true);
        terms.nu = drop_fixed_terms(spec.nu_spec, data, false);
    }
    const Eigen::VectorXd& pm_obs = base.pi_m_obs.size() ? base.pi_m_obs : base.pi_m;
    const OutcomeStage stage =
        fit_stage(*learner, terms, data, target, aug_spec, base.pi_a, base.pi_m, pm_obs);
    auto ev = evaluate_stage(stage, terms, data, target, true, base.pi_a, base.pi_m);

    NuisanceValues out = base;
    out.mu = std::move(ev.mu);
    out.mu_obs = spec.stratified ? out.mu : std::move(ev.mu_obs);
    out.nu = std::move(ev.nu);
    out.nu_variant = spec.nu_variant;
    out.augmented = true;
    return out;
}

}  // namespace cdemr
