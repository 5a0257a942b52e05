#include "cdemr/glm.hpp"

#include "cdemr/errors.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <map>
#include <set>

namespace cdemr {

namespace {

std::string strip(const std::string& s) {
    std::string out;
    for (char c : s) {
        if (!std::isspace(static_cast<unsigned char>(c))) out.push_back(c);
    }
    return out;
}

bool valid_name(const std::string& s) {
    if (s.empty()) return false;
    if (!(std::isalpha(static_cast<unsigned char>(s[0])) || s[0] == '_')) return false;
    return std::all_of(s.begin(), s.end(), [](char c) {
        return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '.';
    });
}

Factor parse_factor(const std::string& text) {
    Factor f;
    auto bad = [&] { return ValidationError("cannot parse design term factor '" + text + "'"); };
    if (text.size() > 5 && text.rfind("abs(", 0) == 0 && text.back() == ')') {
        f.kind = Factor::Kind::absolute;
        f.name = text.substr(4, text.size() - 5);
    } else if (text.size() > 2 && text.front() == '|' && text.back() == '|') {
        f.kind = Factor::Kind::absolute;
        f.name = text.substr(1, text.size() - 2);
    } else if (auto pos = text.find('^'); pos != std::string::npos) {
        f.name = text.substr(0, pos);
        const std::string exponent = text.substr(pos + 1);
        if (exponent == "1") {
            f.kind = Factor::Kind::value;
        } else if (exponent == "2" || exponent == "3") {
            f.kind = Factor::Kind::power;
            f.power = exponent[0] - '0';
        } else {
            throw ValidationError("unsupported power in design term '" + text +
                                  "' (only ^2 and ^3)");
        }
    } else if (auto eq = text.find('='); eq != std::string::npos) {
        f.kind = Factor::Kind::level;
        f.name = text.substr(0, eq);
        try {
            std::size_t used = 0;
            f.level = std::stoi(text.substr(eq + 1), &used);
            if (used != text.size() - eq - 1) throw bad();
        } catch (const std::logic_error&) {
            throw bad();
        }
    } else {
        f.name = text;
    }
    if (!valid_name(f.name)) throw bad();
    return f;
}

std::string canonical(const Term& t) {
    std::vector<std::string> parts;
    for (const auto& f : t.factors) parts.push_back(f.to_string());
    std::sort(parts.begin(), parts.end());
    std::string out;
    for (const auto& p : parts) out += p + "*";
    return out;
}

bool is_treatment(const Dataset& d, const std::string& name) {
    return name == "a" || name == d.a_name;
}

bool is_mediator(const Dataset& d, const std::string& name) {
    return name == "m" || name == d.m_name;
}

Eigen::VectorXd labels_as_real(const std::vector<int>& labels, std::optional<int> fixed) {
    Eigen::VectorXd v(static_cast<Index>(labels.size()));
    for (std::size_t i = 0; i < labels.size(); ++i) {
        v(static_cast<Index>(i)) = static_cast<double>(fixed ? *fixed : labels[i]);
    }
    return v;
}

Eigen::VectorXd resolve(const Dataset& d, const std::string& name, const Overrides& ov) {
    if (is_treatment(d, name)) return labels_as_real(d.a, ov.a);
    if (is_mediator(d, name)) return labels_as_real(d.m, ov.m);
    for (std::size_t j = 0; j < d.x_names.size(); ++j) {
        if (d.x_names[j] == name) return d.x.col(static_cast<Index>(j));
    }
    for (std::size_t j = 0; j < d.z_names.size(); ++j) {
        if (d.z_names[j] == name) {
            const auto col = static_cast<Index>(j);
            if (ov.z != nullptr) {
                if (ov.z->rows() != d.n() || ov.z->cols() != d.z.cols()) {
                    throw DimensionMismatch("z override has the wrong shape");
                }
                return ov.z->col(col);
            }
            return d.z.col(col);
        }
    }
    throw UnknownVariable("design term refers to unknown variable '" + name + "'");
}

constexpr double kLogitClamp = 1e-300;

}  // namespace

std::string Factor::to_string() const {
    switch (kind) {
        case Kind::value: return name;
        case Kind::power: return name + "^" + std::to_string(power);
        case Kind::absolute: return "abs(" + name + ")";
        case Kind::level: return name + "=" + std::to_string(level);
    }
    return name;
}

std::string Term::to_string() const {
    if (factors.empty()) return "1";
    std::string out;
    for (std::size_t i = 0; i < factors.size(); ++i) {
        if (i) out += "*";
        out += factors[i].to_string();
    }
    return out;
}

Term Term::parse(const std::string& text) {
    const std::string s = strip(text);
    if (s.empty()) throw ValidationError("empty design term");
    if (s == "1") return Term{};
    Term t;
    std::size_t start = 0;
    while (true) {
        const auto pos = s.find('*', start);
        const std::string piece = s.substr(start, pos == std::string::npos ? pos : pos - start);
        if (piece == "1") {
            // multiplying by one is a no-op
        } else {
            t.factors.push_back(parse_factor(piece));
        }
        if (pos == std::string::npos) break;
        start = pos + 1;
    }
    return t;
}

TermSpec::TermSpec(std::vector<Term> terms) : terms_(std::move(terms)) {
    std::set<std::string> seen;
    for (const auto& t : terms_) {
        if (!seen.insert(canonical(t)).second) {
            throw ValidationError("duplicate design term '" + t.to_string() + "'");
        }
    }
}

TermSpec TermSpec::parse(const std::vector<std::string>& terms) {
    std::vector<Term> parsed;
    parsed.reserve(terms.size());
    for (const auto& t : terms) parsed.push_back(Term::parse(t));
    return TermSpec(std::move(parsed));
}

std::vector<std::string> TermSpec::to_strings() const {
    std::vector<std::string> out;
    out.reserve(terms_.size());
    for (const auto& t : terms_) out.push_back(t.to_string());
    return out;
}

bool TermSpec::uses(const std::string& name) const {
    for (const auto& t : terms_) {
        for (const auto& f : t.factors) {
            if (f.name == name) return true;
        }
    }
    return false;
}

Eigen::MatrixXd build_design(const TermSpec& spec, const Dataset& data, const Overrides& ov) {
    const Index n = data.n();
    Eigen::MatrixXd design(n, spec.size());
    std::map<std::string, Eigen::VectorXd> cache;
    auto column = [&](const std::string& name) -> const Eigen::VectorXd& {
        auto it = cache.find(name);
        if (it == cache.end()) it = cache.emplace(name, resolve(data, name, ov)).first;
        return it->second;
    };
    for (Index j = 0; j < spec.size(); ++j) {
        const Term& term = spec.terms()[static_cast<std::size_t>(j)];
        Eigen::VectorXd col = Eigen::VectorXd::Ones(n);
        for (const auto& f : term.factors) {
            if (f.kind == Factor::Kind::level &&
                !(is_treatment(data, f.name) || is_mediator(data, f.name))) {
                throw UnknownVariable("level factor '" + f.to_string() +
                                      "' needs the treatment or mediator");
            }
            const Eigen::VectorXd& v = column(f.name);
            switch (f.kind) {
                case Factor::Kind::value: col.array() *= v.array(); break;
                case Factor::Kind::power: col.array() *= v.array().pow(f.power); break;
                case Factor::Kind::absolute: col.array() *= v.array().abs(); break;
                case Factor::Kind::level:
                    col.array() *= (v.array() == static_cast<double>(f.level)).cast<double>();
                    break;
            }
        }
        design.col(j) = col;
    }
    return design;
}

double inverse_logit(double eta) {
    if (eta >= 0.0) return 1.0 / (1.0 + std::exp(-eta));
    const double e = std::exp(eta);
    return e / (1.0 + e);
}

Eigen::VectorXd predict(const GlmFit& fit, const Eigen::MatrixXd& design) {
    if (design.cols() != fit.coef.size()) {
        throw DimensionMismatch("design has " + std::to_string(design.cols()) +
                                " columns but the fit has " + std::to_string(fit.coef.size()) +
                                " coefficients");
    }
    Eigen::VectorXd eta = design * fit.coef;
    if (fit.link == Link::identity) return eta;
    return eta.unaryExpr([](double e) { return inverse_logit(e); });
}

namespace {

// log(1 + exp(eta)) without overflow.
double log1p_exp(double eta) {
    return eta > 0.0 ? eta + std::log1p(std::exp(-eta)) : std::log1p(std::exp(eta));
}

struct WlsSolution {
    Eigen::VectorXd coef;
    bool rank_deficient = false;
};

// Solves min || sqrt(w) .* (X b - r) || by Householder QR. The singular
// values of R equal those of the scaled design, which gives the rank test.
WlsSolution weighted_ls(const Eigen::MatrixXd& X, const Eigen::VectorXd& r,
                        const Eigen::VectorXd& w, double rank_tol, double ridge) {
    const Index k = X.cols();
    Eigen::MatrixXd Xs = w.array().sqrt().matrix().asDiagonal() * X;
    Eigen::VectorXd rs = w.array().sqrt().matrix().cwiseProduct(r);

    WlsSolution sol;
    if (k == 0) {
        sol.coef = Eigen::VectorXd(0);
        return sol;
    }
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(Xs);
    Eigen::MatrixXd R = qr.matrixQR().topRows(k).triangularView<Eigen::Upper>();
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(R);
    const auto& sv = svd.singularValues();
    const double largest = sv.size() ? sv(0) : 0.0;
    sol.rank_deficient = largest <= 0.0 || sv(sv.size() - 1) < rank_tol * largest;

    if (sol.rank_deficient && ridge > 0.0) {
        Eigen::MatrixXd aug(Xs.rows() + k, k);
        aug << Xs, std::sqrt(ridge) * Eigen::MatrixXd::Identity(k, k);
        Eigen::VectorXd raug(rs.size() + k);
        raug << rs, Eigen::VectorXd::Zero(k);
        sol.coef = aug.householderQr().solve(raug);
        sol.rank_deficient = false;
        return sol;
    }
    if (sol.rank_deficient) return sol;
    sol.coef = qr.solve(rs);
    return sol;
}

Eigen::VectorXd resolve_weights(const Eigen::VectorXd* weights, Index n) {
    if (weights == nullptr || weights->size() == 0) return Eigen::VectorXd::Ones(n);
    if (weights->size() != n) throw DimensionMismatch("weight vector length mismatch");
    if ((weights->array() < 0.0).any()) throw ValidationError("negative regression weight");
    return *weights;
}

Index effective_rows(const Eigen::VectorXd& w) { return (w.array() > 0.0).count(); }

}  // namespace

GlmFit fit_ols(const Eigen::MatrixXd& design, const Eigen::VectorXd& response,
               const Eigen::VectorXd* weights, const OlsOptions& options) {
    const Index n = design.rows();
    const Index k = design.cols();
    if (response.size() != n) throw DimensionMismatch("response length differs from design rows");
    const Eigen::VectorXd w = resolve_weights(weights, n);
    if (effective_rows(w) < k) {
        throw RankDeficient("fewer positive-weight rows than design columns");
    }
    const auto sol = weighted_ls(design, response, w, options.rank_tolerance,
                                 options.ridge_fallback);
    if (sol.rank_deficient) {
        throw RankDeficient("design matrix is numerically rank deficient (" +
                            std::to_string(k) + " columns)");
    }
    GlmFit fit;
    fit.link = Link::identity;
    fit.coef = sol.coef;
    fit.converged = true;
    fit.iterations = 1;
    fit.fitted = predict(fit, design);
    const Eigen::VectorXd resid = response - fit.fitted;
    const double wsum = w.sum();
    fit.scale = wsum > 0.0 ? w.dot(resid.cwiseAbs2()) / wsum : 0.0;
    return fit;
}

double logistic_log_likelihood(const Eigen::MatrixXd& design, const Eigen::VectorXd& response,
                               const Eigen::VectorXd& coef, const Eigen::VectorXd* weights) {
    const Eigen::VectorXd w = resolve_weights(weights, design.rows());
    const Eigen::VectorXd eta = design * coef;
    double ll = 0.0;
    for (Index i = 0; i < eta.size(); ++i) {
        ll += w(i) * (response(i) * eta(i) - log1p_exp(eta(i)));
    }
    return ll;
}

GlmFit fit_logistic(const Eigen::MatrixXd& design, const Eigen::VectorXd& response,
                    const Eigen::VectorXd* weights, const LogisticOptions& options) {
    const Index n = design.rows();
    const Index k = design.cols();
    if (response.size() != n) throw DimensionMismatch("response length differs from design rows");
    for (Index i = 0; i < n; ++i) {
        if (response(i) != 0.0 && response(i) != 1.0) {
            throw ValidationError("logistic response must be 0 or 1");
        }
    }
    const Eigen::VectorXd w = resolve_weights(weights, n);
    if (effective_rows(w) < k) {
        throw RankDeficient("fewer positive-weight rows than design columns");
    }

    GlmFit fit;
    fit.link = Link::logit;
    fit.coef = Eigen::VectorXd::Zero(k);
    double ll = logistic_log_likelihood(design, response, fit.coef, &w);
    fit.trace.push_back(ll);

    for (int iter = 1; iter <= options.max_iterations; ++iter) {
        fit.iterations = iter;
        const Eigen::VectorXd p = predict(fit, design);
        const Eigen::VectorXd score = design.transpose() * w.cwiseProduct(response - p);
        // Newton step: (X' V X) delta = X' W (y - p), with V = W p (1 - p),
        // solved as weighted least squares of (y - p) / (p (1 - p)) on X.
        Eigen::VectorXd var = p.cwiseProduct(Eigen::VectorXd::Ones(n) - p);
        var = var.cwiseMax(kLogitClamp);
        const Eigen::VectorXd working = (response - p).cwiseQuotient(var);
        const auto sol = weighted_ls(design, working, w.cwiseProduct(var),
                                     options.rank_tolerance, 0.0);
        if (sol.rank_deficient) {
            throw RankDeficient("logistic information matrix is numerically singular");
        }
        // A small score alone is not enough: under separation the score decays
        // while the Newton step stays large and the coefficients diverge.
        const double step_size = sol.coef.lpNorm<Eigen::Infinity>();
        if (score.lpNorm<Eigen::Infinity>() < options.score_tolerance &&
            step_size < 1e-6 * (1.0 + fit.coef.lpNorm<Eigen::Infinity>())) {
            // Take the last Newton step anyway: its likelihood gain is below
            // rounding, but it still moves the coefficients by up to 1e-6.
            fit.coef += sol.coef;
            ll = logistic_log_likelihood(design, response, fit.coef, &w);
            fit.converged = true;
            break;
        }

        double step = 1.0;
        bool accepted = false;
        for (int h = 0; h <= options.max_halvings; ++h, step *= 0.5) {
            const Eigen::VectorXd trial = fit.coef + step * sol.coef;
            const double trial_ll = logistic_log_likelihood(design, response, trial, &w);
            if (std::isfinite(trial_ll) && trial_ll > ll) {
                fit.coef = trial;
                ll = trial_ll;
                accepted = true;
                break;
            }
        }
        if (fit.coef.lpNorm<Eigen::Infinity>() > options.coef_cap) {
            throw Separation("logistic coefficient exceeded " + std::to_string(options.coef_cap) +
                             " in absolute value; the response is (quasi-)separated");
        }
        if (!accepted) {
            // No ascent left at working precision. A tiny Newton step is still
            // taken for the same reason as above.
            if (step_size < 1e-6 * (1.0 + fit.coef.lpNorm<Eigen::Infinity>())) {
                fit.coef += sol.coef;
                ll = logistic_log_likelihood(design, response, fit.coef, &w);
            }
            fit.converged = true;
            break;
        }
        fit.trace.push_back(ll);
    }
    if (!fit.converged) {
        throw NotConverged("IRLS did not converge in " + std::to_string(options.max_iterations) +
                           " iterations");
    }
    fit.fitted = predict(fit, design);
    fit.log_likelihood = ll;
    fit.scale = 1.0;
    return fit;
}

}  // namespace cdemr
