#pragma once

#include "cdemr/data.hpp"

#include <Eigen/Dense>

#include <optional>
#include <string>
#include <vector>

namespace cdemr {

// One multiplicative factor of a design term.
//   "x"      variable value
//   "x^2"    power (2 or 3)
//   "abs(x)" absolute value, also written "|x|"
//   "a=1"    indicator of a treatment or mediator level
struct Factor {
    enum class Kind { value, power, absolute, level };
    Kind kind = Kind::value;
    std::string name;
    int power = 1;  // for Kind::power
    int level = 0;  // for Kind::level

    std::string to_string() const;
    bool operator==(const Factor&) const = default;
};

// A product of factors; no factors means the intercept "1".
struct Term {
    std::vector<Factor> factors;

    bool is_intercept() const { return factors.empty(); }
    std::string to_string() const;

    static Term parse(const std::string& text);
};

// Ordered list of design terms, e.g. {"1","x","x^2","a","z","x*z","m","a*m"}.
class TermSpec {
public:
    TermSpec() = default;
    explicit TermSpec(std::vector<Term> terms);
    static TermSpec parse(const std::vector<std::string>& terms);

    const std::vector<Term>& terms() const { return terms_; }
    Index size() const { return static_cast<Index>(terms_.size()); }
    std::vector<std::string> to_strings() const;
    bool uses(const std::string& role_or_name) const;

    bool operator==(const TermSpec& other) const { return to_strings() == other.to_strings(); }

private:
    std::vector<Term> terms_;
};

// Values substituted for A, M, or Z when building a design. This realizes
// counterfactual prediction at A=a, M=m.
struct Overrides {
    std::optional<int> a = std::nullopt;
    std::optional<int> m = std::nullopt;
    const Eigen::MatrixXd* z = nullptr;  // n x p_z replacement for Z
};

// Row i holds the evaluated terms at unit i. Throws UnknownVariable.
Eigen::MatrixXd build_design(const TermSpec& spec, const Dataset& data,
                             const Overrides& overrides = {});

enum class Link { identity, logit };

struct GlmFit {
    Link link = Link::identity;
    Eigen::VectorXd coef;
    bool converged = false;
    int iterations = 0;
    // Fitted values on the training design, produced by predict().
    Eigen::VectorXd fitted;
    // Identity link: weighted residual mean square. Logit: log-likelihood.
    double scale = 0.0;
    double log_likelihood = 0.0;
    // Log-likelihood after each accepted IRLS step (logit only).
    std::vector<double> trace;
};

struct OlsOptions {
    // Singular values below rank_tolerance * largest are treated as zero.
    double rank_tolerance = 1e-10;
    // When positive, a rank-deficient design falls back to a ridge solve
    // with this penalty instead of throwing RankDeficient.
    double ridge_fallback = 0.0;
};

struct LogisticOptions {
    int max_iterations = 100;
    double score_tolerance = 1e-8;
    double coef_cap = 30.0;
    int max_halvings = 40;
    double rank_tolerance = 1e-10;
};

// Weighted least squares via Householder QR of the row-scaled design.
// Throws RankDeficient or DimensionMismatch.
GlmFit fit_ols(const Eigen::MatrixXd& design, const Eigen::VectorXd& response,
               const Eigen::VectorXd* weights = nullptr, const OlsOptions& options = {});

// Maximum-likelihood logistic regression by IRLS with step halving.
// Throws Separation, NotConverged, RankDeficient, or DimensionMismatch.
GlmFit fit_logistic(const Eigen::MatrixXd& design, const Eigen::VectorXd& response,
                    const Eigen::VectorXd* weights = nullptr,
                    const LogisticOptions& options = {});

Eigen::VectorXd predict(const GlmFit& fit, const Eigen::MatrixXd& design);

double inverse_logit(double eta);
double logistic_log_likelihood(const Eigen::MatrixXd& design, const Eigen::VectorXd& response,
                               const Eigen::VectorXd& coef,
                               const Eigen::VectorXd* weights = nullptr);

}  // namespace cdemr
