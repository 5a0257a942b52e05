#include "cdemr/data.hpp"

#include "cdemr/errors.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <sstream>

namespace cdemr {

namespace {

bool in_support(const std::vector<int>& support, int label) {
    return std::find(support.begin(), support.end(), label) != support.end();
}

void check_finite(const Eigen::MatrixXd& mat, const char* what) {
    if (!mat.allFinite()) {
        throw SchemaError(std::string("non-finite value in ") + what);
    }
}

void check_label(const std::vector<int>& support, int label, const char* role) {
    if (!in_support(support, label)) {
        std::ostringstream os;
        os << role << " label " << label << " is not in the declared support {";
        for (std::size_t i = 0; i < support.size(); ++i) {
            os << (i ? "," : "") << support[i];
        }
        os << "}";
        throw InvalidLabel(os.str());
    }
}

}  // namespace

Dataset Dataset::subset(std::span<const Index> rows) const {
    Dataset out;
    const auto k = static_cast<Index>(rows.size());
    out.x.resize(k, x.cols());
    out.z.resize(k, z.cols());
    out.y.resize(k);
    out.a.resize(rows.size());
    out.m.resize(rows.size());
    if (weighted()) out.weights.resize(k);
    for (Index r = 0; r < k; ++r) {
        const Index i = rows[static_cast<std::size_t>(r)];
        out.x.row(r) = x.row(i);
        out.z.row(r) = z.row(i);
        out.y(r) = y(i);
        out.a[static_cast<std::size_t>(r)] = a[static_cast<std::size_t>(i)];
        out.m[static_cast<std::size_t>(r)] = m[static_cast<std::size_t>(i)];
        if (weighted()) out.weights(r) = weights(i);
    }
    out.x_names = x_names;
    out.z_names = z_names;
    out.a_support = a_support;
    out.m_support = m_support;
    out.a_name = a_name;
    out.m_name = m_name;
    out.y_name = y_name;
    return out;
}

Dataset Dataset::with_outcome(Eigen::VectorXd new_y) const {
    Dataset out = *this;
    out.y = std::move(new_y);
    return out;
}

double sample_mean(const Dataset& data, const Eigen::VectorXd& v) {
    if (v.size() != data.n()) {
        throw LengthMismatch("sample_mean: vector length does not match dataset");
    }
    if (data.weighted()) {
        return data.weights.dot(v) / data.weights.sum();
    }
    return v.mean();
}

Eigen::VectorXd indicator(std::span<const int> labels, int level) {
    Eigen::VectorXd out(static_cast<Index>(labels.size()));
    for (std::size_t i = 0; i < labels.size(); ++i) {
        out(static_cast<Index>(i)) = labels[i] == level ? 1.0 : 0.0;
    }
    return out;
}

std::string_view to_string(NuVariant v) {
    switch (v) {
        case NuVariant::imputation: return "imputation";
        case NuVariant::weighting: return "weighting";
        case NuVariant::dr: return "dr";
    }
    return "?";
}

NuVariant nu_variant_from_string(std::string_view s) {
    if (s == "imputation") return NuVariant::imputation;
    if (s == "weighting") return NuVariant::weighting;
    if (s == "dr") return NuVariant::dr;
    throw ValidationError("unknown nu variant '" + std::string(s) +
                          "' (expected imputation, weighting, or dr)");
}

namespace {

constexpr std::array<std::pair<EstimatorId, std::string_view>, 12> kEstimatorNames{{
    {EstimatorId::g_comp, "g_comp"},
    {EstimatorId::pure_imputation, "pure_imputation"},
    {EstimatorId::imp_then_weight, "imp_then_weight"},
    {EstimatorId::pure_weighting, "pure_weighting"},
    {EstimatorId::weight_then_imp, "weight_then_imp"},
    {EstimatorId::dr1, "dr1"},
    {EstimatorId::dr2, "dr2"},
    {EstimatorId::dr3, "dr3"},
    {EstimatorId::dr4, "dr4"},
    {EstimatorId::tr1, "tr1"},
    {EstimatorId::tr2, "tr2"},
    {EstimatorId::qr, "qr"},
}};

constexpr std::array<EstimatorId, 12> kAllEstimators{
    EstimatorId::g_comp,  EstimatorId::pure_imputation, EstimatorId::imp_then_weight,
    EstimatorId::pure_weighting, EstimatorId::weight_then_imp, EstimatorId::dr1,
    EstimatorId::dr2, EstimatorId::dr3, EstimatorId::dr4,
    EstimatorId::tr1, EstimatorId::tr2, EstimatorId::qr,
};

}  // namespace

std::string_view to_string(EstimatorId id) {
    for (const auto& [key, name] : kEstimatorNames) {
        if (key == id) return name;
    }
    return "?";
}

EstimatorId estimator_from_string(std::string_view s) {
    for (const auto& [key, name] : kEstimatorNames) {
        if (name == s) return key;
    }
    throw ValidationError("unknown estimator '" + std::string(s) + "'");
}

std::span<const EstimatorId> all_estimators() { return kAllEstimators; }

void validate_schema(const Dataset& data) {
    const Index n = data.n();
    if (n < 1) throw SchemaError("dataset has no units");
    const auto un = static_cast<std::size_t>(n);
    if (data.x.rows() != n || data.z.rows() != n || data.a.size() != un ||
        data.m.size() != un) {
        throw SchemaError("column lengths differ from the outcome length");
    }
    if (data.weighted() && data.weights.size() != n) {
        throw SchemaError("weight vector length differs from the outcome length");
    }
    if (static_cast<std::size_t>(data.x.cols()) != data.x_names.size() ||
        static_cast<std::size_t>(data.z.cols()) != data.z_names.size()) {
        throw SchemaError("covariate names do not match covariate columns");
    }
    if (data.a_support.empty() || data.m_support.empty()) {
        throw SchemaError("treatment and mediator supports must be declared");
    }
    check_finite(data.x, "x");
    check_finite(data.z, "z");
    check_finite(data.y, "y");
    if (data.weighted()) {
        check_finite(data.weights, "weights");
        if ((data.weights.array() < 0.0).any() || data.weights.sum() <= 0.0) {
            throw SchemaError("weights must be nonnegative with a positive total");
        }
    }
    for (std::size_t i = 0; i < un; ++i) {
        if (!in_support(data.a_support, data.a[i])) {
            throw SchemaError("unit " + std::to_string(i) + " has treatment label " +
                              std::to_string(data.a[i]) + " outside the declared support");
        }
        if (!in_support(data.m_support, data.m[i])) {
            throw SchemaError("unit " + std::to_string(i) + " has mediator label " +
                              std::to_string(data.m[i]) + " outside the declared support");
        }
    }
}

ValidationReport validate(const Dataset& data, const Target& target) {
    validate_schema(data);
    check_label(data.a_support, target.a, "treatment");
    check_label(data.m_support, target.m, "mediator");
    if (target.a_prime) check_label(data.a_support, *target.a_prime, "treatment");
    if (target.m_prime) check_label(data.m_support, *target.m_prime, "mediator");

    ValidationReport report;
    report.n = data.n();
    double w_total = 0.0, w_a = 0.0, w_am = 0.0;
    for (Index i = 0; i < data.n(); ++i) {
        const double w = data.weighted() ? data.weights(i) : 1.0;
        const auto ui = static_cast<std::size_t>(i);
        w_total += w;
        if (data.a[ui] == target.a) {
            ++report.count_a;
            w_a += w;
            if (data.m[ui] == target.m) {
                ++report.count_am;
                w_am += w;
            }
        }
    }
    if (report.count_a == 0) {
        throw EmptyStratum("no unit has treatment A=" + std::to_string(target.a));
    }
    if (report.count_am == 0) {
        throw EmptyStratum("no unit has A=" + std::to_string(target.a) +
                           " and M=" + std::to_string(target.m));
    }
    report.fraction_a = w_a / w_total;
    report.fraction_am = w_am / w_total;
    if (report.fraction_a < kSmallCellFraction) {
        report.warnings.push_back("fraction of units with A=" + std::to_string(target.a) +
                                  " is below 0.01; positivity is doubtful");
    }
    if (report.fraction_am < kSmallCellFraction) {
        report.warnings.push_back("fraction of units with A=" + std::to_string(target.a) +
                                  ", M=" + std::to_string(target.m) +
                                  " is below 0.01; positivity is doubtful");
    }
    return report;
}

}  // namespace cdemr
