#include "cdemr/io.hpp"

#include "cdemr/errors.hpp"

#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>

namespace cdemr {

namespace {

template <typename T>
T required(const Json& j, const char* key) {
    if (!j.contains(key)) throw SchemaError(std::string("missing key '") + key + "'");
    try {
        return j.at(key).get<T>();
    } catch (const nlohmann::json::exception& e) {
        throw SchemaError(std::string("key '") + key + "': " + e.what());
    }
}

std::vector<std::string> split_line(const std::string& line) {
    std::vector<std::string> out;
    std::string field;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    field += '"';
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                field += c;
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            out.push_back(std::move(field));
            field.clear();
        } else {
            field += c;
        }
    }
    out.push_back(std::move(field));
    return out;
}

std::string trim(std::string s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

double parse_number(const std::string& cell, const std::string& column, std::size_t row) {
    const std::string t = trim(cell);
    std::size_t used = 0;
    double v = 0.0;
    try {
        v = std::stod(t, &used);
    } catch (const std::exception&) {
        used = 0;
    }
    if (t.empty() || used != t.size()) {
        throw SchemaError("column '" + column + "', row " + std::to_string(row + 1) +
                          ": cannot parse '" + cell + "' as a number");
    }
    return v;
}

int parse_label(const std::string& cell, const std::string& column, std::size_t row) {
    const double v = parse_number(cell, column, row);
    if (v != std::floor(v) || std::abs(v) > 1e9) {
        throw InvalidLabel("column '" + column + "', row " + std::to_string(row + 1) + ": label '" +
                           cell + "' is not an integer");
    }
    return static_cast<int>(v);
}

std::string join(const std::vector<std::string>& parts) {
    std::string out;
    for (std::size_t i = 0; i < parts.size(); ++i) {
        if (i) out += ',';
        out += parts[i];
    }
    return out;
}

Json optional_number(const std::optional<double>& v) {
    return v && std::isfinite(*v) ? Json(*v) : Json(nullptr);
}

template <std::size_t N>
std::array<double, N> coef_array(const Json& j, const char* key) {
    const auto v = required<std::vector<double>>(j, key);
    if (v.size() != N) {
        throw SchemaError(std::string(key) + " needs " + std::to_string(N) + " coefficients, got " +
                          std::to_string(v.size()));
    }
    std::array<double, N> out{};
    std::copy(v.begin(), v.end(), out.begin());
    return out;
}

}  // namespace

Roles roles_from_json(const Json& j) {
    if (!j.is_object()) throw SchemaError("roles must be a JSON object");
    Roles r;
    r.x = j.contains("x") ? required<std::vector<std::string>>(j, "x") : std::vector<std::string>{};
    r.a = required<std::string>(j, "a");
    r.z = j.contains("z") ? required<std::vector<std::string>>(j, "z") : std::vector<std::string>{};
    r.m = required<std::string>(j, "m");
    r.y = required<std::string>(j, "y");
    r.a_support = required<std::vector<int>>(j, "a_support");
    r.m_support = required<std::vector<int>>(j, "m_support");
    if (j.contains("weights") && !j.at("weights").is_null()) {
        r.weights = required<std::string>(j, "weights");
    }
    return r;
}

Json to_json(const Roles& r) {
    Json j;
    j["x"] = r.x;
    j["a"] = r.a;
    j["z"] = r.z;
    j["m"] = r.m;
    j["y"] = r.y;
    j["a_support"] = r.a_support;
    j["m_support"] = r.m_support;
    if (r.weights) j["weights"] = *r.weights;
    return j;
}

Roles read_roles(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw SchemaError("cannot open roles file " + path.string());
    try {
        return roles_from_json(Json::parse(in));
    } catch (const nlohmann::json::parse_error& e) {
        throw SchemaError("roles file " + path.string() + ": " + e.what());
    }
}

CsvTable read_csv(std::istream& in) {
    CsvTable t;
    std::string line;
    if (!std::getline(in, line)) throw SchemaError("empty CSV input");
    for (auto& h : split_line(line)) t.header.push_back(trim(h));
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (trim(line).empty()) continue;
        auto fields = split_line(line);
        if (fields.size() != t.header.size()) {
            throw SchemaError("CSV line " + std::to_string(lineno) + " has " +
                              std::to_string(fields.size()) + " fields, header has " +
                              std::to_string(t.header.size()));
        }
        t.rows.push_back(std::move(fields));
    }
    return t;
}

CsvTable read_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw SchemaError("cannot open data file " + path.string());
    return read_csv(in);
}

Dataset dataset_from_table(const CsvTable& table, const Roles& roles) {
    std::map<std::string, std::size_t> column;
    for (std::size_t k = 0; k < table.header.size(); ++k) column[table.header[k]] = k;
    auto col = [&](const std::string& name) {
        auto it = column.find(name);
        if (it == column.end()) throw SchemaError("column '" + name + "' not found in data");
        return it->second;
    };
    const auto n = table.rows.size();
    if (n == 0) throw SchemaError("data has no rows");

    Dataset d;
    d.x_names = roles.x;
    d.z_names = roles.z;
    d.a_name = roles.a;
    d.m_name = roles.m;
    d.y_name = roles.y;
    d.a_support = roles.a_support;
    d.m_support = roles.m_support;
    d.x.resize(static_cast<Index>(n), static_cast<Index>(roles.x.size()));
    d.z.resize(static_cast<Index>(n), static_cast<Index>(roles.z.size()));
    d.y.resize(static_cast<Index>(n));
    d.a.resize(n);
    d.m.resize(n);
    if (roles.weights) d.weights.resize(static_cast<Index>(n));

    std::vector<std::size_t> xc, zc;
    for (const auto& name : roles.x) xc.push_back(col(name));
    for (const auto& name : roles.z) zc.push_back(col(name));
    const auto ac = col(roles.a), mc = col(roles.m), yc = col(roles.y);
    const std::size_t wc = roles.weights ? col(*roles.weights) : 0;

    for (std::size_t i = 0; i < n; ++i) {
        const auto& row = table.rows[i];
        const auto r = static_cast<Index>(i);
        for (std::size_t k = 0; k < xc.size(); ++k)
            d.x(r, static_cast<Index>(k)) = parse_number(row[xc[k]], roles.x[k], i);
        for (std::size_t k = 0; k < zc.size(); ++k)
            d.z(r, static_cast<Index>(k)) = parse_number(row[zc[k]], roles.z[k], i);
        d.a[i] = parse_label(row[ac], roles.a, i);
        d.m[i] = parse_label(row[mc], roles.m, i);
        d.y(r) = parse_number(row[yc], roles.y, i);
        if (roles.weights) d.weights(r) = parse_number(row[wc], *roles.weights, i);
    }
    validate_schema(d);
    return d;
}

Dataset read_dataset(const std::filesystem::path& csv, const Roles& roles) {
    return dataset_from_table(read_csv(csv), roles);
}

std::string format_double(double v) {
    if (std::isnan(v)) return "NA";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

Roles roles_for(const Dataset& d) {
    Roles r;
    r.x = d.x_names;
    r.a = d.a_name;
    r.z = d.z_names;
    r.m = d.m_name;
    r.y = d.y_name;
    r.a_support = d.a_support;
    r.m_support = d.m_support;
    if (d.weighted()) r.weights = "weight";
    return r;
}

void write_dataset_csv(std::ostream& out, const Dataset& d) {
    std::vector<std::string> header = d.x_names;
    header.push_back(d.a_name);
    header.insert(header.end(), d.z_names.begin(), d.z_names.end());
    header.push_back(d.m_name);
    header.push_back(d.y_name);
    if (d.weighted()) header.push_back("weight");
    out << join(header) << '\n';
    for (Index i = 0; i < d.n(); ++i) {
        for (Index k = 0; k < d.x.cols(); ++k) out << format_double(d.x(i, k)) << ',';
        out << d.a[static_cast<std::size_t>(i)] << ',';
        for (Index k = 0; k < d.z.cols(); ++k) out << format_double(d.z(i, k)) << ',';
        out << d.m[static_cast<std::size_t>(i)] << ',' << format_double(d.y(i));
        if (d.weighted()) out << ',' << format_double(d.weights(i));
        out << '\n';
    }
}

Json to_json(const TermSpec& spec) { return spec.to_strings(); }

TermSpec term_spec_from_json(const Json& j) {
    if (!j.is_array()) throw SchemaError("a term list must be a JSON array of strings");
    return TermSpec::parse(j.get<std::vector<std::string>>());
}

Json to_json(const NuisanceSpec& s) {
    Json j;
    j["mu"] = to_json(s.mu_spec);
    j["nu"] = to_json(s.nu_spec);
    j["pi_a"] = to_json(s.pi_a_spec);
    j["pi_m"] = to_json(s.pi_m_spec);
    j["nu_variant"] = std::string(to_string(s.nu_variant));
    j["truncation"] = s.truncation;
    j["br_augment"] = s.br_augment;
    j["stratified"] = s.stratified;
    j["learner"] = s.learner;
    return j;
}

NuisanceSpec nuisance_spec_from_json(const Json& j) {
    if (!j.is_object()) throw SchemaError("nuisance spec must be a JSON object");
    NuisanceSpec s;
    s.mu_spec = term_spec_from_json(required<Json>(j, "mu"));
    s.nu_spec = term_spec_from_json(required<Json>(j, "nu"));
    s.pi_a_spec = term_spec_from_json(required<Json>(j, "pi_a"));
    s.pi_m_spec = term_spec_from_json(required<Json>(j, "pi_m"));
    if (j.contains("nu_variant")) s.nu_variant = nu_variant_from_string(required<std::string>(j, "nu_variant"));
    if (j.contains("truncation")) s.truncation = required<double>(j, "truncation");
    if (j.contains("br_augment")) s.br_augment = required<bool>(j, "br_augment");
    if (j.contains("stratified")) s.stratified = required<bool>(j, "stratified");
    if (j.contains("learner")) s.learner = required<std::string>(j, "learner");
    check_spec(s);
    return s;
}

Json to_json(const Target& t) {
    Json j;
    j["a"] = t.a;
    j["m"] = t.m;
    if (t.a_prime) j["a_prime"] = *t.a_prime;
    if (t.m_prime) j["m_prime"] = *t.m_prime;
    return j;
}

Json to_json(const EstimateResult& r) {
    Json j;
    j["estimator"] = std::string(to_string(r.estimator));
    j["target"] = to_json(r.target);
    j["psi"] = r.psi;
    j["se"] = optional_number(r.se);
    j["ci"] = {optional_number(r.ci_low), optional_number(r.ci_high)};
    j["n"] = r.n;
    return j;
}

Json to_json(const ContrastResult& r) {
    Json j;
    j["contrast"] = std::string(to_string(r.kind));
    j["estimate"] = r.estimate;
    j["se"] = r.se;
    j["ci"] = {r.ci_low, r.ci_high};
    j["level"] = r.level;
    j["method"] = std::string(to_string(r.method));
    j["n"] = r.n;
    Json targets = Json::array();
    for (const auto& t : r.targets) targets.push_back(to_json(t));
    j["targets"] = targets;
    j["warnings"] = r.warnings;
    return j;
}

void write_contrasts_csv(std::ostream& out, std::span<const ContrastResult> results) {
    out << "contrast,estimate,se,ci_low,ci_high,level,method,n\n";
    for (const auto& r : results) {
        out << to_string(r.kind) << ',' << format_double(r.estimate) << ',' << format_double(r.se)
            << ',' << format_double(r.ci_low) << ',' << format_double(r.ci_high) << ','
            << format_double(r.level) << ',' << to_string(r.method) << ',' << r.n << '\n';
    }
}

Json to_json(const SimConfig& c) {
    Json j;
    j["beta_x"] = c.beta_x;
    j["beta_a"] = c.beta_a;
    j["beta_z"] = c.beta_z;
    j["beta_m"] = c.beta_m;
    j["beta_y"] = c.beta_y;
    j["n"] = c.n;
    j["seed"] = c.seed;
    return j;
}

SimConfig sim_config_from_json(const Json& j) {
    if (!j.is_object()) throw SchemaError("simulation config must be a JSON object");
    SimConfig c;
    c.beta_x = coef_array<4>(j, "beta_x");
    c.beta_a = coef_array<3>(j, "beta_a");
    c.beta_z = coef_array<5>(j, "beta_z");
    c.beta_m = coef_array<8>(j, "beta_m");
    c.beta_y = coef_array<9>(j, "beta_y");
    if (j.contains("n")) c.n = required<Index>(j, "n");
    if (j.contains("seed")) c.seed = required<std::uint64_t>(j, "seed");
    return c;
}

void write_replicates_csv(std::ostream& out, std::span<const ReplicateRow> rows) {
    out << "scenario,estimator,replicate,estimate,bias,se,covered,error\n";
    for (const auto& r : rows) {
        std::string error = r.error;
        for (char& c : error) {
            if (c == '"') c = '\'';
            if (c == '\n') c = ' ';
        }
        out << r.scenario << ',' << to_string(r.estimator) << ',' << r.replicate << ','
            << format_double(r.estimate) << ',' << format_double(r.bias) << ','
            << (r.se ? format_double(*r.se) : "NA") << ','
            << (r.covered ? (*r.covered ? "1" : "0") : "NA") << ',';
        if (!error.empty()) out << '"' << error << '"';
        out << '\n';
    }
}

Json summary_to_json(const GridResult& result) {
    Json j;
    j["truth"] = {{"psi", result.truth.psi}, {"mc_se", result.truth.mc_se}};
    Json rows = Json::array();
    for (const auto& s : result.summary) {
        Json r;
        r["scenario"] = s.scenario;
        r["estimator"] = std::string(to_string(s.estimator));
        r["completed"] = s.completed;
        r["failed"] = s.failed;
        r["mean_bias"] = s.mean_bias;
        r["sd"] = s.sd;
        r["mc_se"] = s.mc_se;
        r["threshold"] = s.threshold;
        r["rmse"] = s.rmse;
        r["mean_se"] = optional_number(s.mean_se);
        r["coverage"] = optional_number(s.coverage);
        r["covered_by_theory"] = s.covered_by_theory;
        r["unbiased"] = std::abs(s.mean_bias) < s.threshold;
        rows.push_back(std::move(r));
    }
    j["rows"] = rows;
    return j;
}

}  // namespace cdemr
