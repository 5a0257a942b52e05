#pragma once

#include "cdemr/data.hpp"
#include "cdemr/inference.hpp"
#include "cdemr/nuisance.hpp"
#include "cdemr/simulation.hpp"

#include <json.hpp>

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace cdemr {

using Json = nlohmann::ordered_json;

// Which CSV columns play which role.
//   {"x": [cols], "a": col, "z": [cols], "m": col, "y": col,
//    "a_support": [...], "m_support": [...], "weights": col (optional)}
struct Roles {
    std::vector<std::string> x;
    std::string a;
    std::vector<std::string> z;
    std::string m;
    std::string y;
    std::vector<int> a_support;
    std::vector<int> m_support;
    std::optional<std::string> weights;
};

Roles roles_from_json(const Json& j);
Json to_json(const Roles& roles);
Roles read_roles(const std::filesystem::path& path);

struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
};

// Comma separated, first line is the header. Double-quoted fields may hold
// commas and doubled quotes. Throws SchemaError on ragged rows.
CsvTable read_csv(std::istream& in);
CsvTable read_csv(const std::filesystem::path& path);

// Throws SchemaError for missing columns or non-numeric cells and
// InvalidLabel for non-integer treatment or mediator values.
Dataset dataset_from_table(const CsvTable& table, const Roles& roles);
Dataset read_dataset(const std::filesystem::path& csv, const Roles& roles);

// Writes the columns x..., a, z..., m, y (and weights when present).
void write_dataset_csv(std::ostream& out, const Dataset& data);
Roles roles_for(const Dataset& data);

// Shortest text that reads back to the same double; "NA" for NaN.
std::string format_double(double v);

Json to_json(const TermSpec& spec);
TermSpec term_spec_from_json(const Json& j);
Json to_json(const NuisanceSpec& spec);
NuisanceSpec nuisance_spec_from_json(const Json& j);

Json to_json(const Target& target);
Json to_json(const EstimateResult& result);
Json to_json(const ContrastResult& result);
void write_contrasts_csv(std::ostream& out, std::span<const ContrastResult> results);

Json to_json(const SimConfig& config);
SimConfig sim_config_from_json(const Json& j);

// Columns: scenario, estimator, replicate, estimate, bias, se, covered, error.
void write_replicates_csv(std::ostream& out, std::span<const ReplicateRow> rows);
Json summary_to_json(const GridResult& result);

}  // namespace cdemr
