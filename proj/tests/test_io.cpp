#include "helpers.hpp"

#include <cdemr/errors.hpp>
#include <cdemr/io.hpp>

#include <doctest.h>

#include <cmath>
#include <sstream>

using namespace cdemr;
using testing::make_data;
using testing::target;

namespace {

const char* kRoles = R"({"x": ["age", "score"], "a": "treated", "z": ["dose"], "m": "med",
                         "y": "out", "a_support": [0, 1], "m_support": [0, 1]})";

CsvTable parse(const std::string& text) {
    std::istringstream in(text);
    return read_csv(in);
}

}  // namespace

TEST_CASE("CSV tables with quoting") {
    const auto t = parse("a,b,c\n1,\"x,y\",3\n\n4,\"say \"\"hi\"\"\",6\r\n");
    REQUIRE(t.rows.size() == 2);
    CHECK(t.header == std::vector<std::string>{"a", "b", "c"});
    CHECK(t.rows[0][1] == "x,y");
    CHECK(t.rows[1][1] == "say \"hi\"");
    CHECK_THROWS_AS(parse("a,b\n1,2,3\n"), SchemaError);
    CHECK_THROWS_AS(parse(""), SchemaError);
}

TEST_CASE("dataset from a table") {
    const Roles roles = roles_from_json(Json::parse(kRoles));
    const auto t = parse("age,score,treated,dose,med,out,extra\n"
                         "30,1.5,1,0.2,0,2.5,x\n"
                         "40,-2,0,0.4,1,3.5,y\n");
    const Dataset d = dataset_from_table(t, roles);
    CHECK(d.n() == 2);
    CHECK(d.x.cols() == 2);
    CHECK(d.x(1, 1) == -2.0);
    CHECK(d.z(0, 0) == 0.2);
    CHECK(d.a == std::vector<int>{1, 0});
    CHECK(d.m == std::vector<int>{0, 1});
    CHECK(d.a_name == "treated");
    CHECK_FALSE(d.weighted());

    SUBCASE("missing column") {
        const auto bad = parse("age,treated,dose,med,out\n1,1,0,0,1\n");
        CHECK_THROWS_AS(dataset_from_table(bad, roles), SchemaError);
    }
    SUBCASE("non-numeric cell") {
        const auto bad = parse("age,score,treated,dose,med,out\n1,abc,1,0,0,1\n");
        CHECK_THROWS_AS(dataset_from_table(bad, roles), SchemaError);
    }
    SUBCASE("non-integer label") {
        const auto bad = parse("age,score,treated,dose,med,out\n1,2,0.5,0,0,1\n");
        CHECK_THROWS_AS(dataset_from_table(bad, roles), InvalidLabel);
    }
    SUBCASE("label outside the support") {
        const auto bad = parse("age,score,treated,dose,med,out\n1,2,3,0,0,1\n");
        CHECK_THROWS_AS(dataset_from_table(bad, roles), SchemaError);
    }
    SUBCASE("weights column") {
        Roles w = roles;
        w.weights = "extra";
        const auto ok = parse("age,score,treated,dose,med,out,extra\n1,2,1,0,0,1,0.5\n");
        CHECK(dataset_from_table(ok, w).weights(0) == 0.5);
    }
}

TEST_CASE("roles JSON") {
    const Roles r = roles_from_json(Json::parse(kRoles));
    const Roles back = roles_from_json(to_json(r));
    CHECK(back.x == r.x);
    CHECK(back.z == r.z);
    CHECK(back.a_support == r.a_support);
    CHECK_FALSE(back.weights);
    CHECK_THROWS_AS(roles_from_json(Json::parse(R"({"a": "t"})")), SchemaError);
    CHECK_THROWS_AS(roles_from_json(Json::parse(R"([1, 2])")), SchemaError);
    CHECK_THROWS_AS(roles_from_json(Json::parse(
                        R"({"a": 3, "m": "m", "y": "y", "a_support": [0], "m_support": [0]})")),
                    SchemaError);
}

TEST_CASE("dataset CSV round trip is exact") {
    auto d = make_data({0.1, 1.0 / 3.0, -2e-12}, {0, 1, 1}, {5.5, 1e10, -0.0}, {1, 0, 1},
                       {std::acos(-1.0), 2.0, -7.25});
    d.weights = Eigen::Vector3d(0.25, 0.5, 0.25);
    std::ostringstream out;
    write_dataset_csv(out, d);
    std::istringstream in(out.str());
    const Dataset back = dataset_from_table(read_csv(in), roles_for(d));
    CHECK(back.x == d.x);
    CHECK(back.z == d.z);
    CHECK(back.y == d.y);
    CHECK(back.a == d.a);
    CHECK(back.m == d.m);
    CHECK(back.weights == d.weights);
}

TEST_CASE("number formatting") {
    CHECK(format_double(std::nan("")) == "NA");
    CHECK(format_double(0.5) == "0.5");
    CHECK(std::stod(format_double(0.1)) == 0.1);
}

TEST_CASE("nuisance spec JSON") {
    NuisanceSpec s;
    s.mu_spec = TermSpec::parse({"1", "x", "a*m"});
    s.nu_spec = TermSpec::parse({"1", "x^2"});
    s.pi_a_spec = TermSpec::parse({"1", "abs(x)"});
    s.pi_m_spec = TermSpec::parse({"1", "x", "a"});
    s.nu_variant = NuVariant::weighting;
    s.truncation = 0.01;
    s.br_augment = true;
    const NuisanceSpec back = nuisance_spec_from_json(to_json(s));
    CHECK(back.mu_spec == s.mu_spec);
    CHECK(back.nu_spec == s.nu_spec);
    CHECK(back.pi_a_spec == s.pi_a_spec);
    CHECK(back.pi_m_spec == s.pi_m_spec);
    CHECK(back.nu_variant == s.nu_variant);
    CHECK(back.truncation == s.truncation);
    CHECK(back.br_augment);
    CHECK_FALSE(back.stratified);

    Json bad = to_json(s);
    bad["truncation"] = 0.7;
    CHECK_THROWS_AS(nuisance_spec_from_json(bad), ValidationError);
    bad = to_json(s);
    bad.erase("mu");
    CHECK_THROWS_AS(nuisance_spec_from_json(bad), SchemaError);
    bad = to_json(s);
    bad["nu_variant"] = "both";
    CHECK_THROWS_AS(nuisance_spec_from_json(bad), ValidationError);
}

TEST_CASE("simulation config JSON") {
    const SimConfig c = default_sim_config();
    CHECK(sim_config_from_json(to_json(c)) == c);
    Json bad = to_json(c);
    bad["beta_m"] = {1, 2, 3};
    CHECK_THROWS_AS(sim_config_from_json(bad), SchemaError);
}

TEST_CASE("result JSON") {
    EstimateResult r;
    r.psi = 1.25;
    r.estimator = EstimatorId::dr3;
    r.target = target(0, 1);
    r.n = 10;
    Json j = to_json(r);
    CHECK(j["estimator"] == "dr3");
    CHECK(j["se"].is_null());
    CHECK(j["ci"][0].is_null());
    r.se = 0.5;
    r.ci_low = 0.25;
    r.ci_high = 2.25;
    j = to_json(r);
    CHECK(j["se"] == 0.5);
    CHECK(j["ci"][1] == 2.25);
    CHECK(j["target"]["m"] == 1);

    ContrastResult c;
    c.estimate = 0.5;
    c.targets = {target(1, 1), target(0, 1)};
    const Json cj = to_json(c);
    CHECK(cj["contrast"] == "CDE");
    CHECK(cj["targets"].size() == 2);
    std::ostringstream csv;
    const std::vector<ContrastResult> rows{c};
    write_contrasts_csv(csv, rows);
    CHECK(csv.str().rfind("contrast,estimate,se,ci_low,ci_high,level,method,n\nCDE,0.5,", 0) == 0);
}

TEST_CASE("replicate CSV") {
    ReplicateRow ok;
    ok.scenario = "P1";
    ok.estimator = EstimatorId::qr;
    ok.estimate = 3.0;
    ok.bias = 0.5;
    ok.se = 0.25;
    ok.covered = true;
    ReplicateRow bad;
    bad.scenario = "P2";
    bad.estimator = EstimatorId::dr1;
    bad.replicate = 4;
    bad.estimate = std::nan("");
    bad.bias = std::nan("");
    bad.error = "has \"quotes\", commas";
    const std::vector<ReplicateRow> rows{ok, bad};
    std::ostringstream out;
    write_replicates_csv(out, rows);
    std::istringstream in(out.str());
    const auto t = read_csv(in);
    REQUIRE(t.rows.size() == 2);
    CHECK(t.header.size() == 8);
    CHECK(t.rows[0] == std::vector<std::string>{"P1", "qr", "0", "3", "0.5", "0.25", "1", ""});
    CHECK(t.rows[1][3] == "NA");
    CHECK(t.rows[1][5] == "NA");
    CHECK(t.rows[1][6] == "NA");
    CHECK(t.rows[1][7] == "has 'quotes', commas");
}

TEST_CASE("summary JSON") {
    GridResult g;
    g.truth = {2.0, 0.01};
    SummaryRow s;
    s.scenario = "P1";
    s.estimator = EstimatorId::tr1;
    s.mean_bias = 0.01;
    s.threshold = 0.02;
    g.summary.push_back(s);
    const Json j = summary_to_json(g);
    CHECK(j["truth"]["psi"] == 2.0);
    CHECK(j["rows"][0]["unbiased"] == true);
    CHECK(j["rows"][0]["coverage"].is_null());
}
