#include "helpers.hpp"
#include "oracles.hpp"

#include <cdemr/errors.hpp>
#include <cdemr/glm.hpp>

#include <doctest.h>

#include <cmath>
#include <random>

using namespace cdemr;
using testing::make_data;

TEST_CASE("design for (1, x)") {
    auto d = make_data({2, -1}, {0, 0}, {0, 0}, {0, 0}, {0, 0});
    const auto X = build_design(TermSpec::parse({"1", "x"}), d);
    Eigen::MatrixXd expected(2, 2);
    expected << 1, 2, 1, -1;
    CHECK(X == expected);
}

TEST_CASE("design for (1, |x|)") {
    auto d = make_data({-3}, {0}, {0}, {0}, {0});
    const auto X = build_design(TermSpec::parse({"1", "abs(x)"}), d);
    CHECK(X(0, 0) == 1.0);
    CHECK(X(0, 1) == 3.0);
    CHECK(build_design(TermSpec::parse({"|x|"}), d)(0, 0) == 3.0);
}

TEST_CASE("design with a treatment override") {
    auto d = make_data({2}, {0}, {0}, {0}, {0});
    const auto X = build_design(TermSpec::parse({"1", "x", "a", "x*a"}), d, {.a = 1});
    Eigen::RowVector4d expected(1, 2, 1, 2);
    CHECK(X.row(0) == expected);
    const auto X0 = build_design(TermSpec::parse({"1", "x", "a", "x*a"}), d);
    CHECK(X0(0, 3) == 0.0);
}

TEST_CASE("design with powers, products, levels, and a Z override") {
    auto d = make_data({2, 3}, {1, 0}, {5, 7}, {1, 0}, {0, 0});
    Eigen::MatrixXd z_new(2, 1);
    z_new << -1, -2;
    const auto X = build_design(TermSpec::parse({"x^2", "x^3", "x*z", "a*m", "m=0"}), d,
                                {.m = 0, .z = &z_new});
    CHECK(X(0, 0) == 4.0);
    CHECK(X(1, 1) == 27.0);
    CHECK(X(0, 2) == -2.0);
    CHECK(X(1, 2) == -6.0);
    CHECK(X(0, 3) == 0.0);
    CHECK(X(0, 4) == 1.0);
}

TEST_CASE("treatment and mediator resolve by column name") {
    auto d = make_data({1}, {1}, {0}, {1}, {0});
    d.a_name = "treated";
    d.m_name = "med";
    const auto X = build_design(TermSpec::parse({"treated*med", "a"}), d);
    CHECK(X(0, 0) == 1.0);
    CHECK(X(0, 1) == 1.0);
}

TEST_CASE("term spec parsing") {
    CHECK_THROWS_AS(TermSpec::parse({"x", "x"}), ValidationError);
    CHECK_THROWS_AS(TermSpec::parse({"x*z", "z*x"}), ValidationError);
    CHECK_THROWS_AS(TermSpec::parse({""}), ValidationError);
    auto d = make_data({1}, {1}, {0}, {1}, {0});
    CHECK_THROWS_AS(build_design(TermSpec::parse({"1", "w"}), d), UnknownVariable);
    const auto spec = TermSpec::parse({"1", "x", "x^2", "a", "z", "x*z", "m", "a*m"});
    CHECK(spec.size() == 8);
    CHECK(TermSpec::parse(spec.to_strings()) == spec);
    CHECK(spec.uses("z"));
    CHECK_FALSE(TermSpec::parse({"1", "x"}).uses("a"));
}

TEST_CASE("OLS intercept-only gives the mean") {
    Eigen::MatrixXd X = Eigen::MatrixXd::Ones(3, 1);
    Eigen::VectorXd y(3);
    y << 1, 2, 3;
    const auto fit = fit_ols(X, y);
    CHECK(fit.coef(0) == doctest::Approx(2.0).epsilon(1e-14));
    CHECK(fit.link == Link::identity);
}

TEST_CASE("OLS reproduces an exact quadratic") {
    Eigen::MatrixXd X(5, 3);
    Eigen::VectorXd y(5);
    for (int i = 0; i < 5; ++i) {
        const double x = i - 2.0;
        X.row(i) << 1, x, x * x;
        y(i) = 1 + 2 * x + 3 * x * x;
    }
    const auto fit = fit_ols(X, y);
    CHECK(std::abs(fit.coef(0) - 1) < 1e-10);
    CHECK(std::abs(fit.coef(1) - 2) < 1e-10);
    CHECK(std::abs(fit.coef(2) - 3) < 1e-10);
}

TEST_CASE("OLS matches the normal-equation oracle") {
    std::mt19937_64 rng(42);
    std::normal_distribution<double> nd;
    std::uniform_real_distribution<double> ud(0.2, 3.0);
    for (int rep = 0; rep < 5; ++rep) {
        Eigen::MatrixXd X(50, 3);
        Eigen::VectorXd y(50), w(50);
        for (int i = 0; i < 50; ++i) {
            X.row(i) << 1, nd(rng), nd(rng);
            y(i) = 0.5 - X(i, 1) + 2 * X(i, 2) + nd(rng);
            w(i) = ud(rng);
        }
        const auto fit = fit_ols(X, y);
        const auto ref = oracle::normal_equations(X, y);
        for (int j = 0; j < 3; ++j) CHECK(std::abs(fit.coef(j) - ref[j]) < 1e-8);
        const auto wfit = fit_ols(X, y, &w);
        const auto wref = oracle::normal_equations(X, y, &w);
        for (int j = 0; j < 3; ++j) CHECK(std::abs(wfit.coef(j) - wref[j]) < 1e-8);

        const Eigen::VectorXd resid = y - fit.fitted;
        CHECK((X.transpose() * resid).cwiseAbs().maxCoeff() < 1e-8 * y.cwiseAbs().maxCoeff() * 50);
        CHECK(predict(fit, X) == fit.fitted);
    }
}

TEST_CASE("zero weights drop rows") {
    Eigen::MatrixXd X(4, 2);
    X << 1, 0, 1, 1, 1, 2, 1, 3;
    Eigen::VectorXd y(4), w(4);
    y << 0, 1, 2, 100;
    w << 1, 1, 1, 0;
    const auto fit = fit_ols(X, y, &w);
    CHECK(std::abs(fit.coef(0)) < 1e-10);
    CHECK(std::abs(fit.coef(1) - 1) < 1e-10);
}

TEST_CASE("OLS rank deficiency") {
    Eigen::MatrixXd X(4, 3);
    X << 1, 1, 2, 1, 2, 4, 1, 3, 6, 1, 4, 8;
    Eigen::VectorXd y(4);
    y << 1, 2, 3, 5;
    CHECK_THROWS_AS(fit_ols(X, y), RankDeficient);
    OlsOptions opt;
    opt.ridge_fallback = 1e-6;
    const auto fit = fit_ols(X, y, nullptr, opt);
    CHECK(fit.coef.allFinite());
    Eigen::MatrixXd wide = Eigen::MatrixXd::Ones(2, 3);
    CHECK_THROWS_AS(fit_ols(wide, Eigen::VectorXd::Ones(2)), RankDeficient);
    CHECK_THROWS_AS(fit_ols(X, Eigen::VectorXd::Ones(3)), DimensionMismatch);
}

TEST_CASE("logistic intercept-only fits") {
    SUBCASE("half ones") {
        Eigen::MatrixXd X = Eigen::MatrixXd::Ones(4, 1);
        Eigen::VectorXd y(4);
        y << 0, 1, 0, 1;
        CHECK(std::abs(fit_logistic(X, y).coef(0)) < 1e-12);
    }
    SUBCASE("three ones, one zero") {
        Eigen::MatrixXd X = Eigen::MatrixXd::Ones(4, 1);
        Eigen::VectorXd y(4);
        y << 1, 1, 1, 0;
        const auto fit = fit_logistic(X, y);
        CHECK(fit.converged);
        CHECK(std::abs(fit.coef(0) - std::log(3.0)) < 1e-8);
    }
}

TEST_CASE("logistic matches direct likelihood maximization") {
    std::mt19937_64 rng(7);
    std::normal_distribution<double> nd;
    std::uniform_real_distribution<double> ud;
    Eigen::MatrixXd X(200, 3);
    Eigen::VectorXd y(200);
    for (int i = 0; i < 200; ++i) {
        X.row(i) << 1, nd(rng), nd(rng);
        const double p = 1 / (1 + std::exp(-(0.3 + 0.8 * X(i, 1) - 0.5 * X(i, 2))));
        y(i) = ud(rng) < p ? 1 : 0;
    }
    const auto fit = fit_logistic(X, y);
    const auto ref = oracle::logistic_mle(X, y);
    for (int j = 0; j < 3; ++j) CHECK(std::abs(fit.coef(j) - ref[j]) < 1e-4);

    const Eigen::VectorXd p = predict(fit, X);
    CHECK((X.transpose() * (y - p)).cwiseAbs().maxCoeff() < 1e-6);
    CHECK(p == fit.fitted);
    for (std::size_t t = 1; t < fit.trace.size(); ++t) CHECK(fit.trace[t] >= fit.trace[t - 1]);
    CHECK(fit.log_likelihood == doctest::Approx(logistic_log_likelihood(X, y, fit.coef)));
}

TEST_CASE("weighted logistic equals replicated rows") {
    Eigen::MatrixXd X(4, 2);
    X << 1, 0, 1, 1, 1, 2, 1, 3;
    Eigen::VectorXd y(4), w(4);
    y << 0, 1, 0, 1;
    w << 2, 1, 1, 3;
    Eigen::MatrixXd Xr(7, 2);
    Eigen::VectorXd yr(7);
    Xr << 1, 0, 1, 0, 1, 1, 1, 2, 1, 3, 1, 3, 1, 3;
    yr << 0, 0, 1, 0, 1, 1, 1;
    const auto a = fit_logistic(X, y, &w);
    const auto b = fit_logistic(Xr, yr);
    CHECK((a.coef - b.coef).cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("logistic separation is reported") {
    Eigen::MatrixXd X(6, 2);
    X << 1, -3, 1, -2, 1, -1, 1, 1, 1, 2, 1, 3;
    Eigen::VectorXd y(6);
    y << 0, 0, 0, 1, 1, 1;
    CHECK_THROWS_AS(fit_logistic(X, y), Separation);
    Eigen::VectorXd bad(6);
    bad << 0, 2, 0, 1, 1, 1;
    CHECK_THROWS_AS(fit_logistic(X, bad), ValidationError);
}

TEST_CASE("logistic iteration cap") {
    std::mt19937_64 rng(3);
    std::normal_distribution<double> nd;
    Eigen::MatrixXd X(100, 2);
    Eigen::VectorXd y(100);
    for (int i = 0; i < 100; ++i) {
        X.row(i) << 1, nd(rng);
        y(i) = X(i, 1) + nd(rng) > 0 ? 1 : 0;
    }
    LogisticOptions opt;
    opt.max_iterations = 1;
    CHECK_THROWS_AS(fit_logistic(X, y, nullptr, opt), NotConverged);
}

TEST_CASE("predict") {
    GlmFit id;
    id.link = Link::identity;
    id.coef = Eigen::VectorXd::Constant(1, 2.0);
    CHECK(predict(id, Eigen::MatrixXd::Ones(1, 1))(0) == 2.0);
    GlmFit lo;
    lo.link = Link::logit;
    lo.coef = Eigen::VectorXd::Zero(2);
    Eigen::MatrixXd row(1, 2);
    row << 1, 5;
    CHECK(predict(lo, row)(0) == 0.5);
    lo.coef = Eigen::VectorXd::Constant(1, std::log(3.0));
    CHECK(predict(lo, Eigen::MatrixXd::Ones(1, 1))(0) == doctest::Approx(0.75).epsilon(1e-14));
    CHECK_THROWS_AS(predict(lo, row), DimensionMismatch);
    CHECK(inverse_logit(-30.0) > 0.0);
    CHECK(inverse_logit(30.0) < 1.0);
}
