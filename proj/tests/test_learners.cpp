#include <doctest.h>

#include <cmath>
#include <random>

#include "pdml/datagen.hpp"
#include "pdml/errors.hpp"
#include "pdml/lasso.hpp"
#include "pdml/learners.hpp"
#include "support.hpp"

using namespace pdml;

namespace {

double rmse(const Vector& a, const Vector& b) {
    return std::sqrt((a - b).squaredNorm() / static_cast<double>(a.size()));
}

double sd(const Vector& v) {
    return std::sqrt((v.array() - v.mean()).square().sum() / static_cast<double>(v.size()));
}

const std::string kScripts = PDML_TEST_SCRIPTS;

}  // namespace

TEST_CASE("OLS reproduces an exactly linear response") {
    std::mt19937 gen(1);
    const Matrix x = oracle::gaussian(30, 4, gen);
    Vector coef(4);
    coef << 1.5, -2.0, 0.25, 3.0;
    const Vector y = x * coef + Vector::Constant(30, 0.7);
    Rng rng(0);
    const auto pred = fit_learner(OlsSpec{}, x, y, rng);
    CHECK(rmse(pred->predict(x), y) < 1e-8);
    CHECK((pred->predict(x) - y).lpNorm<Eigen::Infinity>() < 1e-8);

    const Vector y0 = x * coef;
    const auto nointercept = fit_learner(OlsSpec{false}, x, y0, rng);
    CHECK((nointercept->predict(x) - y0).lpNorm<Eigen::Infinity>() < 1e-8);
}

TEST_CASE("OLS rank deficiency and short designs are learner errors") {
    std::mt19937 gen(2);
    Matrix x = oracle::gaussian(20, 3, gen);
    x.col(2) = 2.0 * x.col(0) - x.col(1);
    Rng rng(0);
    CHECK_THROWS_AS(fit_learner(OlsSpec{}, x, Vector::Ones(20), rng), LearnerError);
    const Matrix wide = oracle::gaussian(4, 5, gen);
    CHECK_THROWS_AS(fit_learner(OlsSpec{}, wide, Vector::Ones(4), rng), LearnerError);
}

TEST_CASE("OLS shift equivariance is exact in the prediction") {
    std::mt19937 gen(3);
    const Matrix x = oracle::gaussian(50, 3, gen);
    const Vector y = oracle::gaussian(50, 1, gen).col(0);
    Rng rng(0);
    const auto a = fit_learner(OlsSpec{}, x, y, rng);
    const auto b = fit_learner(OlsSpec{}, x, (y.array() + 4.0).matrix(), rng);
    CHECK(((b->predict(x) - a->predict(x)).array() - 4.0).abs().maxCoeff() < 1e-12);
}

TEST_CASE("Lasso at lambda_max is the zero predictor") {
    std::mt19937 gen(4);
    const Matrix x = oracle::gaussian(40, 6, gen);
    const Vector y = x.col(0) + 0.1 * oracle::gaussian(40, 1, gen).col(0);
    // Without an intercept the solver sees the raw design.
    const double lmax = lambda_max(linear_term(x, y));
    LassoSpec spec;
    spec.intercept = false;
    spec.penalty = PenaltyConfig::fixed(lmax);
    Rng rng(0);
    const auto pred = fit_learner(spec, x, y, rng);
    CHECK(pred->predict(x).isZero(0.0));
    CHECK(pred->info().lambda.value() == lmax);
    CHECK(pred->predict(oracle::gaussian(5, 6, gen)).isZero(0.0));
}

TEST_CASE("Lasso with intercept predicts the centered fit plus the mean") {
    std::mt19937 gen(5);
    const Matrix x = oracle::gaussian(60, 5, gen);
    const Vector y = (2.0 * x.col(1)).array() + 10.0;
    Rng rng(0);
    LassoSpec spec;
    spec.penalty = PenaltyConfig::fixed(0.05);
    const auto pred = fit_learner(spec, x, y, rng);
    const Eigen::RowVectorXd mean = x.colwise().mean();
    const Matrix xc = x.rowwise() - mean;
    const Vector yc = (y.array() - y.mean()).matrix();
    const Vector coef = oracle::fista_lasso(gram_matrix(xc), linear_term(xc, yc), 0.05);
    const Vector expected = (xc * coef).array() + y.mean();
    CHECK((pred->predict(x) - expected).lpNorm<Eigen::Infinity>() < 1e-6);
}

TEST_CASE("cross-validated Lasso selects a small penalty on a strong signal") {
    std::mt19937 gen(6);
    const Matrix x = oracle::gaussian(200, 10, gen);
    const Vector y = 3.0 * x.col(0) + 0.1 * oracle::gaussian(200, 1, gen).col(0);
    Rng rng(7);
    const auto pred = fit_learner(LassoSpec{}, x, y, rng);
    REQUIRE(pred->info().lambda.has_value());
    CHECK(*pred->info().lambda < 0.1 * lambda_max(linear_term(x, y)));
    CHECK(rmse(pred->predict(x), y) < 0.2);
}

TEST_CASE("basis learner fits a quadratic almost exactly") {
    Rng gen_rng(8);
    SimSetting st;
    st.family = Family::F3;
    st.p = 1;
    st.n = 500;
    const Matrix x = gen_covariates(500, 1, gen_rng);
    Vector y(500);
    for (Index i = 0; i < 500; ++i) y(i) = library_fn(3, x(i, 0));
    Rng rng(9);
    const auto pred = fit_learner(BasisSpec{}, x, y, rng);
    const Vector fitted = pred->predict(x);
    MESSAGE("basis RMSE / sd = " << rmse(fitted, y) / sd(y));
    CHECK(rmse(fitted, y) < 0.05 * sd(y));
    CHECK(fitted.allFinite());
}

TEST_CASE("basis predictions on training rows equal the fitted values") {
    std::mt19937 gen(10);
    Matrix x(100, 2);
    std::uniform_real_distribution<double> u;
    for (Index i = 0; i < 100; ++i)
        for (Index j = 0; j < 2; ++j) x(i, j) = u(gen);
    const Vector y = (x.col(0).array() * 6.0).sin().matrix() + x.col(1);
    Rng a(11), b(11);
    const auto p1 = fit_learner(BasisSpec{}, x, y, a);
    const auto p2 = fit_learner(BasisSpec{}, x, y, b);
    CHECK(p1->predict(x) == p2->predict(x));
    CHECK(p1->predict(x) == p1->predict(x));
}

TEST_CASE("B-spline basis is a partition of unity") {
    std::mt19937 gen(12);
    std::uniform_real_distribution<double> u(-2.0, 3.0);
    Vector col(200);
    for (Index i = 0; i < 200; ++i) col(i) = u(gen);
    for (int knots : {0, 1, 5, 9}) {
        const BSplineBasis basis(col, knots);
        CHECK(basis.size() == knots + 4);
        std::vector<double> out(basis.size());
        for (double v : {col.minCoeff(), col.maxCoeff(), 0.0, 1.234, -1.9, 10.0, -10.0}) {
            basis.evaluate(v, out.data());
            double total = 0.0;
            for (double b : out) {
                CHECK(b >= -1e-14);
                total += b;
            }
            CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
        }
    }
}

TEST_CASE("predict checks the column count") {
    const auto pred = make_linear_predictor(Vector::Ones(2));
    CHECK_THROWS_AS(pred->predict(Matrix::Ones(3, 3)), ContractError);
}

TEST_CASE("linear predictor is a dot product") {
    Vector coef(2);
    coef << 1, 0;
    const auto pred = make_linear_predictor(coef);
    Matrix rows(2, 2);
    rows << 2, 9, 3, 9;
    const Vector out = predict(*pred, rows);
    CHECK(out(0) == 2.0);
    CHECK(out(1) == 3.0);
    CHECK(make_linear_predictor(Vector::Zero(3))->predict(Matrix::Ones(4, 3)).isZero(0.0));
}

TEST_CASE("identical spec, data and seed give identical predictions") {
    std::mt19937 gen(13);
    const Matrix x = oracle::gaussian(120, 8, gen);
    const Vector y = x.col(2) + oracle::gaussian(120, 1, gen).col(0);
    for (const LearnerSpec& spec : {LearnerSpec{LassoSpec{}}, LearnerSpec{BasisSpec{}},
                                    LearnerSpec{OlsSpec{}}}) {
        Rng a(21), b(21);
        CHECK(fit_learner(spec, x, y, a)->predict(x) == fit_learner(spec, x, y, b)->predict(x));
    }
}

TEST_CASE("shared design cache gives the same fit as a fresh design") {
    std::mt19937 gen(14);
    const Matrix x = oracle::gaussian(150, 12, gen);
    const Vector y = x.col(0) + oracle::gaussian(150, 1, gen).col(0);
    const Vector d = x.col(1) + oracle::gaussian(150, 1, gen).col(0);
    Rng a(3);
    const auto g = fit_learner(LassoSpec{}, x, y, a);
    REQUIRE(g->design() != nullptr);
    LassoSpec fixed;
    fixed.penalty = PenaltyConfig::fixed(0.05);
    Rng b(4), c(4);
    const auto shared = fit_learner(share_design(fixed, *g), x, d, b);
    const auto fresh = fit_learner(fixed, x, d, c);
    CHECK((shared->predict(x) - fresh->predict(x)).lpNorm<Eigen::Infinity>() < 1e-9);

    // A different design must not use the stale cache.
    const Matrix other = oracle::gaussian(150, 12, gen);
    Rng e(5), f(5);
    const auto stale = fit_learner(share_design(fixed, *g), other, d, e);
    const auto clean = fit_learner(fixed, other, d, f);
    CHECK((stale->predict(other) - clean->predict(other)).lpNorm<Eigen::Infinity>() < 1e-9);
}

TEST_CASE("anchored spec fixes or restricts the unperturbed penalty") {
    std::mt19937 gen(15);
    const Matrix x = oracle::gaussian(100, 6, gen);
    const Vector y = x.col(0) + oracle::gaussian(100, 1, gen).col(0);
    Rng rng(1);
    const auto g = fit_learner(LassoSpec{}, x, y, rng);
    const double lam = *g->info().lambda;
    const auto fixed = std::get<LassoSpec>(anchored_spec(LassoSpec{}, *g, 0.5));
    CHECK(fixed.penalty.mode == PenaltyConfig::Mode::Fixed);
    CHECK(fixed.penalty.lambda == doctest::Approx(0.5 * lam));
    CHECK(fixed.warm.has_value());
    const auto restricted = std::get<LassoSpec>(anchored_spec(LassoSpec{}, *g, std::nullopt));
    CHECK(restricted.penalty.mode == PenaltyConfig::Mode::Restricted);
    CHECK(restricted.penalty.lambda == lam);
    CHECK(std::holds_alternative<OlsSpec>(anchored_spec(OlsSpec{}, *g, 1.0)));
}

TEST_CASE("learner names parse") {
    CHECK(std::holds_alternative<OlsSpec>(parse_learner("ols")));
    CHECK_FALSE(std::get<OlsSpec>(parse_learner("ols:nointercept")).intercept);
    const auto l = std::get<LassoSpec>(parse_learner("lasso:0.3"));
    CHECK(l.penalty.mode == PenaltyConfig::Mode::Fixed);
    CHECK(l.penalty.lambda == 0.3);
    CHECK(std::get<BasisSpec>(parse_learner("basis:7")).n_knots == 7);
    CHECK(std::get<ExternalSpec>(parse_learner("external:./run.sh")).command == "./run.sh");
    CHECK_THROWS_AS(parse_learner("forest"), ConfigError);
    CHECK_THROWS_AS(parse_learner("lasso:-1"), ConfigError);
    CHECK_THROWS_AS(parse_learner("basis:2.5"), ConfigError);
    CHECK(learner_name(parse_learner("basis:7")).find("basis") == 0);
}

TEST_CASE("external learner round trip") {
    std::mt19937 gen(16);
    const Matrix x = oracle::gaussian(25, 3, gen);
    Vector y = Vector::LinSpaced(25, 1.0, 25.0);
    Rng rng(0);
    const auto pred = fit_learner(ExternalSpec{kScripts + "/mean_learner.sh", ""}, x, y, rng);
    CHECK(pred->info().kind == "external");
    const Vector out = pred->predict(x.topRows(7));
    REQUIRE(out.size() == 7);
    CHECK((out.array() - 13.0).abs().maxCoeff() < 1e-12);
    const auto shifted =
        fit_learner(ExternalSpec{kScripts + "/mean_learner.sh", "2"}, x, y, rng);
    CHECK(shifted->predict(x)(0) == doctest::Approx(15.0));
}

TEST_CASE("external learner failure carries its diagnostics") {
    Rng rng(0);
    try {
        fit_learner(ExternalSpec{kScripts + "/broken_learner.sh", ""}, Matrix::Ones(5, 1),
                    Vector::Ones(5), rng);
        FAIL("expected a learner error");
    } catch (const LearnerError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("exit 3") != std::string::npos);
        CHECK(msg.find("model file could not be written") != std::string::npos);
    }
}
