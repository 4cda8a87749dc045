#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "pdml/datagen.hpp"
#include "pdml/dml.hpp"
#include "pdml/errors.hpp"
#include "pdml/learners.hpp"
#include "support.hpp"

using namespace pdml;

namespace {

ResidualPair pair(std::initializer_list<double> e, std::initializer_list<double> d) {
    ResidualPair r;
    r.eps = Eigen::Map<const Vector>(e.begin(), static_cast<Index>(e.size()));
    r.delta = Eigen::Map<const Vector>(d.begin(), static_cast<Index>(d.size()));
    return r;
}

}  // namespace

TEST_CASE("estimate_beta hand examples") {
    CHECK(estimate_beta(pair({1, 2, 3}, {1, 0, -1})) == doctest::Approx(-1.0));
    CHECK(estimate_beta(pair({1, -1}, {1, 1})) == 0.0);
    std::mt19937 gen(1);
    const Vector d = oracle::gaussian(30, 1, gen).col(0);
    ResidualPair r{2.75 * d, d, {}};
    CHECK(estimate_beta(r) == doctest::Approx(2.75).epsilon(1e-14));
}

TEST_CASE("degenerate treatment residuals are rejected") {
    CHECK_THROWS_AS(estimate_beta(pair({1, 2, 3}, {0, 0, 0})), DegenerateError);
    CHECK_THROWS_AS(estimate_beta(pair({1, 2, 3}, {1e-8, 0, 0})), DegenerateError);
    CHECK_THROWS_AS(estimate_beta(pair({1, 2}, {1, 2, 3})), ContractError);
    CHECK_THROWS_AS(estimate_beta(pair({1, std::nan(""), 3}, {1, 2, 3})), ContractError);
}

TEST_CASE("standard error hand examples") {
    const auto r = pair({1, 2, 3}, {1, 0, -1});
    CHECK(standard_error(r, -1.0) == doctest::Approx(std::sqrt(2.0)).epsilon(1e-14));
    // delta = 1: SE = sqrt(sum r^2) / n.
    const auto ones = pair({0.5, -1.0, 2.0, 0.25}, {1, 1, 1, 1});
    const double expect = std::sqrt(0.25 + 1.0 + 4.0 + 0.0625) / 4.0;
    CHECK(standard_error(ones, 0.0) == doctest::Approx(expect).epsilon(1e-14));
    // All residual products zero.
    const auto exact = pair({2, 4, -2}, {1, 2, -1});
    CHECK(standard_error(exact, 2.0) == 0.0);
}

TEST_CASE("SE is positive whenever some product is nonzero") {
    std::mt19937 gen(2);
    for (int rep = 0; rep < 20; ++rep) {
        const Vector e = oracle::gaussian(10, 1, gen).col(0);
        const Vector d = oracle::gaussian(10, 1, gen).col(0);
        ResidualPair r{e, d, {}};
        const double b = estimate_beta(r);
        CHECK(standard_error(r, b) > 0.0);
    }
}

TEST_CASE("beta is invariant under permutation of the pairs") {
    std::mt19937 gen(3);
    const Vector e = oracle::gaussian(40, 1, gen).col(0);
    const Vector d = oracle::gaussian(40, 1, gen).col(0);
    std::vector<int> perm(40);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), gen);
    Vector ep(40), dp(40);
    for (int i = 0; i < 40; ++i) {
        ep(i) = e(perm[i]);
        dp(i) = d(perm[i]);
    }
    CHECK(estimate_beta({e, d, {}}) == doctest::Approx(estimate_beta({ep, dp, {}})).epsilon(1e-14));
}

TEST_CASE("Wald interval") {
    const Interval ci = wald_ci(0.0, 1.0, 0.05);
    CHECK(ci.lo == doctest::Approx(-oracle::upper_quantile(0.025)).epsilon(1e-10));
    CHECK(ci.hi == doctest::Approx(1.95996).epsilon(1e-5));
    const Interval point = wald_ci(0.3, 0.0, 0.05);
    CHECK(point.lo == 0.3);
    CHECK(point.hi == 0.3);
    CHECK(wald_ci(1.0, 0.2, 0.01).contains(wald_ci(1.0, 0.2, 0.05)));
    CHECK(wald_ci(1.0, 0.2, 0.04).contains(wald_ci(1.0, 0.2, 0.05)));
}

TEST_CASE("aggregation") {
    CHECK(aggregate({1.0, 2.0, 6.0}, Aggregation::Mean) == 3.0);
    CHECK(aggregate({1.0, 2.0, 6.0}, Aggregation::Median) == 2.0);
    CHECK(aggregate({1.0, 2.0, 6.0, 8.0}, Aggregation::Median) == 4.0);
    CHECK(aggregate({0.4, 0.4}, Aggregation::Mean) == 0.4);
}

TEST_CASE("combining identical fold estimates returns that estimate") {
    std::mt19937 gen(4);
    const Vector d1 = oracle::gaussian(20, 1, gen).col(0);
    const Vector d2 = oracle::gaussian(20, 1, gen).col(0);
    std::vector<ResidualPair> folds{{0.7 * d1, d1, {}}, {0.7 * d2, d2, {}}};
    const DmlEstimate est = combine_folds(folds, Aggregation::Mean);
    CHECK(est.beta_hat == doctest::Approx(0.7).epsilon(1e-14));
    CHECK(est.fold_estimates.size() == 2);
    CHECK(est.n_eval == 40);
}

TEST_CASE("single split OLS recovers beta when e is zero") {
    Rng rng(5);
    const Index n = 200, p = 3;
    const Matrix x = gen_covariates(n, p, rng);
    Vector gamma(p), mu(p);
    gamma << 0.3, -0.2, 0.8;
    mu << 1.0, 0.5, -0.4;
    const Vector d = x * gamma + standard_normal(rng, n);
    const Vector y = 0.5 * d + x * mu;
    const Dataset ds(y, d, x);
    Rng split_rng(6), fit_rng(7);
    const FoldSplit sp = split(n, SplitScheme::single(), split_rng);
    const DmlEstimate est = cross_fit(ds, OlsSpec{}, OlsSpec{}, sp, fit_rng);
    CHECK(std::abs(est.beta_hat - 0.5) < 1e-6);
    CHECK(est.n_eval == static_cast<Index>(sp.folds[0].size()));
}

TEST_CASE("cross-fit residuals come from complement fits") {
    Rng rng(8);
    const Index n = 90;
    const Matrix x = gen_covariates(n, 2, rng);
    const Vector d = x.col(0) + standard_normal(rng, n);
    const Vector y = 0.5 * d + x.col(1) + standard_normal(rng, n);
    const Dataset ds(y, d, x);
    Rng split_rng(9), fit_rng(10);
    const FoldSplit sp = split(n, SplitScheme::cross_fit(3), split_rng);
    const DmlEstimate est = cross_fit(ds, OlsSpec{}, OlsSpec{}, sp, fit_rng);
    REQUIRE(est.fold_estimates.size() == 3);
    std::vector<double> ref;
    for (std::size_t k = 0; k < 3; ++k) {
        const auto train = sp.training(k);
        Matrix xt(train.size(), 3), xe(sp.folds[k].size(), 3);
        Vector yt(train.size()), dt(train.size());
        for (std::size_t i = 0; i < train.size(); ++i) {
            xt.row(i) << 1.0, x(train[i], 0), x(train[i], 1);
            yt(i) = y(train[i]);
            dt(i) = d(train[i]);
        }
        // Normal equations as the independent OLS reference.
        const Vector by = (xt.transpose() * xt).ldlt().solve(xt.transpose() * yt);
        const Vector bd = (xt.transpose() * xt).ldlt().solve(xt.transpose() * dt);
        double num = 0.0, den = 0.0;
        for (std::size_t i = 0; i < sp.folds[k].size(); ++i) {
            const Index r = sp.folds[k][i];
            Eigen::RowVector3d row(1.0, x(r, 0), x(r, 1));
            const double e = y(r) - row.dot(by), dd = d(r) - row.dot(bd);
            num += e * dd;
            den += dd * dd;
        }
        ref.push_back(num / den);
        CHECK(est.fold_estimates[k] == doctest::Approx(ref.back()).epsilon(1e-9));
    }
    CHECK(est.beta_hat == doctest::Approx((ref[0] + ref[1] + ref[2]) / 3.0).epsilon(1e-9));
    CHECK(est.n_eval == n);
}

TEST_CASE("cross_fit is deterministic") {
    Rng rng(11);
    SimSetting st;
    st.family = Family::F2;
    st.p = 30;
    st.s = 5;
    st.n = 120;
    const auto draw = gen_dataset(st, rng);
    Rng s1(1), s2(1), f1(2), f2(2);
    const FoldSplit a = split(st.n, SplitScheme::cross_fit(2), s1);
    const FoldSplit b = split(st.n, SplitScheme::cross_fit(2), s2);
    const auto e1 = cross_fit(draw.data, LassoSpec{}, LassoSpec{}, a, f1);
    const auto e2 = cross_fit(draw.data, LassoSpec{}, LassoSpec{}, b, f2);
    CHECK(e1.beta_hat == e2.beta_hat);
    CHECK(e1.se_hat == e2.se_hat);
}

TEST_CASE("oracle estimate properties") {
    SimSetting st;
    st.family = Family::F1;
    st.p = 5;
    st.n = 100000;
    Rng rng(12);
    const auto draw = gen_dataset(st, rng);
    std::vector<Index> all(st.n);
    std::iota(all.begin(), all.end(), Index{0});
    const auto& t = draw.truth;
    const NuisanceFn f = [&](RowRef x) { return t.f(x); };
    const NuisanceFn g = [&](RowRef x) { return t.g(x); };
    const double b = oracle_estimate(draw.data, f, g, all);
    // Monte Carlo SE from the exact residuals.
    ResidualPair r;
    r.eps = draw.data.y() - t.g_rows(draw.data.x());
    r.delta = draw.data.d() - t.f_rows(draw.data.x());
    const double se = standard_error(r, b);
    CHECK(std::abs(b - 0.5) < 3.0 * se);

    // Shifting g by c shifts the estimate by -c sum(delta) / sum(delta^2).
    const double c = 0.3;
    const NuisanceFn g_shift = [&](RowRef x) { return t.g(x) + c; };
    const double shifted = oracle_estimate(draw.data, f, g_shift, all);
    CHECK(shifted - b ==
          doctest::Approx(-c * r.delta.sum() / r.delta.squaredNorm()).epsilon(1e-8));

    // Scaling Y scales the oracle when g is scaled with it.
    const Dataset scaled(3.0 * draw.data.y(), draw.data.d(), draw.data.x());
    const NuisanceFn g3 = [&](RowRef x) { return 3.0 * t.g(x); };
    CHECK(oracle_estimate(scaled, f, g3, all) == doctest::Approx(3.0 * b).epsilon(1e-12));
}

TEST_CASE("noiseless data makes the oracle degenerate") {
    SimSetting st;
    st.family = Family::F1;
    st.n = 50;
    st.noise_sd = 0.0;
    Rng rng(13);
    const auto draw = gen_dataset(st, rng);
    std::vector<Index> all(st.n);
    std::iota(all.begin(), all.end(), Index{0});
    const auto& t = draw.truth;
    CHECK_THROWS_AS(oracle_estimate(draw.data, [&](RowRef x) { return t.f(x); },
                                    [&](RowRef x) { return t.g(x); }, all),
                    DegenerateError);
}

TEST_CASE("Wald coverage sanity with independent Gaussian residuals") {
    std::mt19937 gen(14);
    std::normal_distribution<double> z;
    int covered = 0;
    for (int rep = 0; rep < 2000; ++rep) {
        ResidualPair r{Vector(500), Vector(500), {}};
        for (Index i = 0; i < 500; ++i) {
            r.eps(i) = z(gen);
            r.delta(i) = z(gen);
        }
        const double b = estimate_beta(r);
        if (wald_ci(b, standard_error(r, b), 0.05).contains(0.0)) ++covered;
    }
    MESSAGE("Wald coverage " << covered / 2000.0);
    CHECK(covered >= 0.93 * 2000);
}
