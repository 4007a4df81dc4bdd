#include <catch2/catch_amalgamated.hpp>

#include "statmap/glm.hpp"
#include "statmap/rng.hpp"
#include "statmap/synth.hpp"
#include "support/oracles.hpp"

using namespace statmap;

namespace {

DesignMatrix covariate_design(Matrix x) {
    std::vector<ColumnRole> roles(x.cols, ColumnRole::Covariate);
    return make_design_matrix(std::move(x), roles);
}

DesignMatrix four_by_two_indicator() {
    Matrix x(4, 2);
    x.data = {1, 0, 1, 0, 0, 1, 0, 1};
    return make_design_matrix(std::move(x), {ColumnRole::ConditionIndicator,
                                             ColumnRole::ConditionIndicator});
}

}  // namespace

TEST_CASE("ols identity-like normal equations return the observations") {
    // identity design padded with a zero row to keep N > M
    Matrix x(3, 2);
    x.data = {1, 0, 0, 1, 0, 0};
    const GlmEstimate est = ols_fit(covariate_design(std::move(x)), Observation{{3, -1, 0}});
    REQUIRE(est.theta[0] == Catch::Approx(3.0));
    REQUIRE(est.theta[1] == Catch::Approx(-1.0));
}

TEST_CASE("ols recovers group means under an indicator design") {
    const GlmEstimate est = ols_fit(four_by_two_indicator(), Observation{{2, 4, 6, 8}});
    REQUIRE(est.theta[0] == Catch::Approx(3.0));
    REQUIRE(est.theta[1] == Catch::Approx(7.0));
}

TEST_CASE("ols matches the explicit normal-equation oracle") {
    CounterRng rng(21, 0);
    for (int rep = 0; rep < 10; ++rep) {
        Matrix x(8, 3);
        for (double& v : x.data) v = rng.normal();
        Vector y(8);
        for (double& v : y) v = rng.normal();
        const DesignMatrix d = covariate_design(x);
        const GlmEstimate est = ols_fit(d, Observation{y});

        const Matrix xtx_inv = oracles::gauss_jordan_inverse(detail::cross(x, x));
        const Vector theta_oracle = multiply(xtx_inv, multiply_transposed(x, y));
        for (std::size_t j = 0; j < 3; ++j)
            REQUIRE(est.theta[j] == Catch::Approx(theta_oracle[j]).margin(1e-10));
    }
}

TEST_CASE("ml with identity covariance equals ols") {
    const DesignMatrix d = four_by_two_indicator();
    const Observation y{{2.0, 3.5, -1.0, 0.5}};
    const GlmEstimate ols = ols_fit(d, y);
    const GlmEstimate ml = ml_fit(d, y, Matrix::identity(4));
    for (std::size_t j = 0; j < 2; ++j)
        REQUIRE(ml.theta[j] == Catch::Approx(ols.theta[j]).margin(1e-12));
}

TEST_CASE("scalar covariances cancel in the ml estimate and scale its covariance") {
    const DesignMatrix d = four_by_two_indicator();
    const Observation y{{2.0, 3.5, -1.0, 0.5}};
    const GlmEstimate m1 = ml_fit(d, y, Matrix::identity(4));
    Matrix c4 = Matrix::identity(4);
    for (double& v : c4.data) v *= 4.0;
    const GlmEstimate m4 = ml_fit(d, y, c4);
    for (std::size_t j = 0; j < 2; ++j) {
        REQUIRE(m4.theta[j] == Catch::Approx(m1.theta[j]).margin(1e-12));
        REQUIRE(m4.theta_cov(j, j) == Catch::Approx(4.0 * m1.theta_cov(j, j)).margin(1e-12));
    }
}

TEST_CASE("ml with scalar covariance equals ols across scales") {
    const DesignMatrix d = four_by_two_indicator();
    const Observation y{{1.0, -2.0, 5.0, 4.0}};
    const GlmEstimate ols = ols_fit(d, y);
    for (double s2 : {0.25, 1.0, 9.0}) {
        Matrix c = Matrix::identity(4);
        for (double& v : c.data) v *= s2;
        const GlmEstimate ml = ml_fit(d, y, c);
        for (std::size_t j = 0; j < 2; ++j)
            REQUIRE(std::abs(ml.theta[j] - ols.theta[j]) <= 1e-10);
    }
}

TEST_CASE("ml with diagonal covariance matches the weighted-least-squares oracle") {
    const DesignMatrix d = four_by_two_indicator();
    const Observation y{{2.0, 4.0, 6.0, 10.0}};
    Matrix c = Matrix::identity(4);
    c(2, 2) = 100.0;
    c(3, 3) = 100.0;
    const GlmEstimate est = ml_fit(d, y, c);
    // per-group weighted means with weights 1/variance
    const double g1 = (1.0 * 2.0 + 1.0 * 4.0) / 2.0;
    const double g2 = (0.01 * 6.0 + 0.01 * 10.0) / 0.02;
    REQUIRE(est.theta[0] == Catch::Approx(g1).margin(1e-10));
    REQUIRE(est.theta[1] == Catch::Approx(g2).margin(1e-10));
}

TEST_CASE("ml rejects a non-positive-definite covariance") {
    const DesignMatrix d = four_by_two_indicator();
    Matrix c = Matrix::identity(4);
    c(0, 0) = -1.0;
    REQUIRE_THROWS_AS(ml_fit(d, Observation{{1, 2, 3, 4}}, c), NotPositiveDefinite);
}

TEST_CASE("reml with the iid component reproduces ols exactly") {
    SyntheticSpec spec;
    spec.n = 200;
    spec.block_len = 25;
    spec.seed = 5;
    const SyntheticDataset ds = generate(spec);
    const GlmEstimate ols = ols_fit(ds.design, ds.obs);
    const RemlResult r = reml_fit(ds.design, ds.obs, {Matrix::identity(200)});
    REQUIRE(r.converged);
    const double s2 = dot(ols.residuals, ols.residuals) / (200.0 - 3.0);
    REQUIRE(r.lambdas[0] == Catch::Approx(s2).epsilon(1e-9));
    for (std::size_t j = 0; j < 3; ++j)
        REQUIRE(r.estimate.theta[j] == Catch::Approx(ols.theta[j]).margin(1e-10));
}

TEST_CASE("reml detects inflated block variance with a two-component basis") {
    const std::size_t n = 120;
    CounterRng rng(31, 0);
    Matrix x(n, 2);
    for (std::size_t i = 0; i < n; ++i) {
        x(i, 0) = i < n / 2 ? 1.0 : 0.0;
        x(i, 1) = 1.0 - x(i, 0);
    }
    const DesignMatrix d = make_design_matrix(
        std::move(x), {ColumnRole::ConditionIndicator, ColumnRole::ConditionIndicator});
    // second half has 5x the noise standard deviation
    Vector y(n);
    for (std::size_t i = 0; i < n; ++i)
        y[i] = (i < n / 2 ? 1.0 : 2.0) + rng.normal() * (i < n / 2 ? 1.0 : 5.0);
    Matrix mask_q(n, n);
    for (std::size_t i = n / 2; i < n; ++i) mask_q(i, i) = 1.0;
    const RemlResult r = reml_fit(d, Observation{y}, {Matrix::identity(n), mask_q});
    REQUIRE(r.lambdas[1] > 0.1);  // clearly positive extra block variance
}

TEST_CASE("reml on noiseless data floors the variance weight") {
    Matrix x(8, 2);
    for (std::size_t i = 0; i < 8; ++i) {
        x(i, 0) = i < 4 ? 1.0 : 0.0;
        x(i, 1) = 1.0 - x(i, 0);
    }
    const DesignMatrix d8 = make_design_matrix(
        std::move(x), {ColumnRole::ConditionIndicator, ColumnRole::ConditionIndicator});
    Vector y(8);
    for (std::size_t i = 0; i < 8; ++i) y[i] = i < 4 ? 2.0 : -1.0;  // exactly X theta
    const RemlResult r = reml_fit(d8, Observation{y}, {Matrix::identity(8)});
    REQUIRE(r.lambdas[0] <= 1e-10);
    REQUIRE(r.lambdas[0] >= 1e-12);
}

TEST_CASE("dense and diagonal reml paths agree") {
    SyntheticSpec spec;
    spec.n = 80;
    spec.block_len = 20;
    spec.seed = 9;
    const SyntheticDataset ds = generate(spec);
    Matrix q1 = Matrix::identity(80);
    Matrix q2(80, 80);
    for (std::size_t i = 0; i < 40; ++i) q2(i, i) = 1.0;
    const RemlResult diag = reml_fit(ds.design, ds.obs, {q1, q2});
    // same components with one off-diagonal entry made negligibly nonzero so
    // the dense path runs instead
    Matrix q2_densified = q2;
    q2_densified(0, 1) = 1e-300;
    q2_densified(1, 0) = 1e-300;
    const RemlResult dense = reml_fit(ds.design, ds.obs, {q1, q2_densified});
    REQUIRE(diag.lambdas[0] == Catch::Approx(dense.lambdas[0]).epsilon(1e-6));
    REQUIRE(diag.lambdas[1] == Catch::Approx(dense.lambdas[1]).margin(1e-6));
}

TEST_CASE("t statistic basics") {
    GlmEstimate est;
    est.theta = {2.0, 2.0, 1.0};
    est.theta_cov = Matrix::identity(3);

    SECTION("null contrast gives zero") {
        REQUIRE(t_statistic(est, Contrast{{1, -1, 0}}) == Catch::Approx(0.0).margin(1e-15));
    }
    SECTION("contrast scaling leaves T unchanged") {
        const double t1 = t_statistic(est, Contrast{{1, 0, -1}});
        const double t2 = t_statistic(est, Contrast{{2, 0, -2}});
        REQUIRE(t1 == Catch::Approx(t2).epsilon(1e-12));
    }
    SECTION("degenerate variance is an error") {
        est.theta_cov = Matrix(3, 3);  // zero covariance
        REQUIRE_THROWS_AS(t_statistic(est, Contrast{{1, -1, 0}}), DegenerateVariance);
    }
}

TEST_CASE("two-group T equals the classical pooled two-sample statistic") {
    CounterRng rng(77, 0);
    const std::size_t n = 24;
    Matrix x(n, 2);
    Vector y(n), ga, gb;
    for (std::size_t i = 0; i < n; ++i) {
        const bool first = i < n / 2;
        x(i, 0) = first ? 1.0 : 0.0;
        x(i, 1) = first ? 0.0 : 1.0;
        y[i] = (first ? 0.8 : 0.0) + rng.normal();
        (first ? ga : gb).push_back(y[i]);
    }
    const DesignMatrix d = make_design_matrix(
        std::move(x), {ColumnRole::ConditionIndicator, ColumnRole::ConditionIndicator});
    const double t = t_statistic(ols_fit(d, Observation{y}), Contrast{{1, -1}});
    REQUIRE(t == Catch::Approx(oracles::two_sample_t(ga, gb)).epsilon(1e-10));
}

TEST_CASE("forward estimators recover the synthetic contrast on average") {
    // light version of the recovery property; the acceptance suite runs the
    // full 50-seed version including the ideal-ML estimator
    const std::size_t seeds = 10;
    double acc_ols = 0.0, acc_reml = 0.0;
    for (std::uint64_t s = 0; s < seeds; ++s) {
        SyntheticSpec spec;
        spec.seed = s;
        const SyntheticDataset ds = generate(spec);
        const GlmEstimate ols = ols_fit(ds.design, ds.obs);
        const RemlResult reml = reml_fit(ds.design, ds.obs, {Matrix::identity(spec.n)});
        acc_ols += ols.theta[0] - ols.theta[1];
        acc_reml += reml.estimate.theta[0] - reml.estimate.theta[1];
    }
    REQUIRE(acc_ols / seeds > 0.85);
    REQUIRE(acc_ols / seeds < 1.15);
    REQUIRE(acc_reml / seeds > 0.85);
    REQUIRE(acc_reml / seeds < 1.15);
}
