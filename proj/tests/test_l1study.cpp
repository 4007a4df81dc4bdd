#include <catch2/catch_amalgamated.hpp>

#include <sstream>

#include "statmap/l1study.hpp"
#include "statmap/rng.hpp"
#include "support/oracles.hpp"

using namespace statmap;

TEST_CASE("mse_omega closed form") {
    REQUIRE(mse_omega(1.0, 0.0) == Catch::Approx(1.0));
    REQUIRE(mse_omega(1.0, 0.5) == Catch::Approx(0.5));
    REQUIRE_THROWS_AS(mse_omega(0.0, 0.0), DegenerateVariance);
}

TEST_CASE("mse_omega matches the empirical grid-search minimizer") {
    // construct y = x d + eps with eps exactly orthogonal to the centered x
    const std::size_t n = 64;
    const double d = 0.8, sigma = 0.45;
    Vector x(n), eps(n);
    for (std::size_t i = 0; i < n; ++i) x[i] = i < n / 2 ? 0.5 : -0.5;
    CounterRng rng(4, 0);
    for (double& e : eps) e = rng.normal();
    double exy = 0.0;
    for (std::size_t i = 0; i < n; ++i) exy += eps[i] * x[i];
    for (std::size_t i = 0; i < n; ++i) eps[i] -= exy / (0.25 * n) * x[i];
    const double m = mean(eps);
    for (double& e : eps) e -= m;
    double v = 0.0;
    for (double e : eps) v += e * e;
    const double scale = sigma / std::sqrt(v / n);
    for (double& e : eps) e *= scale;
    Vector y(n);
    for (std::size_t i = 0; i < n; ++i) y[i] = x[i] * d + eps[i];

    // grid-search oracle over the squared criterion
    double best_w = 0.0, best_cost = 1e300;
    const double step = 1e-4;
    for (double w = 0.0; w <= 2.0; w += step) {
        double cost = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double r = x[i] - w * y[i];
            cost += r * r;
        }
        if (cost < best_cost) {
            best_cost = cost;
            best_w = w;
        }
    }
    REQUIRE(mse_omega(d, sigma) == Catch::Approx(best_w).margin(2.0 * step));
}

TEST_CASE("l1_expected_abs limits") {
    const double omega = 0.7, sigma = 1.3;
    REQUIRE(l1_expected_abs(omega, 0.0, sigma) ==
            Catch::Approx(std::abs(omega) * sigma * std::sqrt(2.0 / M_PI)).epsilon(1e-12));
    REQUIRE(l1_expected_abs(omega, 50.0, sigma) == Catch::Approx(50.0).epsilon(1e-6));
    REQUIRE(l1_expected_abs(0.0, -2.5, sigma) == Catch::Approx(2.5));
}

TEST_CASE("l1_expected_abs matches monte carlo sampling of the mixture") {
    CounterRng rng(8, 0);
    for (int rep = 0; rep < 3; ++rep) {
        const double omega = 0.3 + rng.uniform() * 1.5;
        const double mu = -1.0 + 2.0 * rng.uniform();
        const double sigma = 0.4 + rng.uniform();
        const double exact = l1_expected_abs(omega, mu, sigma);
        const std::size_t draws = 1000000;
        double acc = 0.0;
        for (std::size_t i = 0; i < draws; ++i) {
            const double sign = rng.uniform() < 0.5 ? -1.0 : 1.0;
            acc += std::abs(sign * mu + std::abs(omega) * sigma * rng.normal());
        }
        REQUIRE(acc / draws == Catch::Approx(exact).epsilon(0.005));
    }
}

TEST_CASE("omega_star coincides with the mse optimum and reports validity") {
    for (double d : {0.5, 1.0, 2.0})
        for (double s : {0.0, 0.1, 1.0, 2.0})
            REQUIRE(omega_star(d, s).omega == Catch::Approx(mse_omega(d, s)));
    REQUIRE(omega_star(1.0, 2.0).validity_ratio == Catch::Approx(2.0 * M_SQRT2).epsilon(1e-12));
    REQUIRE(omega_star(1.0, 2.0).validity_ratio > 1.0);
    REQUIRE_THROWS_AS(omega_star(0.0, 1.0), DegenerateVariance);
}

TEST_CASE("omega_star approximates the true l1 minimizer at low noise") {
    const double d = 1.0, sigma = 0.1;
    const auto approx = omega_star(d, sigma);
    const double w_opt = oracles::minimize_scalar(
        [&](double w) {
            const double v = d * w;
            const double mu = (v - 1.0) / 2.0;
            return l1_expected_abs(w, mu, sigma);
        },
        1e-6, 3.0, 1e-12);
    REQUIRE(std::abs(w_opt - approx.omega) <= 0.05);
}

TEST_CASE("minimizer location is invariant to positive rescaling of the cost") {
    // the implemented expectation and the half-scale variant share argmins
    const double d = 1.0, sigma = 0.6;
    auto argmin = [&](double scale) {
        double best_w = 0.0, best = 1e300;
        for (double w = 0.01; w <= 2.0; w += 1e-4) {
            const double mu = (d * w - 1.0) / 2.0;
            const double c = scale * l1_expected_abs(w, mu, sigma);
            if (c < best) {
                best = c;
                best_w = w;
            }
        }
        return best_w;
    };
    REQUIRE(argmin(1.0) == Catch::Approx(argmin(0.5)).margin(1e-9));
}

TEST_CASE("l1 study table reproduces the qualitative robustness claim") {
    L1StudyConfig cfg;
    cfg.trials = 40;  // lighter than the acceptance run
    const auto table = run_l1_mse_experiment(cfg, 7);
    REQUIRE(table.size() == cfg.sigma_grid.size());
    REQUIRE(table.front().mean_l1_error <= 1e-10);
    REQUIRE(table.front().mean_mse_error <= 1e-10);
    REQUIRE(table.back().mean_l1_error <= table.back().mean_mse_error);
    for (std::size_t i = 0; i < table.size(); ++i)
        REQUIRE(table[i].sigma == cfg.sigma_grid[i]);
}

TEST_CASE("identical seeds reproduce the table exactly") {
    L1StudyConfig cfg;
    cfg.trials = 10;
    const auto a = run_l1_mse_experiment(cfg, 123);
    const auto b = run_l1_mse_experiment(cfg, 123);
    for (std::size_t i = 0; i < a.size(); ++i) {
        REQUIRE(a[i].mean_l1_error == b[i].mean_l1_error);
        REQUIRE(a[i].mean_mse_error == b[i].mean_mse_error);
    }
}

TEST_CASE("empirical mse weights concentrate on the closed form") {
    L1StudyConfig cfg;
    cfg.trials = 400;
    cfg.sigma_grid = {0.5};
    const auto table = run_l1_mse_experiment(cfg, 21);
    // mean absolute error around the attenuated optimum: the empirical mean
    // of w_mse is mse_omega, not 1, so the mean error is near |mse - 1|
    const double expected_center = std::abs(mse_omega(1.0, 0.5) - 1.0);
    REQUIRE(table[0].mean_mse_error == Catch::Approx(expected_center).margin(0.05));
}

TEST_CASE("config validation") {
    L1StudyConfig cfg;
    cfg.n = 3;
    REQUIRE_THROWS_AS(cfg.validate(), InvalidSpec);
    cfg.n = 100;
    cfg.sigma_grid = {1.0, 0.5};
    REQUIRE_THROWS_AS(cfg.validate(), InvalidSpec);
}

TEST_CASE("csv export of the study table") {
    L1StudyConfig cfg;
    cfg.trials = 2;
    cfg.sigma_grid = {0.0, 1.0};
    const auto table = run_l1_mse_experiment(cfg, 1);
    std::ostringstream out;
    export_l1_table_csv(table, out);
    REQUIRE(out.str().rfind("sigma,mean_abs_error_l1,mean_abs_error_mse\n", 0) == 0);
}
