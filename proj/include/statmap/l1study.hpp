#pragma once

#include <cmath>
#include <cstdint>
#include <ostream>
#include <vector>

#include "statmap/errors.hpp"
#include "statmap/matrix.hpp"
#include "statmap/rng.hpp"

namespace statmap {

/// Closed-form minimizer of the centered inverse-regression MSE criterion
/// for a balanced two-class design: theta_diff / (theta_diff^2 + 4 sigma^2).
inline double mse_omega(double theta_diff, double sigma) {
    if (theta_diff == 0.0 && sigma == 0.0)
        throw DegenerateVariance("mse_omega: theta_diff and sigma both zero");
    return theta_diff / (theta_diff * theta_diff + 4.0 * sigma * sigma);
}

/// Exact E|eps_hat| under the symmetric two-Gaussian mixture with component
/// means +-mu and common sd |omega|*sigma:
///   sqrt(2) * |omega| * sigma * g(mu / (sqrt(2) |omega| sigma)),
/// g(a) = exp(-a^2)/sqrt(pi) + a erf(a). At omega = 0 the mixture collapses
/// to the two point masses and the expectation is |mu|.
inline double l1_expected_abs(double omega, double mu, double sigma) {
    if (!(sigma > 0.0)) throw InvalidSize("l1_expected_abs: sigma must be positive");
    const double s = std::abs(omega) * sigma;
    if (s == 0.0) return std::abs(mu);
    const double a = mu / (M_SQRT2 * s);
    const double g = std::exp(-a * a) / std::sqrt(M_PI) + a * std::erf(a);
    return M_SQRT2 * s * g;
}

struct OmegaStar {
    double omega = 0.0;
    double validity_ratio = 0.0;  // sqrt(2) sigma / |theta_diff|; reliable when << 1
};

/// First-order small-argument approximation of the L1-optimal weight; it
/// coincides with the MSE closed form.
inline OmegaStar omega_star(double theta_diff, double sigma) {
    if (theta_diff == 0.0) throw DegenerateVariance("omega_star: theta_diff must be nonzero");
    OmegaStar out;
    out.omega = mse_omega(theta_diff, sigma);
    out.validity_ratio = M_SQRT2 * sigma / std::abs(theta_diff);
    return out;
}

struct L1StudyConfig {
    std::size_t n = 100;     // samples per experiment; must be even
    std::size_t trials = 100;
    double theta_diff = 1.0;
    Vector sigma_grid{0.0, 0.25, 0.5, 0.75, 1.0, 1.5, 2.0};
    Vector omega_grid;  // optional search grid for grid-search checks

    void validate() const {
        if (n < 2 || n % 2 != 0) throw InvalidSpec("l1study: n must be even and >= 2");
        if (trials < 1) throw InvalidSpec("l1study: trials must be >= 1");
        if (sigma_grid.empty()) throw InvalidSpec("l1study: sigma grid empty");
        for (std::size_t i = 1; i < sigma_grid.size(); ++i)
            if (sigma_grid[i] < sigma_grid[i - 1])
                throw InvalidSpec("l1study: sigma grid must be sorted");
    }
};

struct L1StudyRow {
    double sigma = 0.0;
    double mean_l1_error = 0.0;
    double mean_mse_error = 0.0;
};

namespace l1_detail {

/// Golden-section minimizer for the convex piecewise-linear empirical L1
/// cost. Tolerance is tight enough that the noiseless case recovers the
/// exact kink.
template <class F>
double golden_section(F cost, double lo, double hi, double tol = 1e-13) {
    const double g = (std::sqrt(5.0) - 1.0) / 2.0;
    double a = lo, b = hi;
    double c1 = b - g * (b - a), c2 = a + g * (b - a);
    double f1 = cost(c1), f2 = cost(c2);
    while (b - a > tol) {
        if (f1 > f2) {
            a = c1;
            c1 = c2;
            f1 = f2;
            c2 = a + g * (b - a);
            f2 = cost(c2);
        } else {
            b = c2;
            c2 = c1;
            f2 = f1;
            c1 = b - g * (b - a);
            f1 = cost(c1);
        }
    }
    return 0.5 * (a + b);
}

}  // namespace l1_detail

/// Centered-model robustness study: per noise level, draw the balanced
/// +-1/2 class vector and centered Gaussian noise, fit omega by the MSE
/// projection and by empirical L1 minimization, and average the absolute
/// errors against the ideal 1/theta_diff.
inline std::vector<L1StudyRow> run_l1_mse_experiment(const L1StudyConfig& config,
                                                     std::uint64_t seed) {
    config.validate();
    const double d = config.theta_diff;
    const double ideal = 1.0 / d;
    const double span = 10.0 / std::abs(d);
    std::vector<L1StudyRow> table;
    table.reserve(config.sigma_grid.size());

    for (std::size_t si = 0; si < config.sigma_grid.size(); ++si) {
        const double sigma = config.sigma_grid[si];
        double acc_l1 = 0.0, acc_mse = 0.0;
        for (std::size_t t = 0; t < config.trials; ++t) {
            CounterRng rng(seed,
                           stream_id(StreamPurpose::Trial, si * config.trials + t));
            Vector x(config.n);
            for (std::size_t i = 0; i < config.n; ++i) x[i] = i < config.n / 2 ? 0.5 : -0.5;
            rng.shuffle(x);
            Vector eps(config.n, 0.0);
            if (sigma > 0.0) {
                for (double& e : eps) e = sigma * rng.normal();
                const double m = mean(eps);
                for (double& e : eps) e -= m;  // centered, as in the reference setup
            }
            Vector y(config.n);
            for (std::size_t i = 0; i < config.n; ++i) y[i] = x[i] * d + eps[i];

            const double w_mse = dot(y, x) / dot(y, y);
            auto l1_cost = [&](double w) {
                double s = 0.0;
                for (std::size_t i = 0; i < config.n; ++i) s += std::abs(x[i] - w * y[i]);
                return s;
            };
            const double w_l1 = l1_detail::golden_section(l1_cost, -span, span);
            acc_l1 += std::abs(w_l1 - ideal);
            acc_mse += std::abs(w_mse - ideal);
        }
        L1StudyRow row;
        row.sigma = sigma;
        row.mean_l1_error = acc_l1 / static_cast<double>(config.trials);
        row.mean_mse_error = acc_mse / static_cast<double>(config.trials);
        table.push_back(row);
    }
    return table;
}

inline void export_l1_table_csv(const std::vector<L1StudyRow>& table, std::ostream& out) {
    out << "sigma,mean_abs_error_l1,mean_abs_error_mse\n";
    char buf[160];
    for (const L1StudyRow& row : table) {
        std::snprintf(buf, sizeof(buf), "%.17g,%.17g,%.17g\n", row.sigma, row.mean_l1_error,
                      row.mean_mse_error);
        out << buf;
    }
}

}  // namespace statmap
