#include <catch2/catch_amalgamated.hpp>

#include "statmap/iglm.hpp"
#include "statmap/rng.hpp"
#include "statmap/synth.hpp"

using namespace statmap;

namespace {

DesignMatrix design_of(Matrix x, std::vector<ColumnRole> roles) {
    return make_design_matrix(std::move(x), std::move(roles));
}

}  // namespace

TEST_CASE("ls inverse regression on a column equal to the observations") {
    const Vector y{0.3, -1.2, 0.7, 2.0, -0.4};
    Matrix x(5, 1);
    for (std::size_t i = 0; i < 5; ++i) x(i, 0) = y[i];
    const DesignMatrix d = design_of(std::move(x), {ColumnRole::Covariate});
    const InverseFit fit = fit_inverse(d, Observation{y}, Method::LsIglm);
    REQUIRE(fit.omega[0] == Catch::Approx(1.0).margin(1e-12));
    REQUIRE(fit.biases[0] == Catch::Approx(0.0).margin(1e-12));
}

TEST_CASE("ls inverse regression closed form on the two-block example") {
    Matrix x(4, 2);
    x.data = {1, 0, 1, 0, 0, 1, 0, 1};
    const DesignMatrix d = design_of(std::move(x), {ColumnRole::ConditionIndicator,
                                                    ColumnRole::ConditionIndicator});
    const InverseFit fit = fit_inverse(d, Observation{{1, 1, -1, -1}}, Method::LsIglm);
    REQUIRE(fit.omega[0] == Catch::Approx(0.5));
    REQUIRE(fit.biases[0] == Catch::Approx(0.5));
}

TEST_CASE("constant columns regress to a pure bias") {
    Matrix x(5, 2);
    for (std::size_t i = 0; i < 5; ++i) {
        x(i, 0) = 0.37 * static_cast<double>(i) - 1.0;
        x(i, 1) = 1.0;
    }
    const DesignMatrix d = design_of(std::move(x), {ColumnRole::Covariate,
                                                    ColumnRole::Covariate});
    const Observation y{{2.0, -1.0, 0.5, 1.5, -0.5}};
    const InverseFit fit = fit_inverse(d, y, Method::LsIglm);
    REQUIRE(fit.omega[1] == Catch::Approx(0.0).margin(1e-12));
    REQUIRE(fit.biases[1] == Catch::Approx(1.0).margin(1e-12));
}

TEST_CASE("centered two-class fit matches the closed-form optimum") {
    // exact construction: x centered +-1/2, noise orthogonal to x, so
    // omega = d / (d^2 + 4 sigma^2) holds to numerical precision
    const std::size_t n = 40;
    const double d_true = 1.3, sigma = 0.6;
    Vector xc(n), eps(n);
    for (std::size_t i = 0; i < n; ++i) xc[i] = i < n / 2 ? 0.5 : -0.5;
    // orthogonal-to-x noise: +a on one index pair within each class
    CounterRng rng(2, 0);
    for (std::size_t i = 0; i < n; ++i) eps[i] = rng.normal();
    // project out the x component and the mean, then rescale to sigma
    double exy = 0.0;
    for (std::size_t i = 0; i < n; ++i) exy += eps[i] * xc[i];
    const double xnorm = 0.25 * static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) eps[i] -= exy / xnorm * xc[i];
    const double m = mean(eps);
    for (double& e : eps) e -= m;  // x is centered, so this keeps orthogonality
    double vnow = 0.0;
    for (double e : eps) vnow += e * e;
    const double scale = sigma / std::sqrt(vnow / static_cast<double>(n));
    for (double& e : eps) e *= scale;

    Vector y(n);
    for (std::size_t i = 0; i < n; ++i) y[i] = xc[i] * d_true + eps[i];
    Matrix x(n, 1);
    for (std::size_t i = 0; i < n; ++i) x(i, 0) = xc[i];
    const DesignMatrix design = design_of(std::move(x), {ColumnRole::Covariate});
    const InverseFit fit = fit_inverse(design, Observation{y}, Method::LsIglm);
    const double expected = d_true / (d_true * d_true + 4.0 * sigma * sigma);
    REQUIRE(fit.omega[0] == Catch::Approx(expected).margin(1e-6));
}

TEST_CASE("reconstruct applies the scalar inversion without clamping when valid") {
    // M=1, omega=2, b=0: s = 1/4, theta = 0.5, y_est = x/2
    InverseFit fit;
    fit.omega = {2.0};
    fit.biases = {0.0};
    Matrix x(4, 1);
    x.data = {1.0, 2.0, 3.0, 4.0};
    const DesignMatrix d = design_of(std::move(x), {ColumnRole::Covariate});
    const Reconstruction rec = reconstruct(fit, d);
    REQUIRE_FALSE(rec.clamp_applied);
    REQUIRE(rec.theta_tilde[0] == Catch::Approx(0.5));
    REQUIRE(rec.y_est[2] == Catch::Approx(1.5));
}

TEST_CASE("reconstruct clamps the scalar inversion") {
    InverseFit fit;
    fit.omega = {0.5};  // omega omega^t = 0.25, raw s = 4
    fit.biases = {0.0};
    Matrix x(3, 1);
    x.data = {1.0, 2.0, 3.0};
    const DesignMatrix d = design_of(std::move(x), {ColumnRole::Covariate});
    const Reconstruction rec = reconstruct(fit, d);
    REQUIRE(rec.clamp_applied);
    REQUIRE(rec.theta_tilde[0] == Catch::Approx(0.5));  // omega * 1
}

TEST_CASE("reconstruct rejects an uninformative fit") {
    InverseFit fit;
    fit.omega = {1e-8};
    fit.biases = {0.0};
    Matrix x(3, 1);
    x.data = {1.0, 2.0, 3.0};
    const DesignMatrix d = design_of(std::move(x), {ColumnRole::Covariate});
    REQUIRE_THROWS_AS(reconstruct(fit, d), ZeroNorm);
}

TEST_CASE("noiseless single-regressor data round-trips through the inverse model") {
    CounterRng rng(6, 0);
    const std::size_t n = 30;
    Matrix x(n, 1);
    Vector y(n);
    for (std::size_t i = 0; i < n; ++i) {
        y[i] = rng.normal();
        x(i, 0) = y[i] * 2.0;  // theta = 0.5 exactly: y = x * 0.5
    }
    const DesignMatrix d = design_of(std::move(x), {ColumnRole::Covariate});
    const Observation obs{y};
    const InverseFit fit = fit_inverse(d, obs, Method::LsIglm);
    ReconstructOptions opts;
    opts.rescale = true;
    opts.rescale_target = &obs;
    const Reconstruction rec = reconstruct(fit, d, opts);
    for (std::size_t i = 0; i < n; ++i)
        REQUIRE(rec.y_est[i] == Catch::Approx(y[i]).margin(1e-8));
}

TEST_CASE("reconstruction is homogeneous under consistent weight scaling") {
    // exact inverse-model data: X = y*omega + B with |omega| > 1 so the
    // inversion is unclamped
    CounterRng rng(14, 0);
    const std::size_t n = 12;
    Vector y(n);
    for (double& v : y) v = rng.normal();
    const Vector omega{1.2, -0.9};
    const Vector bias{0.4, -0.2};
    auto build = [&](double k) {
        Matrix x(n, 2);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t c = 0; c < 2; ++c) x(i, c) = y[i] * omega[c] * k + bias[c];
        return design_of(std::move(x), {ColumnRole::Covariate, ColumnRole::Covariate});
    };
    InverseFit fit1;
    fit1.omega = omega;
    fit1.biases = bias;
    const Reconstruction r1 = reconstruct(fit1, build(1.0));

    const double k = 1.7;
    InverseFit fit2;
    fit2.omega = {omega[0] * k, omega[1] * k};
    fit2.biases = bias;
    const Reconstruction r2 = reconstruct(fit2, build(k));

    REQUIRE_FALSE(r1.clamp_applied);
    REQUIRE_FALSE(r2.clamp_applied);
    for (std::size_t c = 0; c < 2; ++c)
        REQUIRE(r2.theta_tilde[c] == Catch::Approx(r1.theta_tilde[c] / k).epsilon(1e-10));
    for (std::size_t i = 0; i < n; ++i) {
        REQUIRE(r1.y_est[i] == Catch::Approx(y[i]).margin(1e-10));
        REQUIRE(r2.y_est[i] == Catch::Approx(y[i]).margin(1e-10));
    }
}

TEST_CASE("lambda_mix damps covariate components") {
    InverseFit fit;
    fit.omega = {1.5, 0.8};
    fit.biases = {0.0, 0.0};
    Matrix x(5, 2);
    for (std::size_t i = 0; i < 5; ++i) {
        x(i, 0) = i < 3 ? 1.0 : 0.0;
        x(i, 1) = 0.2 * static_cast<double>(i);
    }
    DesignMatrix d = design_of(std::move(x),
                               {ColumnRole::ConditionIndicator, ColumnRole::Covariate});
    d.continuous_condition[0] = 1;
    ReconstructOptions opts;
    opts.lambda_mix = {0.0};
    const Reconstruction rec = reconstruct(fit, d, opts);
    REQUIRE(rec.theta_tilde[1] == 0.0);
    REQUIRE(rec.theta_tilde[0] != 0.0);
    REQUIRE(rec.lambda_mix[1] == 0.0);
    ReconstructOptions bad;
    bad.lambda_mix = {1.5};
    REQUIRE_THROWS_AS(reconstruct(fit, d, bad), ConfigError);
}

TEST_CASE("noiseless sign of the reconstructed contrast follows the true contrast") {
    Matrix base(8, 2);
    for (std::size_t i = 0; i < 8; ++i) {
        base(i, 0) = i < 4 ? 1.0 : 0.0;
        base(i, 1) = 1.0 - base(i, 0);
    }
    for (auto [t1, t2] : {std::pair{2.0, 1.0}, std::pair{1.0, 2.0}}) {
        Matrix x = base;
        const DesignMatrix d = design_of(std::move(x), {ColumnRole::ConditionIndicator,
                                                        ColumnRole::ConditionIndicator});
        Vector y(8);
        for (std::size_t i = 0; i < 8; ++i) y[i] = i < 4 ? t1 : t2;
        const InverseFit fit = fit_inverse(d, Observation{y}, Method::LsIglm);
        const Reconstruction rec = reconstruct(fit, d);
        const double diff = rec.theta_tilde[0] - rec.theta_tilde[1];
        REQUIRE(diff * (t1 - t2) > 0.0);
    }
}

TEST_CASE("svr inverse fit approaches the ls fit in the hard-margin limit") {
    CounterRng rng(23, 0);
    const std::size_t n = 60;
    Matrix x(n, 2);
    Vector y(n);
    for (std::size_t i = 0; i < n; ++i) {
        y[i] = rng.normal();
        x(i, 0) = 0.8 * y[i] + 0.3;          // affine in y: LS and SVR agree exactly
        x(i, 1) = -0.5 * y[i] + 1.0;
    }
    const DesignMatrix d = design_of(std::move(x), {ColumnRole::Covariate,
                                                    ColumnRole::Covariate});
    const Observation obs{y};
    const InverseFit ls = fit_inverse(d, obs, Method::LsIglm);
    const InverseFit sv = fit_inverse(d, obs, Method::SvrIglm, SvrHyper{1e8, 0.0});
    for (std::size_t c = 0; c < 2; ++c) {
        REQUIRE(sv.omega[c] == Catch::Approx(ls.omega[c]).margin(1e-3));
        REQUIRE(sv.biases[c] == Catch::Approx(ls.biases[c]).margin(1e-3));
    }
}

TEST_CASE("classification follows the sign of the task weight") {
    SyntheticSpec spec;
    spec.n = 400;
    spec.block_len = 50;
    spec.cnr = 1e12;  // effectively noiseless
    spec.cv = 0.0;
    const SyntheticDataset ds = generate(spec);
    const InverseFit fit = fit_inverse(ds.design, ds.obs, Method::LsIglm);
    const auto labels = classify(fit, ds.design, ds.obs);

    InverseFit flipped = fit;
    flipped.omega[0] = -flipped.omega[0];
    const auto complement = classify(flipped, ds.design, ds.obs);
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const bool strict = std::abs(ds.obs.values[i] - mean(ds.obs.values)) > 1e-12;
        if (strict) REQUIRE(labels[i] + complement[i] == 1);
    }
}

TEST_CASE("perfectly separated centered observations classify exactly") {
    Matrix x(8, 2);
    for (std::size_t i = 0; i < 8; ++i) {
        x(i, 0) = i < 4 ? 1.0 : 0.0;
        x(i, 1) = 1.0 - x(i, 0);
    }
    const DesignMatrix d = design_of(std::move(x), {ColumnRole::ConditionIndicator,
                                                    ColumnRole::ConditionIndicator});
    Vector y(8);
    for (std::size_t i = 0; i < 8; ++i) y[i] = i < 4 ? 1.0 : -1.0;
    const InverseFit fit = fit_inverse(d, Observation{y}, Method::LsIglm);
    const auto labels = classify(fit, d, Observation{y});
    for (std::size_t i = 0; i < 8; ++i) REQUIRE(labels[i] == (i < 4 ? 1 : 0));
}

TEST_CASE("classify requires a two-condition design") {
    Matrix x(5, 1);
    for (std::size_t i = 0; i < 5; ++i) x(i, 0) = static_cast<double>(i);
    const DesignMatrix d = design_of(std::move(x), {ColumnRole::Covariate});
    InverseFit fit;
    fit.omega = {1.0};
    REQUIRE_THROWS_AS(classify(fit, d, Observation{{1, 2, 3, 4, 5}}), NotBinaryDesign);
}
