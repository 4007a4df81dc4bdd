#pragma once

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "statmap/errors.hpp"
#include "statmap/model.hpp"
#include "statmap/svr.hpp"

namespace statmap {

struct SvrHyper {
    double C = 1.0;
    double epsilon = 0.1;
};

/// Per-column inverse regression x_{:,c} ~ y*omega_c + b_c.
struct InverseFit {
    Vector omega;
    Vector biases;
    Method regressor = Method::LsIglm;
    std::vector<SvrModel> svr_models;  // per column, on the standardized-target scale
    Vector target_mean, target_sd;     // standardization undone in omega/biases
};

/// Regress every design column on the observation vector. LS columns use the
/// closed-form simple regression; SVR columns run the dual solver with d=1.
/// Without caller hyperparameters, SVR fits standardized targets at C=1,
/// eps=0.1 and maps the coefficients back to the raw column scale.
inline InverseFit fit_inverse(const DesignMatrix& design, const Observation& obs,
                              Method regressor, std::optional<SvrHyper> hyper = {}) {
    validate(design, obs);
    if (regressor != Method::LsIglm && regressor != Method::SvrIglm)
        throw ConfigError("fit_inverse: regressor must be LS-iGLM or SVR-iGLM");
    const std::size_t n = design.n(), m = design.m();
    const Vector& y = obs.values;
    const double ybar = mean(y);
    double yss = 0.0;
    for (double v : y) yss += (v - ybar) * (v - ybar);

    InverseFit fit;
    fit.regressor = regressor;
    fit.omega.assign(m, 0.0);
    fit.biases.assign(m, 0.0);
    fit.target_mean.assign(m, 0.0);
    fit.target_sd.assign(m, 1.0);

    Matrix y_col(n, 1);
    for (std::size_t i = 0; i < n; ++i) y_col(i, 0) = y[i];

    for (std::size_t c = 0; c < m; ++c) {
        Vector xc = design.column(c);
        const double xbar = mean(xc);
        if (regressor == Method::LsIglm) {
            if (yss < 1e-300)
                throw DegenerateVariance("fit_inverse column " + std::to_string(c) +
                                         ": constant observations");
            double cov = 0.0;
            for (std::size_t i = 0; i < n; ++i) cov += (y[i] - ybar) * (xc[i] - xbar);
            fit.omega[c] = cov / yss;
            fit.biases[c] = xbar - fit.omega[c] * ybar;
            continue;
        }
        // SVR route
        double tmean = 0.0, tsd = 1.0;
        Vector targets = xc;
        double C = 1.0, eps = 0.1;
        if (hyper) {
            C = hyper->C;
            eps = hyper->epsilon;
        } else {
            tmean = xbar;
            double v = 0.0;
            for (double t : xc) v += (t - xbar) * (t - xbar);
            tsd = std::sqrt(v / static_cast<double>(n));
            if (tsd < 1e-12) {
                // constant column: flat regression, no model to solve
                fit.omega[c] = 0.0;
                fit.biases[c] = xbar;
                fit.target_mean[c] = tmean;
                fit.target_sd[c] = 0.0;
                fit.svr_models.emplace_back();
                continue;
            }
            for (double& t : targets) t = (t - tmean) / tsd;
        }
        try {
            SvrModel model = svr_fit(y_col, targets, C, eps);
            fit.omega[c] = tsd * model.w[0];
            fit.biases[c] = tsd * model.b + tmean;
            fit.target_mean[c] = tmean;
            fit.target_sd[c] = tsd;
            fit.svr_models.push_back(std::move(model));
        } catch (const MaxIterations& e) {
            throw MaxIterations("fit_inverse column " + std::to_string(c) + ": " + e.what());
        } catch (const NonFinite& e) {
            throw NonFinite("fit_inverse column " + std::to_string(c) + ": " + e.what());
        }
    }
    return fit;
}

struct Reconstruction {
    Vector theta_tilde;
    Vector y_est;
    bool clamp_applied = false;
    Vector lambda_mix;  // resolved per-column mixing (1 outside covariates)
};

struct ReconstructOptions {
    Vector lambda_mix;  // one scalar in [0,1] per covariate column; default 1
    bool rescale = false;
    const Observation* rescale_target = nullptr;
};

/// Map the inverse-regression weights back to GLM parameters:
/// s = (omega omega^t)^-1 clamped into [-1,1], theta = omega^t s,
/// y_est = (X - B) theta with the bias row repeated. Covariate components
/// can be damped by lambda_mix. With `rescale`, a final scalar k minimizing
/// ||y - k y_est|| restores the observation scale that clamping and the
/// per-column biases take away.
inline Reconstruction reconstruct(const InverseFit& fit, const DesignMatrix& design,
                                  const ReconstructOptions& opts = {}) {
    const std::size_t n = design.n(), m = design.m();
    if (fit.omega.size() != m) throw ShapeMismatch("reconstruct: fit/design size mismatch");
    const double norm2 = dot(fit.omega, fit.omega);
    if (norm2 < 1e-14) throw ZeroNorm("reconstruct: omega norm too small to invert");

    Reconstruction rec;
    double s = 1.0 / norm2;
    if (s > 1.0) {
        s = 1.0;
        rec.clamp_applied = true;
    } else if (s < -1.0) {  // unreachable with omega omega^t >= 0; kept as written
        s = -1.0;
        rec.clamp_applied = true;
    }

    rec.lambda_mix.assign(m, 1.0);
    std::size_t cov_idx = 0;
    for (std::size_t c = 0; c < m; ++c) {
        if (design.roles[c] == ColumnRole::ConditionIndicator) continue;
        double lam = 1.0;
        if (cov_idx < opts.lambda_mix.size()) lam = opts.lambda_mix[cov_idx];
        if (lam < 0.0 || lam > 1.0)
            throw ConfigError("reconstruct: lambda_mix outside [0,1]");
        rec.lambda_mix[c] = lam;
        ++cov_idx;
    }

    rec.theta_tilde.assign(m, 0.0);
    for (std::size_t c = 0; c < m; ++c) rec.theta_tilde[c] = fit.omega[c] * s * rec.lambda_mix[c];

    rec.y_est.assign(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        double v = 0.0;
        for (std::size_t c = 0; c < m; ++c)
            v += (design.x(i, c) - fit.biases[c]) * rec.theta_tilde[c];
        rec.y_est[i] = v;
    }

    if (opts.rescale) {
        if (opts.rescale_target == nullptr)
            throw ConfigError("reconstruct: rescale needs the observation vector");
        const Vector& y = opts.rescale_target->values;
        if (y.size() != n) throw ShapeMismatch("reconstruct: rescale target length");
        const double denom = dot(rec.y_est, rec.y_est);
        if (denom > 1e-300) {
            const double k = dot(y, rec.y_est) / denom;
            for (double& v : rec.theta_tilde) v *= k;
            for (double& v : rec.y_est) v *= k;
        }
    }
    return rec;
}

/// Label each scan by the sign of the task-column weight applied to the
/// centered observation. Requires a two-condition design; the first column
/// of the condition block is the task.
inline std::vector<int> classify(const InverseFit& fit, const DesignMatrix& design,
                                 const Observation& obs) {
    if (design.condition_block.size() != 2)
        throw NotBinaryDesign("classify: needs exactly two condition columns");
    const std::size_t task = design.condition_block[0];
    if (task >= fit.omega.size()) throw ShapeMismatch("classify: fit/design size mismatch");
    const double w = fit.omega[task];
    const double ybar = mean(obs.values);
    std::vector<int> labels(obs.values.size(), 0);
    for (std::size_t i = 0; i < labels.size(); ++i)
        labels[i] = (w * (obs.values[i] - ybar) > 0.0) ? 1 : 0;
    return labels;
}

}  // namespace statmap
