#pragma once

#include <algorithm>
#include <cmath>

#include "statmap/matrix.hpp"
#include "statmap/model.hpp"

namespace statmap {

/// theta = argmin ||y - X theta||^2; covariance sigma^2 (X^t X)^-1 with the
/// unbiased residual variance sigma^2 = RSS/(N-M).
inline GlmEstimate ols_fit(const DesignMatrix& design, const Observation& obs) {
    validate(design, obs);
    const Matrix& x = design.x;
    const Matrix a = detail::cross(x, x);
    const Vector xty = multiply_transposed(x, obs.values);
    Cholesky chol(a, /*check_symmetry=*/false);
    GlmEstimate est;
    est.method = Method::OLS;
    est.theta = chol.solve(xty);
    est.residuals = obs.values;
    const Vector fitted = multiply(x, est.theta);
    for (std::size_t i = 0; i < est.residuals.size(); ++i) est.residuals[i] -= fitted[i];
    const double rss = dot(est.residuals, est.residuals);
    const double sigma2 = rss / static_cast<double>(x.rows - x.cols);
    est.theta_cov = chol.solve(Matrix::identity(x.cols));
    for (double& v : est.theta_cov.data) v *= sigma2;
    return est;
}

/// Generalized least squares with a known SPD error covariance:
/// theta = (X^t C^-1 X)^-1 X^t C^-1 y, Cov(theta) = (X^t C^-1 X)^-1.
inline GlmEstimate ml_fit(const DesignMatrix& design, const Observation& obs,
                          const Matrix& error_cov) {
    validate(design, obs);
    if (error_cov.rows != design.n() || error_cov.cols != design.n())
        throw ShapeMismatch("ml_fit: covariance size != N");
    const Matrix& x = design.x;
    const Cholesky cfac(error_cov);
    const Matrix z = cfac.solve(x);  // C^-1 X
    const Matrix a = detail::cross(x, z);
    const Vector zty = multiply_transposed(z, obs.values);
    Cholesky achol(a, /*check_symmetry=*/false);
    GlmEstimate est;
    est.method = Method::ML;
    est.theta = achol.solve(zty);
    est.residuals = obs.values;
    const Vector fitted = multiply(x, est.theta);
    for (std::size_t i = 0; i < est.residuals.size(); ++i) est.residuals[i] -= fitted[i];
    est.theta_cov = achol.solve(Matrix::identity(x.cols));
    return est;
}

inline GlmEstimate ml_fit(const DesignMatrix& design, const Observation& obs,
                          const NoiseModel& noise) {
    if (noise.kind == NoiseModel::Kind::Known) return ml_fit(design, obs, noise.known);
    if (noise.kind == NoiseModel::Kind::Iid)
        return ml_fit(design, obs, Matrix::identity(design.n()));
    throw ConfigError("ml_fit: needs a known covariance; use reml_fit for components");
}

struct RemlResult {
    GlmEstimate estimate;
    Vector lambdas;
    std::size_t iterations = 0;
    bool converged = false;
};

namespace detail {

constexpr double kLambdaFloor = 1e-12;

inline bool all_diagonal(const std::vector<Matrix>& qs) {
    for (const Matrix& q : qs)
        for (std::size_t i = 0; i < q.rows; ++i)
            for (std::size_t j = 0; j < q.cols; ++j)
                if (i != j && q(i, j) != 0.0) return false;
    return true;
}

struct RemlStep {
    Vector gradient;
    Matrix information;
    Vector theta;
    Matrix a_inv;
    bool spd = true;
};

/// Fisher-scoring quantities for diagonal components; O(N M^2) per call.
/// P' = C^-1 - C^-1 X A^-1 X^t C^-1 with A = X^t C^-1 X and diagonal C.
inline RemlStep reml_step_diagonal(const Matrix& x, const Vector& y,
                                   const std::vector<Vector>& qdiag, const Vector& lambda) {
    const std::size_t n = x.rows, m = x.cols, nk = qdiag.size();
    RemlStep out;
    Vector c(n, 0.0);
    for (std::size_t k = 0; k < nk; ++k)
        for (std::size_t i = 0; i < n; ++i) c[i] += lambda[k] * qdiag[k][i];
    for (double v : c)
        if (!(v > 0.0)) {
            out.spd = false;
            return out;
        }
    Vector d(n);
    for (std::size_t i = 0; i < n; ++i) d[i] = 1.0 / c[i];

    Matrix xd = x;  // rows scaled by 1/c_i
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < m; ++j) xd(i, j) *= d[i];
    const Matrix a = cross(x, xd);
    if (!spd_within(a, 1e-13)) {
        out.spd = false;
        return out;
    }
    Cholesky achol(a, false);
    out.a_inv = achol.solve(Matrix::identity(m));
    out.theta = achol.solve(multiply_transposed(xd, y));

    Vector rp = y;  // P' y = D (y - X theta)
    const Vector fitted = multiply(x, out.theta);
    for (std::size_t i = 0; i < n; ++i) rp[i] = d[i] * (rp[i] - fitted[i]);

    // leverage-like terms s_ii = x_i^t A^-1 x_i
    Vector s(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t p = 0; p < m; ++p) {
            double acc = 0.0;
            for (std::size_t q = 0; q < m; ++q) acc += out.a_inv(p, q) * x(i, q);
            s[i] += x(i, p) * acc;
        }
    }

    std::vector<Matrix> g(nk);  // G_k = X^t D Q_k D X
    for (std::size_t k = 0; k < nk; ++k) {
        Matrix xk = x;
        for (std::size_t i = 0; i < n; ++i) {
            const double w = d[i] * d[i] * qdiag[k][i];
            for (std::size_t j = 0; j < m; ++j) xk(i, j) *= w;
        }
        g[k] = cross(x, xk);
    }

    out.gradient.assign(nk, 0.0);
    out.information = Matrix(nk, nk);
    for (std::size_t k = 0; k < nk; ++k) {
        double tr_pq = 0.0, quad = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            tr_pq += qdiag[k][i] * d[i];
            quad += qdiag[k][i] * rp[i] * rp[i];
        }
        double tr_ag = 0.0;
        for (std::size_t p = 0; p < m; ++p)
            for (std::size_t q = 0; q < m; ++q) tr_ag += out.a_inv(p, q) * g[k](q, p);
        tr_pq -= tr_ag;
        out.gradient[k] = -0.5 * tr_pq + 0.5 * quad;
        for (std::size_t l = 0; l <= k; ++l) {
            double diag_part = 0.0;
            for (std::size_t i = 0; i < n; ++i)
                diag_part += qdiag[k][i] * qdiag[l][i] * d[i] * d[i] * (1.0 - 2.0 * d[i] * s[i]);
            const Matrix ag_k = multiply(out.a_inv, g[k]);
            const Matrix ag_l = multiply(out.a_inv, g[l]);
            double tr2 = 0.0;
            for (std::size_t p = 0; p < m; ++p)
                for (std::size_t q = 0; q < m; ++q) tr2 += ag_k(p, q) * ag_l(q, p);
            const double val = 0.5 * (diag_part + tr2);
            out.information(k, l) = val;
            out.information(l, k) = val;
        }
    }
    return out;
}

/// Dense-component Fisher scoring quantities; O(K N^3) per call, meant for
/// modest N (banded AR bases in unit-scale problems).
inline RemlStep reml_step_dense(const Matrix& x, const Vector& y, const std::vector<Matrix>& qs,
                                const Vector& lambda) {
    const std::size_t n = x.rows, m = x.cols, nk = qs.size();
    RemlStep out;
    Matrix c(n, n);
    for (std::size_t k = 0; k < nk; ++k)
        for (std::size_t i = 0; i < c.data.size(); ++i) c.data[i] += lambda[k] * qs[k].data[i];
    if (!spd_within(c, 1e-13)) {
        out.spd = false;
        return out;
    }
    Cholesky cchol(c, false);
    const Matrix z = cchol.solve(x);
    const Matrix a = cross(x, z);
    if (!spd_within(a, 1e-13)) {
        out.spd = false;
        return out;
    }
    Cholesky achol(a, false);
    out.a_inv = achol.solve(Matrix::identity(m));
    out.theta = achol.solve(multiply_transposed(z, y));

    Vector resid = y;
    const Vector fitted = multiply(x, out.theta);
    for (std::size_t i = 0; i < n; ++i) resid[i] -= fitted[i];
    const Vector py = cchol.solve(resid);  // P' y

    // P' = C^-1 - Z A^-1 Z^t
    const Matrix ci = cchol.solve(Matrix::identity(n));
    const Matrix za = multiply(z, out.a_inv);
    Matrix p = ci;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            double s = 0.0;
            for (std::size_t k = 0; k < m; ++k) s += za(i, k) * z(j, k);
            p(i, j) -= s;
        }

    std::vector<Matrix> pq(nk);
    for (std::size_t k = 0; k < nk; ++k) pq[k] = multiply(p, qs[k]);

    out.gradient.assign(nk, 0.0);
    out.information = Matrix(nk, nk);
    for (std::size_t k = 0; k < nk; ++k) {
        const Vector qpy = multiply(qs[k], py);
        out.gradient[k] = -0.5 * trace(pq[k]) + 0.5 * dot(py, qpy);
        for (std::size_t l = 0; l <= k; ++l) {
            double tr = 0.0;
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t j = 0; j < n; ++j) tr += pq[k](i, j) * pq[l](j, i);
            out.information(k, l) = 0.5 * tr;
            out.information(l, k) = 0.5 * tr;
        }
    }
    return out;
}

}  // namespace detail

/// Restricted ML over covariance component weights by Fisher scoring.
/// Components that are all diagonal run through an O(N M^2) path, so the
/// default iid basis stays cheap inside permutation loops.
inline RemlResult reml_fit(const DesignMatrix& design, const Observation& obs,
                           const std::vector<Matrix>& components, std::size_t max_iter = 64) {
    validate(design, obs);
    if (components.empty()) throw ConfigError("reml_fit: needs at least one component");
    const std::size_t n = design.n(), nk = components.size();
    for (const Matrix& q : components)
        if (q.rows != n || q.cols != n) throw ShapeMismatch("reml_fit: component size != N");

    const bool diagonal = detail::all_diagonal(components);
    std::vector<Vector> qdiag;
    if (diagonal) {
        qdiag.resize(nk);
        for (std::size_t k = 0; k < nk; ++k) {
            qdiag[k].resize(n);
            for (std::size_t i = 0; i < n; ++i) qdiag[k][i] = components[k](i, i);
        }
    }

    // Start from the OLS residual variance spread across positive-trace
    // components; zero-trace components (pure off-diagonal bases) start at 0.
    const GlmEstimate ols = ols_fit(design, obs);
    const double s2 =
        dot(ols.residuals, ols.residuals) / static_cast<double>(design.n() - design.m());
    Vector lambda(nk, detail::kLambdaFloor);
    std::size_t positive = 0;
    for (const Matrix& q : components)
        if (trace(q) > 0.0) ++positive;
    for (std::size_t k = 0; k < nk; ++k) {
        const double tr = trace(components[k]);
        if (tr > 0.0)
            lambda[k] = std::max(detail::kLambdaFloor,
                                 s2 * static_cast<double>(n) /
                                     (static_cast<double>(positive) * tr));
    }

    RemlResult result;
    result.converged = false;
    auto step_at = [&](const Vector& lam) {
        return diagonal ? detail::reml_step_diagonal(design.x, obs.values, qdiag, lam)
                        : detail::reml_step_dense(design.x, obs.values, components, lam);
    };

    detail::RemlStep step = step_at(lambda);
    if (!step.spd) throw Diverged("reml_fit: initial component mix is not positive definite");

    for (std::size_t it = 1; it <= max_iter; ++it) {
        result.iterations = it;
        // delta = I^-1 g, ridged if the information matrix is near singular
        Matrix info = step.information;
        for (std::size_t r = 0; r < 40 && !detail::spd_within(info, 1e-13); ++r)
            for (std::size_t k = 0; k < nk; ++k) info(k, k) += std::max(1e-12, 1e-8 * info(k, k));
        Vector delta = Cholesky(info, false).solve(step.gradient);

        Vector lam_new(nk);
        detail::RemlStep next;
        bool ok = false;
        double scale = 1.0;
        for (int bt = 0; bt < 32; ++bt, scale *= 0.5) {
            for (std::size_t k = 0; k < nk; ++k)
                lam_new[k] = std::max(detail::kLambdaFloor, lambda[k] + scale * delta[k]);
            next = step_at(lam_new);
            if (next.spd) {
                ok = true;
                break;
            }
        }
        if (!ok) throw Diverged("reml_fit: backtracking failed to restore positive definiteness");

        double dnorm = 0.0, lnorm = 0.0;
        for (std::size_t k = 0; k < nk; ++k) {
            dnorm += (lam_new[k] - lambda[k]) * (lam_new[k] - lambda[k]);
            lnorm += lam_new[k] * lam_new[k];
        }
        lambda = lam_new;
        step = std::move(next);
        if (std::sqrt(dnorm) <= 1e-6 * std::max(std::sqrt(lnorm), 1e-300)) {
            result.converged = true;
            break;
        }
    }

    result.lambdas = lambda;
    GlmEstimate est;
    est.method = Method::ReML;
    est.theta = step.theta;
    est.theta_cov = step.a_inv;
    est.residuals = obs.values;
    const Vector fitted = multiply(design.x, est.theta);
    for (std::size_t i = 0; i < est.residuals.size(); ++i) est.residuals[i] -= fitted[i];
    est.hyper = lambda;
    result.estimate = std::move(est);
    return result;
}

/// T = c^t theta / sqrt(c^t Cov(theta) c).
inline double t_statistic(const GlmEstimate& est, const Contrast& c) {
    if (c.weights.size() != est.theta.size())
        throw DimensionMismatch("t_statistic: contrast length != parameter count");
    const Vector cov_c = multiply(est.theta_cov, c.weights);
    const double denom2 = dot(c.weights, cov_c);
    const double denom = denom2 > 0.0 ? std::sqrt(denom2) : 0.0;
    if (denom <= 1e-14) throw DegenerateVariance("t_statistic: contrast variance is degenerate");
    return dot(c.weights, est.theta) / denom;
}

}  // namespace statmap
