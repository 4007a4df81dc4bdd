#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "statmap/errors.hpp"
#include "statmap/matrix.hpp"

namespace statmap {

enum class ColumnRole { ConditionIndicator, Covariate, Nuisance };

enum class Method { OLS, ML, ReML, LsIglm, SvrIglm };

inline std::string to_string(Method m) {
    switch (m) {
        case Method::OLS: return "OLS";
        case Method::ML: return "ML";
        case Method::ReML: return "ReML";
        case Method::LsIglm: return "LS-iGLM";
        case Method::SvrIglm: return "SVR-iGLM";
    }
    return "?";
}

inline Method method_from_string(const std::string& s) {
    if (s == "OLS" || s == "ols") return Method::OLS;
    if (s == "ML" || s == "ml") return Method::ML;
    if (s == "ReML" || s == "reml") return Method::ReML;
    if (s == "LS-iGLM" || s == "ls-iglm") return Method::LsIglm;
    if (s == "SVR-iGLM" || s == "svr-iglm") return Method::SvrIglm;
    throw ConfigError("unknown method: " + s);
}

/// N x M explanatory matrix with per-column semantics.
///
/// `condition_block` lists the columns that encode the experimental
/// condition; permutation tests shuffle exactly these rows jointly and
/// contrasts on conditions address them. It defaults to the indicator
/// columns. `continuous_condition[c]` marks a condition column that holds a
/// continuous regressor (an HRF-convolved indicator), which exempts it from
/// the 0/1 checks.
struct DesignMatrix {
    Matrix x;
    std::vector<ColumnRole> roles;
    std::vector<std::size_t> condition_block;
    std::vector<std::uint8_t> continuous_condition;

    std::size_t n() const { return x.rows; }
    std::size_t m() const { return x.cols; }

    Vector column(std::size_t c) const {
        Vector v(x.rows);
        for (std::size_t i = 0; i < x.rows; ++i) v[i] = x(i, c);
        return v;
    }
};

struct DesignOptions {
    bool standardize_covariates = false;  // zero mean, unit sd per covariate column
};

inline DesignMatrix make_design_matrix(Matrix x, std::vector<ColumnRole> roles,
                                       const DesignOptions& opts = {}) {
    if (roles.size() != x.cols) throw ShapeMismatch("design: one role per column required");
    DesignMatrix d;
    if (opts.standardize_covariates) {
        for (std::size_t c = 0; c < x.cols; ++c) {
            if (roles[c] == ColumnRole::ConditionIndicator) continue;
            double m = 0.0;
            for (std::size_t i = 0; i < x.rows; ++i) m += x(i, c);
            m /= static_cast<double>(x.rows);
            double v = 0.0;
            for (std::size_t i = 0; i < x.rows; ++i) v += (x(i, c) - m) * (x(i, c) - m);
            const double sd = std::sqrt(v / static_cast<double>(x.rows));
            if (sd < 1e-12) throw RankDeficient("design: constant covariate column");
            for (std::size_t i = 0; i < x.rows; ++i) x(i, c) = (x(i, c) - m) / sd;
        }
    }
    d.continuous_condition.assign(x.cols, 0);
    for (std::size_t c = 0; c < roles.size(); ++c)
        if (roles[c] == ColumnRole::ConditionIndicator) d.condition_block.push_back(c);
    d.x = std::move(x);
    d.roles = std::move(roles);
    return d;
}

struct Observation {
    Vector values;
};

struct Contrast {
    Vector weights;
};

/// Error covariance description for the forward fit.
struct NoiseModel {
    enum class Kind { Iid, Known, Components };
    Kind kind = Kind::Iid;
    Matrix known;                    // Kind::Known
    std::vector<Matrix> components;  // Kind::Components

    static NoiseModel iid() { return {}; }
    static NoiseModel with_known(Matrix c) {
        NoiseModel n;
        n.kind = Kind::Known;
        n.known = std::move(c);
        return n;
    }
    static NoiseModel with_components(std::vector<Matrix> q) {
        NoiseModel n;
        n.kind = Kind::Components;
        n.components = std::move(q);
        return n;
    }
};

struct GlmEstimate {
    Vector theta;
    Matrix theta_cov;
    Vector residuals;
    Method method = Method::OLS;
    std::optional<Vector> hyper;  // ReML component weights
};

namespace detail {

/// SPD test with a relative pivot floor; no exception control flow.
inline bool spd_within(const Matrix& a, double rel_tol) {
    const std::size_t n = a.rows;
    double max_diag = 0.0;
    for (std::size_t i = 0; i < n; ++i) max_diag = std::max(max_diag, std::abs(a(i, i)));
    const double floor = rel_tol * std::max(max_diag, 1e-300);
    Matrix l(n, n);
    for (std::size_t j = 0; j < n; ++j) {
        double d = a(j, j);
        for (std::size_t k = 0; k < j; ++k) d -= l(j, k) * l(j, k);
        if (!(d > floor)) return false;
        const double ljj = std::sqrt(d);
        l(j, j) = ljj;
        for (std::size_t i = j + 1; i < n; ++i) {
            double s = a(i, j);
            for (std::size_t k = 0; k < j; ++k) s -= l(i, k) * l(j, k);
            l(i, j) = s / ljj;
        }
    }
    return true;
}

/// X^t Y with both operands over the same rows.
inline Matrix cross(const Matrix& x, const Matrix& y) {
    if (x.rows != y.rows) throw ShapeMismatch("cross: row counts differ");
    Matrix a(x.cols, y.cols);
    for (std::size_t i = 0; i < x.rows; ++i) {
        const double* xr = &x.data[i * x.cols];
        const double* yr = &y.data[i * y.cols];
        for (std::size_t p = 0; p < x.cols; ++p) {
            const double xp = xr[p];
            if (xp == 0.0) continue;
            double* arow = &a.data[p * a.cols];
            for (std::size_t q = 0; q < y.cols; ++q) arow[q] += xp * yr[q];
        }
    }
    return a;
}

}  // namespace detail

/// Check the full invariant set for a (design, observation) pair.
inline void validate(const DesignMatrix& design, const Observation& obs) {
    const std::size_t n = design.n(), m = design.m();
    if (design.roles.size() != m) throw ShapeMismatch("validate: roles length != columns");
    if (obs.values.size() != n) throw ShapeMismatch("validate: observation length != design rows");
    if (n <= m) throw ShapeMismatch("validate: need more rows than columns");
    if (!design.x.all_finite()) throw ShapeMismatch("validate: non-finite design entry");
    for (double v : obs.values)
        if (!std::isfinite(v)) throw ShapeMismatch("validate: non-finite observation");

    bool any_continuous = false;
    std::vector<std::size_t> indicator_cols;
    for (std::size_t c = 0; c < m; ++c) {
        if (design.roles[c] != ColumnRole::ConditionIndicator) continue;
        indicator_cols.push_back(c);
        const bool continuous =
            c < design.continuous_condition.size() && design.continuous_condition[c];
        any_continuous |= continuous;
        if (continuous) continue;
        for (std::size_t i = 0; i < n; ++i) {
            const double v = design.x(i, c);
            if (v != 0.0 && v != 1.0)
                throw IndicatorViolation("validate: indicator column " + std::to_string(c) +
                                         " has entry " + std::to_string(v));
        }
    }
    // Disjoint class membership: rows of indicator columns sum to exactly 1.
    // Needs at least two classes, and is not checkable once a condition
    // column is continuous.
    if (indicator_cols.size() >= 2 && !any_continuous) {
        for (std::size_t i = 0; i < n; ++i) {
            double s = 0.0;
            for (std::size_t c : indicator_cols) s += design.x(i, c);
            if (s != 1.0)
                throw IndicatorViolation("validate: indicator row " + std::to_string(i) +
                                         " sums to " + std::to_string(s));
        }
    }
    if (!detail::spd_within(detail::cross(design.x, design.x), 1e-10))
        throw RankDeficient("validate: design matrix is rank deficient");
}

}  // namespace statmap
