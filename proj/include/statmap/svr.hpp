#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "statmap/errors.hpp"
#include "statmap/matrix.hpp"

namespace statmap {

/// Linear epsilon-insensitive SVR model. `alphas` holds the signed dual
/// coefficients beta_i = alpha_i - alpha_i^*, so w = sum_i beta_i * input_i.
struct SvrModel {
    Vector w;
    double b = 0.0;
    Vector alphas;
    double C = 1.0;
    double epsilon = 0.1;
};

namespace svr_detail {

inline double row_dot(const Matrix& inputs, std::size_t i, const Vector& w) {
    const double* row = &inputs.data[i * inputs.cols];
    double s = 0.0;
    for (std::size_t j = 0; j < inputs.cols; ++j) s += row[j] * w[j];
    return s;
}

inline double row_row_dot(const Matrix& inputs, std::size_t i, std::size_t j) {
    const double* a = &inputs.data[i * inputs.cols];
    const double* b = &inputs.data[j * inputs.cols];
    double s = 0.0;
    for (std::size_t k = 0; k < inputs.cols; ++k) s += a[k] * b[k];
    return s;
}

}  // namespace svr_detail

/// Mean over free support vectors (0 < |beta_i| < C) of the margin identity
/// b = x_i - eps*sign(beta_i) - w.u_i; a free coefficient pins the prediction
/// on the tube edge, eps below the target on the beta>0 side. Without free
/// coefficients, falls back to the midpoint of the KKT-feasible bias interval.
inline double bias_from_margin(const Matrix& inputs, const Vector& targets, const Vector& w,
                               double epsilon, const Vector& alphas,
                               double box = std::numeric_limits<double>::infinity()) {
    const std::size_t n = targets.size();
    double sum_b = 0.0;
    std::size_t free_count = 0;
    double cap = 0.0;
    for (double a : alphas) cap = std::max(cap, std::abs(a));
    // free means strictly inside the box; with no box given every nonzero
    // coefficient sits on the margin
    const double upper = std::isfinite(box) ? box * (1.0 - 1e-7)
                                            : std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < n; ++i) {
        const double beta = alphas[i];
        const double mag = std::abs(beta);
        if (mag > 1e-9 * std::max(cap, 1.0) && mag < upper) {
            const double sgn = beta > 0.0 ? 1.0 : -1.0;
            sum_b += targets[i] - epsilon * sgn - svr_detail::row_dot(inputs, i, w);
            ++free_count;
        }
    }
    if (free_count > 0) return sum_b / static_cast<double>(free_count);

    double lo = -std::numeric_limits<double>::infinity();
    double hi = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < n; ++i) {
        const double r = targets[i] - svr_detail::row_dot(inputs, i, w);
        const double beta = alphas[i];
        if (std::abs(beta) <= 1e-9 * std::max(cap, 1.0)) {
            lo = std::max(lo, r - epsilon);
            hi = std::min(hi, r + epsilon);
        } else if (beta > 0.0) {
            hi = std::min(hi, r - epsilon);
        } else {
            lo = std::max(lo, r + epsilon);
        }
    }
    if (!std::isfinite(lo) && !std::isfinite(hi)) return 0.0;
    if (!std::isfinite(lo)) return hi;
    if (!std::isfinite(hi)) return lo;
    return 0.5 * (lo + hi);
}

/// Solve the epsilon-insensitive SVR dual by sequential minimal optimization
/// over maximal-KKT-violating pairs. Linear kernel only; the weight vector is
/// carried through the iterations so one selection sweep costs O(N d).
/// Deterministic: identical inputs give identical models bit for bit.
inline SvrModel svr_fit(const Matrix& inputs, const Vector& targets, double C, double epsilon) {
    const std::size_t n = targets.size();
    const std::size_t d = inputs.cols;
    if (inputs.rows != n) throw DimensionMismatch("svr_fit: inputs rows != targets length");
    if (n < 2) throw InvalidSize("svr_fit: need at least two samples");
    if (!(C > 0.0) || !(epsilon >= 0.0)) throw InvalidSize("svr_fit: need C > 0 and epsilon >= 0");
    if (!inputs.all_finite()) throw NonFinite("svr_fit: non-finite input");
    for (double t : targets)
        if (!std::isfinite(t)) throw NonFinite("svr_fit: non-finite target");

    // 2N box variables: z[t] = alpha_t for t < N (sign +1), alpha*_{t-N}
    // (sign -1) otherwise. Equality constraint sum_t sign_t z_t = 0.
    std::vector<double> z(2 * n, 0.0);
    Vector w(d, 0.0);
    const std::uint64_t max_iter = static_cast<std::uint64_t>(100000) * n;
    // stop two orders tighter than the guaranteed KKT bound of 1e-6*C so the
    // dual objective lands within ~1e-8 of the optimum
    const double tol = std::clamp(1e-8 * C, 1e-13, 1e-6);

    auto sign_of = [n](std::size_t t) { return t < n ? 1.0 : -1.0; };
    auto sample_of = [n](std::size_t t) { return t < n ? t : t - n; };

    std::uint64_t iter = 0;
    for (;; ++iter) {
        if (iter >= max_iter) throw MaxIterations("svr_fit: KKT tolerance unmet after cap");
        // Maximal violating pair over v_t = -sign_t * G_t: the largest v
        // among coordinates whose sign_t*z_t can still grow, against the
        // smallest among those that can shrink.
        double best_up = -std::numeric_limits<double>::infinity();
        double best_low = std::numeric_limits<double>::infinity();
        std::size_t up = 2 * n, low = 2 * n;
        for (std::size_t t = 0; t < 2 * n; ++t) {
            const std::size_t i = sample_of(t);
            const double ysign = sign_of(t);
            const double grad = ysign * svr_detail::row_dot(inputs, i, w) + epsilon -
                                ysign * targets[i];
            const double v = -ysign * grad;
            const bool can_up = ysign > 0.0 ? z[t] < C : z[t] > 0.0;
            const bool can_down = ysign > 0.0 ? z[t] > 0.0 : z[t] < C;
            if (can_up && v > best_up) {
                best_up = v;
                up = t;
            }
            if (can_down && v < best_low) {
                best_low = v;
                low = t;
            }
        }
        if (up == 2 * n || low == 2 * n || best_up - best_low <= tol) break;

        const std::size_t iu = sample_of(up), il = sample_of(low);
        const double su = sign_of(up), sl = sign_of(low);
        const double quad = svr_detail::row_row_dot(inputs, iu, iu) +
                            svr_detail::row_row_dot(inputs, il, il) -
                            2.0 * svr_detail::row_row_dot(inputs, iu, il);
        // Move z_up by su*delta and z_low by -sl*delta: the equality
        // constraint is preserved and w changes by delta*(u_up - u_low).
        double delta = (best_up - best_low) / std::max(quad, 1e-12);
        delta = std::min(delta, su > 0.0 ? C - z[up] : z[up]);
        delta = std::min(delta, sl > 0.0 ? z[low] : C - z[low]);
        z[up] = std::clamp(z[up] + su * delta, 0.0, C);
        z[low] = std::clamp(z[low] - sl * delta, 0.0, C);
        for (std::size_t k = 0; k < d; ++k)
            w[k] += delta * (inputs(iu, k) - inputs(il, k));
    }

    SvrModel model;
    model.C = C;
    model.epsilon = epsilon;
    model.alphas.assign(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) model.alphas[i] = z[i] - z[n + i];
    model.w.assign(d, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        const double beta = model.alphas[i];
        if (beta == 0.0) continue;
        for (std::size_t k = 0; k < d; ++k) model.w[k] += beta * inputs(i, k);
    }
    model.b = bias_from_margin(inputs, targets, model.w, epsilon, model.alphas, C);
    return model;
}

inline double svr_predict(const SvrModel& model, const Vector& input) {
    if (input.size() != model.w.size())
        throw DimensionMismatch("svr_predict: input dimension != model dimension");
    return dot(model.w, input) + model.b;
}

}  // namespace statmap
