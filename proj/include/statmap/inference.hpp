#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <thread>
#include <vector>

#include "statmap/errors.hpp"
#include "statmap/glm.hpp"
#include "statmap/iglm.hpp"
#include "statmap/model.hpp"
#include "statmap/rng.hpp"
#include "statmap/special.hpp"
#include "statmap/volume.hpp"

namespace statmap {

// --- permutation testing ------------------------------------------------

struct PermutationResult {
    double observed = 0.0;
    Vector null_samples;
    double p_value = 1.0;
    std::size_t K = 0;
    std::uint64_t seed = 0;
    std::size_t failed = 0;  // permutations whose refit failed (scored +inf)
};

struct PermutationOptions {
    NoiseModel noise;  // ML: Known (or iid); ReML: Components (default {I})
    std::optional<SvrHyper> svr_hyper;
    std::size_t workers = 1;
};

namespace perm_detail {

/// Contrast of the method's estimate; the permutation statistic needs no
/// denominator. OLS and ML share the cross/solve kernels, so ML with C = I
/// reproduces OLS bit for bit.
struct StatContext {
    const DesignMatrix& base;
    const Observation& obs;
    Method method;
    const Contrast& contrast;
    const PermutationOptions& opts;
    std::optional<Cholesky> known_factor;
    std::vector<Matrix> reml_components;

    StatContext(const DesignMatrix& d, const Observation& o, Method m, const Contrast& c,
                const PermutationOptions& po)
        : base(d), obs(o), method(m), contrast(c), opts(po) {
        if (m == Method::ML && po.noise.kind == NoiseModel::Kind::Known)
            known_factor.emplace(po.noise.known);
        if (m == Method::ReML) {
            if (po.noise.kind == NoiseModel::Kind::Components)
                reml_components = po.noise.components;
            else
                reml_components.push_back(Matrix::identity(d.n()));
        }
    }

    double evaluate(const DesignMatrix& design) const {
        switch (method) {
            case Method::OLS: {
                const Matrix a = detail::cross(design.x, design.x);
                const Vector v = multiply_transposed(design.x, obs.values);
                return dot(contrast.weights, Cholesky(a, false).solve(v));
            }
            case Method::ML: {
                Matrix z = known_factor ? known_factor->solve(design.x) : design.x;
                const Matrix a = detail::cross(design.x, z);
                const Vector v = multiply_transposed(z, obs.values);
                return dot(contrast.weights, Cholesky(a, false).solve(v));
            }
            case Method::ReML: {
                const RemlResult r = reml_fit(design, obs, reml_components);
                return dot(contrast.weights, r.estimate.theta);
            }
            case Method::LsIglm:
            case Method::SvrIglm: {
                const InverseFit fit = fit_inverse(design, obs, method, opts.svr_hyper);
                const Reconstruction rec = reconstruct(fit, design);
                return dot(contrast.weights, rec.theta_tilde);
            }
        }
        throw ConfigError("permutation_test: unknown method");
    }
};

inline DesignMatrix permute_conditions(const DesignMatrix& base,
                                       const std::vector<std::size_t>& perm) {
    DesignMatrix d = base;  // covariates stay attached to their observations
    for (std::size_t c : base.condition_block)
        for (std::size_t i = 0; i < base.n(); ++i) d.x(i, c) = base.x(perm[i], c);
    return d;
}

}  // namespace perm_detail

/// Permute the condition-column rows jointly K times, refit, and rank the
/// observed contrast in the permutation distribution. One-sided p with the
/// +1 correction: p = (1 + #{null >= observed}) / (K + 1). Permutation k
/// draws from stream (seed, k), so any worker schedule gives identical
/// results.
inline PermutationResult permutation_test(const DesignMatrix& design, const Observation& obs,
                                          Method method, const Contrast& contrast, std::size_t K,
                                          std::uint64_t seed,
                                          const PermutationOptions& opts = {}) {
    validate(design, obs);
    if (K < 1) throw ConfigError("permutation_test: K must be >= 1");
    if (design.condition_block.empty())
        throw ConfigError("permutation_test: design has no condition columns");
    if (contrast.weights.size() != design.m())
        throw DimensionMismatch("permutation_test: contrast length != design columns");

    perm_detail::StatContext ctx(design, obs, method, contrast, opts);

    PermutationResult result;
    result.K = K;
    result.seed = seed;
    result.observed = ctx.evaluate(design);
    result.null_samples.assign(K, 0.0);

    std::vector<std::uint8_t> failed(K, 0);
    auto run_range = [&](std::size_t first, std::size_t step) {
        for (std::size_t k = first; k < K; k += step) {
            CounterRng rng(seed, stream_id(StreamPurpose::Permutation, k));
            const std::vector<std::size_t> perm = rng.permutation(design.n());
            const DesignMatrix permuted = perm_detail::permute_conditions(design, perm);
            try {
                result.null_samples[k] = ctx.evaluate(permuted);
            } catch (const Error&) {
                result.null_samples[k] = std::numeric_limits<double>::infinity();
                failed[k] = 1;
            }
        }
    };

    const std::size_t workers = std::max<std::size_t>(1, opts.workers);
    if (workers == 1) {
        run_range(0, 1);
    } else {
        std::vector<std::thread> pool;
        for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(run_range, w, workers);
        for (auto& th : pool) th.join();
    }

    std::size_t exceed = 0;
    for (double v : result.null_samples) exceed += (v >= result.observed) ? 1 : 0;
    for (auto f : failed) result.failed += f ? 1 : 0;
    result.p_value = static_cast<double>(1 + exceed) / static_cast<double>(K + 1);
    return result;
}

// --- random field theory --------------------------------------------------

struct RftSpec {
    Vector resels;  // [R0, R1, R2, R3]
    double df = 0.0;
    enum class Field { Gaussian, T } field_type = Field::Gaussian;
};

/// Euler characteristic density of dimension d at threshold u (Worsley's
/// closed forms for unit-variance Gaussian and Student-T fields).
inline double ec_density(std::size_t d, double u, const RftSpec& spec) {
    static const double ln2x4 = 4.0 * std::log(2.0);
    const double two_pi = 2.0 * M_PI;
    if (spec.field_type == RftSpec::Field::Gaussian) {
        const double e = std::exp(-0.5 * u * u);
        switch (d) {
            case 0: return normal_upper_tail(u);
            case 1: return std::sqrt(ln2x4) / two_pi * e;
            case 2: return ln2x4 / std::pow(two_pi, 1.5) * u * e;
            case 3: return std::pow(ln2x4, 1.5) / (two_pi * two_pi) * (u * u - 1.0) * e;
        }
    } else {
        const double v = spec.df;
        const double base = std::pow(1.0 + u * u / v, -0.5 * (v - 1.0));
        const double c2 = std::exp(std::lgamma(0.5 * (v + 1.0)) - std::lgamma(0.5 * v)) /
                          std::sqrt(0.5 * v);
        switch (d) {
            case 0: return student_t_upper_tail(u, v);
            case 1: return std::sqrt(ln2x4) / two_pi * base;
            case 2: return ln2x4 / std::pow(two_pi, 1.5) * c2 * u * base;
            case 3:
                return std::pow(ln2x4, 1.5) / (two_pi * two_pi) *
                       ((v - 1.0) / v * u * u - 1.0) * base;
        }
    }
    throw InvalidSize("ec_density: dimension must be 0..3");
}

inline double expected_ec(double u, const RftSpec& spec) {
    double s = 0.0;
    for (std::size_t d = 0; d < spec.resels.size() && d < 4; ++d)
        if (spec.resels[d] != 0.0) s += spec.resels[d] * ec_density(d, u, spec);
    return s;
}

struct RftOptions {
    std::size_t voxel_count = 0;   // enables the Bonferroni cap when > 0
    bool bonferroni_cap = true;
};

/// Smallest u with expected EC <= alpha (bisection to 1e-6), floored at the
/// uncorrected quantile and optionally capped at the Bonferroni threshold.
inline double rft_voxel_threshold(const RftSpec& spec, double alpha,
                                  const RftOptions& opts = {}) {
    if (!(alpha > 0.0 && alpha < 1.0))
        throw ConfigError("rft_voxel_threshold: alpha outside (0,1)");
    if (spec.resels.empty() || spec.resels[0] < 1.0)
        throw ConfigError("rft_voxel_threshold: R0 must be >= 1");
    for (double r : spec.resels)
        if (r < 0.0) throw ConfigError("rft_voxel_threshold: negative resel count");
    if (spec.field_type == RftSpec::Field::T && !(spec.df > 0.0))
        throw ConfigError("rft_voxel_threshold: T field needs df > 0");

    const bool t_field = spec.field_type == RftSpec::Field::T;
    const double uncorrected = t_field ? student_t_upper_quantile(alpha, spec.df)
                                       : normal_quantile(1.0 - alpha);

    double u;
    if (expected_ec(uncorrected, spec) <= alpha) {
        u = uncorrected;  // floor: never below the single-test quantile
    } else {
        double hi = 50.0;
        if (expected_ec(hi, spec) > alpha)
            throw Unsolvable("rft_voxel_threshold: expected EC exceeds alpha at u=50");
        double lo = uncorrected;
        while (hi - lo > 1e-6) {
            const double mid = 0.5 * (lo + hi);
            if (expected_ec(mid, spec) <= alpha)
                hi = mid;
            else
                lo = mid;
        }
        u = hi;
    }

    if (opts.voxel_count > 0 && opts.bonferroni_cap) {
        const double a_bonf = alpha / static_cast<double>(opts.voxel_count);
        const double u_bonf = t_field ? student_t_upper_quantile(a_bonf, spec.df)
                                      : normal_quantile(1.0 - a_bonf);
        u = std::min(u, u_bonf);
    }
    return u;
}

// --- smoothness and resolution elements ------------------------------------

/// Per-axis FWHM from the variance of normalized residual spatial
/// derivatives. The mean squared forward difference lambda of a
/// unit-variance field gives the lag-1 autocorrelation rho = 1 - lambda/2;
/// a Gaussian autocorrelation model turns rho into FWHM, floored at one
/// voxel where the field is no smoother than the lattice.
inline Smoothness estimate_smoothness(const std::vector<Volume>& residual_maps,
                                      const Mask& mask) {
    if (residual_maps.size() < 2)
        throw InvalidSize("estimate_smoothness: needs at least two residual maps");
    for (const Volume& v : residual_maps)
        if (v.dims != mask.dims) throw ShapeMismatch("estimate_smoothness: dims mismatch");
    const auto [nx, ny, nz] = mask.dims;

    // normalize each map to unit variance within the mask
    std::vector<std::vector<double>> norm;
    norm.reserve(residual_maps.size());
    for (const Volume& v : residual_maps) {
        double s = 0.0, s2 = 0.0;
        std::size_t cnt = 0;
        for (std::size_t i = 0; i < v.data.size(); ++i)
            if (mask.bits[i]) {
                s += v.data[i];
                s2 += v.data[i] * v.data[i];
                ++cnt;
            }
        if (cnt == 0) throw DegenerateMask("estimate_smoothness: empty mask");
        const double m = s / static_cast<double>(cnt);
        const double var = s2 / static_cast<double>(cnt) - m * m;
        if (!(var > 1e-300))
            throw DegenerateMask("estimate_smoothness: constant residual map");
        std::vector<double> u(v.data.size());
        const double inv_sd = 1.0 / std::sqrt(var);
        for (std::size_t i = 0; i < v.data.size(); ++i) u[i] = (v.data[i] - m) * inv_sd;
        norm.push_back(std::move(u));
    }

    Smoothness out;
    const std::size_t strides[3] = {1, nx, nx * ny};
    const std::size_t limit[3] = {nx, ny, nz};
    std::size_t mask_count = 0;
    for (auto b : mask.bits) mask_count += b ? 1 : 0;

    for (int axis = 0; axis < 3; ++axis) {
        double acc = 0.0;
        std::size_t pairs = 0;
        for (std::size_t z = 0; z < nz; ++z)
            for (std::size_t y = 0; y < ny; ++y)
                for (std::size_t x = 0; x < nx; ++x) {
                    const std::size_t coord[3] = {x, y, z};
                    if (coord[axis] + 1 >= limit[axis]) continue;
                    const std::size_t i = x + nx * (y + ny * z);
                    const std::size_t j = i + strides[axis];
                    if (!mask.bits[i] || !mask.bits[j]) continue;
                    for (const auto& u : norm) {
                        const double d = u[j] - u[i];
                        acc += d * d;
                    }
                    ++pairs;
                }
        if (pairs == 0)
            throw DegenerateMask("estimate_smoothness: no in-mask neighbours on an axis");
        const double lambda = acc / (static_cast<double>(pairs) *
                                     static_cast<double>(norm.size()));
        const double rho = std::min(1.0 - 0.5 * lambda, 1.0 - 1e-12);
        const double rho_one_voxel = std::exp(-2.0 * std::log(2.0));  // rho at FWHM = 1
        out.fwhm[axis] =
            rho <= rho_one_voxel ? 1.0 : std::sqrt(2.0 * std::log(2.0) / (-std::log(rho)));
    }
    out.resel_volume = static_cast<double>(mask_count) /
                       (out.fwhm[0] * out.fwhm[1] * out.fwhm[2]);
    return out;
}

/// Lattice resel counts [R0..R3]: vertices, edges, faces and cubes of the
/// mask scaled by the per-axis resel lengths. R0 is the Euler characteristic.
inline Vector resel_counts(const Mask& mask, const std::array<double, 3>& fwhm) {
    const auto [nx, ny, nz] = mask.dims;
    auto in = [&](std::size_t x, std::size_t y, std::size_t z) { return mask.in(x, y, z); };
    double p = 0, ex = 0, ey = 0, ez = 0, fxy = 0, fxz = 0, fyz = 0, c = 0;
    for (std::size_t z = 0; z < nz; ++z)
        for (std::size_t y = 0; y < ny; ++y)
            for (std::size_t x = 0; x < nx; ++x) {
                if (!in(x, y, z)) continue;
                p += 1;
                const bool hx = x + 1 < nx && in(x + 1, y, z);
                const bool hy = y + 1 < ny && in(x, y + 1, z);
                const bool hz = z + 1 < nz && in(x, y, z + 1);
                ex += hx;
                ey += hy;
                ez += hz;
                const bool hxy = hx && hy && in(x + 1, y + 1, z);
                const bool hxz = hx && hz && in(x + 1, y, z + 1);
                const bool hyz = hy && hz && in(x, y + 1, z + 1);
                fxy += hxy;
                fxz += hxz;
                fyz += hyz;
                if (hxy && hz && in(x + 1, y, z + 1) && in(x, y + 1, z + 1) &&
                    in(x + 1, y + 1, z + 1))
                    c += 1;
            }
    if (p == 0) throw EmptyMask("resel_counts: empty mask");
    const double rx = 1.0 / fwhm[0], ry = 1.0 / fwhm[1], rz = 1.0 / fwhm[2];
    Vector r(4, 0.0);
    r[0] = p - (ex + ey + ez) + (fxy + fxz + fyz) - c;
    r[1] = rx * (ex - fxy - fxz + c) + ry * (ey - fxy - fyz + c) + rz * (ez - fxz - fyz + c);
    r[2] = rx * ry * (fxy - c) + rx * rz * (fxz - c) + ry * rz * (fyz - c);
    r[3] = rx * ry * rz * c;
    return r;
}

// --- empirical Neyman-Pearson threshold ------------------------------------

/// Nearest-rank (1-alpha) quantile of the null-region scores.
inline double np_threshold(const Vector& null_scores, double alpha) {
    if (null_scores.size() < 20) throw TooFewScores("np_threshold: needs >= 20 scores");
    if (!(alpha > 0.0 && alpha < 0.5)) throw ConfigError("np_threshold: alpha outside (0,0.5)");
    Vector sorted = null_scores;
    std::sort(sorted.begin(), sorted.end());
    const double n = static_cast<double>(sorted.size());
    std::size_t rank = static_cast<std::size_t>(std::ceil((1.0 - alpha) * n));
    rank = std::min(std::max<std::size_t>(rank, 1), sorted.size());
    return sorted[rank - 1];
}

}  // namespace statmap
