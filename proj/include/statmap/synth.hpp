#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <ostream>
#include <utility>
#include <vector>

#include "statmap/errors.hpp"
#include "statmap/matrix.hpp"
#include "statmap/model.hpp"
#include "statmap/rng.hpp"
#include "statmap/special.hpp"

namespace statmap {

/// Block-design fMRI-like generator: HRF-convolved boxcar task regressor,
/// binary rest indicator, decaying habituation covariate, Gaussian noise at
/// a controlled contrast-to-noise ratio.
struct SyntheticSpec {
    std::size_t n = 1000;
    std::size_t block_len = 50;  // scans per task/rest block
    double dt = 1.0;             // seconds per scan
    double cnr = 1.0;
    double cv = 1.0;   // covariate amplitude theta_3
    Vector theta;      // defaults to {1, 0, cv}
    std::uint64_t seed = 0;

    Vector resolved_theta() const { return theta.empty() ? Vector{1.0, 0.0, cv} : theta; }
};

inline void validate_spec(const SyntheticSpec& spec) {
    if (spec.block_len < 1) throw InvalidSpec("synthetic spec: block_len must be >= 1");
    if (spec.n < 4 * spec.block_len)
        throw InvalidSpec("synthetic spec: n must be at least 4*block_len");
    if (!(spec.cnr > 0.0)) throw InvalidSpec("synthetic spec: cnr must be positive");
    if (!(spec.dt > 0.0)) throw InvalidSpec("synthetic spec: dt must be positive");
    if (!spec.theta.empty() && spec.theta.size() != 3)
        throw InvalidSpec("synthetic spec: theta needs 3 entries");
}

/// Canonical double-gamma HRF sampled at dt over [0, duration], peak
/// normalized to 1. Response delay 6 s, undershoot delay 16 s, unit
/// dispersions, undershoot ratio 1/6.
inline Vector canonical_hrf(double dt, double duration = 32.0) {
    if (!(dt > 0.0)) throw InvalidSampling("canonical_hrf: dt must be positive");
    if (!(duration >= 16.0)) throw InvalidSampling("canonical_hrf: duration must be >= 16 s");
    const std::size_t count = static_cast<std::size_t>(std::floor(duration / dt + 1e-9)) + 1;
    Vector h(count);
    double peak = 0.0;
    for (std::size_t k = 0; k < count; ++k) {
        const double t = static_cast<double>(k) * dt;
        h[k] = gamma_pdf(t, 6.0, 1.0) - gamma_pdf(t, 16.0, 1.0) / 6.0;
        peak = std::max(peak, h[k]);
    }
    if (peak > 0.0)
        for (double& v : h) v /= peak;
    return h;
}

/// Alternating task/rest boxcar starting with a task block.
inline Vector boxcar(std::size_t n, std::size_t block_len) {
    Vector b(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) b[i] = ((i / block_len) % 2 == 0) ? 1.0 : 0.0;
    return b;
}

/// Causal convolution with the canonical HRF, rescaled to max 1.
inline Vector hrf_convolve(const Vector& box, double dt) {
    const Vector h = canonical_hrf(dt);
    const std::size_t n = box.size();
    Vector out(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        double s = 0.0;
        const std::size_t kmax = std::min(i + 1, h.size());
        for (std::size_t k = 0; k < kmax; ++k) s += h[k] * box[i - k];
        out[i] = s;
    }
    double peak = 0.0;
    for (double v : out) peak = std::max(peak, v);
    if (peak > 0.0)
        for (double& v : out) v /= peak;
    return out;
}

/// Columns: [HRF-convolved task, rest indicator, habituation covariate
/// f(t) = (1 - t/N)^0.5]. The task column is condition-typed but continuous,
/// so the indicator checks are relaxed for it; the habituation covariate is
/// used unstandardized.
inline DesignMatrix make_design(const SyntheticSpec& spec) {
    validate_spec(spec);
    const std::size_t n = spec.n;
    const Vector box = boxcar(n, spec.block_len);
    const Vector task = hrf_convolve(box, spec.dt);
    Matrix x(n, 3);
    for (std::size_t i = 0; i < n; ++i) {
        x(i, 0) = task[i];
        x(i, 1) = 1.0 - box[i];
        x(i, 2) = std::sqrt(1.0 - static_cast<double>(i) / static_cast<double>(n));
    }
    DesignMatrix d = make_design_matrix(
        std::move(x),
        {ColumnRole::ConditionIndicator, ColumnRole::ConditionIndicator, ColumnRole::Covariate});
    d.continuous_condition[0] = 1;
    return d;
}

/// Add iid Gaussian noise with variance design_signal_var/cnr drawn from the
/// seeded observation-noise stream. Returns (observations, sigma2).
inline std::pair<Vector, double> add_noise(const Vector& clean, double design_signal_var,
                                           double cnr, std::uint64_t seed) {
    if (!(cnr > 0.0)) throw InvalidSpec("add_noise: cnr must be positive");
    const double capped = std::min(cnr, 1e12);
    const double sigma2 = design_signal_var / capped;
    const double sigma = std::sqrt(sigma2);
    CounterRng rng(seed, stream_id(StreamPurpose::ObservationNoise));
    Vector obs = clean;
    for (double& v : obs) v += sigma * rng.normal();
    return {std::move(obs), sigma2};
}

struct SyntheticDataset {
    DesignMatrix design;
    Observation obs;
    Vector clean;
    double noise_sigma2 = 0.0;
    Vector task_labels;  // the raw boxcar, for classifier scoring
};

inline SyntheticDataset generate(const SyntheticSpec& spec) {
    SyntheticDataset ds;
    ds.design = make_design(spec);
    const Vector theta = spec.resolved_theta();
    ds.clean = multiply(ds.design.x, theta);
    auto [obs, sigma2] = add_noise(ds.clean, variance(ds.clean), spec.cnr, spec.seed);
    ds.obs.values = std::move(obs);
    ds.noise_sigma2 = sigma2;
    ds.task_labels = boxcar(spec.n, spec.block_len);
    return ds;
}

/// Empirical noise covariance from fresh realizations of the spec's noise
/// process: C = (1/R) sum v v^t, ridged by 1e-8 tr(C)/N on the diagonal so
/// the later inversion stays defined even at R < N.
inline Matrix estimate_noise_cov(const SyntheticSpec& spec, std::size_t realizations = 100) {
    validate_spec(spec);
    if (realizations < 1) throw InvalidSpec("estimate_noise_cov: needs >= 1 realization");
    const DesignMatrix d = make_design(spec);
    const Vector clean = multiply(d.x, spec.resolved_theta());
    const double sigma = std::sqrt(variance(clean) / std::min(spec.cnr, 1e12));
    const std::size_t n = spec.n;
    Matrix c(n, n);
    Vector v(n);
    for (std::size_t r = 0; r < realizations; ++r) {
        CounterRng rng(spec.seed, stream_id(StreamPurpose::CovRealization, r));
        for (double& e : v) e = sigma * rng.normal();
        for (std::size_t i = 0; i < n; ++i) {
            const double vi = v[i];
            if (vi == 0.0) continue;
            double* row = &c.data[i * n];
            for (std::size_t j = 0; j < n; ++j) row[j] += vi * v[j];
        }
    }
    const double inv_r = 1.0 / static_cast<double>(realizations);
    for (double& e : c.data) e *= inv_r;
    const double ridge = 1e-8 * trace(c) / static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) c(i, i) += ridge;
    return c;
}

/// CSV export: t, task, rest, covariate, clean, obs.
inline void export_dataset_csv(const SyntheticDataset& ds, std::ostream& out) {
    out << "t,task,rest,covariate,clean,obs\n";
    char buf[512];
    for (std::size_t i = 0; i < ds.design.n(); ++i) {
        std::snprintf(buf, sizeof(buf), "%zu,%.17g,%.17g,%.17g,%.17g,%.17g\n", i,
                      ds.design.x(i, 0), ds.design.x(i, 1), ds.design.x(i, 2), ds.clean[i],
                      ds.obs.values[i]);
        out << buf;
    }
}

}  // namespace statmap
