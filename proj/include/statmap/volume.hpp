#pragma once

#include <array>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "statmap/errors.hpp"
#include "statmap/glm.hpp"
#include "statmap/iglm.hpp"
#include "statmap/model.hpp"

namespace statmap {

/// 3-D grid (x fastest) with an optional subject axis appended.
struct Volume {
    std::array<std::size_t, 3> dims{0, 0, 0};
    std::array<double, 3> voxel_size{1.0, 1.0, 1.0};
    std::size_t subjects = 0;  // 0 for a plain 3-D volume
    std::vector<double> data;

    std::size_t voxel_count() const { return dims[0] * dims[1] * dims[2]; }
    std::size_t frame_count() const { return subjects == 0 ? 1 : subjects; }

    static Volume make(std::array<std::size_t, 3> dims, std::array<double, 3> voxel_size,
                       std::size_t subjects = 0) {
        Volume v;
        v.dims = dims;
        v.voxel_size = voxel_size;
        v.subjects = subjects;
        v.data.assign(v.voxel_count() * v.frame_count(), 0.0);
        return v;
    }

    std::size_t index(std::size_t x, std::size_t y, std::size_t z, std::size_t s = 0) const {
        return x + dims[0] * (y + dims[1] * (z + dims[2] * s));
    }
    double& at(std::size_t x, std::size_t y, std::size_t z, std::size_t s = 0) {
        return data[index(x, y, z, s)];
    }
    double at(std::size_t x, std::size_t y, std::size_t z, std::size_t s = 0) const {
        return data[index(x, y, z, s)];
    }
};

struct Mask {
    std::array<std::size_t, 3> dims{0, 0, 0};
    std::vector<std::uint8_t> bits;

    std::size_t count() const {
        std::size_t c = 0;
        for (auto b : bits) c += b ? 1 : 0;
        return c;
    }
    bool in(std::size_t x, std::size_t y, std::size_t z) const {
        return bits[x + dims[0] * (y + dims[1] * z)] != 0;
    }

    static Mask full(std::array<std::size_t, 3> dims) {
        Mask m;
        m.dims = dims;
        m.bits.assign(dims[0] * dims[1] * dims[2], 1);
        return m;
    }
    static Mask from_volume(const Volume& v, double threshold = 0.5) {
        Mask m;
        m.dims = v.dims;
        m.bits.assign(v.voxel_count(), 0);
        for (std::size_t i = 0; i < v.voxel_count(); ++i) m.bits[i] = v.data[i] > threshold;
        return m;
    }
};

/// Per-axis FWHM (voxel units) of the effective smoothing kernel.
struct Smoothness {
    std::array<double, 3> fwhm{1.0, 1.0, 1.0};
    double resel_volume = 0.0;
};

enum class StatKind { T, ContrastValue, ThetaK };

struct StatMap {
    Volume volume;
    StatKind statistic = StatKind::T;
    double df = 0.0;
    Mask mask;
    std::optional<Smoothness> smoothness;
};

// --- NIfTI-1: single-file, little-endian, float32 or int16 ----------------

namespace nifti_detail {

template <class T>
T read_as(const char* p) {
    T v;
    std::memcpy(&v, p, sizeof(T));
    return v;
}

template <class T>
void write_as(char* p, T v) {
    std::memcpy(p, &v, sizeof(T));
}

}  // namespace nifti_detail

inline Volume read_volume(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("read_volume: cannot open " + path);
    std::vector<char> hdr(348);
    in.read(hdr.data(), 348);
    if (in.gcount() != 348) throw TruncatedFile("read_volume: header short in " + path);

    const auto sizeof_hdr = nifti_detail::read_as<std::int32_t>(&hdr[0]);
    if (sizeof_hdr != 348) {
        if (sizeof_hdr == 0x5C010000)  // 348 byte-swapped
            throw UnsupportedDatatype("read_volume: big-endian NIfTI-1 is not supported");
        throw BadMagic("read_volume: not a NIfTI-1 header");
    }
    if (std::memcmp(&hdr[344], "n+1\0", 4) != 0)
        throw BadMagic("read_volume: magic is not n+1");

    std::int16_t dim[8];
    std::memcpy(dim, &hdr[40], sizeof(dim));
    const auto datatype = nifti_detail::read_as<std::int16_t>(&hdr[70]);
    float pixdim[8];
    std::memcpy(pixdim, &hdr[76], sizeof(pixdim));
    const auto vox_offset = nifti_detail::read_as<float>(&hdr[108]);
    float scl_slope = nifti_detail::read_as<float>(&hdr[112]);
    float scl_inter = nifti_detail::read_as<float>(&hdr[116]);
    if (scl_slope == 0.0f) {
        scl_slope = 1.0f;
        scl_inter = 0.0f;
    }

    if (dim[0] < 3 || dim[0] > 4)
        throw UnsupportedDatatype("read_volume: only 3-D or 4-D volumes supported");
    Volume v;
    v.dims = {static_cast<std::size_t>(dim[1]), static_cast<std::size_t>(dim[2]),
              static_cast<std::size_t>(dim[3])};
    v.subjects = dim[0] == 4 ? static_cast<std::size_t>(dim[4]) : 0;
    v.voxel_size = {pixdim[1], pixdim[2], pixdim[3]};
    const std::size_t count = v.voxel_count() * v.frame_count();

    std::size_t elem_size;
    if (datatype == 16)
        elem_size = 4;
    else if (datatype == 4)
        elem_size = 2;
    else
        throw UnsupportedDatatype("read_volume: datatype " + std::to_string(datatype) +
                                  " not supported (float32 and int16 only)");

    in.seekg(static_cast<std::streamoff>(vox_offset));
    std::vector<char> raw(count * elem_size);
    in.read(raw.data(), static_cast<std::streamsize>(raw.size()));
    if (static_cast<std::size_t>(in.gcount()) != raw.size())
        throw TruncatedFile("read_volume: data short in " + path);

    v.data.resize(count);
    if (datatype == 16) {
        for (std::size_t i = 0; i < count; ++i) {
            const float f = nifti_detail::read_as<float>(&raw[4 * i]);
            v.data[i] = static_cast<double>(f) * scl_slope + scl_inter;
        }
    } else {
        for (std::size_t i = 0; i < count; ++i) {
            const auto s = nifti_detail::read_as<std::int16_t>(&raw[2 * i]);
            v.data[i] = static_cast<double>(s) * scl_slope + scl_inter;
        }
    }
    return v;
}

inline void write_volume(const Volume& vol, const std::string& path) {
    if (vol.dims[0] == 0 || vol.dims[1] == 0 || vol.dims[2] == 0)
        throw InvalidSize("write_volume: dims must be positive");
    std::vector<char> hdr(352, 0);
    nifti_detail::write_as<std::int32_t>(&hdr[0], 348);
    std::int16_t dim[8] = {3, 1, 1, 1, 1, 1, 1, 1};
    dim[0] = vol.subjects > 0 ? 4 : 3;
    dim[1] = static_cast<std::int16_t>(vol.dims[0]);
    dim[2] = static_cast<std::int16_t>(vol.dims[1]);
    dim[3] = static_cast<std::int16_t>(vol.dims[2]);
    if (vol.subjects > 0) dim[4] = static_cast<std::int16_t>(vol.subjects);
    std::memcpy(&hdr[40], dim, sizeof(dim));
    nifti_detail::write_as<std::int16_t>(&hdr[70], 16);  // float32
    nifti_detail::write_as<std::int16_t>(&hdr[72], 32);  // bitpix
    float pixdim[8] = {1.f, 1.f, 1.f, 1.f, 1.f, 1.f, 1.f, 1.f};
    pixdim[1] = static_cast<float>(vol.voxel_size[0]);
    pixdim[2] = static_cast<float>(vol.voxel_size[1]);
    pixdim[3] = static_cast<float>(vol.voxel_size[2]);
    std::memcpy(&hdr[76], pixdim, sizeof(pixdim));
    nifti_detail::write_as<float>(&hdr[108], 352.0f);  // vox_offset
    nifti_detail::write_as<float>(&hdr[112], 1.0f);    // scl_slope
    nifti_detail::write_as<float>(&hdr[116], 0.0f);    // scl_inter
    hdr[123] = 2;  // xyzt_units: mm
    std::memcpy(&hdr[344], "n+1\0", 4);

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("write_volume: cannot open " + path);
    out.write(hdr.data(), static_cast<std::streamsize>(hdr.size()));
    const std::size_t count = vol.voxel_count() * vol.frame_count();
    std::vector<char> raw(count * 4);
    for (std::size_t i = 0; i < count; ++i)
        nifti_detail::write_as<float>(&raw[4 * i], static_cast<float>(vol.data[i]));
    out.write(raw.data(), static_cast<std::streamsize>(raw.size()));
    if (!out) throw IoError("write_volume: write failed for " + path);
}

// --- voxelwise map engine ---------------------------------------------------

struct MapFitOptions {
    std::size_t workers = 1;
    NoiseModel noise;                  // ML: Known; ReML: Components; else iid
    std::optional<SvrHyper> svr_hyper;
    bool rescale_reconstruction = true;  // put inverse estimates on observation scale
};

struct MapFitResult {
    StatMap stat;
    std::vector<Volume> theta_maps;  // one per design column
    std::size_t failed_voxels = 0;
};

/// Fit every in-mask voxel across the subject axis and assemble a T map.
/// Out-of-mask voxels and per-voxel failures hold quiet NaN. The work is
/// chunked over threads; outputs land in preallocated slots so the result is
/// bit-identical for any worker count.
inline MapFitResult map_fit(const Volume& volumes, const DesignMatrix& design, const Mask& mask,
                            Method method, const Contrast& contrast,
                            const MapFitOptions& opts = {}) {
    if (volumes.subjects != design.n())
        throw ShapeMismatch("map_fit: subject axis != design rows");
    if (mask.dims != volumes.dims) throw ShapeMismatch("map_fit: mask dims != volume dims");
    const std::size_t nvox = volumes.voxel_count();
    const std::size_t nsub = volumes.subjects;
    const std::size_t ncol = design.m();

    std::vector<std::size_t> in_mask;
    for (std::size_t i = 0; i < nvox; ++i)
        if (mask.bits[i]) in_mask.push_back(i);
    if (in_mask.empty()) throw AllVoxelsFailed("map_fit: mask excludes every voxel");

    const double nan = std::numeric_limits<double>::quiet_NaN();
    MapFitResult result;
    result.stat.statistic = StatKind::T;
    result.stat.df = static_cast<double>(nsub - ncol);
    result.stat.mask = mask;
    result.stat.volume = Volume::make(volumes.dims, volumes.voxel_size);
    result.stat.volume.data.assign(nvox, nan);
    result.theta_maps.assign(ncol, result.stat.volume);

    // Shared read-only context: factor the known covariance once.
    std::optional<Cholesky> ml_factor;
    if (method == Method::ML && opts.noise.kind == NoiseModel::Kind::Known)
        ml_factor.emplace(opts.noise.known);

    std::vector<Matrix> reml_components;
    if (method == Method::ReML) {
        if (opts.noise.kind == NoiseModel::Kind::Components)
            reml_components = opts.noise.components;
        else
            reml_components.push_back(Matrix::identity(nsub));
    }

    std::vector<std::uint8_t> voxel_failed(in_mask.size(), 0);

    auto run_voxel = [&](std::size_t list_idx) {
        const std::size_t vox = in_mask[list_idx];
        Vector yv(nsub);
        for (std::size_t s = 0; s < nsub; ++s) yv[s] = volumes.data[vox + s * nvox];
        Observation obs{yv};
        try {
            Vector theta;
            double t;
            if (method == Method::OLS || method == Method::ML || method == Method::ReML) {
                GlmEstimate est;
                if (method == Method::OLS) {
                    est = ols_fit(design, obs);
                } else if (method == Method::ML) {
                    if (ml_factor) {
                        validate(design, obs);
                        const Matrix z = ml_factor->solve(design.x);
                        const Matrix a = detail::cross(design.x, z);
                        Cholesky achol(a, false);
                        est.theta = achol.solve(multiply_transposed(z, obs.values));
                        est.theta_cov = achol.solve(Matrix::identity(ncol));
                        est.method = Method::ML;
                    } else {
                        est = ml_fit(design, obs, Matrix::identity(nsub));
                    }
                } else {
                    est = reml_fit(design, obs, reml_components).estimate;
                }
                theta = est.theta;
                t = t_statistic(est, contrast);
            } else {
                const InverseFit inv = fit_inverse(design, obs, method, opts.svr_hyper);
                ReconstructOptions ropts;
                ropts.rescale = opts.rescale_reconstruction;
                ropts.rescale_target = &obs;
                const Reconstruction rec = reconstruct(inv, design, ropts);
                theta = rec.theta_tilde;
                // Same noise normalization as the forward fit (iid): the OLS
                // residual variance supplies Cov(theta).
                GlmEstimate fwd = ols_fit(design, obs);
                GlmEstimate carrier;
                carrier.theta = theta;
                carrier.theta_cov = fwd.theta_cov;
                t = t_statistic(carrier, contrast);
            }
            result.stat.volume.data[vox] = t;
            for (std::size_t c = 0; c < ncol; ++c) result.theta_maps[c].data[vox] = theta[c];
        } catch (const Error&) {
            voxel_failed[list_idx] = 1;  // slot stays NaN
        }
    };

    const std::size_t workers = std::max<std::size_t>(1, opts.workers);
    if (workers == 1) {
        for (std::size_t i = 0; i < in_mask.size(); ++i) run_voxel(i);
    } else {
        std::vector<std::thread> pool;
        for (std::size_t w = 0; w < workers; ++w)
            pool.emplace_back([&, w] {
                for (std::size_t i = w; i < in_mask.size(); i += workers) run_voxel(i);
            });
        for (auto& th : pool) th.join();
    }

    for (auto f : voxel_failed) result.failed_voxels += f ? 1 : 0;
    if (result.failed_voxels == in_mask.size())
        throw AllVoxelsFailed("map_fit: every in-mask voxel failed to fit");
    return result;
}

}  // namespace statmap
