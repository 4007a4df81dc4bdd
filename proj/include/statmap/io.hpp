#pragma once

#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "statmap/errors.hpp"
#include "statmap/inference.hpp"
#include "statmap/model.hpp"
#include "statmap/volume.hpp"

namespace statmap {

using json = nlohmann::json;

namespace io_detail {

inline std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char ch : line) {
        if (ch == ',') {
            out.push_back(cur);
            cur.clear();
        } else if (ch != '\r') {
            cur += ch;
        }
    }
    out.push_back(cur);
    return out;
}

inline std::string read_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace io_detail

struct NamedTable {
    std::vector<std::string> columns;
    Matrix values;  // rows x columns
};

inline NamedTable load_csv_table(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path);
    std::string line;
    if (!std::getline(in, line)) throw IoError("empty csv: " + path);
    NamedTable t;
    t.columns = io_detail::split_csv(line);
    std::vector<double> data;
    std::size_t rows = 0;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto cells = io_detail::split_csv(line);
        if (cells.size() != t.columns.size())
            throw IoError(path + ": row " + std::to_string(rows + 2) + " has " +
                          std::to_string(cells.size()) + " cells, expected " +
                          std::to_string(t.columns.size()));
        for (const std::string& c : cells) {
            try {
                data.push_back(std::stod(c));
            } catch (const std::exception&) {
                throw IoError(path + ": cannot parse '" + c + "' as a number");
            }
        }
        ++rows;
    }
    t.values = Matrix(rows, t.columns.size());
    t.values.data = std::move(data);
    return t;
}

inline ColumnRole role_from_string(const std::string& s) {
    if (s == "condition" || s == "indicator" || s == "condition_indicator")
        return ColumnRole::ConditionIndicator;
    if (s == "covariate") return ColumnRole::Covariate;
    if (s == "nuisance") return ColumnRole::Nuisance;
    throw ConfigError("unknown column role: " + s);
}

/// Load a design from CSV plus a sidecar JSON mapping column name -> role.
/// Optional sidecar keys: "standardize_covariates" (default true) and
/// "continuous_conditions" (column names exempt from the 0/1 check).
inline DesignMatrix load_design_csv(const std::string& csv_path,
                                    const std::string& sidecar_path) {
    const NamedTable t = load_csv_table(csv_path);
    json side;
    try {
        side = json::parse(io_detail::read_file(sidecar_path));
    } catch (const json::parse_error& e) {
        throw ConfigError(sidecar_path + ": " + e.what());
    }
    if (!side.contains("roles") || !side["roles"].is_object())
        throw ConfigError(sidecar_path + ": missing object field 'roles'");

    std::vector<ColumnRole> roles;
    roles.reserve(t.columns.size());
    for (const std::string& name : t.columns) {
        if (!side["roles"].contains(name))
            throw ConfigError(sidecar_path + ": no role for column '" + name + "'");
        roles.push_back(role_from_string(side["roles"][name].get<std::string>()));
    }
    DesignOptions opts;
    opts.standardize_covariates = side.value("standardize_covariates", true);
    DesignMatrix d = make_design_matrix(t.values, roles, opts);
    if (side.contains("continuous_conditions")) {
        for (const auto& item : side["continuous_conditions"]) {
            const std::string name = item.get<std::string>();
            bool found = false;
            for (std::size_t c = 0; c < t.columns.size(); ++c)
                if (t.columns[c] == name) {
                    d.continuous_condition[c] = 1;
                    found = true;
                }
            if (!found)
                throw ConfigError(sidecar_path + ": continuous condition '" + name +
                                  "' is not a design column");
        }
    }
    return d;
}

/// One-column CSV (header optional) into a vector.
inline Vector load_vector_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path);
    Vector v;
    std::string line;
    bool first = true;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        try {
            v.push_back(std::stod(line));
        } catch (const std::exception&) {
            if (first) {
                first = false;
                continue;  // header row
            }
            throw IoError(path + ": cannot parse '" + line + "'");
        }
        first = false;
    }
    if (v.empty()) throw IoError(path + ": no numeric rows");
    return v;
}

/// Dataset written by the simulator: t,task,rest,covariate,clean,obs.
struct LoadedDataset {
    DesignMatrix design;
    Observation obs;
    Vector clean;
};

inline LoadedDataset load_dataset_csv(const std::string& path) {
    const NamedTable t = load_csv_table(path);
    const std::vector<std::string> expect{"t", "task", "rest", "covariate", "clean", "obs"};
    if (t.columns != expect) throw ConfigError(path + ": not a simulator dataset csv");
    const std::size_t n = t.values.rows;
    Matrix x(n, 3);
    LoadedDataset out;
    out.clean.resize(n);
    out.obs.values.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        x(i, 0) = t.values(i, 1);
        x(i, 1) = t.values(i, 2);
        x(i, 2) = t.values(i, 3);
        out.clean[i] = t.values(i, 4);
        out.obs.values[i] = t.values(i, 5);
    }
    out.design = make_design_matrix(
        std::move(x),
        {ColumnRole::ConditionIndicator, ColumnRole::ConditionIndicator, ColumnRole::Covariate});
    out.design.continuous_condition[0] = 1;
    return out;
}

/// Mask from a JSON voxel list: {"dims": [x,y,z], "voxels": [[i,j,k], ...]}.
inline Mask load_mask_json(const std::string& path) {
    json j;
    try {
        j = json::parse(io_detail::read_file(path));
    } catch (const json::parse_error& e) {
        throw ConfigError(path + ": " + e.what());
    }
    if (!j.contains("dims") || !j.contains("voxels"))
        throw ConfigError(path + ": mask json needs 'dims' and 'voxels'");
    Mask m;
    m.dims = {j["dims"][0].get<std::size_t>(), j["dims"][1].get<std::size_t>(),
              j["dims"][2].get<std::size_t>()};
    m.bits.assign(m.dims[0] * m.dims[1] * m.dims[2], 0);
    for (const auto& vox : j["voxels"]) {
        const std::size_t x = vox[0].get<std::size_t>();
        const std::size_t y = vox[1].get<std::size_t>();
        const std::size_t z = vox[2].get<std::size_t>();
        if (x >= m.dims[0] || y >= m.dims[1] || z >= m.dims[2])
            throw ConfigError(path + ": voxel index outside dims");
        m.bits[x + m.dims[0] * (y + m.dims[1] * z)] = 1;
    }
    return m;
}

inline Mask load_mask(const std::string& path) {
    if (path.size() >= 5 && path.substr(path.size() - 5) == ".json")
        return load_mask_json(path);
    return Mask::from_volume(read_volume(path), 0.5);
}

/// Serialize a permutation result with a 64-bin null histogram.
inline json permutation_result_to_json(const PermutationResult& res, Method method) {
    double lo = res.observed, hi = res.observed;
    for (double v : res.null_samples) {
        if (std::isinf(v)) continue;
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    if (!(hi > lo)) hi = lo + 1.0;
    constexpr std::size_t kBins = 64;
    std::vector<std::size_t> counts(kBins, 0);
    for (double v : res.null_samples) {
        if (std::isinf(v)) {
            ++counts[kBins - 1];  // conservative scores land in the top bin
            continue;
        }
        auto b = static_cast<std::size_t>((v - lo) / (hi - lo) * kBins);
        if (b >= kBins) b = kBins - 1;
        ++counts[b];
    }
    json out;
    out["method"] = to_string(method);
    out["observed"] = res.observed;
    out["p_value"] = res.p_value;
    out["K"] = res.K;
    out["seed"] = res.seed;
    out["failed"] = res.failed;
    out["null_histogram"] = {{"lo", lo}, {"hi", hi}, {"counts", counts}};
    return out;
}

}  // namespace statmap
