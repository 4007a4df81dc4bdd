// statmap: batch front-end for the mass-univariate statistical mapping
// toolkit. Subcommands: simulate, fit, infer, l1study, report. Every run
// writes a resolved-config JSON with the values actually used; outputs are
// byte-reproducible for a fixed (inputs, config, seed). Timestamps go only
// to run.log.

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "statmap/glm.hpp"
#include "statmap/iglm.hpp"
#include "statmap/inference.hpp"
#include "statmap/io.hpp"
#include "statmap/l1study.hpp"
#include "statmap/svg.hpp"
#include "statmap/synth.hpp"
#include "statmap/volume.hpp"

namespace fs = std::filesystem;
using statmap::json;

namespace {

std::string env_or(const char* name, const std::string& fallback) {
    const char* v = std::getenv(name);
    return v ? std::string(v) : fallback;
}

std::size_t env_workers() {
    const std::string v = env_or("STATMAP_WORKERS", "");
    if (v.empty()) return 1;
    const long n = std::strtol(v.c_str(), nullptr, 10);
    return n > 0 ? static_cast<std::size_t>(n) : 1;
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw statmap::IoError("cannot write " + path.string());
    out << text;
}

void write_json(const fs::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

void append_log(const fs::path& dir, const std::string& message) {
    std::ofstream out(dir / "run.log", std::ios::app);
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    char buf[64];
    std::strftime(buf, sizeof(buf), "%F %T", std::gmtime(&t));
    out << buf << " " << message << "\n";
}

statmap::Vector parse_number_list(const std::string& text, const std::string& what) {
    statmap::Vector out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            out.push_back(std::stod(item));
        } catch (const std::exception&) {
            throw statmap::ConfigError(what + ": cannot parse '" + item + "'");
        }
    }
    if (out.empty()) throw statmap::ConfigError(what + ": empty list");
    return out;
}

std::vector<statmap::Method> parse_methods(const std::string& text) {
    std::vector<statmap::Method> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(statmap::method_from_string(item));
    if (out.empty()) throw statmap::ConfigError("methods: empty list");
    return out;
}

/// Flags win over config-file values; defaults fill the rest.
class ConfigMerge {
  public:
    explicit ConfigMerge(const std::string& config_path) {
        if (config_path.empty()) return;
        try {
            data_ = json::parse(statmap::io_detail::read_file(config_path));
        } catch (const json::parse_error& e) {
            throw statmap::ConfigError(config_path + ": " + e.what());
        }
    }

    template <class T>
    T pick(const CLI::Option* opt, const char* key, T flag_value) const {
        if (opt->count() > 0) return flag_value;
        if (data_.contains(key)) {
            try {
                return data_[key].get<T>();
            } catch (const json::exception& e) {
                throw statmap::ConfigError(std::string("config field '") + key +
                                           "': " + e.what());
            }
        }
        return flag_value;
    }

  private:
    json data_;
};

statmap::SyntheticSpec spec_from_json(const json& j) {
    statmap::SyntheticSpec spec;
    spec.n = j.value("n", spec.n);
    spec.block_len = j.value("block_len", spec.block_len);
    spec.dt = j.value("dt", spec.dt);
    spec.cnr = j.value("cnr", spec.cnr);
    spec.cv = j.value("cv", spec.cv);
    spec.seed = j.value("seed", spec.seed);
    if (j.contains("theta")) spec.theta = j["theta"].get<statmap::Vector>();
    return spec;
}

json spec_to_json(const statmap::SyntheticSpec& spec) {
    json j;
    j["n"] = spec.n;
    j["block_len"] = spec.block_len;
    j["dt"] = spec.dt;
    j["cnr"] = spec.cnr;
    j["cv"] = spec.cv;
    j["seed"] = spec.seed;
    j["theta"] = spec.resolved_theta();
    return j;
}

// --- simulate ---------------------------------------------------------------

struct SimulateArgs {
    std::string config, out;
    statmap::SyntheticSpec spec;
    std::string theta_text;
    CLI::Option *o_n = nullptr, *o_block = nullptr, *o_dt = nullptr, *o_cnr = nullptr,
                *o_cv = nullptr, *o_seed = nullptr, *o_theta = nullptr;
};

int run_simulate(const SimulateArgs& a) {
    ConfigMerge cfg(a.config);
    statmap::SyntheticSpec spec;
    spec.n = cfg.pick(a.o_n, "n", a.spec.n);
    spec.block_len = cfg.pick(a.o_block, "block_len", a.spec.block_len);
    spec.dt = cfg.pick(a.o_dt, "dt", a.spec.dt);
    spec.cnr = cfg.pick(a.o_cnr, "cnr", a.spec.cnr);
    spec.cv = cfg.pick(a.o_cv, "cv", a.spec.cv);
    spec.seed = cfg.pick(a.o_seed, "seed", a.spec.seed);
    const std::string theta_text = cfg.pick(a.o_theta, "theta_csv", a.theta_text);
    if (!theta_text.empty()) spec.theta = parse_number_list(theta_text, "theta");

    try {
        statmap::validate_spec(spec);
    } catch (const statmap::InvalidSpec& e) {
        throw statmap::ConfigError(e.what());
    }

    const fs::path out = a.out;
    fs::create_directories(out);
    const statmap::SyntheticDataset ds = statmap::generate(spec);
    std::ostringstream csv;
    statmap::export_dataset_csv(ds, csv);
    write_text(out / "dataset.csv", csv.str());

    json resolved;
    resolved["command"] = "simulate";
    resolved["spec"] = spec_to_json(spec);
    resolved["noise_sigma2"] = ds.noise_sigma2;
    write_json(out / "resolved_config.json", resolved);
    append_log(out, "simulate n=" + std::to_string(spec.n));
    std::cout << "wrote " << (out / "dataset.csv").string() << "\n";
    return 0;
}

// --- fit --------------------------------------------------------------------

struct FitArgs {
    std::string config, out, dataset, design, roles, obs, volumes, mask;
    std::string methods = "OLS,ML,ReML,LS-iGLM,SVR-iGLM";
    std::string contrast;
    std::string synthetic_config;
    double svr_c = 1.0, svr_eps = 0.1;
    bool svr_hyper_set = false;
    bool ar1 = false;
    std::size_t noise_realizations = 100;
    std::size_t workers = 0;
    CLI::Option *o_methods = nullptr, *o_contrast = nullptr;
};

statmap::Contrast default_condition_contrast(const statmap::DesignMatrix& d) {
    statmap::Contrast c;
    c.weights.assign(d.m(), 0.0);
    if (d.condition_block.size() >= 2) {
        c.weights[d.condition_block[0]] = 1.0;
        c.weights[d.condition_block[1]] = -1.0;
    } else {
        c.weights[d.condition_block.empty() ? 0 : d.condition_block[0]] = 1.0;
    }
    return c;
}

std::vector<statmap::Matrix> reml_basis(std::size_t n, bool ar1) {
    std::vector<statmap::Matrix> q;
    q.push_back(statmap::Matrix::identity(n));
    if (ar1) {
        statmap::Matrix band(n, n);
        for (std::size_t i = 0; i + 1 < n; ++i) {
            band(i, i + 1) = 1.0;
            band(i + 1, i) = 1.0;
        }
        q.push_back(std::move(band));
    }
    return q;
}

std::optional<statmap::Matrix> ideal_noise_cov(const FitArgs& a, const fs::path& dataset_dir,
                                               std::size_t expected_n) {
    fs::path cfg_path = a.synthetic_config;
    if (cfg_path.empty()) {
        const fs::path guess = dataset_dir / "resolved_config.json";
        if (fs::exists(guess)) cfg_path = guess;
    }
    if (cfg_path.empty() || !fs::exists(cfg_path)) return std::nullopt;
    json j;
    try {
        j = json::parse(statmap::io_detail::read_file(cfg_path.string()));
    } catch (const json::parse_error& e) {
        throw statmap::ConfigError(cfg_path.string() + ": " + e.what());
    }
    const statmap::SyntheticSpec spec = spec_from_json(j.contains("spec") ? j["spec"] : j);
    if (spec.n != expected_n) return std::nullopt;
    return statmap::estimate_noise_cov(spec, a.noise_realizations);
}

int run_fit(const FitArgs& args) {
    ConfigMerge cfg(args.config);
    const std::string methods_text = cfg.pick(args.o_methods, "methods", args.methods);
    const std::vector<statmap::Method> methods = parse_methods(methods_text);
    const fs::path out = args.out;
    fs::create_directories(out);
    const std::size_t workers = args.workers > 0 ? args.workers : env_workers();
    std::optional<statmap::SvrHyper> hyper;
    if (args.svr_hyper_set) hyper = statmap::SvrHyper{args.svr_c, args.svr_eps};

    json resolved;
    resolved["command"] = "fit";
    resolved["methods"] = methods_text;
    resolved["workers"] = workers;
    resolved["svr"] = {{"C", hyper ? hyper->C : 1.0},
                       {"epsilon", hyper ? hyper->epsilon : 0.1},
                       {"standardized_defaults", !hyper.has_value()}};

    if (!args.volumes.empty()) {
        if (args.design.empty() || args.roles.empty())
            throw statmap::ConfigError("fit: volume mode needs --design and --roles");
        if (!fs::exists(args.volumes))
            throw statmap::ConfigError("fit: volumes not found: " + args.volumes);
        if (!fs::exists(args.design))
            throw statmap::ConfigError("fit: design not found: " + args.design);
        const statmap::Volume vol = statmap::read_volume(args.volumes);
        if (vol.subjects == 0)
            throw statmap::ConfigError("fit: --volumes must be a 4-D subject stack");
        const statmap::DesignMatrix design = statmap::load_design_csv(args.design, args.roles);
        const statmap::Mask mask =
            args.mask.empty() ? statmap::Mask::full(vol.dims) : statmap::load_mask(args.mask);
        statmap::Contrast contrast =
            args.o_contrast->count() > 0
                ? statmap::Contrast{parse_number_list(args.contrast, "contrast")}
                : default_condition_contrast(design);
        resolved["contrast"] = contrast.weights;

        json report;
        report["command"] = "fit";
        report["mode"] = "volume";
        for (const statmap::Method m : methods) {
            statmap::MapFitOptions opts;
            opts.workers = workers;
            opts.svr_hyper = hyper;
            if (m == statmap::Method::ReML)
                opts.noise =
                    statmap::NoiseModel::with_components(reml_basis(design.n(), args.ar1));
            const statmap::MapFitResult res =
                statmap::map_fit(vol, design, mask, m, contrast, opts);
            const std::string tag = statmap::to_string(m);
            statmap::write_volume(res.stat.volume,
                                  (out / ("statmap_" + tag + ".nii")).string());
            for (std::size_t c = 0; c < res.theta_maps.size(); ++c)
                statmap::write_volume(
                    res.theta_maps[c],
                    (out / ("theta_" + std::to_string(c) + "_" + tag + ".nii")).string());
            report["maps"][tag] = {{"failed_voxels", res.failed_voxels},
                                   {"df", res.stat.df},
                                   {"in_mask", mask.count()}};
        }
        write_json(out / "fit_report.json", report);
        write_json(out / "resolved_config.json", resolved);
        append_log(out, "fit volume mode");
        std::cout << "wrote " << (out / "fit_report.json").string() << "\n";
        return 0;
    }

    // tabular mode
    statmap::DesignMatrix design;
    statmap::Observation obs;
    fs::path dataset_dir = ".";
    if (!args.dataset.empty()) {
        if (!fs::exists(args.dataset))
            throw statmap::ConfigError("fit: dataset not found: " + args.dataset);
        statmap::LoadedDataset ds = statmap::load_dataset_csv(args.dataset);
        design = std::move(ds.design);
        obs = std::move(ds.obs);
        dataset_dir = fs::path(args.dataset).parent_path();
    } else {
        if (args.design.empty() || args.roles.empty() || args.obs.empty())
            throw statmap::ConfigError("fit: need --dataset or --design/--roles/--obs");
        if (!fs::exists(args.design))
            throw statmap::ConfigError("fit: design not found: " + args.design);
        design = statmap::load_design_csv(args.design, args.roles);
        obs.values = statmap::load_vector_csv(args.obs);
    }
    statmap::Contrast contrast =
        args.o_contrast->count() > 0
            ? statmap::Contrast{parse_number_list(args.contrast, "contrast")}
            : default_condition_contrast(design);
    resolved["contrast"] = contrast.weights;

    json estimates;
    for (const statmap::Method m : methods) {
        json rec;
        statmap::Vector theta;
        statmap::Vector y_est;
        const std::string tag = statmap::to_string(m);
        if (m == statmap::Method::OLS) {
            const statmap::GlmEstimate est = statmap::ols_fit(design, obs);
            theta = est.theta;
            rec["t"] = statmap::t_statistic(est, contrast);
        } else if (m == statmap::Method::ML) {
            const auto cov = ideal_noise_cov(args, dataset_dir, design.n());
            const statmap::GlmEstimate est =
                cov ? statmap::ml_fit(design, obs, *cov)
                    : statmap::ml_fit(design, obs, statmap::Matrix::identity(design.n()));
            rec["ideal_covariance"] = cov.has_value();
            theta = est.theta;
            rec["t"] = statmap::t_statistic(est, contrast);
        } else if (m == statmap::Method::ReML) {
            const statmap::RemlResult r =
                statmap::reml_fit(design, obs, reml_basis(design.n(), args.ar1));
            theta = r.estimate.theta;
            rec["lambdas"] = r.lambdas;
            rec["converged"] = r.converged;
            rec["iterations"] = r.iterations;
            rec["t"] = statmap::t_statistic(r.estimate, contrast);
        } else {
            const statmap::InverseFit fit = statmap::fit_inverse(design, obs, m, hyper);
            const statmap::Reconstruction native = statmap::reconstruct(fit, design);
            statmap::ReconstructOptions ropts;
            ropts.rescale = true;
            ropts.rescale_target = &obs;
            const statmap::Reconstruction scaled = statmap::reconstruct(fit, design, ropts);
            theta = scaled.theta_tilde;
            y_est = scaled.y_est;
            rec["omega"] = fit.omega;
            rec["biases"] = fit.biases;
            rec["theta_native"] = native.theta_tilde;
            rec["clamp_applied"] = native.clamp_applied;
        }
        if (y_est.empty()) y_est = statmap::multiply(design.x, theta);
        rec["theta"] = theta;
        double c_dot = 0.0;
        for (std::size_t j = 0; j < theta.size(); ++j) c_dot += contrast.weights[j] * theta[j];
        rec["contrast_value"] = c_dot;
        double mse = 0.0;
        for (std::size_t i = 0; i < y_est.size(); ++i) {
            const double d = obs.values[i] - y_est[i];
            mse += d * d;
        }
        rec["mse"] = mse / static_cast<double>(y_est.size());
        estimates[tag] = rec;
    }
    write_json(out / "estimates.json", estimates);
    write_json(out / "resolved_config.json", resolved);
    append_log(out, "fit tabular mode");
    std::cout << "wrote " << (out / "estimates.json").string() << "\n";
    return 0;
}

// --- infer ------------------------------------------------------------------

struct InferArgs {
    std::string config, out, dataset, method = "OLS", contrast;
    std::size_t K = 1000;
    std::uint64_t seed = 0;
    double alpha = 0.05;
    std::string map_path, mask, fwhm_text, residuals, null_mask, field = "T";
    double df = 0.0;
    std::size_t workers = 0;
    bool no_bonferroni = false;
    CLI::Option *o_contrast = nullptr, *o_K = nullptr, *o_seed = nullptr, *o_alpha = nullptr,
                *o_method = nullptr;
};

int run_infer(const InferArgs& args) {
    ConfigMerge cfg(args.config);
    const fs::path out = args.out;
    fs::create_directories(out);
    const double alpha = cfg.pick(args.o_alpha, "alpha", args.alpha);
    const std::uint64_t seed = cfg.pick(args.o_seed, "seed", args.seed);
    if (!(alpha > 0.0 && alpha < 1.0)) throw statmap::ConfigError("infer: alpha outside (0,1)");

    json report;
    report["command"] = "infer";
    report["alpha"] = alpha;
    report["seed"] = seed;
    report["results"] = json::object();

    json resolved;
    resolved["command"] = "infer";
    resolved["alpha"] = alpha;
    resolved["seed"] = seed;

    if (!args.dataset.empty()) {
        if (!fs::exists(args.dataset))
            throw statmap::ConfigError("infer: dataset not found: " + args.dataset);
        const statmap::LoadedDataset ds = statmap::load_dataset_csv(args.dataset);
        const statmap::Method method =
            statmap::method_from_string(cfg.pick(args.o_method, "method", args.method));
        const std::size_t K = cfg.pick(args.o_K, "K", args.K);
        statmap::Contrast contrast =
            args.o_contrast->count() > 0
                ? statmap::Contrast{parse_number_list(args.contrast, "contrast")}
                : default_condition_contrast(ds.design);
        statmap::PermutationOptions opts;
        opts.workers = args.workers > 0 ? args.workers : env_workers();
        const statmap::PermutationResult res =
            statmap::permutation_test(ds.design, ds.obs, method, contrast, K, seed, opts);
        report["results"]["permutation"] = statmap::permutation_result_to_json(res, method);
        resolved["method"] = statmap::to_string(method);
        resolved["K"] = K;
        resolved["contrast"] = contrast.weights;

        // null-distribution shadeplot: permuted-contrast histogram with the
        // observed value overlaid
        const json& hist = report["results"]["permutation"]["null_histogram"];
        statmap::Vector edges, counts;
        const double lo = hist["lo"], hi = hist["hi"];
        const auto& cts = hist["counts"];
        for (std::size_t b = 0; b <= cts.size(); ++b)
            edges.push_back(lo + (hi - lo) * static_cast<double>(b) /
                                     static_cast<double>(cts.size()));
        for (const auto& c : cts) counts.push_back(c.get<double>());
        statmap::SvgPlot plot(
            "Permutation null distribution (" + statmap::to_string(method) + ")",
            "contrast value", "count");
        plot.add_histogram(edges, counts, "#4477aa", "null");
        plot.add_vline(res.observed, "#cc3311", "observed");
        std::ostringstream svg;
        plot.write(svg);
        write_text(out / "null_hist.svg", svg.str());
    }

    if (!args.map_path.empty()) {
        const statmap::Volume map = statmap::read_volume(args.map_path);
        const statmap::Mask mask =
            args.mask.empty() ? statmap::Mask::full(map.dims) : statmap::load_mask(args.mask);
        std::array<double, 3> fwhm{1.0, 1.0, 1.0};
        if (!args.residuals.empty()) {
            std::vector<statmap::Volume> res_maps;
            std::stringstream ss(args.residuals);
            std::string item;
            while (std::getline(ss, item, ',')) res_maps.push_back(statmap::read_volume(item));
            fwhm = statmap::estimate_smoothness(res_maps, mask).fwhm;
        } else if (!args.fwhm_text.empty()) {
            const statmap::Vector f = parse_number_list(args.fwhm_text, "fwhm");
            if (f.size() != 3) throw statmap::ConfigError("fwhm: need three values");
            fwhm = {f[0], f[1], f[2]};
        } else {
            throw statmap::ConfigError("infer: map mode needs --fwhm or --residuals");
        }

        statmap::RftSpec spec;
        spec.resels = statmap::resel_counts(mask, fwhm);
        spec.field_type = args.field == "gaussian" ? statmap::RftSpec::Field::Gaussian
                                                   : statmap::RftSpec::Field::T;
        spec.df = args.df;
        statmap::RftOptions ropts;
        ropts.voxel_count = mask.count();
        ropts.bonferroni_cap = !args.no_bonferroni;
        const double u = statmap::rft_voxel_threshold(spec, alpha, ropts);

        std::size_t supra = 0;
        statmap::Vector in_mask_values;
        for (std::size_t i = 0; i < map.data.size(); ++i) {
            if (!mask.bits[i] || std::isnan(map.data[i])) continue;
            in_mask_values.push_back(map.data[i]);
            supra += map.data[i] > u ? 1 : 0;
        }
        json rft;
        rft["threshold"] = u;
        rft["resels"] = spec.resels;
        rft["fwhm"] = std::vector<double>{fwhm[0], fwhm[1], fwhm[2]};
        rft["field"] = args.field == "gaussian" ? "gaussian" : "T";
        rft["df"] = args.df;
        rft["suprathreshold_voxels"] = supra;
        rft["in_mask_voxels"] = mask.count();
        rft["bonferroni_cap"] = !args.no_bonferroni;
        report["results"]["rft"] = rft;
        resolved["fwhm"] = rft["fwhm"];
        resolved["field"] = rft["field"];
        resolved["df"] = args.df;

        if (!args.null_mask.empty()) {
            const statmap::Mask nm = statmap::load_mask(args.null_mask);
            statmap::Vector scores;
            for (std::size_t i = 0; i < map.data.size(); ++i)
                if (nm.bits[i] && !std::isnan(map.data[i])) scores.push_back(map.data[i]);
            const double np_u = statmap::np_threshold(scores, alpha);
            std::size_t np_supra = 0;
            for (double v : in_mask_values) np_supra += v > np_u ? 1 : 0;
            report["results"]["neyman_pearson"] = {{"threshold", np_u},
                                                   {"null_scores", scores.size()},
                                                   {"suprathreshold_voxels", np_supra}};
        }

        if (!in_mask_values.empty()) {
            double lo = in_mask_values[0], hi = in_mask_values[0];
            for (double v : in_mask_values) {
                lo = std::min(lo, v);
                hi = std::max(hi, v);
            }
            if (!(hi > lo)) hi = lo + 1.0;
            constexpr std::size_t kBins = 64;
            statmap::Vector edges(kBins + 1), counts(kBins, 0.0);
            for (std::size_t b = 0; b <= kBins; ++b)
                edges[b] = lo + (hi - lo) * static_cast<double>(b) / kBins;
            for (double v : in_mask_values) {
                auto b = static_cast<std::size_t>((v - lo) / (hi - lo) * kBins);
                if (b >= kBins) b = kBins - 1;
                counts[b] += 1.0;
            }
            statmap::SvgPlot plot("Map scores and thresholds", "statistic", "count");
            plot.add_histogram(edges, counts, "#4477aa", "in-mask scores");
            plot.add_vline(u, "#cc3311", "RFT");
            if (report["results"].contains("neyman_pearson"))
                plot.add_vline(report["results"]["neyman_pearson"]["threshold"].get<double>(),
                               "#228833", "NP");
            std::ostringstream svg;
            plot.write(svg);
            write_text(out / "thresholds.svg", svg.str());
        }
    }

    if (report["results"].empty())
        throw statmap::ConfigError("infer: nothing to do; give --dataset or --map");

    write_json(out / "report.json", report);
    write_json(out / "resolved_config.json", resolved);
    append_log(out, "infer");
    std::cout << "wrote " << (out / "report.json").string() << "\n";
    return 0;
}

// --- l1study ----------------------------------------------------------------

struct L1Args {
    std::string config, out;
    std::size_t n = 100, trials = 100;
    double theta_diff = 1.0;
    std::string sigma_grid = "0,0.25,0.5,0.75,1,1.5,2";
    std::uint64_t seed = 0;
    CLI::Option *o_n = nullptr, *o_trials = nullptr, *o_theta = nullptr, *o_grid = nullptr,
                *o_seed = nullptr;
};

int run_l1study(const L1Args& args) {
    ConfigMerge cfg(args.config);
    statmap::L1StudyConfig c;
    c.n = cfg.pick(args.o_n, "n", args.n);
    c.trials = cfg.pick(args.o_trials, "trials", args.trials);
    c.theta_diff = cfg.pick(args.o_theta, "theta_diff", args.theta_diff);
    c.sigma_grid =
        parse_number_list(cfg.pick(args.o_grid, "sigma_grid", args.sigma_grid), "sigma_grid");
    const std::uint64_t seed = cfg.pick(args.o_seed, "seed", args.seed);
    try {
        c.validate();
    } catch (const statmap::InvalidSpec& e) {
        throw statmap::ConfigError(e.what());
    }

    const fs::path out = args.out;
    fs::create_directories(out);
    const auto table = statmap::run_l1_mse_experiment(c, seed);
    std::ostringstream csv;
    statmap::export_l1_table_csv(table, csv);
    write_text(out / "l1study.csv", csv.str());

    statmap::Vector xs, l1, mse;
    for (const auto& row : table) {
        xs.push_back(row.sigma);
        l1.push_back(row.mean_l1_error);
        mse.push_back(row.mean_mse_error);
    }
    statmap::SvgPlot plot("Weight estimation error vs noise", "sigma", "mean |w - 1/d|");
    plot.add_line(xs, mse, "#4477aa", "MSE");
    plot.add_line(xs, l1, "#cc3311", "L1");
    std::ostringstream svg;
    plot.write(svg);
    write_text(out / "l1study.svg", svg.str());

    json resolved;
    resolved["command"] = "l1study";
    resolved["n"] = c.n;
    resolved["trials"] = c.trials;
    resolved["theta_diff"] = c.theta_diff;
    resolved["sigma_grid"] = c.sigma_grid;
    resolved["seed"] = seed;
    write_json(out / "resolved_config.json", resolved);
    append_log(out, "l1study");
    std::cout << "wrote " << (out / "l1study.csv").string() << "\n";
    return 0;
}

// --- report -----------------------------------------------------------------

int run_report(const std::string& run_dir) {
    const fs::path dir = run_dir;
    if (!fs::exists(dir))
        throw statmap::ConfigError("report: run directory not found: " + run_dir);
    std::ostringstream md;
    md << "# Run summary\n\n";

    const fs::path cfg = dir / "resolved_config.json";
    if (fs::exists(cfg)) {
        const json j = json::parse(statmap::io_detail::read_file(cfg.string()));
        md << "- command: `" << j.value("command", "?") << "`\n";
        if (j.contains("spec"))
            md << "- n: " << j["spec"].value("n", 0)
               << ", cnr: " << j["spec"].value("cnr", 0.0) << "\n";
    }
    const fs::path est = dir / "estimates.json";
    if (fs::exists(est)) {
        const json j = json::parse(statmap::io_detail::read_file(est.string()));
        md << "\n## Estimates\n\n| method | contrast | mse |\n|---|---|---|\n";
        for (const auto& [k, v] : j.items())
            md << "| " << k << " | " << v.value("contrast_value", 0.0) << " | "
               << v.value("mse", 0.0) << " |\n";
    }
    const fs::path rep = dir / "report.json";
    if (fs::exists(rep)) {
        const json j = json::parse(statmap::io_detail::read_file(rep.string()));
        if (j.contains("results")) {
            if (j["results"].contains("permutation")) {
                const auto& p = j["results"]["permutation"];
                md << "\n## Permutation test\n\n- method: " << p.value("method", "?")
                   << "\n- observed: " << p.value("observed", 0.0)
                   << "\n- p-value: " << p.value("p_value", 1.0) << " (K=" << p.value("K", 0)
                   << ")\n";
            }
            if (j["results"].contains("rft")) {
                const auto& r = j["results"]["rft"];
                md << "\n## RFT threshold\n\n- u = " << r.value("threshold", 0.0)
                   << "\n- suprathreshold voxels: " << r.value("suprathreshold_voxels", 0)
                   << " of " << r.value("in_mask_voxels", 0) << "\n";
            }
            if (j["results"].contains("neyman_pearson")) {
                const auto& r = j["results"]["neyman_pearson"];
                md << "\n## Neyman-Pearson threshold\n\n- u = " << r.value("threshold", 0.0)
                   << "\n";
            }
        }
    }
    const fs::path l1 = dir / "l1study.csv";
    if (fs::exists(l1)) md << "\n## L1 study\n\nSee `l1study.csv` and `l1study.svg`.\n";

    write_text(dir / "summary.md", md.str());
    std::cout << "wrote " << (dir / "summary.md").string() << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"statmap: GLM and inverse-GLM estimation with permutation, RFT and "
                 "Neyman-Pearson inference"};
    app.require_subcommand(1);

    SimulateArgs sim;
    sim.out = env_or("STATMAP_OUTDIR", ".");
    CLI::App* c_sim = app.add_subcommand("simulate", "generate a synthetic block-design dataset");
    c_sim->add_option("--config", sim.config, "JSON config; flags override");
    c_sim->add_option("--out", sim.out, "output directory");
    sim.o_n = c_sim->add_option("--n", sim.spec.n, "time points");
    sim.o_block = c_sim->add_option("--block-len", sim.spec.block_len, "scans per block");
    sim.o_dt = c_sim->add_option("--dt", sim.spec.dt, "seconds per scan");
    sim.o_cnr = c_sim->add_option("--cnr", sim.spec.cnr, "contrast-to-noise ratio");
    sim.o_cv = c_sim->add_option("--cv", sim.spec.cv, "covariate amplitude");
    sim.o_seed = c_sim->add_option("--seed", sim.spec.seed, "master seed");
    sim.o_theta = c_sim->add_option("--theta", sim.theta_text, "true parameters, e.g. 1,0,1");

    FitArgs fit;
    fit.out = env_or("STATMAP_OUTDIR", ".");
    CLI::App* c_fit = app.add_subcommand("fit", "estimate parameters by one or more methods");
    c_fit->add_option("--config", fit.config, "JSON config; flags override");
    c_fit->add_option("--out", fit.out, "output directory");
    c_fit->add_option("--dataset", fit.dataset, "simulator dataset.csv");
    c_fit->add_option("--design", fit.design, "design matrix CSV");
    c_fit->add_option("--roles", fit.roles, "sidecar JSON mapping column name to role");
    c_fit->add_option("--obs", fit.obs, "observations CSV (one column)");
    c_fit->add_option("--volumes", fit.volumes, "4-D NIfTI subject stack");
    c_fit->add_option("--mask", fit.mask, "mask volume (.nii) or voxel list (.json)");
    fit.o_methods = c_fit->add_option("--methods", fit.methods, "comma list of methods");
    fit.o_contrast =
        c_fit->add_option("--contrast", fit.contrast, "contrast weights, e.g. 1,-1,0");
    c_fit->add_option("--synthetic-config", fit.synthetic_config,
                      "resolved simulate config for the ideal-ML covariance");
    c_fit->add_option("--noise-realizations", fit.noise_realizations,
                      "realizations for the ideal-ML covariance");
    auto* oc = c_fit->add_option("--svr-c", fit.svr_c, "SVR box constraint (raw targets)");
    auto* oe = c_fit->add_option("--svr-eps", fit.svr_eps, "SVR tube half-width (raw targets)");
    c_fit->add_flag("--ar1", fit.ar1, "add a lag-1 band to the ReML component basis");
    c_fit->add_option("--workers", fit.workers, "worker threads");
    c_fit->callback([&fit, oc, oe] { fit.svr_hyper_set = oc->count() > 0 || oe->count() > 0; });

    InferArgs inf;
    inf.out = env_or("STATMAP_OUTDIR", ".");
    CLI::App* c_inf = app.add_subcommand("infer", "permutation, RFT and NP inference");
    c_inf->add_option("--config", inf.config, "JSON config; flags override");
    c_inf->add_option("--out", inf.out, "output directory");
    c_inf->add_option("--dataset", inf.dataset, "simulator dataset.csv (permutation test)");
    inf.o_method = c_inf->add_option("--method", inf.method, "estimation method");
    inf.o_contrast = c_inf->add_option("--contrast", inf.contrast, "contrast weights");
    inf.o_K = c_inf->add_option("--K", inf.K, "number of permutations");
    inf.o_seed = c_inf->add_option("--seed", inf.seed, "run seed");
    inf.o_alpha = c_inf->add_option("--alpha", inf.alpha, "significance level");
    c_inf->add_option("--map", inf.map_path, "statistic map (.nii) for RFT thresholding");
    c_inf->add_option("--mask", inf.mask, "analysis mask (.nii or .json)");
    c_inf->add_option("--fwhm", inf.fwhm_text, "smoothness FWHM in voxels, e.g. 3,3,3");
    c_inf->add_option("--residuals", inf.residuals, "comma list of residual maps (.nii)");
    c_inf->add_option("--df", inf.df, "error degrees of freedom for T fields");
    c_inf->add_option("--field", inf.field, "field type for EC densities")
        ->check(CLI::IsMember({"T", "gaussian"}));
    c_inf->add_option("--null-mask", inf.null_mask, "null-region mask for the NP threshold");
    c_inf->add_flag("--no-bonferroni", inf.no_bonferroni, "disable the Bonferroni cap");
    c_inf->add_option("--workers", inf.workers, "worker threads");

    L1Args l1;
    l1.out = env_or("STATMAP_OUTDIR", ".");
    CLI::App* c_l1 = app.add_subcommand("l1study", "L1 vs MSE inverse-regression study");
    c_l1->add_option("--config", l1.config, "JSON config; flags override");
    c_l1->add_option("--out", l1.out, "output directory");
    l1.o_n = c_l1->add_option("--n", l1.n, "samples per experiment (even)");
    l1.o_trials = c_l1->add_option("--trials", l1.trials, "experiments per noise level");
    l1.o_theta = c_l1->add_option("--theta-diff", l1.theta_diff, "true parameter difference");
    l1.o_grid = c_l1->add_option("--sigma-grid", l1.sigma_grid, "comma list of noise sd values");
    l1.o_seed = c_l1->add_option("--seed", l1.seed, "master seed");

    std::string report_dir;
    CLI::App* c_rep = app.add_subcommand("report", "summarize a run directory");
    c_rep->add_option("--run", report_dir, "run directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;  // usage errors exit 2, --help exits 0
    }

    try {
        if (c_sim->parsed()) return run_simulate(sim);
        if (c_fit->parsed()) return run_fit(fit);
        if (c_inf->parsed()) return run_infer(inf);
        if (c_l1->parsed()) return run_l1study(l1);
        if (c_rep->parsed()) return run_report(report_dir);
    } catch (const statmap::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
