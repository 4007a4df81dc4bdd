#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "statmap/io.hpp"
#include "statmap/volume.hpp"
#include "support/json_schema.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const char* kCli = STATMAP_CLI_PATH;

fs::path fresh_dir(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / "statmap_cli_tests" / name;
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

int run(const std::string& args) {
    const std::string cmd = std::string(kCli) + " " + args + " >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

TEST_CASE("simulate writes the dataset and is byte-reproducible") {
    const fs::path d1 = fresh_dir("sim1");
    const fs::path d2 = fresh_dir("sim2");
    const std::string common = "simulate --n 240 --block-len 30 --cnr 1 --seed 9 --out ";
    REQUIRE(run(common + d1.string()) == 0);
    REQUIRE(run(common + d2.string()) == 0);
    REQUIRE(fs::exists(d1 / "dataset.csv"));
    REQUIRE(fs::exists(d1 / "resolved_config.json"));
    REQUIRE(slurp(d1 / "dataset.csv") == slurp(d2 / "dataset.csv"));
    REQUIRE(slurp(d1 / "resolved_config.json") == slurp(d2 / "resolved_config.json"));

    // header plus n rows, six columns
    const std::string csv = slurp(d1 / "dataset.csv");
    REQUIRE(csv.rfind("t,task,rest,covariate,clean,obs\n", 0) == 0);
    std::size_t lines = 0;
    for (char ch : csv)
        if (ch == '\n') ++lines;
    REQUIRE(lines == 241);
}

TEST_CASE("config file values are used and flags win") {
    const fs::path d = fresh_dir("cfg");
    const fs::path cfg = d / "config.json";
    std::ofstream(cfg) << R"({"n": 200, "block_len": 25, "seed": 4, "cnr": 0.5})";
    REQUIRE(run("simulate --config " + cfg.string() + " --cnr 1.0 --out " + d.string()) == 0);
    const json resolved = json::parse(slurp(d / "resolved_config.json"));
    REQUIRE(resolved["spec"]["n"] == 200);    // from config
    REQUIRE(resolved["spec"]["cnr"] == 1.0);  // flag override
}

TEST_CASE("invalid configuration exits with code 2 and names the field") {
    const fs::path d = fresh_dir("bad");
    const std::string cmd = std::string(kCli) + " simulate --cnr 0 --out " + d.string() +
                            " 2> " + (d / "err.txt").string();
    const int status = std::system(cmd.c_str());
    REQUIRE(WEXITSTATUS(status) == 2);
    REQUIRE(slurp(d / "err.txt").find("cnr") != std::string::npos);
}

TEST_CASE("missing inputs exit with code 2 and name the path") {
    const fs::path d = fresh_dir("missing");
    const std::string cmd = std::string(kCli) + " fit --dataset " + (d / "no.csv").string() +
                            " --out " + d.string() + " 2> " + (d / "err.txt").string();
    const int status = std::system(cmd.c_str());
    REQUIRE(WEXITSTATUS(status) == 2);
    REQUIRE(slurp(d / "err.txt").find("no.csv") != std::string::npos);
}

TEST_CASE("fit on effectively noiseless data recovers the forward parameters") {
    const fs::path d = fresh_dir("noiseless");
    REQUIRE(run("simulate --n 300 --block-len 50 --cnr 1e12 --cv 1 --seed 2 --out " +
                d.string()) == 0);
    REQUIRE(run("fit --dataset " + (d / "dataset.csv").string() +
                " --methods OLS,ML,ReML,LS-iGLM,SVR-iGLM --out " + d.string()) == 0);
    const json est = json::parse(slurp(d / "estimates.json"));
    for (const char* m : {"OLS", "ML", "ReML"}) {
        REQUIRE(est[m]["theta"][0].get<double>() == Catch::Approx(1.0).margin(1e-6));
        REQUIRE(est[m]["theta"][1].get<double>() == Catch::Approx(0.0).margin(1e-6));
        REQUIRE(est[m]["theta"][2].get<double>() == Catch::Approx(1.0).margin(1e-6));
    }
    // inverse estimates exist and are finite; their scale is the inverse
    // model's, not the forward one
    for (const char* m : {"LS-iGLM", "SVR-iGLM"}) {
        for (const auto& v : est[m]["theta"]) REQUIRE(std::isfinite(v.get<double>()));
    }
}

TEST_CASE("infer produces a schema-valid report and plots") {
    const fs::path d = fresh_dir("infer");
    REQUIRE(run("simulate --n 240 --block-len 30 --seed 5 --out " + d.string()) == 0);
    REQUIRE(run("infer --dataset " + (d / "dataset.csv").string() +
                " --method OLS --K 99 --seed 3 --alpha 0.05 --out " + d.string()) == 0);
    REQUIRE(fs::exists(d / "null_hist.svg"));

    const json report = json::parse(slurp(d / "report.json"));
    const json schema =
        json::parse(slurp(fs::path(STATMAP_SOURCE_DIR) / "schemas/infer_report.schema.json"));
    const std::string err = schema::validate(report, schema);
    INFO(err);
    REQUIRE(err.empty());
    REQUIRE(report["results"]["permutation"]["K"] == 99);
    const std::string svg = slurp(d / "null_hist.svg");
    REQUIRE(svg.find("<svg") != std::string::npos);
    REQUIRE(svg.find("observed") != std::string::npos);
}

TEST_CASE("infer reruns are byte-identical") {
    const fs::path d = fresh_dir("repro1");
    const fs::path d2 = fresh_dir("repro2");
    REQUIRE(run("simulate --n 240 --block-len 30 --seed 6 --out " + d.string()) == 0);
    const std::string dataset = (d / "dataset.csv").string();
    REQUIRE(run("infer --dataset " + dataset + " --method LS-iGLM --K 50 --seed 4 --out " +
                d.string()) == 0);
    REQUIRE(run("infer --dataset " + dataset + " --method LS-iGLM --K 50 --seed 4 --out " +
                d2.string()) == 0);
    REQUIRE(slurp(d / "report.json") == slurp(d2 / "report.json"));
    REQUIRE(slurp(d / "null_hist.svg") == slurp(d2 / "null_hist.svg"));
}

TEST_CASE("rft threshold rises when alpha drops") {
    const fs::path d = fresh_dir("rft");
    statmap::Volume v = statmap::Volume::make({8, 8, 8}, {1, 1, 1});
    statmap::CounterRng rng(3, 0);
    for (double& x : v.data) x = rng.normal();
    statmap::write_volume(v, (d / "map.nii").string());

    auto threshold_at = [&](const std::string& alpha, const fs::path& out) {
        REQUIRE(run("infer --map " + (d / "map.nii").string() +
                    " --field gaussian --fwhm 2,2,2 --alpha " + alpha + " --out " +
                    out.string()) == 0);
        return json::parse(slurp(out / "report.json"))["results"]["rft"]["threshold"]
            .get<double>();
    };
    const double u05 = threshold_at("0.05", fresh_dir("rft05"));
    const double u01 = threshold_at("0.01", fresh_dir("rft01"));
    REQUIRE(u01 > u05);
}

TEST_CASE("volume fit writes readable statistic and parameter maps") {
    const fs::path d = fresh_dir("volfit");
    const std::size_t nsub = 20;
    statmap::Volume group = statmap::Volume::make({4, 4, 3}, {1, 1, 1}, nsub);
    statmap::CounterRng rng(8, 0);
    for (double& x : group.data) x = static_cast<double>(static_cast<float>(rng.normal()));
    statmap::write_volume(group, (d / "group.nii").string());

    std::ofstream(d / "design.csv") << [] {
        std::string s = "g1,g2\n";
        for (int i = 0; i < 20; ++i) s += i < 10 ? "1,0\n" : "0,1\n";
        return s;
    }();
    std::ofstream(d / "roles.json") << R"({"roles": {"g1": "condition", "g2": "condition"}})";

    REQUIRE(run("fit --volumes " + (d / "group.nii").string() + " --design " +
                (d / "design.csv").string() + " --roles " + (d / "roles.json").string() +
                " --methods OLS --out " + d.string()) == 0);
    const statmap::Volume stat = statmap::read_volume((d / "statmap_OLS.nii").string());
    REQUIRE(stat.dims == std::array<std::size_t, 3>{4, 4, 3});
    std::size_t finite = 0;
    for (double x : stat.data) finite += std::isfinite(x) ? 1 : 0;
    REQUIRE(finite == 48);
    REQUIRE(fs::exists(d / "theta_0_OLS.nii"));
    REQUIRE(fs::exists(d / "theta_1_OLS.nii"));
}

TEST_CASE("l1study emits the table and figure") {
    const fs::path d = fresh_dir("l1");
    REQUIRE(run("l1study --n 100 --trials 5 --sigma-grid 0,1,2 --seed 1 --out " + d.string()) ==
            0);
    REQUIRE(fs::exists(d / "l1study.csv"));
    const std::string csv = slurp(d / "l1study.csv");
    REQUIRE(csv.rfind("sigma,mean_abs_error_l1,mean_abs_error_mse\n", 0) == 0);
    const std::string svg = slurp(d / "l1study.svg");
    REQUIRE(svg.find("L1") != std::string::npos);
    REQUIRE(svg.find("MSE") != std::string::npos);
}

TEST_CASE("report summarizes a full run directory") {
    const fs::path d = fresh_dir("summary");
    REQUIRE(run("simulate --n 240 --block-len 30 --seed 1 --out " + d.string()) == 0);
    REQUIRE(run("fit --dataset " + (d / "dataset.csv").string() + " --methods OLS --out " +
                d.string()) == 0);
    REQUIRE(run("infer --dataset " + (d / "dataset.csv").string() +
                " --method OLS --K 30 --seed 2 --out " + d.string()) == 0);
    REQUIRE(run("report --run " + d.string()) == 0);
    const std::string md = slurp(d / "summary.md");
    REQUIRE(md.find("## Estimates") != std::string::npos);
    REQUIRE(md.find("## Permutation test") != std::string::npos);
}

TEST_CASE("usage errors exit with code 2") {
    REQUIRE(run("fit --no-such-flag") == 2);
    REQUIRE(run("") == 2);
}
