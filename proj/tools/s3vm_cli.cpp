// Command-line front end: solve one instance, compare relaxation bounds, or
// sweep labeled fractions and seeds, emitting JSON reports.

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdint>
#include <fstream>
#include <iostream>
#include <string>

#include "s3vm/benchmark.hpp"
#include "s3vm/dataset.hpp"

namespace {

std::string basename_of(const std::string& path) {
    const auto slash = path.find_last_of('/');
    std::string name = slash == std::string::npos ? path : path.substr(slash + 1);
    const auto dot = name.find_last_of('.');
    if (dot != std::string::npos) name = name.substr(0, dot);
    return name.empty() ? "dataset" : name;
}

void write_or_print(const nlohmann::json& doc, const std::string& path) {
    if (path.empty()) {
        std::cout << doc.dump(2) << std::endl;
        return;
    }
    std::ofstream out(path);
    if (!out) throw s3vm::InvalidInput("cannot write " + path);
    out << doc.dump(2) << std::endl;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Certified branch-and-cut solver for semi-supervised SVMs"};

    std::string data_path;
    std::string generate;
    long gen_n = 100;
    int label_col = -1;
    double labeled_fraction = 0.1;
    std::uint64_t seed = 1;
    std::string kernel = "cv";
    std::string gamma_str = "auto";
    std::string cl_str = "cv";
    double cu_factor = 0.2;
    std::string balancing = "on";
    double gap_tol = 0.1;
    double time_limit = 3600.0;
    int max_cuts_factor = 5;
    double viol_tol = 1e-2;
    double inactive_tol = 1e-4;
    double stall_tol = 1e-3;
    bool product_cuts = false;
    std::string mode = "solve";
    std::string output;
    int workers = 1;
    bool deterministic = false;
    int cv_folds = 10;

    app.add_option("--data", data_path, "CSV file, one sample per row");
    app.add_option("--generate", generate,
                   "Synthetic dataset instead of --data: 2moons, blobs, or three-band")
        ->check(CLI::IsMember({"2moons", "blobs", "three-band"}));
    app.add_option("--gen-n", gen_n, "Size of the generated dataset");
    app.add_option("--label-col", label_col, "Label column index, -1 for last");
    app.add_option("--labeled-fraction", labeled_fraction,
                   "Fraction of points whose labels are revealed (needs full truth)");
    app.add_option("--seed", seed, "Seed for masking and any generation");
    app.add_option("--kernel", kernel, "linear, rbf, or cv")
        ->check(CLI::IsMember({"linear", "rbf", "cv"}));
    app.add_option("--gamma", gamma_str, "RBF width, or 'auto' for 1/d");
    app.add_option("--cl", cl_str, "Labeled penalty C_l, or 'cv'");
    app.add_option("--cu-factor", cu_factor, "C_u = factor * l/(n-l) * C_l");
    app.add_option("--balancing", balancing, "Class balancing constraint: on or off")
        ->check(CLI::IsMember({"on", "off"}));
    app.add_option("--gap-tol", gap_tol, "Target optimality gap in percent");
    app.add_option("--time-limit-sec", time_limit, "Wall-clock limit in seconds");
    app.add_option("--max-cuts-factor", max_cuts_factor, "Add up to factor*n cuts per round");
    app.add_option("--viol-tol", viol_tol, "Minimum violation for adding a cut");
    app.add_option("--inactive-tol", inactive_tol, "Slack threshold for removing cuts");
    app.add_option("--stall-tol", stall_tol, "Relative bound-change stopping threshold");
    app.add_flag("--product-cuts", product_cuts, "Add linearized balancing products");
    app.add_option("--mode", mode, "solve, bounds, or sweep")
        ->check(CLI::IsMember({"solve", "bounds", "sweep"}));
    app.add_option("--output", output, "Report path (sweep also writes <output>.csv)");
    app.add_option("--workers", workers, "Worker threads for bound tightening");
    app.add_flag("--deterministic", deterministic, "Single-worker reproducible mode");
    app.add_option("--cv-folds", cv_folds, "Folds for hyperparameter cross-validation");

    CLI11_PARSE(app, argc, argv);

    try {
        if (data_path.empty() == generate.empty())
            throw s3vm::InvalidInput("pass exactly one of --data or --generate");

        s3vm::Dataset ds;
        std::string instance;
        if (!data_path.empty()) {
            ds = s3vm::load_csv(data_path, label_col);
            instance = basename_of(data_path);
        } else if (generate == "2moons") {
            ds = s3vm::make_two_moons(gen_n, seed);
            instance = "2moons" + std::to_string(gen_n);
        } else if (generate == "blobs") {
            ds = s3vm::make_blobs(gen_n, seed);
            instance = "blobs" + std::to_string(gen_n);
        } else {
            ds = s3vm::make_three_band(seed);
            instance = "three-band";
        }

        s3vm::RunConfig cfg;
        cfg.instance = instance;
        cfg.kernel = kernel;
        cfg.gamma = gamma_str == "auto" ? 0.0 : std::stod(gamma_str);
        cfg.cl = cl_str == "cv" ? 0.0 : std::stod(cl_str);
        cfg.cu_factor = cu_factor;
        cfg.labeled_fraction = labeled_fraction;
        cfg.seed = seed;
        cfg.gap_tol_percent = gap_tol;
        cfg.time_limit_sec = time_limit;
        cfg.balancing = balancing == "on";
        cfg.cv_folds = cv_folds;
        cfg.max_cuts_factor = max_cuts_factor;
        cfg.viol_tol = viol_tol;
        cfg.inactive_tol = inactive_tol;
        cfg.stall_tol = stall_tol;
        cfg.product_cuts = product_cuts;
        cfg.workers = workers;
        cfg.deterministic = deterministic;

        nlohmann::json report;
        if (mode == "sweep") {
            if (!ds.has_full_truth())
                throw s3vm::InvalidInput("sweep mode needs a fully labeled dataset");
            report = s3vm::run_sweep(ds, cfg);
            if (!output.empty()) {
                std::ofstream csv(output + ".csv");
                csv << report["csv"].get<std::string>();
            }
        } else {
            // Mask when the truth is complete; CSV-provided '?' rows are
            // taken as the semi-supervised split directly.
            s3vm::Dataset run_ds = ds;
            if (ds.has_full_truth()) run_ds = s3vm::mask_labels(ds, labeled_fraction, seed);
            report = (mode == "bounds") ? s3vm::run_bounds_comparison(run_ds, cfg)
                                        : s3vm::run_benchmark(run_ds, cfg);
        }
        write_or_print(report, output);
        return report.contains("error") ? 1 : 0;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << std::endl;
        return 2;
    }
}
