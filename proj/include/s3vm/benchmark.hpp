/**
 * @file benchmark.hpp
 * @brief End-to-end pipeline: dataset -> standardize -> mask -> hyperparameters
 *        -> assemble -> solve, with machine-readable JSON reports, the
 *        relaxation-comparison mode, and seed/fraction sweeps.
 */

#pragma once

#include <chrono>
#include <cstdint>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "s3vm/branch_and_cut.hpp"
#include "s3vm/dataset.hpp"
#include "s3vm/kernels.hpp"
#include "s3vm/relaxations.hpp"
#include "s3vm/svm_baseline.hpp"
#include "s3vm/tightening.hpp"

namespace s3vm {

struct RunConfig {
    std::string instance = "dataset";
    std::string kernel = "cv";  ///< "linear", "rbf", or "cv"
    double gamma = 0.0;         ///< <= 0: use 1/d
    double cl = 0.0;            ///< <= 0: cross-validate
    double cu_factor = 0.2;
    double labeled_fraction = 0.1;
    std::uint64_t seed = 1;
    double gap_tol_percent = 0.1;
    double time_limit_sec = 3600.0;
    bool balancing = true;
    int cv_folds = 10;
    int max_cuts_factor = 5;
    double viol_tol = 1e-2;
    double inactive_tol = 1e-4;
    double stall_tol = 1e-3;
    bool product_cuts = false;
    int workers = 1;
    bool deterministic = false;  ///< forces a single worker
    SolverTolerances tols;

    int effective_workers() const { return deterministic ? 1 : std::max(1, workers); }
};

namespace bench_detail {

/// Instance in solver order (labeled points first) with the original-order map.
struct AssembledInstance {
    ProblemData problem;
    std::vector<Index> order;  ///< order[k] = original dataset row of solver slot k
    KernelSpec spec;
    double cl = 1.0;
    double cu = 1.0;
    Labeling initial;  ///< baseline-SVM labeling in solver order
    BaselineResult baseline;
};

inline AssembledInstance assemble_from_dataset(const Dataset& ds, const KernelSpec& spec,
                                               double cl, double cu_factor, bool balancing,
                                               const SolverTolerances& tols) {
    AssembledInstance out;
    out.spec = spec;
    out.cl = cl;

    for (Index i = 0; i < ds.size(); ++i)
        if (ds.labeled_mask[static_cast<std::size_t>(i)]) out.order.push_back(i);
    const Index l = static_cast<Index>(out.order.size());
    for (Index i = 0; i < ds.size(); ++i)
        if (!ds.labeled_mask[static_cast<std::size_t>(i)]) out.order.push_back(i);
    const Index n = ds.size();
    if (l < 1 || l >= n)
        throw InvalidInput("assemble_from_dataset: need labeled and unlabeled points");

    out.cu = cu_factor * static_cast<double>(l) / static_cast<double>(n - l) * cl;

    Matrix feats(n, ds.dim());
    std::vector<int> labels;
    for (Index k = 0; k < n; ++k) feats.row(k) = ds.features.row(out.order[static_cast<std::size_t>(k)]);
    for (Index k = 0; k < l; ++k)
        labels.push_back(ds.truth[static_cast<std::size_t>(out.order[static_cast<std::size_t>(k)])]);

    Matrix gram = gram_matrix(feats, spec);
    out.problem = assemble_problem(gram, labels, cl, out.cu, balancing);

    out.baseline = baseline_svm(ds, spec, cl, tols);
    out.initial.labeled_count = l;
    out.initial.values.resize(static_cast<std::size_t>(n));
    for (Index k = 0; k < n; ++k)
        out.initial.values[static_cast<std::size_t>(k)] =
            out.baseline.predictions[static_cast<std::size_t>(out.order[static_cast<std::size_t>(k)])];
    return out;
}

inline std::vector<int> to_original_order(const Labeling& lab, const std::vector<Index>& order) {
    std::vector<int> out(lab.values.size(), 0);
    for (std::size_t k = 0; k < lab.values.size(); ++k)
        out[static_cast<std::size_t>(order[k])] = lab.values[k];
    return out;
}

inline const char* status_name(SolveStatus s) {
    switch (s) {
        case SolveStatus::kOptimalWithinGap: return "optimal_within_gap";
        case SolveStatus::kTimeLimit: return "time_limit";
        case SolveStatus::kInfeasible: return "infeasible";
    }
    return "unknown";
}

inline const char* kernel_name(const KernelSpec& spec) {
    switch (spec.kind) {
        case KernelKind::kLinear: return "linear";
        case KernelKind::kRbf: return "rbf";
        case KernelKind::kIdeal: return "ideal";
    }
    return "unknown";
}

/// Kernel/penalty selection: fixed values or cross-validation on the labeled
/// points only. A fixed kernel with "cv" penalty restricts the search to
/// that kernel.
inline std::pair<KernelSpec, double> choose_hyperparameters(const Dataset& ds,
                                                            const RunConfig& cfg) {
    const double gamma = cfg.gamma > 0.0 ? cfg.gamma : default_gamma(ds.dim());
    const bool kernel_fixed = cfg.kernel == "linear" || cfg.kernel == "rbf";
    KernelSpec fixed_spec =
        cfg.kernel == "linear" ? KernelSpec::linear() : KernelSpec::rbf(gamma);
    if (kernel_fixed && cfg.cl > 0.0) return {fixed_spec, cfg.cl};

    std::vector<KernelSpec> restriction;
    const std::vector<KernelSpec>* kernel_set = nullptr;
    if (kernel_fixed) {
        restriction = {fixed_spec};
        kernel_set = &restriction;
    }
    auto [spec, cl] = cross_validate(ds, default_penalty_grid(), cfg.cv_folds, cfg.seed,
                                     cfg.tols, kernel_set);
    if (cfg.cl > 0.0) cl = cfg.cl;
    if (spec.kind == KernelKind::kRbf && cfg.gamma > 0.0) spec.gamma = cfg.gamma;
    return {spec, cl};
}

}  // namespace bench_detail

/**
 * @brief Full solve pipeline on a dataset that already carries its labeled
 *        mask. Produces the stable report schema; failures are reported with
 *        the stage that raised them.
 */
inline nlohmann::json run_benchmark(const Dataset& dataset, const RunConfig& cfg) {
    using nlohmann::json;
    json report;
    report["instance"] = cfg.instance;
    std::string stage = "standardize";
    try {
        Dataset ds = dataset;
        ds.features = standardize(ds.features);

        stage = "hyperparameters";
        auto [spec, cl] = bench_detail::choose_hyperparameters(ds, cfg);

        stage = "assemble";
        bench_detail::AssembledInstance inst = bench_detail::assemble_from_dataset(
            ds, spec, cl, cfg.cu_factor, cfg.balancing, cfg.tols);

        stage = "solve";
        SolveParams params;
        params.gap_target_percent = cfg.gap_tol_percent;
        params.time_limit_sec = cfg.time_limit_sec;
        params.viol_tol = cfg.viol_tol;
        params.inactive_tol = cfg.inactive_tol;
        params.stall_tol = cfg.stall_tol;
        params.max_cuts_factor = cfg.max_cuts_factor;
        params.product_cuts = cfg.product_cuts;
        params.workers = cfg.effective_workers();
        params.tols = cfg.tols;
        params.initial_labeling = inst.initial;
        SolveReport sol = solve(inst.problem, params);

        stage = "report";
        report["n"] = inst.problem.n;
        report["l"] = inst.problem.l;
        report["kernel"] = bench_detail::kernel_name(spec);
        report["cl"] = cl;
        report["cu"] = inst.cu;
        report["status"] = bench_detail::status_name(sol.status);
        report["nodes"] = sol.nodes_processed;
        report["wall_time_sec"] = sol.wall_time_sec;
        if (sol.status != SolveStatus::kInfeasible) {
            report["lb"] = sol.lower_bound;
            report["ub"] = sol.incumbent.objective;
            report["gap_percent"] = sol.gap_percent;
            std::vector<int> labeling =
                bench_detail::to_original_order(sol.incumbent.labeling, inst.order);
            report["labeling"] = labeling;
            if (auto acc = accuracy(labeling, ds.truth, ds.labeled_mask))
                report["accuracy_percent"] = *acc;
            if (inst.baseline.accuracy)
                report["baseline_accuracy_percent"] = *inst.baseline.accuracy;
        }
        return report;
    } catch (const std::exception& e) {
        report["error"] = e.what();
        report["stage"] = stage;
        return report;
    }
}

/**
 * @brief Relaxation comparison in the literature protocol: balancing off,
 *        upper bound from the supervised-SVM labeling QP, then the QP,
 *        Lagrangian-QP, plain SDP and cutting-plane SDP bounds with times.
 */
inline nlohmann::json run_bounds_comparison(const Dataset& dataset, const RunConfig& cfg) {
    using nlohmann::json;
    using Clock = std::chrono::steady_clock;
    json report;
    report["instance"] = cfg.instance;
    std::string stage = "standardize";
    try {
        Dataset ds = dataset;
        ds.features = standardize(ds.features);

        stage = "hyperparameters";
        auto [spec, cl] = bench_detail::choose_hyperparameters(ds, cfg);

        stage = "assemble";
        bench_detail::AssembledInstance inst = bench_detail::assemble_from_dataset(
            ds, spec, cl, cfg.cu_factor, /*balancing=*/false, cfg.tols);
        const ProblemData& p = inst.problem;
        report["n"] = p.n;
        report["l"] = p.l;
        report["kernel"] = bench_detail::kernel_name(spec);
        report["cl"] = cl;
        report["cu"] = inst.cu;

        stage = "upper_bound";
        LabelQpResult ubr = label_qp(p, inst.initial, cfg.tols);
        if (ubr.status != IpmStatus::kOptimal)
            throw NumericalError("baseline labeling QP failed");
        const double ub = ubr.incumbent.objective;
        report["ub"] = ub;

        const auto timed = [](auto&& fn) {
            const auto t0 = Clock::now();
            const double value = fn();
            const double secs = std::chrono::duration<double>(Clock::now() - t0).count();
            return std::make_pair(value, secs);
        };

        stage = "qp";
        auto [qp, qp_time] = timed([&] { return qp_bound(p, BoxBounds::from_labels(p), cfg.tols); });
        report["bounds"]["qp"] = {{"lb", qp},
                                  {"gap_percent", percentage_gap(ub, std::min(qp, ub))},
                                  {"time_sec", qp_time}};

        stage = "qp_lagrangian";
        auto [ql, ql_time] =
            timed([&] { return qp_lagrangian_bound(p, BoxBounds::from_labels(p), cfg.tols); });
        report["bounds"]["qp_l"] = {{"lb", ql},
                                    {"gap_percent", percentage_gap(ub, std::min(ql, ub))},
                                    {"time_sec", ql_time}};

        stage = "sdp";
        SolverTolerances sdp_tols = cfg.tols;
        sdp_tols.workers = cfg.effective_workers();
        auto [sdp, sdp_time] = timed([&] {
            SdpSolution sol = solve_sdp(build_basic_sdp(p, BoxBounds::from_labels(p)), sdp_tols);
            if (sol.status != IpmStatus::kOptimal)
                throw NumericalError("basic SDP solve failed");
            return sol.objective;
        });
        report["bounds"]["sdp"] = {{"lb", sdp},
                                   {"gap_percent", percentage_gap(ub, std::min(sdp, ub))},
                                   {"time_sec", sdp_time}};

        stage = "obbt";
        TightenOptions topts;
        topts.workers = cfg.effective_workers();
        topts.tols = cfg.tols;
        const auto t_box0 = Clock::now();
        TightenReport boxes = obbt(p, BoxBounds::from_labels(p), ub, topts);
        const double box_time = std::chrono::duration<double>(Clock::now() - t_box0).count();

        stage = "sdp_rlt";
        CutParams cparams;
        cparams.gap_target_percent = cfg.gap_tol_percent;
        cparams.viol_tol = cfg.viol_tol;
        cparams.inactive_tol = cfg.inactive_tol;
        cparams.stall_tol = cfg.stall_tol;
        cparams.max_cuts_factor = cfg.max_cuts_factor;
        cparams.product_cuts = cfg.product_cuts;
        cparams.tols = cfg.tols;
        cparams.tols.workers = cfg.effective_workers();
        const TightenCallback marginals = [&](const BoxBounds& b, const SdpSolution& s,
                                              double u, double lo) -> std::optional<BoxBounds> {
            TightenReport rep = marginal_box_update(b, s, u, lo);
            if (rep.updated_indices.empty()) return std::nullopt;
            return rep.boxes;
        };
        const auto t_rlt0 = Clock::now();
        BoundResult rlt = boxes.proven_optimal
                              ? BoundResult{}
                              : cutting_plane_bound(p, boxes.boxes, ub, cparams, nullptr,
                                                    marginals);
        double rlt_lb = boxes.proven_optimal ? ub : rlt.lower_bound;
        const double rlt_time = std::chrono::duration<double>(Clock::now() - t_rlt0).count();
        report["bounds"]["sdp_rlt"] = {{"lb", std::min(rlt_lb, ub)},
                                       {"gap_percent", percentage_gap(ub, std::min(rlt_lb, ub))},
                                       {"time_sec", rlt_time},
                                       {"box_time_sec", box_time},
                                       {"iterations", boxes.proven_optimal ? 0 : rlt.iterations}};
        return report;
    } catch (const std::exception& e) {
        report["error"] = e.what();
        report["stage"] = stage;
        return report;
    }
}

/**
 * @brief Sweep over labeled fractions {10%, 20%, 30%} and three seeds,
 *        producing one solve report each plus a CSV summary string.
 */
inline nlohmann::json run_sweep(const Dataset& dataset, const RunConfig& cfg) {
    using nlohmann::json;
    json runs = json::array();
    std::ostringstream csv;
    csv << "instance,p,seed,n,l,kernel,cl,lb,ub,gap_percent,nodes,wall_time_sec,status,"
           "accuracy_percent,baseline_accuracy_percent\n";
    for (double p : {0.1, 0.2, 0.3}) {
        for (std::uint64_t ds_seed = cfg.seed; ds_seed < cfg.seed + 3; ++ds_seed) {
            RunConfig rc = cfg;
            rc.labeled_fraction = p;
            rc.seed = ds_seed;
            json rep;
            try {
                Dataset masked = mask_labels(dataset, p, ds_seed);
                rep = run_benchmark(masked, rc);
            } catch (const std::exception& e) {
                rep["instance"] = cfg.instance;
                rep["error"] = e.what();
                rep["stage"] = "mask";
            }
            rep["labeled_fraction"] = p;
            rep["seed"] = ds_seed;
            runs.push_back(rep);

            const auto field = [&](const char* key) -> std::string {
                if (!rep.contains(key)) return "";
                std::ostringstream os;
                os << rep[key];
                std::string s = os.str();
                if (!s.empty() && s.front() == '"') s = s.substr(1, s.size() - 2);
                return s;
            };
            csv << cfg.instance << ',' << p << ',' << ds_seed << ',' << field("n") << ','
                << field("l") << ',' << field("kernel") << ',' << field("cl") << ','
                << field("lb") << ',' << field("ub") << ',' << field("gap_percent") << ','
                << field("nodes") << ',' << field("wall_time_sec") << ',' << field("status")
                << ',' << field("accuracy_percent") << ','
                << field("baseline_accuracy_percent") << '\n';
        }
    }
    json out;
    out["runs"] = runs;
    out["csv"] = csv.str();
    return out;
}

}  // namespace s3vm
