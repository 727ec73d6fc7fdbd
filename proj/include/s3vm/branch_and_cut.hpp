/**
 * @file branch_and_cut.hpp
 * @brief Best-first branch-and-cut: node management, branching candidate
 *        selection by rank-sum scoring, pruning, and termination at the
 *        target percentage gap.
 */

#pragma once

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <mutex>
#include <optional>
#include <utility>
#include <vector>

#include "s3vm/common.hpp"
#include "s3vm/heuristic.hpp"
#include "s3vm/parallel.hpp"
#include "s3vm/problem.hpp"
#include "s3vm/relaxations.hpp"
#include "s3vm/tightening.hpp"

namespace s3vm {

struct BncNode {
    BoxBounds boxes;  ///< encodes the fixed partial labeling
    double inherited_lb = -kInf;
    int depth = 0;
    std::uint64_t id = 0;
    std::uint64_t parent_id = 0;
    CutPool pool;
};

enum class SolveStatus { kOptimalWithinGap, kTimeLimit, kInfeasible };

struct SolveReport {
    Incumbent incumbent;
    double lower_bound = -kInf;
    double gap_percent = kInf;
    std::int64_t nodes_processed = 0;
    double wall_time_sec = 0.0;
    SolveStatus status = SolveStatus::kInfeasible;
    int root_iterations = 0;        ///< cutting-plane iterations at the root
    double root_gap_percent = kInf; ///< gap after the root bound
};

struct SolveParams {
    double gap_target_percent = 0.1;  ///< epsilon of the stopping rule
    double time_limit_sec = kInf;
    double viol_tol = 1e-2;
    double inactive_tol = 1e-4;
    double stall_tol = 1e-3;
    int max_cuts_factor = 5;
    int max_cut_iterations = 50;
    bool product_cuts = false;
    int workers = 1;
    SolverTolerances tols;
    /// Starting labeling for the first incumbent; the harness passes the
    /// supervised-SVM prediction. Falls back to rounding the QP relaxation.
    std::optional<Labeling> initial_labeling;
    /// Test hook observing every box tightening (before, after).
    std::function<void(const BoxBounds&, const BoxBounds&)> tighten_observer;
};

/**
 * @brief Candidate set for branching: unlabeled, not sign-fixed, labeling
 *        constraint active at the QP point (|x*_i| = 1) and SDP-undecided
 *        (|xbar_i| < 1).
 */
inline std::vector<Index> branching_candidates(const Vector& x_star, const Vector& x_bar,
                                               const BoxBounds& boxes, Index labeled_count) {
    std::vector<Index> out;
    for (Index i = labeled_count; i < x_star.size(); ++i) {
        if (boxes.sign_fixed(i)) continue;
        if (std::abs(x_star[i]) > 1.0 + 1e-6) continue;
        if (std::abs(x_bar[i]) >= 1.0 - 1e-9) continue;
        out.push_back(i);
    }
    return out;
}

/**
 * @brief Rank-sum branching score over the four approximation-error measures
 *        and the box-size measure; smallest rank sum wins, ties by index.
 */
inline Index branching_scores(const SdpSolution& sol, const Matrix& cost,
                              const BoxBounds& boxes, const std::vector<Index>& cands) {
    if (cands.empty()) throw InvalidInput("branching_scores: empty candidate set");
    if (cands.size() == 1) return cands.front();

    const Index n = sol.x.size();
    const std::size_t m = cands.size();
    std::vector<std::array<double, 5>> measures(m);
    for (std::size_t c = 0; c < m; ++c) {
        const Index i = cands[c];
        double a1 = 0.0, a2 = 0.0, a3 = 0.0, a4 = 0.0;
        for (Index j = 0; j < n; ++j) {
            const double err = sol.x[i] * sol.x[j] - sol.xmat(i, j);
            a1 += err;
            a2 += std::abs(err);
            a3 += cost(i, j) * err;
            a4 += std::abs(cost(i, j) * err);
        }
        const double bi = std::min(1.0 - boxes.lower[i], 1.0 + boxes.upper[i]);
        measures[c] = {a1, a2, a3, a4, bi};
    }

    std::vector<int> rank_sum(m, 0);
    std::vector<std::size_t> order(m);
    for (int meas = 0; meas < 5; ++meas) {
        for (std::size_t c = 0; c < m; ++c) order[c] = c;
        std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
            if (measures[a][meas] != measures[b][meas])
                return measures[a][meas] > measures[b][meas];
            return cands[a] < cands[b];
        });
        for (std::size_t pos = 0; pos < m; ++pos)
            rank_sum[order[pos]] += static_cast<int>(pos) + 1;
    }

    std::size_t best = 0;
    for (std::size_t c = 1; c < m; ++c) {
        if (rank_sum[c] < rank_sum[best] ||
            (rank_sum[c] == rank_sum[best] && cands[c] < cands[best]))
            best = c;
    }
    return cands[best];
}

/// Two children labeling variable i: one with L_i = 1, one with U_i = -1.
inline std::pair<BncNode, BncNode> make_children(const BncNode& node, Index i, double lb) {
    BncNode pos = node;
    pos.inherited_lb = lb;
    pos.depth = node.depth + 1;
    pos.parent_id = node.id;
    pos.boxes.lower[i] = std::max(pos.boxes.lower[i], 1.0);

    BncNode neg = node;
    neg.inherited_lb = lb;
    neg.depth = node.depth + 1;
    neg.parent_id = node.id;
    neg.boxes.upper[i] = std::min(neg.boxes.upper[i], -1.0);
    return {std::move(pos), std::move(neg)};
}

namespace bnc_detail {

inline bool all_sign_fixed(const ProblemData& p, const BoxBounds& boxes) {
    for (Index i = p.l; i < p.n; ++i)
        if (!boxes.sign_fixed(i)) return false;
    return true;
}

inline Labeling labeling_from_boxes(const ProblemData& p, const BoxBounds& boxes) {
    Labeling lab;
    lab.labeled_count = p.l;
    lab.values.resize(static_cast<std::size_t>(p.n));
    for (Index i = 0; i < p.l; ++i)
        lab.values[static_cast<std::size_t>(i)] = p.labels[static_cast<std::size_t>(i)];
    for (Index i = p.l; i < p.n; ++i)
        lab.values[static_cast<std::size_t>(i)] = boxes.lower[i] >= 1.0 ? 1 : -1;
    return lab;
}

/// Fallback starting labeling: round the plain QP relaxation solution.
inline Labeling fallback_labeling(const ProblemData& p, const SolverTolerances& tols) {
    QpModel model;
    model.quadratic = 2.0 * p.cost;
    model.linear = Vector::Zero(p.n);
    for (Index i = 0; i < p.l; ++i) {
        QpConstraint c;
        c.coeffs = Vector::Zero(p.n);
        c.coeffs[i] = static_cast<double>(p.labels[static_cast<std::size_t>(i)]);
        c.sense = Sense::kGe;
        c.rhs = 1.0;
        model.constraints.push_back(std::move(c));
    }
    if (p.balancing_enabled && p.n > p.l) {
        QpConstraint bal;
        bal.coeffs = Vector::Zero(p.n);
        bal.coeffs.tail(p.n - p.l).setConstant(1.0 / static_cast<double>(p.n - p.l));
        bal.sense = Sense::kEq;
        bal.rhs = p.balancing_rhs;
        model.constraints.push_back(std::move(bal));
    }
    QpSolution sol = solve_qp(model, tols);
    if (sol.status == IpmStatus::kOptimal) return round_sdp(sol.point, p.labels);
    Vector zeros = Vector::Zero(p.n);
    return round_sdp(zeros, p.labels);
}

}  // namespace bnc_detail

/**
 * @brief Solves the assembled instance to the target percentage gap.
 *
 * Follows the enumeration-tree scheme: an initial incumbent from the
 * supplied labeling (improved by two-opt), a root round of bound
 * tightening, then best-first processing where each node is bounded by the
 * cutting-plane SDP, tightened, pruned or branched. Upper-bound improvements
 * re-run root tightening and propagate into open nodes.
 */
inline SolveReport solve(const ProblemData& p, const SolveParams& params = {}) {
    using Clock = std::chrono::steady_clock;
    const auto t0 = Clock::now();
    const auto elapsed = [&] {
        return std::chrono::duration<double>(Clock::now() - t0).count();
    };

    SolveReport report;
    if (p.balancing_enabled && p.n - p.l == 1 && std::abs(p.balancing_rhs) < 1.0 - 1e-12) {
        report.status = SolveStatus::kInfeasible;
        return report;
    }

    TightenOptions tighten_opts;
    tighten_opts.workers = params.workers;
    tighten_opts.tols = params.tols;

    CutParams cut_params;
    cut_params.gap_target_percent = params.gap_target_percent;
    cut_params.viol_tol = params.viol_tol;
    cut_params.inactive_tol = params.inactive_tol;
    cut_params.stall_tol = params.stall_tol;
    cut_params.max_cuts_factor = params.max_cuts_factor;
    cut_params.max_iterations = params.max_cut_iterations;
    cut_params.product_cuts = params.product_cuts;
    cut_params.tols = params.tols;

    const auto observe = [&](const BoxBounds& before, const BoxBounds& after) {
        if (params.tighten_observer) params.tighten_observer(before, after);
    };

    // Initial incumbent: starting labeling -> labeling QP -> two-opt.
    Labeling lab0 = params.initial_labeling
                        ? *params.initial_labeling
                        : bnc_detail::fallback_labeling(p, params.tols);
    LabelQpResult first = label_qp(p, lab0, params.tols);
    if (first.status == IpmStatus::kInfeasible) {
        Vector hint = Vector::Zero(p.n);
        Labeling repaired = repair_labeling(lab0, hint, p.balancing_rhs);
        first = label_qp(p, repaired, params.tols);
    }
    if (first.status != IpmStatus::kOptimal) {
        report.status = SolveStatus::kInfeasible;
        report.wall_time_sec = elapsed();
        return report;
    }
    Incumbent incumbent = two_opt_search(p, first.incumbent, params.tols);
    double ub = incumbent.objective;

    // Root bound tightening on the label-implied boxes.
    BoxBounds global_boxes = BoxBounds::from_labels(p);
    {
        TightenReport root = obbt(p, global_boxes, ub, tighten_opts);
        observe(global_boxes, root.boxes);
        if (root.proven_optimal || !root.boxes.consistent()) {
            report.incumbent = incumbent;
            report.lower_bound = ub;
            report.gap_percent = 0.0;
            report.status = SolveStatus::kOptimalWithinGap;
            report.wall_time_sec = elapsed();
            return report;
        }
        global_boxes = root.boxes;
    }

    // Best-first queue keyed by (inherited lower bound, insertion order).
    std::map<std::pair<double, std::uint64_t>, BncNode> queue;
    std::uint64_t next_id = 0;

    BncNode root;
    root.boxes = global_boxes;
    root.inherited_lb = qp_bound(p, global_boxes, params.tols);
    root.id = next_id++;
    if (root.inherited_lb < kInf) queue.emplace(std::make_pair(root.inherited_lb, root.id), root);

    report.status = SolveStatus::kOptimalWithinGap;
    bool root_processed = false;
    bool incumbent_proven_optimal = false;
    std::vector<std::uint64_t> requeued_ids;

    // Re-runs root tightening after an incumbent improvement; a proof that
    // nothing beats the new cutoff settles the whole search.
    const auto refresh_global_boxes = [&](double new_ub) {
        TightenReport rerun = obbt(p, global_boxes, new_ub, tighten_opts);
        observe(global_boxes, rerun.boxes);
        if (rerun.proven_optimal || !rerun.boxes.consistent()) {
            incumbent_proven_optimal = true;
            return false;
        }
        global_boxes = rerun.boxes;
        return true;
    };

    // Leaf nodes skip the SDP: one labeling QP settles them exactly.
    const auto settle_leaf = [&](const BncNode& node) {
        LabelQpResult leaf =
            label_qp(p, bnc_detail::labeling_from_boxes(p, node.boxes), params.tols);
        if (leaf.status == IpmStatus::kOptimal && leaf.incumbent.objective < ub) {
            incumbent = leaf.incumbent;
            ub = leaf.incumbent.objective;
            refresh_global_boxes(ub);
        }
    };

    struct NodeTask {
        BncNode node;
        BoundResult bound;
        Vector last_qp_point;
        std::optional<Incumbent> candidate;  ///< parallel-mode improvement
    };

    const int batch_size = std::max(1, params.workers);
    std::mutex observer_mutex;

    while (!queue.empty() && !incumbent_proven_optimal) {
        if (elapsed() > params.time_limit_sec) {
            report.status = SolveStatus::kTimeLimit;
            break;
        }

        // Fill a batch of bounding tasks; leaves and prunable nodes are
        // settled on the spot.
        std::vector<NodeTask> batch;
        while (static_cast<int>(batch.size()) < batch_size && !queue.empty() &&
               !incumbent_proven_optimal) {
            BncNode node = queue.begin()->second;
            queue.erase(queue.begin());
            ++report.nodes_processed;

            node.boxes.intersect(global_boxes);
            if (!node.boxes.consistent()) continue;
            if (percentage_gap(ub, node.inherited_lb) <= params.gap_target_percent) continue;
            if (bnc_detail::all_sign_fixed(p, node.boxes)) {
                settle_leaf(node);
                continue;
            }
            NodeTask task;
            task.node = std::move(node);
            batch.push_back(std::move(task));
        }
        if (batch.empty()) continue;

        const double ub_snapshot = ub;
        const bool serial = batch.size() == 1 && params.workers <= 1;

        const auto bound_task = [&](NodeTask& task, bool immediate_updates) {
            CutParams task_params = cut_params;
            task_params.tols.workers = immediate_updates ? std::max(1, params.workers) : 1;
            const HeuristicCallback heuristic_cb =
                [&](const SdpSolution& sol,
                    double current_ub) -> std::optional<HeuristicOutcome> {
                Labeling lab = round_sdp(sol.x, p.labels);
                LabelQpResult qp = label_qp(p, lab, params.tols);
                if (qp.status == IpmStatus::kInfeasible) {
                    lab = repair_labeling(lab, sol.x, p.balancing_rhs);
                    qp = label_qp(p, lab, params.tols);
                }
                if (qp.status != IpmStatus::kOptimal) return std::nullopt;
                task.last_qp_point = qp.incumbent.point;
                Incumbent improved = two_opt_search(p, qp.incumbent, params.tols);
                if (improved.objective >=
                    current_ub - 1e-12 * (1.0 + std::abs(current_ub)))
                    return std::nullopt;
                if (!immediate_updates) {
                    // Record only; merging happens after the batch joins.
                    if (!task.candidate || improved.objective < task.candidate->objective)
                        task.candidate = improved;
                    return HeuristicOutcome{improved.objective, std::nullopt};
                }
                if (improved.objective >= ub) return std::nullopt;
                incumbent = improved;
                ub = improved.objective;
                HeuristicOutcome outcome;
                outcome.new_ub = ub;
                BoxBounds refreshed = task.node.boxes;
                if (refresh_global_boxes(ub)) {
                    refreshed.intersect(global_boxes);
                } else {
                    refreshed.lower.setConstant(1.0);
                    refreshed.upper.setConstant(-1.0);  // empty: prune this node
                }
                outcome.new_node_boxes = refreshed;
                return outcome;
            };
            const TightenCallback tighten_cb =
                [&](const BoxBounds& boxes, const SdpSolution& sol, double cb_ub,
                    double cb_lb) -> std::optional<BoxBounds> {
                TightenReport rep = marginal_box_update(boxes, sol, cb_ub, cb_lb);
                if (rep.updated_indices.empty()) return std::nullopt;
                if (params.tighten_observer) {
                    std::lock_guard<std::mutex> lock(observer_mutex);
                    observe(boxes, rep.boxes);
                }
                return rep.boxes;
            };
            task.bound = cutting_plane_bound(p, task.node.boxes, ub_snapshot, task_params,
                                             heuristic_cb, tighten_cb, task.node.pool);
        };

        if (serial) {
            bound_task(batch.front(), true);
        } else {
            parallel_for(static_cast<Index>(batch.size()), params.workers,
                         [&](Index t) { bound_task(batch[static_cast<std::size_t>(t)], false); });
            // Merge incumbent candidates deterministically (batch order).
            for (const NodeTask& task : batch) {
                if (task.candidate && task.candidate->objective < ub) {
                    incumbent = *task.candidate;
                    ub = incumbent.objective;
                }
            }
            if (ub < ub_snapshot - 1e-12 * (1.0 + std::abs(ub_snapshot)))
                refresh_global_boxes(ub);
        }

        for (NodeTask& task : batch) {
            BncNode& node = task.node;
            const BoundResult& bound = task.bound;
            if (!root_processed) {
                root_processed = true;
                report.root_iterations = bound.iterations;
                if (bound.lower_bound > -kInf)
                    report.root_gap_percent =
                        percentage_gap(ub, std::min(bound.lower_bound, ub));
            }

            if (bound.status == IpmStatus::kNumericalFailure) {
                const bool already_retried =
                    std::find(requeued_ids.begin(), requeued_ids.end(), node.id) !=
                    requeued_ids.end();
                if (!already_retried) {
                    requeued_ids.push_back(node.id);
                    node.id = next_id++;
                    requeued_ids.push_back(node.id);
                    queue.emplace(std::make_pair(node.inherited_lb, node.id), std::move(node));
                    continue;
                }
                // Second failure: branch on whatever information is at hand.
            }

            const double node_lb = std::max(node.inherited_lb, bound.lower_bound);
            if (node_lb >= kInf) continue;
            if (percentage_gap(ub, node_lb) <= params.gap_target_percent) continue;

            node.boxes = bound.boxes;
            node.boxes.intersect(global_boxes);
            if (!node.boxes.consistent()) continue;
            node.pool = bound.active_cuts;
            if (bnc_detail::all_sign_fixed(p, node.boxes)) {
                settle_leaf(node);
                continue;
            }

            // Branch.
            const bool have_solution =
                bound.status == IpmStatus::kOptimal && bound.solution.x.size() == p.n;
            Index pick = -1;
            if (have_solution && task.last_qp_point.size() == p.n) {
                std::vector<Index> cands = branching_candidates(
                    task.last_qp_point, bound.solution.x, node.boxes, p.l);
                if (!cands.empty())
                    pick = branching_scores(bound.solution, p.cost, node.boxes, cands);
            }
            if (pick < 0) {
                // Fallback: the most undecided unfixed variable.
                double best_mag = kInf;
                for (Index i = p.l; i < p.n; ++i) {
                    if (node.boxes.sign_fixed(i)) continue;
                    const double mag = have_solution ? std::abs(bound.solution.x[i]) : 0.0;
                    if (mag < best_mag) {
                        best_mag = mag;
                        pick = i;
                    }
                }
            }
            if (pick < 0) continue;

            auto [pos, neg] = make_children(node, pick, node_lb);
            pos.id = next_id++;
            neg.id = next_id++;
            queue.emplace(std::make_pair(pos.inherited_lb, pos.id), std::move(pos));
            queue.emplace(std::make_pair(neg.inherited_lb, neg.id), std::move(neg));
        }
    }

    if (incumbent_proven_optimal) queue.clear();

    // Global bound: the weakest open node, or the incumbent value when the
    // tree is exhausted.
    double lb = ub;
    if (!queue.empty()) {
        for (const auto& [key, nd] : queue) lb = std::min(lb, key.first);
    }
    report.incumbent = incumbent;
    report.lower_bound = lb;
    report.gap_percent = percentage_gap(ub, lb);
    report.wall_time_sec = elapsed();
    return report;
}

}  // namespace s3vm
