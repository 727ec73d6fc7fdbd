/**
 * @file relaxations.hpp
 * @brief Lower-bounding machinery: QP bound, Lagrangian QP bound, the
 *        box-strengthened SDP relaxation, RLT separation, cut-pool
 *        management, and the cutting-plane loop.
 */

#pragma once

#include <algorithm>
#include <functional>
#include <optional>
#include <vector>

#include "s3vm/common.hpp"
#include "s3vm/problem.hpp"
#include "s3vm/solver.hpp"

namespace s3vm {

/// One RLT inequality with the box values frozen at generation time.
struct RltCut {
    enum class Variant { kLowerLower, kUpperUpper, kLowerUpper, kUpperLower };

    Index i = -1, j = -1;  ///< pair with i < j
    Variant variant = Variant::kLowerLower;
    double bound_i = 0.0;  ///< the L_i or U_i used, depending on variant
    double bound_j = 0.0;  ///< the L_j or U_j used

    /// Row value X_ij - bi*x_j - bj*x_i with sense/rhs per variant:
    /// lower variants give >= -bi*bj, upper variants give <= -bi*bj.
    bool is_lower() const {
        return variant == Variant::kLowerLower || variant == Variant::kUpperUpper;
    }

    /// Positive when the cut is violated at (x, X).
    double violation(const Vector& x, const Matrix& xmat) const {
        const double lin = bound_i * x[j] + bound_j * x[i] - bound_i * bound_j;
        return is_lower() ? lin - xmat(i, j) : xmat(i, j) - lin;
    }

    SdpConstraint to_constraint(Index block_dim) const {
        SdpConstraint con;
        con.kind = ConstraintKind::kRlt;
        con.i = i;
        con.j = j;
        con.coeffs = {{i, j, 1.0}, {j, block_dim - 1, -bound_i}, {i, block_dim - 1, -bound_j}};
        con.sense = is_lower() ? Sense::kGe : Sense::kLe;
        con.rhs = -bound_i * bound_j;
        return con;
    }

    /// True when the node boxes have moved past the frozen generating values.
    bool stale_for(const BoxBounds& boxes, double tol = 1e-12) const {
        const bool bi_is_lower =
            variant == Variant::kLowerLower || variant == Variant::kLowerUpper;
        const bool bj_is_lower =
            variant == Variant::kLowerLower || variant == Variant::kUpperLower;
        if (bi_is_lower ? boxes.lower[i] > bound_i + tol : boxes.upper[i] < bound_i - tol)
            return true;
        if (bj_is_lower ? boxes.lower[j] > bound_j + tol : boxes.upper[j] < bound_j - tol)
            return true;
        return false;
    }
};

using CutPool = std::vector<RltCut>;

/// Result of one cutting-plane bounding run.
struct BoundResult {
    IpmStatus status = IpmStatus::kNumericalFailure;
    double lower_bound = -kInf;  ///< +inf means the node is prunable
    SdpSolution solution;        ///< final iteration's solution
    int iterations = 0;
    CutPool active_cuts;
    BoxBounds boxes;  ///< node boxes after in-loop tightening
};

struct CutParams {
    double gap_target_percent = 0.1;
    double viol_tol = 1e-2;
    double inactive_tol = 1e-4;
    double stall_tol = 1e-3;
    int max_cuts_factor = 5;
    int max_iterations = 50;
    bool product_cuts = false;
    SolverTolerances tols;
};

namespace relax_detail {

/// Interval feasibility of the balancing equality against the boxes.
inline bool balancing_interval_feasible(const ProblemData& p, const BoxBounds& boxes,
                                        double tol = 1e-9) {
    if (!p.balancing_enabled || p.n == p.l) return true;
    double lo = 0.0, hi = 0.0;
    for (Index i = p.l; i < p.n; ++i) {
        lo += boxes.lower[i];
        hi += boxes.upper[i];
    }
    const double target = p.balancing_rhs * static_cast<double>(p.n - p.l);
    return target >= lo - tol && target <= hi + tol;
}

}  // namespace relax_detail

/**
 * @brief Convex QP bound: min x'Cx over the finite box rows plus balancing.
 *
 * Passing boxes with only the label rows finite recovers the plain literature
 * relaxation. Returns +inf when the boxes (or boxes plus balancing) are
 * infeasible, which certifies the node prunable.
 */
inline double qp_bound(const ProblemData& p, const BoxBounds& boxes,
                       const SolverTolerances& tols = {}) {
    if (!boxes.consistent()) return kInf;
    if (!relax_detail::balancing_interval_feasible(p, boxes)) return kInf;

    QpModel model;
    model.quadratic = 2.0 * p.cost;
    model.linear = Vector::Zero(p.n);
    for (Index i = 0; i < p.n; ++i) {
        const double lo = boxes.lower[i];
        const double hi = boxes.upper[i];
        if (is_finite(lo) && is_finite(hi) && hi - lo <= 1e-12) {
            QpConstraint c;
            c.coeffs = Vector::Unit(p.n, i);
            c.sense = Sense::kEq;
            c.rhs = 0.5 * (lo + hi);
            model.constraints.push_back(std::move(c));
            continue;
        }
        if (is_finite(lo)) {
            QpConstraint c;
            c.coeffs = Vector::Unit(p.n, i);
            c.sense = Sense::kGe;
            c.rhs = lo;
            model.constraints.push_back(std::move(c));
        }
        if (is_finite(hi)) {
            QpConstraint c;
            c.coeffs = Vector::Unit(p.n, i);
            c.sense = Sense::kLe;
            c.rhs = hi;
            model.constraints.push_back(std::move(c));
        }
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
    if (sol.status == IpmStatus::kInfeasible) return kInf;
    if (sol.status != IpmStatus::kOptimal) throw NumericalError("qp_bound: QP solve failed");
    return sol.objective;
}

/**
 * @brief Lagrangian QP bound: multipliers from the auxiliary SDP
 *        max e'lambda s.t. K^-1 - 2 Diag(lambda) >= 0, then the penalized QP
 *        over the labeled constraints only.
 *
 * Falls back to qp_bound on numerical failure of either stage.
 */
inline double qp_lagrangian_bound(const ProblemData& p, const BoxBounds& boxes,
                                  const SolverTolerances& tols = {}) {
    const Matrix kinv = 2.0 * p.cost;
    std::vector<Index> unlabeled;
    for (Index i = p.l; i < p.n; ++i) unlabeled.push_back(i);

    DiagPenaltyResult aux = solve_diag_penalty_sdp(kinv, unlabeled, tols);
    if (aux.status != IpmStatus::kOptimal) return qp_bound(p, boxes, tols);

    // Re-scale the multipliers so the penalized Hessian is certainly PSD
    // despite solver noise.
    Matrix hess = kinv - 2.0 * Matrix(aux.lambda.asDiagonal());
    Eigen::SelfAdjointEigenSolver<Matrix> es(hess);
    const double nu_min = es.eigenvalues().minCoeff();
    Vector lambda = aux.lambda;
    if (nu_min < 0.0) {
        Eigen::SelfAdjointEigenSolver<Matrix> esk(kinv);
        const double kmin = std::max(esk.eigenvalues().minCoeff(), 1e-14);
        const double t = kmin / (kmin - nu_min) * (1.0 - 1e-12);
        lambda *= t;
        hess = kinv - 2.0 * Matrix(lambda.asDiagonal());
    }

    QpModel model;
    model.quadratic = hess;
    model.linear = Vector::Zero(p.n);
    model.constant = lambda.sum();
    for (Index i = 0; i < p.l; ++i) {
        QpConstraint c;
        c.coeffs = Vector::Zero(p.n);
        c.coeffs[i] = static_cast<double>(p.labels[static_cast<std::size_t>(i)]);
        c.sense = Sense::kGe;
        c.rhs = 1.0;
        model.constraints.push_back(std::move(c));
    }
    QpSolution sol = solve_qp(model, tols);
    if (sol.status != IpmStatus::kOptimal) return qp_bound(p, boxes, tols);
    return sol.objective;
}

/**
 * @brief The box-strengthened SDP relaxation (degenerate boxes reproduce the
 *        plain literature SDP).
 *
 * Rows: finite box bounds on x_i, diagonal rows 1 <= X_ii <= max(L_i^2, U_i^2)
 * (the upper row only when both bounds are finite), and the balancing row.
 * Collapsed intervals become equality rows so the block keeps a strictly
 * feasible interior.
 */
inline SdpModel build_basic_sdp(const ProblemData& p, const BoxBounds& boxes) {
    const Index n = p.n;
    SdpModel model;
    model.dim = n + 1;
    model.objective = Matrix::Zero(n + 1, n + 1);
    model.objective.topLeftCorner(n, n) = p.cost;

    for (Index i = 0; i < n; ++i) {
        const double lo = boxes.lower[i];
        const double hi = boxes.upper[i];
        const bool lo_fin = is_finite(lo);
        const bool hi_fin = is_finite(hi);
        if (lo_fin && hi_fin && hi - lo <= 1e-12) {
            SdpConstraint c;
            c.kind = ConstraintKind::kBoxLower;
            c.i = i;
            c.coeffs = {{i, n, 1.0}};
            c.sense = Sense::kEq;
            c.rhs = 0.5 * (lo + hi);
            model.add(std::move(c));
        } else {
            if (lo_fin) {
                SdpConstraint c;
                c.kind = ConstraintKind::kBoxLower;
                c.i = i;
                c.coeffs = {{i, n, 1.0}};
                c.sense = Sense::kGe;
                c.rhs = lo;
                model.add(std::move(c));
            }
            if (hi_fin) {
                SdpConstraint c;
                c.kind = ConstraintKind::kBoxUpper;
                c.i = i;
                c.coeffs = {{i, n, 1.0}};
                c.sense = Sense::kLe;
                c.rhs = hi;
                model.add(std::move(c));
            }
        }

        const double diag_hi =
            (lo_fin && hi_fin) ? std::max(lo * lo, hi * hi) : kInf;
        if (is_finite(diag_hi) && diag_hi - 1.0 <= 1e-12 && diag_hi >= 1.0 - 1e-12) {
            SdpConstraint c;
            c.kind = ConstraintKind::kDiagLower;
            c.i = i;
            c.coeffs = {{i, i, 1.0}};
            c.sense = Sense::kEq;
            c.rhs = 1.0;
            model.add(std::move(c));
        } else {
            SdpConstraint c;
            c.kind = ConstraintKind::kDiagLower;
            c.i = i;
            c.coeffs = {{i, i, 1.0}};
            c.sense = Sense::kGe;
            c.rhs = 1.0;
            model.add(std::move(c));
            if (is_finite(diag_hi)) {
                SdpConstraint u;
                u.kind = ConstraintKind::kDiagUpper;
                u.i = i;
                u.coeffs = {{i, i, 1.0}};
                u.sense = Sense::kLe;
                u.rhs = diag_hi;
                model.add(std::move(u));
            }
        }
    }

    if (p.balancing_enabled && p.n > p.l) {
        SdpConstraint bal;
        bal.kind = ConstraintKind::kBalancing;
        const double w = 1.0 / static_cast<double>(p.n - p.l);
        for (Index i = p.l; i < n; ++i) bal.coeffs.push_back({i, n, w});
        bal.sense = Sense::kEq;
        bal.rhs = p.balancing_rhs;
        model.add(std::move(bal));
    }
    return model;
}

/**
 * @brief Most violated RLT cuts at (x, X), at most max_cuts, sorted by
 *        decreasing violation. Variants touching an infinite bound are
 *        skipped.
 */
inline CutPool separate_rlt(const SdpSolution& sol, const BoxBounds& boxes, Index max_cuts,
                            double viol_tol) {
    const Index n = boxes.size();
    std::vector<std::pair<double, RltCut>> violated;
    for (Index i = 0; i < n; ++i) {
        const double li = boxes.lower[i], ui = boxes.upper[i];
        for (Index j = i + 1; j < n; ++j) {
            const double lj = boxes.lower[j], uj = boxes.upper[j];
            const auto consider = [&](RltCut::Variant variant, double bi, double bj) {
                if (!is_finite(bi) || !is_finite(bj)) return;
                RltCut cut{i, j, variant, bi, bj};
                const double v = cut.violation(sol.x, sol.xmat);
                if (v > viol_tol) violated.emplace_back(v, cut);
            };
            consider(RltCut::Variant::kLowerLower, li, lj);
            consider(RltCut::Variant::kUpperUpper, ui, uj);
            consider(RltCut::Variant::kLowerUpper, li, uj);
            consider(RltCut::Variant::kUpperLower, ui, lj);
        }
    }
    std::sort(violated.begin(), violated.end(), [](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first > b.first;
        if (a.second.i != b.second.i) return a.second.i < b.second.i;
        if (a.second.j != b.second.j) return a.second.j < b.second.j;
        return static_cast<int>(a.second.variant) < static_cast<int>(b.second.variant);
    });
    if (static_cast<Index>(violated.size()) > max_cuts) violated.resize(max_cuts);
    CutPool cuts;
    cuts.reserve(violated.size());
    for (auto& [v, cut] : violated) cuts.push_back(cut);
    return cuts;
}

/// Removes cuts whose slack at (x, X) exceeds slack_tol.
inline CutPool purge_inactive(const CutPool& pool, const SdpSolution& sol, double slack_tol) {
    CutPool kept;
    kept.reserve(pool.size());
    for (const auto& cut : pool)
        if (-cut.violation(sol.x, sol.xmat) <= slack_tol) kept.push_back(cut);
    return kept;
}

/// Linearized products of the balancing row with every variable x_j.
inline std::vector<SdpConstraint> balancing_product_cuts(const ProblemData& p) {
    std::vector<SdpConstraint> rows;
    if (!p.balancing_enabled || p.n == p.l) return rows;
    const Index n = p.n;
    const double w = 1.0 / static_cast<double>(n - p.l);
    for (Index j = 0; j < n; ++j) {
        SdpConstraint c;
        c.kind = ConstraintKind::kProduct;
        c.i = j;
        for (Index i = p.l; i < n; ++i) {
            if (i == j)
                c.coeffs.push_back({j, j, w});
            else
                c.coeffs.push_back({std::min(i, j), std::max(i, j), w});
        }
        c.coeffs.push_back({j, n, -p.balancing_rhs});
        c.sense = Sense::kEq;
        c.rhs = 0.0;
        rows.push_back(std::move(c));
    }
    return rows;
}

/// Outcome of the caller-side primal heuristic hook.
struct HeuristicOutcome {
    double new_ub = kInf;
    std::optional<BoxBounds> new_node_boxes;  ///< set when the caller re-ran OBBT
};

using HeuristicCallback =
    std::function<std::optional<HeuristicOutcome>(const SdpSolution&, double current_ub)>;
using TightenCallback = std::function<std::optional<BoxBounds>(
    const BoxBounds&, const SdpSolution&, double ub, double lb)>;

/**
 * @brief The four-step bounding loop: solve the SDP, tighten boxes from
 *        marginals, run the primal heuristic, purge inactive cuts, separate
 *        new violated RLT cuts; stop at the gap target, on stall, or when no
 *        cut is violated.
 *
 * The pool passed in (typically the node's inherited pool) is updated in
 * place through the snapshot in the result. Lower bounds are reported from
 * the dual objective and never decrease across iterations.
 */
inline BoundResult cutting_plane_bound(const ProblemData& p, const BoxBounds& node_boxes,
                                       double ub, const CutParams& params,
                                       const HeuristicCallback& heuristic_cb = nullptr,
                                       const TightenCallback& tighten_cb = nullptr,
                                       const CutPool& initial_pool = {}) {
    BoundResult result;
    result.boxes = node_boxes;
    CutPool pool = initial_pool;

    const auto prunable = [&](double lb) {
        result.status = IpmStatus::kOptimal;
        result.lower_bound = lb;
        result.active_cuts = pool;
        return result;
    };

    if (!result.boxes.consistent() ||
        !relax_detail::balancing_interval_feasible(p, result.boxes))
        return prunable(kInf);

    std::vector<SdpConstraint> product_rows =
        params.product_cuts ? balancing_product_cuts(p) : std::vector<SdpConstraint>{};

    double best_lb = -kInf;
    double prev_lb = -kInf;
    const Index max_cuts = static_cast<Index>(params.max_cuts_factor) * p.n;

    for (int iter = 0; iter < params.max_iterations; ++iter) {
        // Cuts whose generating bounds have since tightened are dropped.
        pool.erase(std::remove_if(pool.begin(), pool.end(),
                                  [&](const RltCut& c) { return c.stale_for(result.boxes); }),
                   pool.end());

        SdpModel model = build_basic_sdp(p, result.boxes);
        for (const auto& row : product_rows) model.add(row);
        for (const auto& cut : pool) model.add(cut.to_constraint(model.dim));

        SdpSolution sol = solve_sdp(model, params.tols);
        if (sol.status == IpmStatus::kNumericalFailure) {
            SolverTolerances relaxed = params.tols;
            relaxed.sdp_tol *= 100.0;
            sol = solve_sdp(model, relaxed);
        }
        if (sol.status == IpmStatus::kInfeasible) return prunable(kInf);
        if (sol.status != IpmStatus::kOptimal) {
            result.status = IpmStatus::kNumericalFailure;
            result.lower_bound = best_lb;
            result.active_cuts = pool;
            return result;
        }
        result.iterations = iter + 1;
        result.solution = sol;
        const double lb = sol.objective;
        best_lb = std::max(best_lb, lb);

        // Marginals-based node-local tightening.
        if (tighten_cb) {
            if (auto tightened = tighten_cb(result.boxes, sol, ub, lb)) {
                result.boxes = *tightened;
                if (!result.boxes.consistent() ||
                    !relax_detail::balancing_interval_feasible(p, result.boxes)) {
                    // Nothing better than the incumbent survives in this node.
                    return prunable(std::max(best_lb, ub));
                }
            }
        }

        if (is_finite(ub) && percentage_gap(ub, best_lb) <= params.gap_target_percent) break;

        // Primal heuristic; a strict improvement re-enters the solve with the
        // caller's recomputed boxes.
        if (heuristic_cb) {
            if (auto outcome = heuristic_cb(sol, ub)) {
                if (outcome->new_ub < ub - 1e-12 * (1.0 + std::abs(ub))) {
                    ub = outcome->new_ub;
                    if (outcome->new_node_boxes) {
                        result.boxes.intersect(*outcome->new_node_boxes);
                        if (!result.boxes.consistent())
                            return prunable(std::max(best_lb, ub));
                    }
                    prev_lb = lb;
                    continue;
                }
            }
        }

        pool = purge_inactive(pool, sol, params.inactive_tol);
        CutPool fresh = separate_rlt(sol, result.boxes, max_cuts, params.viol_tol);

        const bool stalled =
            iter > 0 && (lb - prev_lb) <= params.stall_tol * std::max(1e-12, std::abs(lb));
        prev_lb = lb;
        if (fresh.empty() || stalled) break;
        for (auto& cut : fresh) pool.push_back(cut);
    }

    result.status = IpmStatus::kOptimal;
    result.lower_bound = best_lb;
    result.active_cuts = pool;
    return result;
}

}  // namespace s3vm
