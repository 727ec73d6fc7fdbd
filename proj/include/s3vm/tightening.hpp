/**
 * @file tightening.hpp
 * @brief Optimality-based bound tightening (convex QCQPs per variable with an
 *        objective cutoff) and marginals-based box updates from SDP duals.
 *
 * Every new bound is widened by a small safety slack before use, and the
 * sign projection is applied only on the widened values, so a brute-force
 * optimum can never be cut away by solver noise.
 */

#pragma once

#include <cmath>
#include <vector>

#include "s3vm/common.hpp"
#include "s3vm/parallel.hpp"
#include "s3vm/problem.hpp"
#include "s3vm/solver.hpp"

namespace s3vm {

struct TightenReport {
    BoxBounds boxes;
    std::vector<Index> updated_indices;
    std::vector<Index> newly_sign_fixed;
    /// Set when the cutoff region is empty: no point of the node scope beats
    /// the upper bound, so the caller may prune (UB is optimal here).
    bool proven_optimal = false;
};

struct TightenOptions {
    int workers = 1;
    SolverTolerances tols;
    double safety = 1e-6;  ///< absolute widening of every computed bound
};

namespace tighten_detail {

/// Projection of Remark-type sign information onto a single interval:
/// no feasible point has |x_i| < 1, so a lower bound above -1 jumps to 1 and
/// an upper bound below 1 drops to -1.
inline void project_signs(double& lo, double& hi) {
    if (lo > -1.0) lo = std::max(lo, 1.0);
    if (hi < 1.0) hi = std::min(hi, -1.0);
}

}  // namespace tighten_detail

/**
 * @brief One OBBT round: per variable, minimize and maximize x_i over the
 *        boxes, the cutoff x'Cx <= UB, and (when enabled) the balancing row.
 *
 * The minimization is skipped when L_i >= 1 already holds, the maximization
 * when U_i <= -1. Failed subproblems keep the old bound, which is always
 * sound. All finite results are sign-projected; boxes never widen.
 */
inline TightenReport obbt(const ProblemData& p, const BoxBounds& boxes, double ub,
                          const TightenOptions& opts = {}) {
    const Index n = p.n;
    TightenReport report;
    report.boxes = boxes;

    if (!boxes.consistent()) {
        report.proven_optimal = true;
        return report;
    }

    // Shared constraint block of every subproblem.
    QpModel base;
    base.quadratic = Matrix::Zero(n, n);
    base.linear = Vector::Zero(n);
    for (Index i = 0; i < n; ++i) {
        if (is_finite(boxes.lower[i])) {
            QpConstraint c;
            c.coeffs = Vector::Unit(n, i);
            c.sense = Sense::kGe;
            c.rhs = boxes.lower[i];
            base.constraints.push_back(std::move(c));
        }
        if (is_finite(boxes.upper[i])) {
            QpConstraint c;
            c.coeffs = Vector::Unit(n, i);
            c.sense = Sense::kLe;
            c.rhs = boxes.upper[i];
            base.constraints.push_back(std::move(c));
        }
    }
    if (p.balancing_enabled && n > p.l) {
        QpConstraint bal;
        bal.coeffs = Vector::Zero(n);
        bal.coeffs.tail(n - p.l).setConstant(1.0 / static_cast<double>(n - p.l));
        bal.sense = Sense::kEq;
        bal.rhs = p.balancing_rhs;
        base.constraints.push_back(std::move(bal));
    }

    // Feasibility anchor: the cutoff region is empty iff min x'Cx exceeds UB.
    QpModel anchor = base;
    anchor.quadratic = 2.0 * p.cost;
    QpSolution center = solve_qp(anchor, opts.tols);
    if (center.status == IpmStatus::kInfeasible ||
        (center.status == IpmStatus::kOptimal && center.objective > ub + 1e-6 * (1.0 + ub))) {
        report.proven_optimal = true;
        return report;
    }
    const Vector* warm = (center.status == IpmStatus::kOptimal) ? &center.point : nullptr;

    base.has_quad_constraint = true;
    base.quad_matrix = p.cost;
    base.quad_rhs = ub;

    Vector new_lo = boxes.lower;
    Vector new_hi = boxes.upper;

    struct Task {
        Index var;
        bool minimize;
    };
    std::vector<Task> tasks;
    for (Index i = 0; i < n; ++i) {
        if (!(boxes.lower[i] >= 1.0)) tasks.push_back({i, true});
        if (!(boxes.upper[i] <= -1.0)) tasks.push_back({i, false});
    }

    parallel_for(static_cast<Index>(tasks.size()), opts.workers, [&](Index t) {
        const Task& task = tasks[static_cast<std::size_t>(t)];
        QpModel sub = base;
        sub.linear = Vector::Unit(n, task.var) * (task.minimize ? 1.0 : -1.0);
        QpSolution sol = solve_qp(sub, opts.tols, warm);
        if (sol.status != IpmStatus::kOptimal) return;
        if (task.minimize)
            new_lo[task.var] = std::max(boxes.lower[task.var], sol.objective - opts.safety);
        else
            new_hi[task.var] = std::min(boxes.upper[task.var], -sol.objective + opts.safety);
    });

    for (Index i = 0; i < n; ++i) {
        double lo = new_lo[i];
        double hi = new_hi[i];
        tighten_detail::project_signs(lo, hi);
        const bool was_fixed = report.boxes.sign_fixed(i);
        if (lo > report.boxes.lower[i] || hi < report.boxes.upper[i])
            report.updated_indices.push_back(i);
        report.boxes.lower[i] = std::max(report.boxes.lower[i], lo);
        report.boxes.upper[i] = std::min(report.boxes.upper[i], hi);
        if (!was_fixed && report.boxes.sign_fixed(i)) report.newly_sign_fixed.push_back(i);
    }
    return report;
}

/**
 * @brief Marginals-based box updates from the duals of active box/diagonal
 *        rows, including both diagonal lemmas, then sign re-projection.
 *
 * A constraint participates when it is an inequality active within 1e-6 with
 * multiplier above 1e-6. The budget (UB - LB) is clamped at zero.
 */
inline TightenReport marginal_box_update(const BoxBounds& boxes, const SdpSolution& sol,
                                         double ub, double lb) {
    constexpr double kActivityTol = 1e-6;
    constexpr double kDualTol = 1e-6;
    constexpr double kGuard = 1e-9;

    TightenReport report;
    report.boxes = boxes;
    Vector& lo = report.boxes.lower;
    Vector& hi = report.boxes.upper;
    std::vector<bool> touched(static_cast<std::size_t>(boxes.size()), false);

    for (const auto& d : sol.duals) {
        if (d.sense == Sense::kEq) continue;
        if (d.dual <= kDualTol) continue;
        if (std::abs(d.activity - d.rhs) > kActivityTol) continue;

        const double lambda = d.dual * (1.0 - 1e-6);
        const double budget = std::max(0.0, ub - lb) / lambda;
        const Index i = d.i;

        switch (d.kind) {
            case ConstraintKind::kBoxLower: {
                const double cand = d.rhs + budget + kGuard * (1.0 + std::abs(d.rhs));
                if (cand < hi[i]) {
                    hi[i] = cand;
                    touched[static_cast<std::size_t>(i)] = true;
                }
                break;
            }
            case ConstraintKind::kBoxUpper: {
                const double cand = d.rhs - budget - kGuard * (1.0 + std::abs(d.rhs));
                if (cand > lo[i]) {
                    lo[i] = cand;
                    touched[static_cast<std::size_t>(i)] = true;
                }
                break;
            }
            case ConstraintKind::kDiagLower: {
                // X_ii >= 1 active: |x_i| <= sqrt(1 + budget).
                const double radius = std::sqrt(1.0 + budget) + kGuard;
                if (radius < hi[i]) {
                    hi[i] = radius;
                    touched[static_cast<std::size_t>(i)] = true;
                }
                if (-radius > lo[i]) {
                    lo[i] = -radius;
                    touched[static_cast<std::size_t>(i)] = true;
                }
                break;
            }
            case ConstraintKind::kDiagUpper: {
                // X_ii <= gamma active with p = gamma - budget >= 1: the sign
                // of x_i follows from whichever bound excludes one branch.
                const double pval = d.rhs - budget;
                if (pval < 1.0) break;
                const double root = std::sqrt(pval) - kGuard;
                if (lo[i] > -root && root > lo[i]) {
                    lo[i] = root;
                    touched[static_cast<std::size_t>(i)] = true;
                }
                if (hi[i] < root && -root < hi[i]) {
                    hi[i] = -root;
                    touched[static_cast<std::size_t>(i)] = true;
                }
                break;
            }
            default:
                break;  // balancing, RLT and product rows stay untouched
        }
    }

    for (Index i = 0; i < boxes.size(); ++i) {
        if (!touched[static_cast<std::size_t>(i)]) continue;
        tighten_detail::project_signs(lo[i], hi[i]);
        report.updated_indices.push_back(i);
        if (!boxes.sign_fixed(i) && report.boxes.sign_fixed(i))
            report.newly_sign_fixed.push_back(i);
    }
    return report;
}

}  // namespace s3vm
