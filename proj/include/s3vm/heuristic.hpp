/**
 * @file heuristic.hpp
 * @brief Upper bounds: SDP rounding, the labeling-restricted convex QP, and
 *        the analytic two-opt local search.
 */

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <optional>
#include <utility>
#include <vector>

#include "s3vm/common.hpp"
#include "s3vm/problem.hpp"
#include "s3vm/solver.hpp"

namespace s3vm {

/// Labeled entries forced to their given labels, the rest sign(x) with
/// sign(0) = +1.
inline Labeling round_sdp(const Vector& x, const std::vector<int>& labels) {
    Labeling lab;
    lab.labeled_count = static_cast<Index>(labels.size());
    lab.values.resize(static_cast<std::size_t>(x.size()));
    for (Index i = 0; i < x.size(); ++i) {
        lab.values[static_cast<std::size_t>(i)] =
            (i < lab.labeled_count) ? labels[static_cast<std::size_t>(i)]
                                    : static_cast<int>(sign_pos(x[i]));
    }
    return lab;
}

struct LabelQpResult {
    IpmStatus status = IpmStatus::kNumericalFailure;
    Incumbent incumbent;
    Vector label_duals;  ///< multipliers of the n labeling rows
};

/**
 * @brief min x'Cx subject to lab_i * x_i >= 1 for every i and the balancing
 *        row when enabled. Infeasibility (all unlabeled on one sign s with
 *        s*r < 1) is detected up front and reported distinctly.
 */
inline LabelQpResult label_qp(const ProblemData& p, const Labeling& lab,
                              const SolverTolerances& tols = {}) {
    LabelQpResult out;
    if (lab.size() != p.n || !lab.valid()) throw InvalidInput("label_qp: bad labeling");
    for (Index i = 0; i < p.l; ++i)
        if (lab.values[static_cast<std::size_t>(i)] != p.labels[static_cast<std::size_t>(i)])
            throw InvalidInput("label_qp: labeling contradicts given labels");

    if (p.balancing_enabled && p.n > p.l) {
        int sign_sum = 0;
        for (Index i = p.l; i < p.n; ++i) sign_sum += lab.values[static_cast<std::size_t>(i)];
        const Index m = p.n - p.l;
        if (std::abs(sign_sum) == m) {
            const double s = sign_sum > 0 ? 1.0 : -1.0;
            if (s * p.balancing_rhs < 1.0 - 1e-12) {
                out.status = IpmStatus::kInfeasible;
                return out;
            }
        }
    }

    QpModel model;
    model.quadratic = 2.0 * p.cost;
    model.linear = Vector::Zero(p.n);
    for (Index i = 0; i < p.n; ++i) {
        QpConstraint c;
        c.coeffs = Vector::Zero(p.n);
        c.coeffs[i] = static_cast<double>(lab.values[static_cast<std::size_t>(i)]);
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
    out.status = sol.status;
    if (sol.status != IpmStatus::kOptimal) return out;
    out.incumbent.point = sol.point;
    out.incumbent.labeling = lab;
    out.incumbent.objective = objective(p, sol.point);
    out.label_duals = Vector::Zero(p.n);
    for (Index i = 0; i < p.n; ++i) out.label_duals[i] = sol.duals[static_cast<std::size_t>(i)];
    return out;
}

/// Reduced univariate quadratic of the two-variable move with fixed pair sum.
struct TwoOptSubproblem {
    double a = 0.0;  ///< C_ii + C_jj - 2 C_ij, positive for PD C
    double b = 0.0;
    double c = 0.0;
    double k = 0.0;  ///< fixed pair sum x_i + x_j

    static TwoOptSubproblem from_entries(double cii, double cij, double cjj, double eta_i,
                                         double eta_j, double pair_sum) {
        TwoOptSubproblem s;
        s.a = cii + cjj - 2.0 * cij;
        s.b = 2.0 * pair_sum * (cij - cii) - 2.0 * eta_i + 2.0 * eta_j;
        s.c = cii * pair_sum * pair_sum + 2.0 * eta_i * pair_sum;
        s.k = pair_sum;
        return s;
    }

    double value(double xj) const { return (a * xj + b) * xj + c; }

    bool feasible(double xj, double tol = 1e-9) const {
        const double xi = k - xj;
        return xj * xj >= 1.0 - tol && xi * xi >= 1.0 - tol;
    }

    /// Global minimizer over {x_j^2 >= 1, (k - x_j)^2 >= 1} from the finite
    /// KKT/FJ candidate set.
    std::optional<double> minimize() const {
        const std::array<double, 5> candidates = {-b / (2.0 * a), -1.0, 1.0, k - 1.0, k + 1.0};
        std::optional<double> best;
        double best_val = kInf;
        for (double cand : candidates) {
            if (!std::isfinite(cand) || !feasible(cand)) continue;
            const double v = value(cand);
            if (v < best_val - 1e-15 * (1.0 + std::abs(v))) {
                best_val = v;
                best = cand;
            }
        }
        return best;
    }
};

/**
 * @brief Exact re-optimization of one unlabeled pair with their sum held
 *        fixed; returns the pair unchanged when it is already optimal.
 */
inline std::pair<double, double> two_opt_step(const Matrix& cost, const Vector& x, Index i,
                                              Index j) {
    const double g_i = (cost.row(i) * x)(0);
    const double g_j = (cost.row(j) * x)(0);
    const double eta_i = g_i - cost(i, i) * x[i] - cost(i, j) * x[j];
    const double eta_j = g_j - cost(j, j) * x[j] - cost(i, j) * x[i];
    const TwoOptSubproblem sub =
        TwoOptSubproblem::from_entries(cost(i, i), cost(i, j), cost(j, j), eta_i, eta_j,
                                       x[i] + x[j]);
    const auto best = sub.minimize();
    if (!best) return {x[i], x[j]};
    const double improvement = sub.value(x[j]) - sub.value(*best);
    if (improvement <= 1e-12 * (1.0 + std::abs(sub.value(x[j])))) return {x[i], x[j]};
    return {sub.k - *best, *best};
}

/**
 * @brief Repairs a one-sided labeling that makes the balancing row
 *        infeasible by flipping the unlabeled entry of least magnitude.
 */
inline Labeling repair_labeling(const Labeling& lab, const Vector& x, double balancing_rhs) {
    Labeling out = lab;
    const Index n = out.size();
    const Index l = out.labeled_count;
    for (int attempt = 0; attempt < 2; ++attempt) {
        if (n == l) break;
        int sign_sum = 0;
        for (Index i = l; i < n; ++i) sign_sum += out.values[static_cast<std::size_t>(i)];
        if (std::abs(sign_sum) != n - l) break;
        const double s = sign_sum > 0 ? 1.0 : -1.0;
        if (s * balancing_rhs >= 1.0 - 1e-12) break;
        Index flip = l;
        for (Index i = l + 1; i < n; ++i)
            if (std::abs(x[i]) < std::abs(x[flip])) flip = i;
        out.values[static_cast<std::size_t>(flip)] *= -1;
    }
    return out;
}

/**
 * @brief Two-opt local search: sweeps all unlabeled pairs with immediate
 *        acceptance, re-solves the labeling QP after any improving sweep,
 *        and stops when a full sweep leaves the point unchanged.
 *
 * The pair sum is preserved by every move, so balancing feasibility is
 * maintained and the objective never increases.
 */
inline Incumbent two_opt_search(const ProblemData& p, const Incumbent& start,
                                const SolverTolerances& tols = {}) {
    Vector x = start.point;
    double obj = objective(p, x);
    Vector grad = p.cost * x;  // maintained incrementally across accepted moves

    const int max_rounds = 50;
    for (int round = 0; round < max_rounds; ++round) {
        bool any_update = false;
        for (Index i = p.l; i < p.n; ++i) {
            for (Index j = i + 1; j < p.n; ++j) {
                const double eta_i = grad[i] - p.cost(i, i) * x[i] - p.cost(i, j) * x[j];
                const double eta_j = grad[j] - p.cost(j, j) * x[j] - p.cost(i, j) * x[i];
                const TwoOptSubproblem sub = TwoOptSubproblem::from_entries(
                    p.cost(i, i), p.cost(i, j), p.cost(j, j), eta_i, eta_j, x[i] + x[j]);
                const auto best = sub.minimize();
                if (!best) continue;
                const double delta = sub.value(x[j]) - sub.value(*best);
                if (delta <= 1e-11 * (1.0 + std::abs(obj))) continue;
                const double new_j = *best;
                const double new_i = sub.k - new_j;
                grad += p.cost.col(i) * (new_i - x[i]) + p.cost.col(j) * (new_j - x[j]);
                obj -= delta;
                x[i] = new_i;
                x[j] = new_j;
                any_update = true;
            }
        }
        if (!any_update) break;

        LabelQpResult qp = label_qp(p, round_sdp(x, p.labels), tols);
        if (qp.status == IpmStatus::kOptimal &&
            qp.incumbent.objective <= obj + 1e-12 * (1.0 + std::abs(obj))) {
            x = qp.incumbent.point;
        }
        obj = objective(p, x);
        grad = p.cost * x;
    }

    Incumbent out;
    out.point = x;
    out.labeling = round_sdp(x, p.labels);
    out.objective = objective(p, x);
    return out;
}

}  // namespace s3vm
