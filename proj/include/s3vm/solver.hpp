/**
 * @file solver.hpp
 * @brief Model-level abstraction over the embedded conic and QP engines.
 *
 * The rest of the library talks to these types only: linear SDPs over one
 * PSD block (with tagged constraints and dual access) and convex QP/QCQPs.
 * The backend is the embedded interior-point code; swapping it for an
 * external process would touch this file alone.
 */

#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "s3vm/common.hpp"
#include "s3vm/conic_ipm.hpp"
#include "s3vm/qp_ipm.hpp"

namespace s3vm {

enum class Sense { kGe, kLe, kEq };

enum class ConstraintKind {
    kBoxLower,
    kBoxUpper,
    kDiagLower,
    kDiagUpper,
    kBalancing,
    kRlt,
    kProduct,
};

/// One tagged linear constraint over entries of the lifted PSD block.
struct SdpConstraint {
    ConstraintKind kind = ConstraintKind::kRlt;
    Index i = -1;  ///< primary variable index the row refers to
    Index j = -1;  ///< secondary index (RLT/product rows)
    std::vector<ConicRow::PsdEntry> coeffs;
    Sense sense = Sense::kGe;
    double rhs = 0.0;
};

/**
 * @brief A linear SDP over the lifted block [[X, x], [x', 1]].
 *
 * `dim` is the full block size n+1; the corner entry is pinned to one by the
 * compiler, callers only supply the tagged rows and the objective over X.
 */
struct SdpModel {
    Index dim = 0;
    Matrix objective;  ///< symmetric dim x dim coefficient matrix
    std::vector<SdpConstraint> constraints;

    Index n() const { return dim - 1; }

    void add(SdpConstraint c) { constraints.push_back(std::move(c)); }
};

/// Multiplier of one constraint together with the tag needed to use it.
struct DualInfo {
    ConstraintKind kind;
    Index i, j;
    Sense sense;
    double rhs;       ///< right-hand side of the row in the solved model
    double activity;  ///< row value <A, Z> at the returned solution
    double dual;      ///< multiplier, nonnegative for inequality rows
};

struct SdpSolution {
    IpmStatus status = IpmStatus::kNumericalFailure;
    Vector x;                   ///< last block column without the corner
    Matrix xmat;                ///< the lifted X (dim-1 square)
    double objective = -kInf;   ///< dual objective: a certified bound
    std::vector<DualInfo> duals;  ///< one entry per constraint, model order
    int iterations = 0;

    /// First multiplier matching (kind, i); i < 0 matches any index.
    std::optional<double> dual_of(ConstraintKind kind, Index i) const {
        for (const auto& d : duals)
            if (d.kind == kind && (i < 0 || d.i == i)) return d.dual;
        return std::nullopt;
    }
};

struct SolverTolerances {
    double sdp_tol = 1e-7;
    double qp_tol = 1e-8;
    int max_iter = 300;
    int workers = 1;   ///< threads for the SDP Schur assembly
    bool trace = false;
};

/**
 * @brief Solves a tagged-block SDP, returning primal pair, bound and duals.
 *
 * Inequality multipliers are reported nonnegative regardless of row sense.
 * `status` is infeasible when simple bound rows already contradict each
 * other, or when the engine diagnoses primal infeasibility.
 */
inline SdpSolution solve_sdp(const SdpModel& model, const SolverTolerances& tols = {}) {
    SdpSolution sol;
    const Index dim = model.dim;
    if (dim < 1) throw InvalidInput("solve_sdp: empty model");

    // Structural infeasibility scan over single-entry bound rows.
    {
        std::vector<double> lo(static_cast<std::size_t>(dim) * dim, -kInf);
        std::vector<double> hi(static_cast<std::size_t>(dim) * dim, kInf);
        for (const auto& c : model.constraints) {
            if (c.coeffs.size() != 1) continue;
            const auto& e = c.coeffs[0];
            if (std::abs(e.v) < 1e-300) continue;
            const std::size_t key =
                static_cast<std::size_t>(e.r) * static_cast<std::size_t>(dim) +
                static_cast<std::size_t>(e.c);
            const double bound = c.rhs / e.v;
            const bool flip = e.v < 0.0;
            Sense s = c.sense;
            if (flip && s == Sense::kGe) s = Sense::kLe;
            else if (flip && s == Sense::kLe) s = Sense::kGe;
            if (s == Sense::kGe) lo[key] = std::max(lo[key], bound);
            else if (s == Sense::kLe) hi[key] = std::min(hi[key], bound);
            else { lo[key] = std::max(lo[key], bound); hi[key] = std::min(hi[key], bound); }
            if (lo[key] > hi[key] + 1e-12) {
                sol.status = IpmStatus::kInfeasible;
                return sol;
            }
        }
    }

    ConicProblem cp;
    cp.psd_dim = dim;
    cp.lp_dim = 0;
    cp.cost_psd = model.objective;
    cp.cost_lp = Vector();

    const Index m = static_cast<Index>(model.constraints.size());
    std::vector<double> row_scale(static_cast<std::size_t>(m), 1.0);
    std::vector<int> slack_of(static_cast<std::size_t>(m), -1);
    Index n_slack = 0;
    for (Index k = 0; k < m; ++k)
        if (model.constraints[static_cast<std::size_t>(k)].sense != Sense::kEq)
            slack_of[static_cast<std::size_t>(k)] = static_cast<int>(n_slack++);
    cp.lp_dim = n_slack;
    cp.cost_lp = Vector::Zero(n_slack);

    cp.rows.reserve(static_cast<std::size_t>(m) + 1);
    for (Index k = 0; k < m; ++k) {
        const auto& c = model.constraints[static_cast<std::size_t>(k)];
        ConicRow row;
        row.psd = c.coeffs;
        double norm = 0.0;
        for (const auto& e : row.psd) norm += (e.r == e.c) ? e.v * e.v : 0.5 * e.v * e.v;
        const double scale = std::max(1.0, std::sqrt(norm));
        row_scale[static_cast<std::size_t>(k)] = scale;
        for (auto& e : row.psd) e.v /= scale;
        row.rhs = c.rhs / scale;
        if (c.sense == Sense::kGe)
            row.lin.push_back({slack_of[static_cast<std::size_t>(k)], -1.0});
        else if (c.sense == Sense::kLe)
            row.lin.push_back({slack_of[static_cast<std::size_t>(k)], 1.0});
        cp.rows.push_back(std::move(row));
    }
    // Pin the homogenizing corner.
    {
        ConicRow corner;
        corner.psd.push_back({dim - 1, dim - 1, 1.0});
        corner.rhs = 1.0;
        cp.rows.push_back(std::move(corner));
    }

    ConicSolver engine(cp);
    ConicOptions copts;
    copts.tol = tols.sdp_tol;
    copts.max_iter = tols.max_iter;
    copts.workers = tols.workers;
    copts.trace = tols.trace;
    ConicResult cres = engine.solve(copts);

    sol.status = cres.status;
    sol.iterations = cres.iterations;
    if (cres.status == IpmStatus::kInfeasible) return sol;

    sol.xmat = cres.zp.topLeftCorner(dim - 1, dim - 1);
    sol.x = cres.zp.col(dim - 1).head(dim - 1);
    sol.objective = cres.dobj;
    sol.duals.resize(static_cast<std::size_t>(m));
    for (Index k = 0; k < m; ++k) {
        const auto& c = model.constraints[static_cast<std::size_t>(k)];
        double lam = cres.y[k] / row_scale[static_cast<std::size_t>(k)];
        if (c.sense == Sense::kLe) lam = -lam;
        double act = 0.0;
        for (const auto& e : c.coeffs) act += e.v * cres.zp(e.r, e.c);
        sol.duals[static_cast<std::size_t>(k)] = {c.kind, c.i, c.j, c.sense, c.rhs, act, lam};
    }
    return sol;
}

/**
 * @brief max sum_{i in free} lambda_i  s.t.  M - 2 Diag(lambda) >= 0 (PSD),
 *        lambda >= 0, lambda_i = 0 off `free`.
 *
 * Structured companion to solve_sdp used by the Lagrangian QP bound; the
 * multipliers come out as the equality duals of the compiled standard form.
 */
struct DiagPenaltyResult {
    IpmStatus status = IpmStatus::kNumericalFailure;
    Vector lambda;  ///< full-length, zero off the free set
    double objective = -kInf;
};

inline DiagPenaltyResult solve_diag_penalty_sdp(const Matrix& m,
                                                const std::vector<Index>& free_idx,
                                                const SolverTolerances& tols = {}) {
    const Index n = m.rows();
    DiagPenaltyResult out;
    out.lambda = Vector::Zero(n);
    if (free_idx.empty()) {
        out.status = IpmStatus::kOptimal;
        out.objective = 0.0;
        return out;
    }

    ConicProblem cp;
    cp.psd_dim = n;
    cp.lp_dim = static_cast<Index>(free_idx.size());
    cp.cost_psd = m;
    cp.cost_lp = Vector::Zero(cp.lp_dim);
    for (std::size_t k = 0; k < free_idx.size(); ++k) {
        ConicRow row;
        row.psd.push_back({free_idx[k], free_idx[k], 2.0});
        row.lin.push_back({static_cast<Index>(k), -1.0});
        row.rhs = 1.0;
        cp.rows.push_back(std::move(row));
    }

    ConicSolver engine(cp);
    ConicOptions copts;
    copts.tol = tols.sdp_tol;
    copts.max_iter = tols.max_iter;
    copts.workers = tols.workers;
    ConicResult cres = engine.solve(copts);
    out.status = cres.status;
    if (cres.status != IpmStatus::kOptimal) return out;
    for (std::size_t k = 0; k < free_idx.size(); ++k)
        out.lambda[free_idx[k]] = std::max(0.0, cres.y[static_cast<Index>(k)]);
    out.objective = cres.dobj;
    return out;
}

/// One linear constraint of a QP model.
struct QpConstraint {
    Vector coeffs;
    Sense sense = Sense::kGe;
    double rhs = 0.0;
};

/// Convex QP with an optional single quadratic constraint x'Px <= rhs.
struct QpModel {
    Matrix quadratic;  ///< objective = 0.5 x'Qx + linear'x + constant
    Vector linear;
    double constant = 0.0;
    std::vector<QpConstraint> constraints;
    bool has_quad_constraint = false;
    Matrix quad_matrix;
    double quad_rhs = 0.0;

    Index dim() const { return linear.size(); }
};

struct QpSolution {
    IpmStatus status = IpmStatus::kNumericalFailure;
    Vector point;
    double objective = kInf;
    std::vector<double> duals;  ///< per model constraint, nonnegative for inequalities
    double quad_dual = 0.0;
    int iterations = 0;
};

inline QpSolution solve_qp(const QpModel& model, const SolverTolerances& tols = {},
                           const Vector* start = nullptr) {
    const Index n = model.dim();
    if (model.quadratic.rows() != n || model.quadratic.cols() != n)
        throw InvalidInput("solve_qp: objective size mismatch");

    Index n_ge = 0, n_eq = 0;
    for (const auto& c : model.constraints) {
        if (c.coeffs.size() != n) throw InvalidInput("solve_qp: constraint size mismatch");
        (c.sense == Sense::kEq ? n_eq : n_ge)++;
    }

    QpIpmProblem ipm;
    ipm.q = model.quadratic;
    ipm.c = model.linear;
    ipm.g.resize(n_ge, n);
    ipm.h.resize(n_ge);
    ipm.e.resize(n_eq, n);
    ipm.f.resize(n_eq);
    std::vector<int> row_of(model.constraints.size(), -1);
    Index ig = 0, ie = 0;
    for (std::size_t k = 0; k < model.constraints.size(); ++k) {
        const auto& c = model.constraints[k];
        if (c.sense == Sense::kEq) {
            ipm.e.row(ie) = c.coeffs.transpose();
            ipm.f[ie] = c.rhs;
            ++ie;
        } else {
            const double flip = (c.sense == Sense::kLe) ? -1.0 : 1.0;
            ipm.g.row(ig) = flip * c.coeffs.transpose();
            ipm.h[ig] = flip * c.rhs;
            row_of[k] = static_cast<int>(ig);
            ++ig;
        }
    }
    if (model.has_quad_constraint) {
        ipm.has_quad = true;
        ipm.p = model.quad_matrix;
        ipm.quad_rhs = model.quad_rhs;
    }

    QpIpmOptions opts;
    opts.tol = tols.qp_tol;
    opts.max_iter = tols.max_iter;
    opts.start = start;
    QpIpmResult r = solve_qp_ipm(ipm, opts);

    QpSolution sol;
    sol.status = r.status;
    sol.iterations = r.iterations;
    if (r.status != IpmStatus::kOptimal) return sol;
    sol.point = r.x;
    sol.objective = r.objective + model.constant;
    sol.quad_dual = r.quad_dual;
    sol.duals.resize(model.constraints.size(), 0.0);
    for (std::size_t k = 0; k < model.constraints.size(); ++k)
        if (row_of[k] >= 0) sol.duals[k] = std::max(0.0, r.ineq_duals[row_of[k]]);
    return sol;
}

}  // namespace s3vm
