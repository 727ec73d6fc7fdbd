/**
 * @file problem.hpp
 * @brief Instance data model for the semi-supervised SVM QCQP.
 *
 * The model minimizes x'Cx with C = (1/2)K^{-1} over the constraints
 *   y_i x_i >= 1 for labeled points,
 *   x_i^2  >= 1 for unlabeled points,
 *   mean of unlabeled x equal to the labeled class mean (optional balancing).
 * K is the kernel matrix shifted by the diagonal penalty matrix D with
 * D_ii = 1/(2 C_l) on labeled and 1/(2 C_u) on unlabeled entries.
 */

#pragma once

#include <Eigen/Cholesky>

#include <algorithm>
#include <cstdint>
#include <vector>

#include "s3vm/common.hpp"

namespace s3vm {

/// A full assignment of +/-1 labels; the first `labeled_count` entries are given.
struct Labeling {
    std::vector<int> values;
    Index labeled_count = 0;

    Index size() const { return static_cast<Index>(values.size()); }

    bool valid() const {
        if (labeled_count < 0 || labeled_count > size()) return false;
        return std::all_of(values.begin(), values.end(),
                           [](int v) { return v == -1 || v == 1; });
    }
};

/// Assembled instance: cost matrix, given labels, penalties, balancing data.
struct ProblemData {
    Index n = 0;
    Index l = 0;
    Matrix cost;              ///< C = (1/2) K^{-1}, symmetric positive definite
    std::vector<int> labels;  ///< the l given labels, each +/-1
    double balancing_rhs = 0.0;
    bool balancing_enabled = false;
    double penalty_labeled = 1.0;    ///< C_l
    double penalty_unlabeled = 1.0;  ///< C_u

    Index unlabeled_count() const { return n - l; }
    bool is_labeled(Index i) const { return i < l; }
};

/// Per-variable lower/upper bounds, +/-inf allowed.
struct BoxBounds {
    Vector lower;
    Vector upper;

    static BoxBounds unbounded(Index n) {
        BoxBounds b;
        b.lower = Vector::Constant(n, -kInf);
        b.upper = Vector::Constant(n, kInf);
        return b;
    }

    /// Initial boxes implied by the given labels (Algorithm step 1).
    static BoxBounds from_labels(const ProblemData& p) {
        BoxBounds b = unbounded(p.n);
        for (Index i = 0; i < p.l; ++i) {
            if (p.labels[static_cast<std::size_t>(i)] > 0)
                b.lower[i] = 1.0;
            else
                b.upper[i] = -1.0;
        }
        return b;
    }

    Index size() const { return lower.size(); }

    bool consistent() const {
        for (Index i = 0; i < size(); ++i)
            if (lower[i] > upper[i]) return false;
        return true;
    }

    /// A variable whose sign is decided: L_i >= 1 or U_i <= -1.
    bool sign_fixed(Index i) const { return lower[i] >= 1.0 || upper[i] <= -1.0; }

    bool contains(const Vector& x, double tol = 1e-9) const {
        for (Index i = 0; i < size(); ++i)
            if (x[i] < lower[i] - tol || x[i] > upper[i] + tol) return false;
        return true;
    }

    /// Entrywise intersection with another box set.
    void intersect(const BoxBounds& other) {
        lower = lower.cwiseMax(other.lower);
        upper = upper.cwiseMin(other.upper);
    }
};

/// Best known feasible point, its labeling, and objective (the upper bound).
struct Incumbent {
    Vector point;
    Labeling labeling;
    double objective = kInf;
};

/**
 * @brief Builds ProblemData from a Gram matrix, labels and penalties.
 *
 * Computes D from (C_l, C_u), K = gram + D, and C = (1/2) K^{-1} via a
 * Cholesky factorization. If the factorization fails from roundoff, a single
 * jitter of 1e-10 * trace(K)/n is added to the diagonal before failing hard.
 *
 * @throws InvalidInput on malformed inputs, NumericalError if K cannot be
 *         factorized even after the jitter retry.
 */
inline ProblemData assemble_problem(const Matrix& gram, const std::vector<int>& labels,
                                    double penalty_labeled, double penalty_unlabeled,
                                    bool balancing) {
    const Index n = gram.rows();
    const Index l = static_cast<Index>(labels.size());
    if (n < 1 || gram.cols() != n) throw InvalidInput("assemble_problem: gram must be square");
    if (l < 1 || l > n) throw InvalidInput("assemble_problem: need 1 <= l <= n labels");
    if (!(penalty_labeled > 0.0) || !(penalty_unlabeled > 0.0))
        throw InvalidInput("assemble_problem: penalties must be positive");
    if (!gram.allFinite()) throw InvalidInput("assemble_problem: gram has non-finite entries");
    if ((gram - gram.transpose()).cwiseAbs().maxCoeff() > 1e-8 * (1.0 + gram.cwiseAbs().maxCoeff()))
        throw InvalidInput("assemble_problem: gram must be symmetric");
    for (int y : labels)
        if (y != -1 && y != 1) throw InvalidInput("assemble_problem: labels must be +/-1");

    Matrix k = (gram + gram.transpose()) * 0.5;
    for (Index i = 0; i < n; ++i)
        k(i, i) += (i < l) ? 1.0 / (2.0 * penalty_labeled) : 1.0 / (2.0 * penalty_unlabeled);

    Eigen::LLT<Matrix> llt(k);
    if (llt.info() != Eigen::Success) {
        const double jitter = 1e-10 * k.trace() / static_cast<double>(n);
        k.diagonal().array() += jitter;
        llt.compute(k);
        if (llt.info() != Eigen::Success)
            throw NumericalError("assemble_problem: kernel-plus-penalty matrix is not positive definite");
    }

    ProblemData p;
    p.n = n;
    p.l = l;
    p.labels = labels;
    p.penalty_labeled = penalty_labeled;
    p.penalty_unlabeled = penalty_unlabeled;
    p.balancing_enabled = balancing;
    p.cost = llt.solve(Matrix::Identity(n, n) * 0.5);
    symmetrize(p.cost);

    double label_sum = 0.0;
    for (int y : labels) label_sum += y;
    p.balancing_rhs = label_sum / static_cast<double>(l);
    return p;
}

/// x'Cx.
inline double objective(const ProblemData& p, const Vector& x) {
    if (x.size() != p.n) throw InvalidInput("objective: length mismatch");
    return x.dot(p.cost * x);
}

/// Feasibility for the assembled QCQP within an absolute tolerance.
inline bool check_feasible(const ProblemData& p, const Vector& x, double tol = 1e-6) {
    if (x.size() != p.n) throw InvalidInput("check_feasible: length mismatch");
    if (tol < 0.0) throw InvalidInput("check_feasible: tol must be nonnegative");
    for (Index i = 0; i < p.l; ++i)
        if (p.labels[static_cast<std::size_t>(i)] * x[i] < 1.0 - tol) return false;
    for (Index i = p.l; i < p.n; ++i)
        if (x[i] * x[i] < 1.0 - tol) return false;
    if (p.balancing_enabled && p.n > p.l) {
        const double mean = x.tail(p.n - p.l).mean();
        if (std::abs(mean - p.balancing_rhs) > tol) return false;
    }
    return true;
}

/// ((UB - LB)/UB) * 100, clamped below at zero.
inline double percentage_gap(double ub, double lb) {
    if (!(ub > 0.0)) throw InvalidInput("percentage_gap: UB must be positive");
    return std::max(0.0, (ub - lb) / ub * 100.0);
}

}  // namespace s3vm
