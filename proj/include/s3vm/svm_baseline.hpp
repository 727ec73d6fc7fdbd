/**
 * @file svm_baseline.hpp
 * @brief Supervised L2-SVM baseline (dual form) and hyperparameter
 *        cross-validation over the labeled points.
 */

#pragma once

#include <algorithm>
#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

#include "s3vm/dataset.hpp"
#include "s3vm/kernels.hpp"
#include "s3vm/rng.hpp"
#include "s3vm/solver.hpp"

namespace s3vm {

namespace svm_detail {

/**
 * Trains the L2-SVM dual max e'a - (1/2) a'(K_l o yy')a, a >= 0 with
 * K_l = gram + I/(2 C_l) on the training rows, then scores the evaluation
 * rows with the bias-free decision function sum_j a_j y_j k(x_j, x).
 */
inline std::vector<int> train_predict(const Matrix& gram, const std::vector<Index>& train,
                                      const std::vector<int>& train_y,
                                      const std::vector<Index>& eval, double cl,
                                      const SolverTolerances& tols = {}) {
    const Index m = static_cast<Index>(train.size());
    Matrix kl(m, m);
    for (Index a = 0; a < m; ++a)
        for (Index b = 0; b < m; ++b) kl(a, b) = gram(train[static_cast<std::size_t>(a)],
                                                       train[static_cast<std::size_t>(b)]);
    kl.diagonal().array() += 1.0 / (2.0 * cl);

    QpModel model;
    model.quadratic = kl;
    for (Index a = 0; a < m; ++a)
        for (Index b = 0; b < m; ++b)
            model.quadratic(a, b) *= train_y[static_cast<std::size_t>(a)] *
                                     train_y[static_cast<std::size_t>(b)];
    model.linear = Vector::Constant(m, -1.0);
    for (Index a = 0; a < m; ++a) {
        QpConstraint c;
        c.coeffs = Vector::Unit(m, a);
        c.sense = Sense::kGe;
        c.rhs = 0.0;
        model.constraints.push_back(std::move(c));
    }
    QpSolution sol = solve_qp(model, tols);
    if (sol.status != IpmStatus::kOptimal)
        throw NumericalError("baseline_svm: dual QP solve failed");

    std::vector<int> pred;
    pred.reserve(eval.size());
    for (Index e : eval) {
        double f = 0.0;
        for (Index a = 0; a < m; ++a)
            f += sol.point[a] * train_y[static_cast<std::size_t>(a)] *
                 gram(train[static_cast<std::size_t>(a)], e);
        pred.push_back(static_cast<int>(sign_pos(f)));
    }
    return pred;
}

}  // namespace svm_detail

struct BaselineResult {
    std::vector<int> predictions;      ///< full length; labeled entries copied
    std::optional<double> accuracy;    ///< on unlabeled points, when truth known
};

/// Supervised SVM trained on the labeled points only, predicting the rest.
inline BaselineResult baseline_svm(const Dataset& d, const KernelSpec& spec, double cl,
                                   const SolverTolerances& tols = {}) {
    std::vector<Index> train, rest;
    std::vector<int> train_y;
    for (Index i = 0; i < d.size(); ++i) {
        if (d.labeled_mask[static_cast<std::size_t>(i)]) {
            if (d.truth[static_cast<std::size_t>(i)] == 0)
                throw InvalidInput("baseline_svm: labeled point without a label");
            train.push_back(i);
            train_y.push_back(d.truth[static_cast<std::size_t>(i)]);
        } else {
            rest.push_back(i);
        }
    }
    if (train.empty()) throw InvalidInput("baseline_svm: no labeled points");
    const bool has_pos = std::count(train_y.begin(), train_y.end(), 1) > 0;
    const bool has_neg = std::count(train_y.begin(), train_y.end(), -1) > 0;
    if (!has_pos || !has_neg)
        throw InvalidInput("baseline_svm: need at least one labeled point per class");

    Matrix gram = gram_matrix(d.features, spec);
    std::vector<int> rest_pred = svm_detail::train_predict(gram, train, train_y, rest, cl, tols);

    BaselineResult out;
    out.predictions.assign(static_cast<std::size_t>(d.size()), 0);
    for (std::size_t k = 0; k < train.size(); ++k)
        out.predictions[static_cast<std::size_t>(train[k])] = train_y[k];
    for (std::size_t k = 0; k < rest.size(); ++k)
        out.predictions[static_cast<std::size_t>(rest[k])] = rest_pred[k];
    out.accuracy = accuracy(out.predictions, d.truth, d.labeled_mask);
    return out;
}

/// The penalty grid used throughout: 10^(i/10) for i = -10..10.
inline std::vector<double> default_penalty_grid() {
    std::vector<double> grid;
    for (int i = -10; i <= 10; ++i) grid.push_back(std::pow(10.0, i / 10.0));
    return grid;
}

/**
 * @brief Stratified k-fold cross-validation over the labeled points only,
 *        selecting (kernel in {linear, rbf}, C_l) by mean validation
 *        accuracy. Ties prefer smaller C_l, then linear over rbf.
 *
 * Folds whose training side would be single-class are re-drawn up to ten
 * times before failing.
 */
inline std::pair<KernelSpec, double> cross_validate(const Dataset& d,
                                                    const std::vector<double>& grid,
                                                    int folds, std::uint64_t seed,
                                                    const SolverTolerances& tols = {},
                                                    const std::vector<KernelSpec>* kernel_set =
                                                        nullptr) {
    std::vector<Index> labeled;
    for (Index i = 0; i < d.size(); ++i)
        if (d.labeled_mask[static_cast<std::size_t>(i)]) labeled.push_back(i);
    if (static_cast<int>(labeled.size()) < folds)
        throw InvalidInput("cross_validate: fewer labeled points than folds");
    if (grid.empty()) throw InvalidInput("cross_validate: empty grid");

    // Stratified fold assignment with a training-side class check.
    std::vector<int> fold_of(labeled.size());
    Rng rng(seed);
    bool ok = false;
    for (int attempt = 0; attempt < 10 && !ok; ++attempt) {
        std::vector<std::size_t> pos, neg;
        for (std::size_t k = 0; k < labeled.size(); ++k)
            (d.truth[static_cast<std::size_t>(labeled[k])] > 0 ? pos : neg).push_back(k);
        rng.shuffle(pos);
        rng.shuffle(neg);
        int next = 0;
        for (std::size_t k : pos) fold_of[k] = next++ % folds;
        for (std::size_t k : neg) fold_of[k] = next++ % folds;

        ok = true;
        for (int f = 0; f < folds && ok; ++f) {
            int train_pos = 0, train_neg = 0;
            for (std::size_t k = 0; k < labeled.size(); ++k) {
                if (fold_of[k] == f) continue;
                (d.truth[static_cast<std::size_t>(labeled[k])] > 0 ? train_pos : train_neg)++;
            }
            ok = train_pos > 0 && train_neg > 0;
        }
    }
    if (!ok) throw InvalidInput("cross_validate: could not stratify folds");

    const std::vector<KernelSpec> kernels =
        kernel_set ? *kernel_set
                   : std::vector<KernelSpec>{KernelSpec::linear(),
                                             KernelSpec::rbf(default_gamma(d.dim()))};
    double best_score = -1.0;
    std::size_t best_kernel = 0;
    double best_cl = grid.front();

    // Only the labeled rows ever enter a fold: the Gram matrix is built on
    // the labeled submatrix alone.
    Matrix labeled_feats(static_cast<Index>(labeled.size()), d.dim());
    std::vector<int> labeled_y(labeled.size());
    for (std::size_t k = 0; k < labeled.size(); ++k) {
        labeled_feats.row(static_cast<Index>(k)) = d.features.row(labeled[k]);
        labeled_y[k] = d.truth[static_cast<std::size_t>(labeled[k])];
    }

    for (std::size_t ki = 0; ki < kernels.size(); ++ki) {
        Matrix gram = gram_matrix(labeled_feats, kernels[ki]);
        for (double cl : grid) {
            double correct = 0.0, total = 0.0;
            for (int f = 0; f < folds; ++f) {
                std::vector<Index> train, valid;
                std::vector<int> train_y;
                for (std::size_t k = 0; k < labeled.size(); ++k) {
                    if (fold_of[k] == f) {
                        valid.push_back(static_cast<Index>(k));
                    } else {
                        train.push_back(static_cast<Index>(k));
                        train_y.push_back(labeled_y[k]);
                    }
                }
                if (valid.empty()) continue;
                std::vector<int> pred =
                    svm_detail::train_predict(gram, train, train_y, valid, cl, tols);
                for (std::size_t v = 0; v < valid.size(); ++v) {
                    total += 1.0;
                    if (pred[v] == labeled_y[static_cast<std::size_t>(valid[v])]) correct += 1.0;
                }
            }
            const double score = total > 0.0 ? correct / total : 0.0;
            const bool better =
                score > best_score + 1e-12 ||
                (std::abs(score - best_score) <= 1e-12 &&
                 (cl < best_cl - 1e-15 ||
                  (std::abs(cl - best_cl) <= 1e-15 && ki < best_kernel)));
            if (better) {
                best_score = score;
                best_kernel = ki;
                best_cl = cl;
            }
        }
    }
    return {kernels[best_kernel], best_cl};
}

}  // namespace s3vm
