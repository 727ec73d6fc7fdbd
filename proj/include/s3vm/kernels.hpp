/**
 * @file kernels.hpp
 * @brief Gram matrix construction: linear, RBF, and the rank-one ideal kernel.
 */

#pragma once

#include <vector>

#include "s3vm/common.hpp"

namespace s3vm {

enum class KernelKind { kLinear, kRbf, kIdeal };

struct KernelSpec {
    KernelKind kind = KernelKind::kLinear;
    double gamma = 1.0;            ///< RBF width, used when kind == kRbf
    std::vector<int> ideal_truth;  ///< ground-truth labels, used when kind == kIdeal

    static KernelSpec linear() { return {KernelKind::kLinear, 1.0, {}}; }
    static KernelSpec rbf(double gamma) { return {KernelKind::kRbf, gamma, {}}; }
    static KernelSpec ideal(std::vector<int> truth) {
        return {KernelKind::kIdeal, 1.0, std::move(truth)};
    }
};

/// Default RBF width 1/d.
inline double default_gamma(Index d) {
    if (d < 1) throw InvalidInput("default_gamma: d must be >= 1");
    return 1.0 / static_cast<double>(d);
}

/// Rank-one kernel truth * truth', +1 for same-class pairs, -1 otherwise.
inline Matrix ideal_gram(const std::vector<int>& truth) {
    const Index n = static_cast<Index>(truth.size());
    if (n < 1) throw InvalidInput("ideal_gram: empty truth vector");
    Vector g(n);
    for (Index i = 0; i < n; ++i) {
        const int v = truth[static_cast<std::size_t>(i)];
        if (v != -1 && v != 1) throw InvalidInput("ideal_gram: truth entries must be +/-1");
        g[i] = v;
    }
    return g * g.transpose();
}

/**
 * @brief Gram matrix of the given features under a kernel spec.
 *
 * RBF distances use the expanded form |x|^2 + |y|^2 - 2 x'y with tiny
 * negatives clamped to zero, so the diagonal is exactly one.
 */
inline Matrix gram_matrix(const Matrix& features, const KernelSpec& spec) {
    const Index n = features.rows();
    const Index d = features.cols();
    if (n < 1 || d < 1) throw InvalidInput("gram_matrix: need n >= 1 and d >= 1");
    if (!features.allFinite()) throw InvalidInput("gram_matrix: non-finite feature values");

    switch (spec.kind) {
        case KernelKind::kLinear:
            return features * features.transpose();
        case KernelKind::kRbf: {
            if (!(spec.gamma > 0.0)) throw InvalidInput("gram_matrix: rbf gamma must be positive");
            const Vector sq = features.rowwise().squaredNorm();
            Matrix dist = sq.replicate(1, n) + sq.transpose().replicate(n, 1) -
                          2.0 * (features * features.transpose());
            dist = dist.cwiseMax(0.0);
            Matrix g = (-spec.gamma * dist).array().exp();
            symmetrize(g);
            g.diagonal().setOnes();
            return g;
        }
        case KernelKind::kIdeal: {
            if (static_cast<Index>(spec.ideal_truth.size()) != n)
                throw InvalidInput("gram_matrix: ideal truth length mismatch");
            return ideal_gram(spec.ideal_truth);
        }
    }
    throw InvalidInput("gram_matrix: unknown kernel kind");
}

}  // namespace s3vm
