/**
 * @file dataset.hpp
 * @brief Dataset ingestion, standardization, stratified label masking,
 *        accuracy, and the synthetic instance generators.
 */

#pragma once

#include <charconv>
#include <cstdint>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "s3vm/common.hpp"
#include "s3vm/rng.hpp"

namespace s3vm {

/**
 * @brief A binary classification dataset. `truth` holds +/-1 where known and
 *        0 where unknown; `labeled_mask` marks the points whose label is
 *        given to the solver.
 */
struct Dataset {
    Matrix features;
    std::vector<int> truth;
    std::vector<bool> labeled_mask;
    std::uint64_t seed = 0;

    Index size() const { return features.rows(); }
    Index dim() const { return features.cols(); }

    bool has_full_truth() const {
        for (int t : truth)
            if (t == 0) return false;
        return !truth.empty();
    }

    Index labeled_count() const {
        Index l = 0;
        for (bool b : labeled_mask) l += b ? 1 : 0;
        return l;
    }
};

namespace dataset_detail {

inline std::string trim(const std::string& s) {
    const auto begin = s.find_first_not_of(" \t\r\n");
    if (begin == std::string::npos) return "";
    const auto end = s.find_last_not_of(" \t\r\n");
    return s.substr(begin, end - begin + 1);
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> cells;
    std::string cell;
    std::stringstream ss(line);
    while (std::getline(ss, cell, ',')) cells.push_back(trim(cell));
    if (!line.empty() && line.back() == ',') cells.push_back("");
    return cells;
}

inline std::optional<double> parse_double(const std::string& s) {
    if (s.empty()) return std::nullopt;
    try {
        std::size_t pos = 0;
        const double v = std::stod(s, &pos);
        if (pos != s.size()) return std::nullopt;
        return v;
    } catch (...) {
        return std::nullopt;
    }
}

}  // namespace dataset_detail

/**
 * @brief Loads a CSV with one sample per row. The label column accepts
 *        "+1"/"1", "-1", and "?" or empty for unlabeled points; a header row
 *        is detected and skipped. label_column < 0 addresses the last column.
 */
inline Dataset load_csv(const std::string& path, int label_column = -1) {
    std::ifstream in(path);
    if (!in) throw InvalidInput("load_csv: cannot open " + path);

    std::vector<std::vector<std::string>> rows;
    std::string line;
    while (std::getline(in, line)) {
        if (dataset_detail::trim(line).empty()) continue;
        rows.push_back(dataset_detail::split_csv_line(line));
    }
    if (rows.empty()) throw InvalidInput("load_csv: empty file " + path);

    const std::size_t arity = rows.front().size();
    if (arity < 2) throw InvalidInput("load_csv: need at least one feature and a label column");
    for (const auto& r : rows)
        if (r.size() != arity) throw InvalidInput("load_csv: mixed column arity");

    const std::size_t label_idx =
        label_column < 0 ? arity - 1 : static_cast<std::size_t>(label_column);
    if (label_idx >= arity) throw InvalidInput("load_csv: label column out of range");

    // Header heuristic: any non-numeric feature cell in the first row.
    std::size_t first_row = 0;
    for (std::size_t c = 0; c < arity; ++c) {
        if (c == label_idx) continue;
        if (!dataset_detail::parse_double(rows[0][c])) {
            first_row = 1;
            break;
        }
    }
    if (rows.size() <= first_row) throw InvalidInput("load_csv: no data rows");

    const Index n = static_cast<Index>(rows.size() - first_row);
    const Index d = static_cast<Index>(arity - 1);
    Dataset ds;
    ds.features.resize(n, d);
    ds.truth.resize(static_cast<std::size_t>(n), 0);
    ds.labeled_mask.assign(static_cast<std::size_t>(n), false);

    for (Index i = 0; i < n; ++i) {
        const auto& row = rows[static_cast<std::size_t>(i) + first_row];
        Index col = 0;
        for (std::size_t c = 0; c < arity; ++c) {
            if (c == label_idx) continue;
            const auto v = dataset_detail::parse_double(row[c]);
            if (!v || !is_finite(*v))
                throw InvalidInput("load_csv: bad feature value '" + row[c] + "'");
            ds.features(i, col++) = *v;
        }
        const std::string& lab = row[label_idx];
        if (lab.empty() || lab == "?") {
            ds.truth[static_cast<std::size_t>(i)] = 0;
        } else if (lab == "1" || lab == "+1") {
            ds.truth[static_cast<std::size_t>(i)] = 1;
            ds.labeled_mask[static_cast<std::size_t>(i)] = true;
        } else if (lab == "-1") {
            ds.truth[static_cast<std::size_t>(i)] = -1;
            ds.labeled_mask[static_cast<std::size_t>(i)] = true;
        } else {
            throw InvalidInput("load_csv: bad label value '" + lab + "'");
        }
    }
    return ds;
}

/// Column-wise zero mean and unit sample (n-1) standard deviation; constant
/// columns become all zeros.
inline Matrix standardize(const Matrix& features) {
    const Index n = features.rows();
    if (n < 2) throw InvalidInput("standardize: need at least two samples");
    Matrix out = features;
    for (Index c = 0; c < features.cols(); ++c) {
        const double mean = features.col(c).mean();
        out.col(c).array() -= mean;
        const double sd =
            std::sqrt(out.col(c).squaredNorm() / static_cast<double>(n - 1));
        if (sd < 1e-12)
            out.col(c).setZero();
        else
            out.col(c) /= sd;
    }
    return out;
}

/**
 * @brief Stratified masking: round(p * class size) labels drawn uniformly
 *        per class under the seed; deterministic for a fixed seed.
 */
inline Dataset mask_labels(const Dataset& d, double fraction, std::uint64_t seed) {
    if (!d.has_full_truth()) throw InvalidInput("mask_labels: full ground truth required");
    const Index n = d.size();
    if (fraction * static_cast<double>(n) < 2.0)
        throw InvalidInput("mask_labels: p*n must be at least 2");

    std::vector<Index> pos, neg;
    for (Index i = 0; i < n; ++i)
        (d.truth[static_cast<std::size_t>(i)] > 0 ? pos : neg).push_back(i);

    Dataset out = d;
    out.seed = seed;
    out.labeled_mask.assign(static_cast<std::size_t>(n), false);
    Rng rng(seed);
    for (auto* cls : {&pos, &neg}) {
        const auto take = static_cast<std::size_t>(
            std::llround(fraction * static_cast<double>(cls->size())));
        if (take == 0)
            throw InvalidInput("mask_labels: a class would receive zero labels");
        rng.shuffle(*cls);
        for (std::size_t k = 0; k < take && k < cls->size(); ++k)
            out.labeled_mask[static_cast<std::size_t>((*cls)[k])] = true;
    }
    return out;
}

/// Percentage of correct predictions among unlabeled points; empty when
/// there are none (or their truth is unknown).
inline std::optional<double> accuracy(const std::vector<int>& predictions,
                                      const std::vector<int>& truth,
                                      const std::vector<bool>& labeled_mask) {
    if (predictions.size() != truth.size() || truth.size() != labeled_mask.size())
        throw InvalidInput("accuracy: length mismatch");
    Index total = 0, correct = 0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        if (labeled_mask[i] || truth[i] == 0) continue;
        ++total;
        if (predictions[i] == truth[i]) ++correct;
    }
    if (total == 0) return std::nullopt;
    return 100.0 * static_cast<double>(correct) / static_cast<double>(total);
}

/// Two interleaved half-moons, n/2 points each, truth +1 on the upper moon.
inline Dataset make_two_moons(Index n, std::uint64_t seed, double noise = 0.12) {
    if (n < 4) throw InvalidInput("make_two_moons: n too small");
    Rng rng(seed);
    Dataset ds;
    ds.seed = seed;
    ds.features.resize(n, 2);
    ds.truth.resize(static_cast<std::size_t>(n));
    ds.labeled_mask.assign(static_cast<std::size_t>(n), false);
    const Index half = n / 2;
    for (Index i = 0; i < n; ++i) {
        const bool upper = i < half;
        const double t = rng.uniform(0.0, std::numbers::pi);
        double x = upper ? std::cos(t) : 1.0 - std::cos(t);
        double y = upper ? std::sin(t) : 0.5 - std::sin(t);
        ds.features(i, 0) = x + noise * rng.gaussian();
        ds.features(i, 1) = y + noise * rng.gaussian();
        ds.truth[static_cast<std::size_t>(i)] = upper ? 1 : -1;
    }
    return ds;
}

/// Two Gaussian blobs in the plane, balanced classes.
inline Dataset make_blobs(Index n, std::uint64_t seed, double separation = 2.4,
                          double spread = 0.85) {
    if (n < 4) throw InvalidInput("make_blobs: n too small");
    Rng rng(seed);
    Dataset ds;
    ds.seed = seed;
    ds.features.resize(n, 2);
    ds.truth.resize(static_cast<std::size_t>(n));
    ds.labeled_mask.assign(static_cast<std::size_t>(n), false);
    const Index half = n / 2;
    for (Index i = 0; i < n; ++i) {
        const int cls = i < half ? 1 : -1;
        ds.features(i, 0) = 0.5 * separation * cls + spread * rng.gaussian();
        ds.features(i, 1) = spread * rng.gaussian();
        ds.truth[static_cast<std::size_t>(i)] = cls;
    }
    return ds;
}

/**
 * @brief 50-point instance with three horizontal clusters: the top row is
 *        one class, the middle and bottom rows the other. The five labeled
 *        points (10%) sit where they carry little information, so the
 *        unconstrained global optimum collapses the unlabeled points while
 *        the balancing constraint recovers the truth.
 */
inline Dataset make_three_band(std::uint64_t seed, double band_gap = 1.1,
                               double jitter = 0.08) {
    Rng rng(seed);
    Dataset ds;
    ds.seed = seed;
    const Index n = 50;
    ds.features.resize(n, 2);
    ds.truth.resize(static_cast<std::size_t>(n));
    ds.labeled_mask.assign(static_cast<std::size_t>(n), false);

    Index row = 0;
    const auto add_band = [&](Index count, double y, int cls) {
        for (Index k = 0; k < count; ++k, ++row) {
            const double x = -3.0 + 6.0 * static_cast<double>(k) / static_cast<double>(count - 1);
            ds.features(row, 0) = x + jitter * rng.gaussian();
            ds.features(row, 1) = y + jitter * rng.gaussian();
            ds.truth[static_cast<std::size_t>(row)] = cls;
        }
    };
    add_band(25, band_gap, +1);    // rows 0..24
    add_band(15, 0.0, -1);         // rows 25..39
    add_band(10, -band_gap, -1);   // rows 40..49

    // Labels as in the motivating figure: two from the top band, two from
    // the middle, one from the bottom.
    for (Index i : {2, 22, 27, 37, 44}) ds.labeled_mask[static_cast<std::size_t>(i)] = true;
    return ds;
}

}  // namespace s3vm
