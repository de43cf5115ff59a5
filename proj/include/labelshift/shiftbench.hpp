#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "labelshift/data.hpp"
#include "labelshift/distribution.hpp"
#include "labelshift/error.hpp"
#include "labelshift/rng.hpp"

namespace labelshift {

struct ShiftConfig {
    double beta = 1.0;         // shift strength; 0 = uniform class sampling
    std::size_t target_size = 0;  // 0 = keep the original training size
    std::uint64_t seed = 0;
};

struct SplitSpec {
    double train_fraction = 0.5;
    std::uint64_t seed = 0;
    bool stratified = false;
};

/// Normalized inverse-frequency weights w_k = (1 / p_k)^beta.
inline CategoricalDistribution inverse_frequency_weights(
    const CategoricalDistribution& class_probs, double beta) {
    if (beta < 0.0 || !std::isfinite(beta)) {
        fail(ErrorCode::InvalidParameter, "beta must be finite and >= 0");
    }
    std::vector<double> weights(class_probs.size());
    for (std::size_t c = 0; c < class_probs.size(); ++c) {
        if (class_probs[c] <= 0.0) {
            fail(ErrorCode::ZeroClassProbability,
                 "class " + std::to_string(c) + " has zero probability");
        }
        weights[c] = std::pow(1.0 / class_probs[c], beta);
    }
    return normalize(weights);
}

/// Two-stage resampling plan: draw a class from the inverse-frequency
/// weights, then an instance uniformly within that class, with replacement.
inline std::vector<std::size_t> oversample_indices(std::span<const std::size_t> labels,
                                                   std::size_t num_classes,
                                                   const ShiftConfig& config) {
    if (labels.empty()) {
        fail(ErrorCode::EmptyTrain, "cannot oversample an empty training set");
    }
    std::vector<std::vector<std::size_t>> by_class(num_classes);
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] >= num_classes) {
            fail(ErrorCode::OutOfRangeLabel, "label outside [0, C)");
        }
        by_class[labels[i]].push_back(i);
    }
    for (std::size_t c = 0; c < num_classes; ++c) {
        if (by_class[c].empty()) {
            fail(ErrorCode::ZeroClassProbability,
                 "class " + std::to_string(c) + " absent from the training set");
        }
    }
    const auto class_weights = inverse_frequency_weights(
        empirical_label_distribution(labels, num_classes, 0.0), config.beta);
    std::vector<double> cumulative(num_classes);
    std::partial_sum(class_weights.begin(), class_weights.end(), cumulative.begin());
    cumulative.back() = 1.0;

    const std::size_t target =
        config.target_size == 0 ? labels.size() : config.target_size;
    Rng rng(config.seed);
    std::vector<std::size_t> out;
    out.reserve(target);
    for (std::size_t i = 0; i < target; ++i) {
        const double u = rng.uniform01();
        const std::size_t cls = static_cast<std::size_t>(
            std::lower_bound(cumulative.begin(), cumulative.end(), u) -
            cumulative.begin());
        const auto& members = by_class[std::min(cls, num_classes - 1)];
        out.push_back(members[rng.uniform_below(members.size())]);
    }
    return out;
}

/// Resample the training split per the plan above, leaving any test split
/// untouched. Seeded and reproducible bit-for-bit.
inline Dataset oversample(const Dataset& train, const ShiftConfig& config) {
    const auto indices =
        oversample_indices(train.labels, train.num_classes, config);
    Dataset out;
    out.schema = train.schema;
    out.label_dictionary = train.label_dictionary;
    out.num_classes = train.num_classes;
    out.features.reserve(indices.size());
    out.labels.reserve(indices.size());
    for (std::size_t i : indices) {
        out.features.push_back(train.features[i]);
        out.labels.push_back(train.labels[i]);
    }
    return out;
}

/// Seeded shuffle-and-cut split plan. When stratified, each class is split
/// at the same fraction and the parts merged. Returned index lists partition
/// [0, n).
inline std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_indices(
    std::size_t n, std::span<const std::size_t> labels, const SplitSpec& spec) {
    if (n < 2) {
        fail(ErrorCode::TooSmall, "cannot split fewer than 2 instances");
    }
    if (!(spec.train_fraction > 0.0) || !(spec.train_fraction < 1.0)) {
        fail(ErrorCode::InvalidParameter, "train_fraction must lie in (0, 1)");
    }
    Rng rng(spec.seed);
    std::vector<std::size_t> train_idx, test_idx;
    auto shuffle = [&rng](std::vector<std::size_t>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::swap(v[i - 1], v[rng.uniform_below(i)]);
        }
    };
    if (spec.stratified) {
        if (labels.size() != n) {
            fail(ErrorCode::DimensionMismatch,
                 "stratified split needs one label per instance");
        }
        std::size_t num_classes = 0;
        for (std::size_t label : labels) num_classes = std::max(num_classes, label + 1);
        std::vector<std::vector<std::size_t>> by_class(num_classes);
        for (std::size_t i = 0; i < n; ++i) by_class[labels[i]].push_back(i);
        for (auto& members : by_class) {
            shuffle(members);
            const auto take = static_cast<std::size_t>(std::llround(
                static_cast<double>(members.size()) * spec.train_fraction));
            for (std::size_t i = 0; i < members.size(); ++i) {
                (i < take ? train_idx : test_idx).push_back(members[i]);
            }
        }
    } else {
        std::vector<std::size_t> order(n);
        std::iota(order.begin(), order.end(), 0);
        shuffle(order);
        auto take = static_cast<std::size_t>(
            std::llround(static_cast<double>(n) * spec.train_fraction));
        take = std::clamp<std::size_t>(take, 1, n - 1);
        train_idx.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(take));
        test_idx.assign(order.begin() + static_cast<std::ptrdiff_t>(take), order.end());
    }
    if (train_idx.empty() || test_idx.empty()) {
        fail(ErrorCode::TooSmall, "split left one side empty");
    }
    return {std::move(train_idx), std::move(test_idx)};
}

inline std::pair<Dataset, Dataset> split_fixed(const Dataset& dataset,
                                               const SplitSpec& spec) {
    const auto [train_idx, test_idx] =
        split_indices(dataset.size(), dataset.labels, spec);
    auto take = [&dataset](const std::vector<std::size_t>& idx) {
        Dataset out;
        out.schema = dataset.schema;
        out.label_dictionary = dataset.label_dictionary;
        out.num_classes = dataset.num_classes;
        out.features.reserve(idx.size());
        out.labels.reserve(idx.size());
        for (std::size_t i : idx) {
            out.features.push_back(dataset.features[i]);
            out.labels.push_back(dataset.labels[i]);
        }
        return out;
    };
    return {take(train_idx), take(test_idx)};
}

struct BalanceRatio {
    double value = 0.0;             // minority count / majority count
    bool all_classes_present = false;  // false => ratio undefined, value 0
};

inline BalanceRatio balance_ratio(std::span<const std::size_t> labels,
                                  std::size_t num_classes) {
    if (labels.empty() || num_classes < 2) {
        fail(ErrorCode::EmptyLabels, "balance ratio needs labels and C >= 2");
    }
    std::vector<std::size_t> counts(num_classes, 0);
    for (std::size_t label : labels) {
        if (label >= num_classes) {
            fail(ErrorCode::OutOfRangeLabel, "label outside [0, C)");
        }
        ++counts[label];
    }
    const auto [lo, hi] = std::minmax_element(counts.begin(), counts.end());
    if (*lo == 0) return {0.0, false};
    return {static_cast<double>(*lo) / static_cast<double>(*hi), true};
}

/// KL(test label distribution || train label distribution), both smoothed by
/// epsilon so absent classes stay finite.
inline double label_shift_kl(std::span<const std::size_t> train_labels,
                             std::span<const std::size_t> test_labels,
                             std::size_t num_classes, double epsilon = 1e-6) {
    if (train_labels.empty() || test_labels.empty()) {
        fail(ErrorCode::EmptyLabels, "both label sets must be non-empty");
    }
    const auto train =
        empirical_label_distribution(train_labels, num_classes, epsilon);
    const auto test = empirical_label_distribution(test_labels, num_classes, epsilon);
    return kl_divergence(test, train);
}

}  // namespace labelshift
