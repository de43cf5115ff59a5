#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "labelshift/error.hpp"
#include "labelshift/posterior.hpp"

namespace labelshift {

/// Argmax per row; ties resolve toward the lowest class index.
inline std::vector<std::size_t> argmax_predictions(const PosteriorMatrix& posteriors) {
    std::vector<std::size_t> out;
    out.reserve(posteriors.size());
    for (const auto& row : posteriors) {
        std::size_t best = 0;
        for (std::size_t c = 1; c < row.size(); ++c) {
            if (row[c] > row[best]) best = c;
        }
        out.push_back(best);
    }
    return out;
}

inline double accuracy(const PosteriorMatrix& posteriors,
                       std::span<const std::size_t> true_labels) {
    if (posteriors.size() != true_labels.size() || posteriors.empty()) {
        fail(ErrorCode::DimensionMismatch,
             "posterior rows and labels must be non-empty and equally sized");
    }
    const auto predictions = argmax_predictions(posteriors);
    std::size_t correct = 0;
    for (std::size_t i = 0; i < predictions.size(); ++i) {
        if (predictions[i] == true_labels[i]) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(predictions.size());
}

/// Mean over classes of TP / (TP + FP); classes never predicted contribute 0.
inline double macro_precision(std::span<const std::size_t> predictions,
                              std::span<const std::size_t> true_labels,
                              std::size_t num_classes) {
    if (predictions.size() != true_labels.size() || predictions.empty()) {
        fail(ErrorCode::DimensionMismatch,
             "predictions and labels must be non-empty and equally sized");
    }
    std::vector<std::size_t> tp(num_classes, 0), predicted(num_classes, 0);
    for (std::size_t i = 0; i < predictions.size(); ++i) {
        if (predictions[i] >= num_classes || true_labels[i] >= num_classes) {
            fail(ErrorCode::OutOfRangeLabel, "class index outside [0, C)");
        }
        ++predicted[predictions[i]];
        if (predictions[i] == true_labels[i]) ++tp[predictions[i]];
    }
    double acc = 0.0;
    for (std::size_t c = 0; c < num_classes; ++c) {
        if (predicted[c] > 0) {
            acc += static_cast<double>(tp[c]) / static_cast<double>(predicted[c]);
        }
    }
    return acc / static_cast<double>(num_classes);
}

/// Expected calibration error over n_bins equal-width confidence bins on
/// (0, 1]; empty bins contribute nothing.
inline double ece(const PosteriorMatrix& posteriors,
                  std::span<const std::size_t> true_labels, std::size_t n_bins = 15) {
    if (posteriors.size() != true_labels.size() || posteriors.empty()) {
        fail(ErrorCode::DimensionMismatch,
             "posterior rows and labels must be non-empty and equally sized");
    }
    if (n_bins < 1) {
        fail(ErrorCode::InvalidParameter, "need at least one bin");
    }
    std::vector<double> bin_confidence(n_bins, 0.0);
    std::vector<double> bin_correct(n_bins, 0.0);
    std::vector<std::size_t> bin_count(n_bins, 0);
    const auto predictions = argmax_predictions(posteriors);
    for (std::size_t i = 0; i < posteriors.size(); ++i) {
        const double confidence = posteriors.row(i)[predictions[i]];
        // bin b covers (b/n_bins, (b+1)/n_bins]; membership is resolved with
        // the interval bounds themselves so exact-boundary confidences land
        // deterministically
        std::size_t bin = n_bins - 1;
        for (std::size_t b = 0; b < n_bins; ++b) {
            const double hi = static_cast<double>(b + 1) / static_cast<double>(n_bins);
            if (confidence <= hi) {
                bin = b;
                break;
            }
        }
        bin_confidence[bin] += confidence;
        bin_correct[bin] += predictions[i] == true_labels[i] ? 1.0 : 0.0;
        ++bin_count[bin];
    }
    double acc = 0.0;
    const double n = static_cast<double>(posteriors.size());
    for (std::size_t b = 0; b < n_bins; ++b) {
        if (bin_count[b] == 0) continue;
        const double count = static_cast<double>(bin_count[b]);
        acc += (count / n) *
               std::abs(bin_confidence[b] / count - bin_correct[b] / count);
    }
    return acc;
}

/// Per-method mean rank across datasets; higher scores rank better and ties
/// share the mean of their positions.
inline std::map<std::string, double> average_rank(
    const std::map<std::string, std::vector<double>>& score_table) {
    if (score_table.empty()) {
        fail(ErrorCode::RaggedTable, "no methods to rank");
    }
    const std::size_t n_datasets = score_table.begin()->second.size();
    if (n_datasets == 0) {
        fail(ErrorCode::RaggedTable, "no datasets to rank on");
    }
    for (const auto& [name, scores] : score_table) {
        if (scores.size() != n_datasets) {
            fail(ErrorCode::RaggedTable,
                 "method " + name + " scored on a different dataset set");
        }
    }
    std::map<std::string, double> mean_rank;
    for (const auto& [name, scores] : score_table) mean_rank[name] = 0.0;
    for (std::size_t d = 0; d < n_datasets; ++d) {
        std::vector<std::pair<double, const std::string*>> entries;
        entries.reserve(score_table.size());
        for (const auto& [name, scores] : score_table) {
            entries.emplace_back(scores[d], &name);
        }
        std::sort(entries.begin(), entries.end(), [](const auto& a, const auto& b) {
            return a.first > b.first;
        });
        std::size_t i = 0;
        while (i < entries.size()) {
            std::size_t j = i;
            while (j + 1 < entries.size() && entries[j + 1].first == entries[i].first) {
                ++j;
            }
            // positions are 1-based; tied entries share the mean position
            const double rank = static_cast<double>(i + 1 + j + 1) / 2.0;
            for (std::size_t k = i; k <= j; ++k) mean_rank[*entries[k].second] += rank;
            i = j + 1;
        }
    }
    for (auto& [name, total] : mean_rank) {
        total /= static_cast<double>(n_datasets);
    }
    return mean_rank;
}

struct EvaluationResult {
    double accuracy = 0.0;
    double macro_precision = 0.0;
    double ece = 0.0;
    std::size_t n_test = 0;
    std::vector<std::vector<std::size_t>> confusion_counts;  // [true][predicted]
};

inline EvaluationResult evaluate(const PosteriorMatrix& posteriors,
                                 std::span<const std::size_t> true_labels,
                                 std::size_t num_classes, std::size_t n_bins = 15) {
    EvaluationResult result;
    result.accuracy = accuracy(posteriors, true_labels);
    const auto predictions = argmax_predictions(posteriors);
    result.macro_precision = macro_precision(predictions, true_labels, num_classes);
    result.ece = ece(posteriors, true_labels, n_bins);
    result.n_test = posteriors.size();
    result.confusion_counts.assign(num_classes,
                                   std::vector<std::size_t>(num_classes, 0));
    for (std::size_t i = 0; i < predictions.size(); ++i) {
        ++result.confusion_counts[true_labels[i]][predictions[i]];
    }
    return result;
}

}  // namespace labelshift
