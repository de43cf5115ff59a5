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

#include "labelshift/distribution.hpp"
#include "labelshift/error.hpp"
#include "labelshift/models.hpp"
#include "labelshift/posterior.hpp"
#include "labelshift/rng.hpp"

namespace labelshift {

enum class AdjustmentMethod { None, DistPfn, DistPfnT, PriorRatio, Eme, Bbe };
enum class NumeratorMode { PerInstance, TestAverage };
enum class TauMetric { CrossEntropy, Kl, Js, L2 };
enum class CeDirection { PredFirst, PriorFirst };
enum class ReferencePrior { TrainLabels, TrainPrediction };

struct AdjustmentSpec {
    AdjustmentMethod method = AdjustmentMethod::DistPfnT;
    NumeratorMode numerator_mode = NumeratorMode::TestAverage;
    // tau_metric and ce_direction only matter for the temperature-scaled
    // method; PredFirst means tau = CE(prediction, prior).
    TauMetric tau_metric = TauMetric::CrossEntropy;
    CeDirection ce_direction = CeDirection::PredFirst;
    ReferencePrior reference_prior = ReferencePrior::TrainLabels;
};

namespace detail {

inline void check_positive_prior(const CategoricalDistribution& prior) {
    for (double p : prior) {
        if (p <= 0.0) {
            fail(ErrorCode::ZeroPrior,
                 "prior holds a zero entry; smooth it before adjusting");
        }
    }
}

inline void check_matrix_matches_prior(const PosteriorMatrix& posteriors,
                                       const CategoricalDistribution& prior) {
    if (posteriors.empty()) {
        fail(ErrorCode::EmptyMatrix, "no posteriors to adjust");
    }
    if (posteriors.num_classes() != prior.size()) {
        fail(ErrorCode::DimensionMismatch,
             "posterior matrix has " + std::to_string(posteriors.num_classes()) +
                 " classes, prior has " + std::to_string(prior.size()));
    }
}

inline PosteriorMatrix scale_rows(const PosteriorMatrix& posteriors,
                                  std::span<const double> factor) {
    std::vector<CategoricalDistribution> out;
    out.reserve(posteriors.size());
    std::vector<double> scaled(factor.size());
    for (const auto& row : posteriors) {
        for (std::size_t c = 0; c < factor.size(); ++c) scaled[c] = row[c] * factor[c];
        out.push_back(normalize(scaled));
    }
    return PosteriorMatrix(std::move(out));
}

}  // namespace detail

/// Element-wise ratio posterior / prior; the unnormalized adjustment factor.
inline std::vector<double> adjustment_factor_distpfn(
    const CategoricalDistribution& posterior, const CategoricalDistribution& prior) {
    detail::check_same_size(posterior, prior);
    detail::check_positive_prior(prior);
    std::vector<double> factor(prior.size());
    for (std::size_t c = 0; c < prior.size(); ++c) factor[c] = posterior[c] / prior[c];
    return factor;
}

/// Reweight each posterior by its own (or the test-average) prediction-to-prior
/// ratio: row -> Norm(row * factor). PerInstance squares each row against the
/// prior; TestAverage derives one factor from the column-mean posterior.
inline PosteriorMatrix distpfn_adjust(const PosteriorMatrix& posteriors,
                                      const CategoricalDistribution& prior,
                                      NumeratorMode mode) {
    detail::check_matrix_matches_prior(posteriors, prior);
    detail::check_positive_prior(prior);
    if (mode == NumeratorMode::TestAverage) {
        const auto factor = adjustment_factor_distpfn(mean_posterior(posteriors), prior);
        return detail::scale_rows(posteriors, factor);
    }
    std::vector<CategoricalDistribution> out;
    out.reserve(posteriors.size());
    std::vector<double> scaled(prior.size());
    for (const auto& row : posteriors) {
        for (std::size_t c = 0; c < prior.size(); ++c) {
            scaled[c] = row[c] * row[c] / prior[c];
        }
        out.push_back(normalize(scaled));
    }
    return PosteriorMatrix(std::move(out));
}

/// Divergence between prediction and prior used as a temperature.
inline double tau_between(const CategoricalDistribution& prediction,
                          const CategoricalDistribution& prior, TauMetric metric,
                          CeDirection direction) {
    switch (metric) {
        case TauMetric::CrossEntropy:
            return direction == CeDirection::PredFirst
                       ? cross_entropy(prediction, prior)
                       : cross_entropy(prior, prediction);
        case TauMetric::Kl:
            return kl_divergence(prediction, prior);
        case TauMetric::Js:
            return js_divergence(prediction, prior);
        case TauMetric::L2:
            return l2_distance(prediction, prior);
    }
    return 0.0;
}

/// Temperature-scaled variant with a caller-fixed tau: the numerator of the
/// adjustment factor is the temperature-scaled prediction.
inline PosteriorMatrix distpfn_t_adjust_fixed(const PosteriorMatrix& posteriors,
                                              const CategoricalDistribution& prior,
                                              Temperature tau, NumeratorMode mode) {
    detail::check_matrix_matches_prior(posteriors, prior);
    detail::check_positive_prior(prior);
    if (mode == NumeratorMode::TestAverage) {
        const auto scaled = temperature_softmax(mean_posterior(posteriors), tau);
        const auto factor = adjustment_factor_distpfn(scaled, prior);
        return detail::scale_rows(posteriors, factor);
    }
    std::vector<CategoricalDistribution> out;
    out.reserve(posteriors.size());
    std::vector<double> weights(prior.size());
    for (const auto& row : posteriors) {
        const auto scaled = temperature_softmax(row, tau);
        for (std::size_t c = 0; c < prior.size(); ++c) {
            weights[c] = row[c] * scaled[c] / prior[c];
        }
        out.push_back(normalize(weights));
    }
    return PosteriorMatrix(std::move(out));
}

/// Temperature-scaled adjustment with tau derived from the divergence between
/// the prediction and the prior (per row, or once from the test average).
inline PosteriorMatrix distpfn_t_adjust(const PosteriorMatrix& posteriors,
                                        const CategoricalDistribution& prior,
                                        const AdjustmentSpec& spec) {
    detail::check_matrix_matches_prior(posteriors, prior);
    detail::check_positive_prior(prior);
    if (spec.numerator_mode == NumeratorMode::TestAverage) {
        const auto mean = mean_posterior(posteriors);
        const Temperature tau(
            tau_between(mean, prior, spec.tau_metric, spec.ce_direction));
        return distpfn_t_adjust_fixed(posteriors, prior, tau,
                                      NumeratorMode::TestAverage);
    }
    std::vector<CategoricalDistribution> out;
    out.reserve(posteriors.size());
    std::vector<double> weights(prior.size());
    for (const auto& row : posteriors) {
        const Temperature tau(
            tau_between(row, prior, spec.tau_metric, spec.ce_direction));
        const auto scaled = temperature_softmax(row, tau);
        for (std::size_t c = 0; c < prior.size(); ++c) {
            weights[c] = row[c] * scaled[c] / prior[c];
        }
        out.push_back(normalize(weights));
    }
    return PosteriorMatrix(std::move(out));
}

/// Bayes posterior correction: row -> Norm(row * target / train). With the
/// true test label distribution as target this is the oracle adjustment.
inline PosteriorMatrix prior_ratio_adjust(const PosteriorMatrix& posteriors,
                                          const CategoricalDistribution& train_prior,
                                          const CategoricalDistribution& target_prior) {
    detail::check_matrix_matches_prior(posteriors, train_prior);
    detail::check_same_size(train_prior, target_prior);
    detail::check_positive_prior(train_prior);
    std::vector<double> factor(train_prior.size());
    for (std::size_t c = 0; c < train_prior.size(); ++c) {
        factor[c] = target_prior[c] / train_prior[c];
    }
    return detail::scale_rows(posteriors, factor);
}

struct EmResult {
    CategoricalDistribution estimated_prior;
    PosteriorMatrix adjusted;
    std::size_t iterations = 0;
};

/// EM estimation of the test prior: reweight rows by pi / pi_train,
/// renormalize, re-estimate pi as the column mean; stop on an L1 change
/// below tol or at max_iter. Non-convergence is not an error; inspect
/// `iterations` against max_iter.
inline EmResult em_estimate_prior(const PosteriorMatrix& posteriors,
                                  const CategoricalDistribution& train_prior,
                                  std::size_t max_iter = 100, double tol = 1e-6) {
    detail::check_matrix_matches_prior(posteriors, train_prior);
    detail::check_positive_prior(train_prior);
    if (max_iter < 1) {
        fail(ErrorCode::InvalidParameter, "max_iter must be at least 1");
    }
    const std::size_t num_classes = train_prior.size();
    std::vector<double> pi(train_prior.begin(), train_prior.end());
    std::size_t iterations = 0;
    std::vector<double> weights(num_classes);
    std::vector<double> next(num_classes);
    for (std::size_t t = 0; t < max_iter; ++t) {
        std::fill(next.begin(), next.end(), 0.0);
        for (const auto& row : posteriors) {
            double sum = 0.0;
            for (std::size_t c = 0; c < num_classes; ++c) {
                weights[c] = row[c] * pi[c] / train_prior[c];
                sum += weights[c];
            }
            for (std::size_t c = 0; c < num_classes; ++c) next[c] += weights[c] / sum;
        }
        const double inv_n = 1.0 / static_cast<double>(posteriors.size());
        double change = 0.0;
        for (std::size_t c = 0; c < num_classes; ++c) {
            next[c] *= inv_n;
            change += std::abs(next[c] - pi[c]);
        }
        pi = next;
        iterations = t + 1;
        if (change < tol) break;
    }
    EmResult result{CategoricalDistribution(pi), PosteriorMatrix{}, iterations};
    result.adjusted =
        prior_ratio_adjust(posteriors, train_prior, result.estimated_prior);
    return result;
}

/// Column-stochastic confusion matrix: entry(s, y) = P(predicted = s | true = y).
class ConfusionMatrix {
public:
    explicit ConfusionMatrix(std::vector<std::vector<double>> entries)
        : entries_(std::move(entries)) {
        const std::size_t n = entries_.size();
        if (n < 2) {
            fail(ErrorCode::DimensionMismatch, "confusion matrix needs C >= 2");
        }
        for (const auto& row : entries_) {
            if (row.size() != n) {
                fail(ErrorCode::DimensionMismatch, "confusion matrix must be square");
            }
        }
        for (std::size_t y = 0; y < n; ++y) {
            double col = 0.0;
            for (std::size_t s = 0; s < n; ++s) {
                if (entries_[s][y] < 0.0 || entries_[s][y] > 1.0) {
                    fail(ErrorCode::InvalidDistribution,
                         "confusion entries must lie in [0, 1]");
                }
                col += entries_[s][y];
            }
            if (std::abs(col - 1.0) > kProbSumTolerance) {
                fail(ErrorCode::InvalidDistribution,
                     "confusion column " + std::to_string(y) + " sums to " +
                         std::to_string(col));
            }
        }
    }

    double operator()(std::size_t predicted, std::size_t true_class) const {
        return entries_[predicted][true_class];
    }
    std::size_t num_classes() const noexcept { return entries_.size(); }
    const std::vector<std::vector<double>>& entries() const noexcept {
        return entries_;
    }

private:
    std::vector<std::vector<double>> entries_;  // [predicted][true]
};

/// Estimate a confusion matrix column-wise from labeled predictions.
/// With smoothing 0 a class absent from the labels is an error; a positive
/// smoothing turns absent-class columns uniform instead.
inline ConfusionMatrix estimate_confusion(std::span<const std::size_t> predictions,
                                          std::span<const std::size_t> labels,
                                          std::size_t num_classes,
                                          double smoothing = 0.0) {
    if (predictions.size() != labels.size() || predictions.empty()) {
        fail(ErrorCode::DimensionMismatch,
             "predictions and labels must be non-empty and equally sized");
    }
    std::vector<std::vector<double>> counts(num_classes,
                                            std::vector<double>(num_classes, 0.0));
    std::vector<double> class_totals(num_classes, 0.0);
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] >= num_classes || predictions[i] >= num_classes) {
            fail(ErrorCode::OutOfRangeLabel, "class index outside [0, C)");
        }
        counts[predictions[i]][labels[i]] += 1.0;
        class_totals[labels[i]] += 1.0;
    }
    for (std::size_t y = 0; y < num_classes; ++y) {
        if (class_totals[y] == 0.0 && smoothing == 0.0) {
            fail(ErrorCode::AbsentClass,
                 "class " + std::to_string(y) + " absent from validation labels");
        }
        const double denom =
            class_totals[y] + smoothing * static_cast<double>(num_classes);
        for (std::size_t s = 0; s < num_classes; ++s) {
            counts[s][y] = (counts[s][y] + smoothing) / denom;
        }
    }
    return ConfusionMatrix(std::move(counts));
}

/// Recover the test prior from confusion * pi = predicted_test_dist.
/// Negative solution components are clipped to zero and the rest renormalized.
inline CategoricalDistribution bbe_estimate_prior(
    const ConfusionMatrix& confusion,
    const CategoricalDistribution& predicted_test_dist) {
    const std::size_t n = confusion.num_classes();
    if (predicted_test_dist.size() != n) {
        fail(ErrorCode::DimensionMismatch,
             "predicted distribution size does not match the confusion matrix");
    }
    // Gaussian elimination with partial pivoting on a C x C system.
    std::vector<std::vector<double>> a = confusion.entries();
    std::vector<double> b(predicted_test_dist.begin(), predicted_test_dist.end());
    constexpr double kPivotTolerance = 1e-10;
    for (std::size_t col = 0; col < n; ++col) {
        std::size_t pivot = col;
        for (std::size_t r = col + 1; r < n; ++r) {
            if (std::abs(a[r][col]) > std::abs(a[pivot][col])) pivot = r;
        }
        if (std::abs(a[pivot][col]) < kPivotTolerance) {
            fail(ErrorCode::SingularSystem,
                 "confusion matrix is rank-deficient beyond tolerance");
        }
        std::swap(a[col], a[pivot]);
        std::swap(b[col], b[pivot]);
        for (std::size_t r = col + 1; r < n; ++r) {
            const double m = a[r][col] / a[col][col];
            if (m == 0.0) continue;
            for (std::size_t c = col; c < n; ++c) a[r][c] -= m * a[col][c];
            b[r] -= m * b[col];
        }
    }
    std::vector<double> pi(n, 0.0);
    for (std::size_t i = n; i-- > 0;) {
        double acc = b[i];
        for (std::size_t c = i + 1; c < n; ++c) acc -= a[i][c] * pi[c];
        pi[i] = acc / a[i][i];
    }
    double sum = 0.0;
    for (double& v : pi) {
        v = std::max(v, 0.0);
        sum += v;
    }
    if (sum <= 0.0) {
        fail(ErrorCode::SingularSystem, "solve produced no positive mass");
    }
    for (double& v : pi) v /= sum;
    return CategoricalDistribution(std::move(pi));
}

/// Estimate the test prior via the confusion-matrix linear system, then apply
/// the prior-ratio correction with it.
inline PosteriorMatrix bbe_adjust(const PosteriorMatrix& posteriors,
                                  const CategoricalDistribution& train_prior,
                                  const ConfusionMatrix& confusion,
                                  const CategoricalDistribution& predicted_test_dist) {
    const auto estimated = bbe_estimate_prior(confusion, predicted_test_dist);
    return prior_ratio_adjust(posteriors, train_prior, estimated);
}

/// Pick the temperature from a grid by k-fold cross-validated accuracy of the
/// fixed-tau adjustment; ties resolve to the smaller temperature.
inline Temperature cv_select_temperature(
    const std::vector<std::vector<double>>& features,
    const std::vector<std::size_t>& labels, const ModelSpec& model_spec,
    const std::vector<double>& grid, std::size_t folds, std::uint64_t seed) {
    if (grid.empty()) {
        fail(ErrorCode::InsufficientData, "temperature grid is empty");
    }
    if (folds < 2) {
        fail(ErrorCode::InsufficientData, "need at least 2 folds");
    }
    const std::size_t n = features.size();
    if (n != labels.size() || n < folds) {
        fail(ErrorCode::InsufficientData,
             "need at least one instance per fold");
    }
    std::size_t num_classes = 0;
    for (std::size_t label : labels) num_classes = std::max(num_classes, label + 1);
    if (num_classes < 2) {
        fail(ErrorCode::InsufficientData, "cross-validation needs 2+ classes");
    }

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    Rng rng(seed);
    for (std::size_t i = n; i > 1; --i) {
        std::swap(order[i - 1], order[rng.uniform_below(i)]);
    }

    std::vector<double> grid_accuracy(grid.size(), 0.0);
    for (std::size_t f = 0; f < folds; ++f) {
        const std::size_t begin = f * n / folds;
        const std::size_t end = (f + 1) * n / folds;
        Dataset fold_train;
        fold_train.num_classes = num_classes;
        std::vector<std::vector<double>> held_features;
        std::vector<std::size_t> held_labels;
        for (std::size_t i = 0; i < n; ++i) {
            const std::size_t idx = order[i];
            if (i >= begin && i < end) {
                held_features.push_back(features[idx]);
                held_labels.push_back(labels[idx]);
            } else {
                fold_train.features.push_back(features[idx]);
                fold_train.labels.push_back(labels[idx]);
            }
        }
        std::vector<bool> present(num_classes, false);
        for (std::size_t label : fold_train.labels) present[label] = true;
        for (bool p : present) {
            if (!p) {
                fail(ErrorCode::InsufficientData,
                     "a class is absent from a training fold");
            }
        }
        const auto model = fit(model_spec, fold_train);
        const auto posteriors = predict_posteriors(model, held_features);
        const auto prior =
            empirical_label_distribution(fold_train.labels, num_classes, 0.0);
        for (std::size_t g = 0; g < grid.size(); ++g) {
            const auto adjusted = distpfn_t_adjust_fixed(
                posteriors, prior, Temperature(grid[g]), NumeratorMode::TestAverage);
            std::size_t correct = 0;
            for (std::size_t i = 0; i < adjusted.size(); ++i) {
                const auto& row = adjusted.row(i);
                std::size_t best = 0;
                for (std::size_t c = 1; c < row.size(); ++c) {
                    if (row[c] > row[best]) best = c;
                }
                if (best == held_labels[i]) ++correct;
            }
            grid_accuracy[g] +=
                static_cast<double>(correct) / static_cast<double>(held_labels.size());
        }
    }

    std::size_t best = 0;
    for (std::size_t g = 1; g < grid.size(); ++g) {
        if (grid_accuracy[g] > grid_accuracy[best] ||
            (grid_accuracy[g] == grid_accuracy[best] && grid[g] < grid[best])) {
            best = g;
        }
    }
    return Temperature(grid[best]);
}

}  // namespace labelshift
