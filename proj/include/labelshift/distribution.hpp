#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "labelshift/error.hpp"

namespace labelshift {

// Floor applied to log arguments in cross-entropy / KL; zero entries in a
// reference distribution (classes absent from a split) must not produce inf.
inline constexpr double kLogFloor = 1e-12;

// Temperature clamp range. Near-degenerate priors can push divergence-based
// temperatures toward 0 or infinity; both extremes destabilize the
// temperature-scaled softmax.
inline constexpr double kTauMin = 1e-3;
inline constexpr double kTauMax = 1e3;

inline constexpr double kProbSumTolerance = 1e-9;

/// A probability vector over C >= 2 classes: entries nonnegative, sum 1.
class CategoricalDistribution {
public:
    explicit CategoricalDistribution(std::vector<double> probs)
        : probs_(std::move(probs)) {
        if (probs_.size() < 2) {
            fail(ErrorCode::DimensionMismatch,
                 "distribution needs at least 2 classes, got " +
                     std::to_string(probs_.size()));
        }
        double sum = 0.0;
        for (double p : probs_) {
            if (p < 0.0 || !std::isfinite(p)) {
                fail(ErrorCode::NegativeWeight,
                     "distribution entries must be finite and >= 0");
            }
            sum += p;
        }
        if (std::abs(sum - 1.0) > kProbSumTolerance) {
            fail(ErrorCode::InvalidDistribution,
                 "distribution entries sum to " + std::to_string(sum));
        }
    }

    static CategoricalDistribution uniform(std::size_t num_classes) {
        if (num_classes < 2) {
            fail(ErrorCode::DimensionMismatch, "need at least 2 classes");
        }
        return CategoricalDistribution(
            std::vector<double>(num_classes, 1.0 / static_cast<double>(num_classes)));
    }

    std::size_t size() const noexcept { return probs_.size(); }
    double operator[](std::size_t i) const { return probs_[i]; }
    const std::vector<double>& probs() const noexcept { return probs_; }

    auto begin() const noexcept { return probs_.begin(); }
    auto end() const noexcept { return probs_.end(); }

private:
    std::vector<double> probs_;
};

/// Positive scalar for temperature-scaled softmax, clamped into
/// [kTauMin, kTauMax] on construction.
class Temperature {
public:
    explicit Temperature(double tau) {
        if (!(tau > kTauMin)) {
            value_ = kTauMin;  // also captures NaN
        } else if (tau > kTauMax) {
            value_ = kTauMax;
        } else {
            value_ = tau;
        }
    }

    double value() const noexcept { return value_; }

private:
    double value_;
};

/// Scale nonnegative weights so they sum to 1.
inline CategoricalDistribution normalize(std::span<const double> weights) {
    if (weights.size() < 2) {
        fail(ErrorCode::DimensionMismatch,
             "normalize needs at least 2 entries, got " +
                 std::to_string(weights.size()));
    }
    double sum = 0.0;
    for (double w : weights) {
        if (w < 0.0 || !std::isfinite(w)) {
            fail(ErrorCode::NegativeWeight, "normalize: negative or non-finite weight");
        }
        sum += w;
    }
    if (sum == 0.0) {
        fail(ErrorCode::AllZero, "normalize: every weight is zero");
    }
    std::vector<double> out(weights.size());
    for (std::size_t i = 0; i < weights.size(); ++i) out[i] = weights[i] / sum;
    return CategoricalDistribution(std::move(out));
}

inline CategoricalDistribution normalize(const std::vector<double>& weights) {
    return normalize(std::span<const double>(weights));
}

namespace detail {

inline void check_same_size(const CategoricalDistribution& p,
                            const CategoricalDistribution& q) {
    if (p.size() != q.size()) {
        fail(ErrorCode::DimensionMismatch,
             "distributions have sizes " + std::to_string(p.size()) + " and " +
                 std::to_string(q.size()));
    }
}

}  // namespace detail

/// -sum_c p_c ln(max(q_c, floor)); terms with p_c = 0 contribute nothing.
inline double cross_entropy(const CategoricalDistribution& p,
                            const CategoricalDistribution& q) {
    detail::check_same_size(p, q);
    double acc = 0.0;
    for (std::size_t c = 0; c < p.size(); ++c) {
        if (p[c] > 0.0) acc -= p[c] * std::log(std::max(q[c], kLogFloor));
    }
    return acc;
}

inline double kl_divergence(const CategoricalDistribution& p,
                            const CategoricalDistribution& q) {
    detail::check_same_size(p, q);
    double acc = 0.0;
    for (std::size_t c = 0; c < p.size(); ++c) {
        if (p[c] > 0.0) acc += p[c] * std::log(p[c] / std::max(q[c], kLogFloor));
    }
    return acc;
}

inline double js_divergence(const CategoricalDistribution& p,
                            const CategoricalDistribution& q) {
    detail::check_same_size(p, q);
    std::vector<double> mid(p.size());
    for (std::size_t c = 0; c < p.size(); ++c) mid[c] = 0.5 * (p[c] + q[c]);
    CategoricalDistribution m(std::move(mid));
    return 0.5 * kl_divergence(p, m) + 0.5 * kl_divergence(q, m);
}

inline double l2_distance(const CategoricalDistribution& p,
                          const CategoricalDistribution& q) {
    detail::check_same_size(p, q);
    double acc = 0.0;
    for (std::size_t c = 0; c < p.size(); ++c) {
        const double d = p[c] - q[c];
        acc += d * d;
    }
    return std::sqrt(acc);
}

/// Softmax of p / tau. Applied to the probability vector itself, not to
/// logits: output_c = exp(p_c / tau) / sum_c' exp(p_c' / tau).
inline CategoricalDistribution temperature_softmax(const CategoricalDistribution& p,
                                                   Temperature tau) {
    const double t = tau.value();
    double max_scaled = -1.0;
    for (double v : p) max_scaled = std::max(max_scaled, v / t);
    std::vector<double> out(p.size());
    double sum = 0.0;
    for (std::size_t c = 0; c < p.size(); ++c) {
        out[c] = std::exp(p[c] / t - max_scaled);
        sum += out[c];
    }
    for (double& v : out) v /= sum;
    return CategoricalDistribution(std::move(out));
}

/// Per-class frequency (count_k + epsilon) / (N + C * epsilon).
/// epsilon = 0 gives the raw empirical frequency; a positive epsilon keeps
/// every class strictly positive even when absent from the labels.
inline CategoricalDistribution empirical_label_distribution(
    std::span<const std::size_t> labels, std::size_t num_classes,
    double epsilon = 0.0) {
    if (labels.empty()) {
        fail(ErrorCode::EmptyLabels, "empirical distribution of zero labels");
    }
    if (num_classes < 2) {
        fail(ErrorCode::DimensionMismatch, "need at least 2 classes");
    }
    if (epsilon < 0.0) {
        fail(ErrorCode::InvalidParameter, "smoothing epsilon must be >= 0");
    }
    std::vector<double> counts(num_classes, 0.0);
    for (std::size_t label : labels) {
        if (label >= num_classes) {
            fail(ErrorCode::OutOfRangeLabel,
                 "label " + std::to_string(label) + " outside [0, " +
                     std::to_string(num_classes) + ")");
        }
        counts[label] += 1.0;
    }
    const double denom =
        static_cast<double>(labels.size()) + static_cast<double>(num_classes) * epsilon;
    for (double& c : counts) c = (c + epsilon) / denom;
    return CategoricalDistribution(std::move(counts));
}

inline CategoricalDistribution empirical_label_distribution(
    const std::vector<std::size_t>& labels, std::size_t num_classes,
    double epsilon = 0.0) {
    return empirical_label_distribution(std::span<const std::size_t>(labels),
                                        num_classes, epsilon);
}

}  // namespace labelshift
