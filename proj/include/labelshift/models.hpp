#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <set>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "labelshift/data.hpp"
#include "labelshift/distribution.hpp"
#include "labelshift/error.hpp"
#include "labelshift/posterior.hpp"

namespace labelshift {

inline constexpr double kVarianceFloor = 1e-9;
inline constexpr double kKnnDistanceFloor = 1e-12;

enum class ModelKind { Knn, GaussianNb, LogisticRegression };
enum class KnnWeighting { Uniform, InverseDistance };

struct ModelSpec {
    ModelKind kind = ModelKind::Knn;
    std::size_t knn_k = 10;
    KnnWeighting knn_weighting = KnnWeighting::Uniform;
    // Laplace smoothing per class before normalizing neighbor votes; keeps
    // posterior entries strictly positive for divergence computations.
    double knn_epsilon = 1e-6;
    double lr_learning_rate = 0.1;
    std::size_t lr_epochs = 500;
    double lr_l2 = 1e-4;
    std::uint64_t seed = 0;
};

struct KnnState {
    std::vector<std::vector<double>> points;
    std::vector<std::size_t> labels;
    std::size_t k = 1;
    KnnWeighting weighting = KnnWeighting::Uniform;
    double epsilon = 1e-6;
};

struct GaussianNbState {
    std::vector<std::vector<double>> means;      // C x d
    std::vector<std::vector<double>> variances;  // C x d, floored
    std::vector<double> prior;                   // empirical, may hold zeros
};

struct LogisticRegressionState {
    std::vector<std::vector<double>> weights;  // C x d
    std::vector<double> bias;                  // C
};

struct FittedModel {
    ModelKind kind = ModelKind::Knn;
    std::size_t num_classes = 0;
    std::size_t dim = 0;
    std::variant<KnnState, GaussianNbState, LogisticRegressionState> state;
};

namespace detail {

inline std::vector<double> softmax_from_logs(std::vector<double> logs) {
    const double hi = *std::max_element(logs.begin(), logs.end());
    double sum = 0.0;
    for (double& v : logs) {
        v = std::exp(v - hi);
        sum += v;
    }
    for (double& v : logs) v /= sum;
    return logs;
}

}  // namespace detail

/// Mean softmax cross-entropy over the dataset plus (l2/2)*||W||^2.
inline double lr_objective(const LogisticRegressionState& state,
                           const std::vector<std::vector<double>>& features,
                           const std::vector<std::size_t>& labels, double l2) {
    const std::size_t n = features.size();
    const std::size_t num_classes = state.bias.size();
    double loss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        std::vector<double> logits(num_classes, 0.0);
        for (std::size_t c = 0; c < num_classes; ++c) {
            double z = state.bias[c];
            for (std::size_t f = 0; f < features[i].size(); ++f) {
                z += state.weights[c][f] * features[i][f];
            }
            logits[c] = z;
        }
        const double hi = *std::max_element(logits.begin(), logits.end());
        double sum = 0.0;
        for (double z : logits) sum += std::exp(z - hi);
        loss += -(logits[labels[i]] - hi) + std::log(sum);
    }
    loss /= static_cast<double>(n);
    double reg = 0.0;
    for (const auto& row : state.weights) {
        for (double w : row) reg += w * w;
    }
    return loss + 0.5 * l2 * reg;
}

/// Analytic gradient of lr_objective, same shapes as the state.
inline LogisticRegressionState lr_gradient(
    const LogisticRegressionState& state,
    const std::vector<std::vector<double>>& features,
    const std::vector<std::size_t>& labels, double l2) {
    const std::size_t n = features.size();
    const std::size_t num_classes = state.bias.size();
    const std::size_t d = state.weights.front().size();
    LogisticRegressionState grad;
    grad.weights.assign(num_classes, std::vector<double>(d, 0.0));
    grad.bias.assign(num_classes, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        std::vector<double> logits(num_classes, 0.0);
        for (std::size_t c = 0; c < num_classes; ++c) {
            double z = state.bias[c];
            for (std::size_t f = 0; f < d; ++f) {
                z += state.weights[c][f] * features[i][f];
            }
            logits[c] = z;
        }
        const auto probs = detail::softmax_from_logs(std::move(logits));
        for (std::size_t c = 0; c < num_classes; ++c) {
            const double delta = probs[c] - (labels[i] == c ? 1.0 : 0.0);
            grad.bias[c] += delta;
            for (std::size_t f = 0; f < d; ++f) {
                grad.weights[c][f] += delta * features[i][f];
            }
        }
    }
    const double inv_n = 1.0 / static_cast<double>(n);
    for (std::size_t c = 0; c < num_classes; ++c) {
        grad.bias[c] *= inv_n;
        for (std::size_t f = 0; f < d; ++f) {
            grad.weights[c][f] = grad.weights[c][f] * inv_n + l2 * state.weights[c][f];
        }
    }
    return grad;
}

inline FittedModel fit(const ModelSpec& spec, const Dataset& train) {
    if (train.size() == 0) {
        fail(ErrorCode::EmptyTrain, "cannot fit on an empty training set");
    }
    std::set<std::size_t> distinct(train.labels.begin(), train.labels.end());
    if (distinct.size() < 2) {
        fail(ErrorCode::SingleClass, "training set holds a single class");
    }
    const std::size_t num_classes =
        std::max<std::size_t>(train.num_classes, *distinct.rbegin() + 1);

    FittedModel model;
    model.kind = spec.kind;
    model.num_classes = num_classes;
    model.dim = train.dim();

    switch (spec.kind) {
        case ModelKind::Knn: {
            KnnState state;
            state.points = train.features;
            state.labels = train.labels;
            state.k = std::clamp<std::size_t>(spec.knn_k, 1, train.size());
            state.weighting = spec.knn_weighting;
            state.epsilon = spec.knn_epsilon;
            model.state = std::move(state);
            break;
        }
        case ModelKind::GaussianNb: {
            GaussianNbState state;
            state.means.assign(num_classes, std::vector<double>(train.dim(), 0.0));
            state.variances.assign(num_classes,
                                   std::vector<double>(train.dim(), 0.0));
            std::vector<double> counts(num_classes, 0.0);
            for (std::size_t i = 0; i < train.size(); ++i) {
                counts[train.labels[i]] += 1.0;
                for (std::size_t f = 0; f < train.dim(); ++f) {
                    state.means[train.labels[i]][f] += train.features[i][f];
                }
            }
            for (std::size_t c = 0; c < num_classes; ++c) {
                if (counts[c] > 0.0) {
                    for (double& m : state.means[c]) m /= counts[c];
                }
            }
            for (std::size_t i = 0; i < train.size(); ++i) {
                const std::size_t c = train.labels[i];
                for (std::size_t f = 0; f < train.dim(); ++f) {
                    const double d = train.features[i][f] - state.means[c][f];
                    state.variances[c][f] += d * d;
                }
            }
            for (std::size_t c = 0; c < num_classes; ++c) {
                for (double& v : state.variances[c]) {
                    v = (counts[c] > 0.0 ? v / counts[c] : 0.0) + kVarianceFloor;
                }
            }
            state.prior.resize(num_classes);
            for (std::size_t c = 0; c < num_classes; ++c) {
                state.prior[c] = counts[c] / static_cast<double>(train.size());
            }
            model.state = std::move(state);
            break;
        }
        case ModelKind::LogisticRegression: {
            LogisticRegressionState state;
            state.weights.assign(num_classes, std::vector<double>(train.dim(), 0.0));
            state.bias.assign(num_classes, 0.0);
            // Full-batch gradient descent from zero init; convex, so no
            // random restarts and the seed plays no role here.
            for (std::size_t epoch = 0; epoch < spec.lr_epochs; ++epoch) {
                const auto grad =
                    lr_gradient(state, train.features, train.labels, spec.lr_l2);
                for (std::size_t c = 0; c < num_classes; ++c) {
                    state.bias[c] -= spec.lr_learning_rate * grad.bias[c];
                    for (std::size_t f = 0; f < train.dim(); ++f) {
                        state.weights[c][f] -=
                            spec.lr_learning_rate * grad.weights[c][f];
                    }
                }
            }
            model.state = std::move(state);
            break;
        }
    }
    return model;
}

namespace detail {

inline CategoricalDistribution knn_posterior(const KnnState& state,
                                             std::size_t num_classes,
                                             const std::vector<double>& x) {
    std::vector<std::pair<double, std::size_t>> dists;
    dists.reserve(state.points.size());
    for (std::size_t i = 0; i < state.points.size(); ++i) {
        double acc = 0.0;
        for (std::size_t f = 0; f < x.size(); ++f) {
            const double d = state.points[i][f] - x[f];
            acc += d * d;
        }
        dists.emplace_back(std::sqrt(acc), i);
    }
    const std::size_t k = std::min(state.k, dists.size());
    // Ties in the k-th distance resolve toward the lower row index.
    std::partial_sort(dists.begin(), dists.begin() + static_cast<std::ptrdiff_t>(k),
                      dists.end());
    std::vector<double> mass(num_classes, 0.0);
    for (std::size_t j = 0; j < k; ++j) {
        const auto& [dist, idx] = dists[j];
        const double w = state.weighting == KnnWeighting::Uniform
                             ? 1.0
                             : 1.0 / std::max(dist, kKnnDistanceFloor);
        mass[state.labels[idx]] += w;
    }
    for (double& m : mass) m += state.epsilon;
    return normalize(mass);
}

inline CategoricalDistribution gaussian_nb_posterior(const GaussianNbState& state,
                                                     const std::vector<double>& x) {
    std::vector<double> logs(state.prior.size());
    for (std::size_t c = 0; c < state.prior.size(); ++c) {
        double lp = std::log(state.prior[c]);  // -inf for absent classes
        for (std::size_t f = 0; f < x.size(); ++f) {
            const double var = state.variances[c][f];
            const double d = x[f] - state.means[c][f];
            lp += -0.5 * std::log(2.0 * 3.14159265358979323846 * var) -
                  0.5 * d * d / var;
        }
        logs[c] = lp;
    }
    return CategoricalDistribution(softmax_from_logs(std::move(logs)));
}

inline CategoricalDistribution lr_posterior(const LogisticRegressionState& state,
                                            const std::vector<double>& x) {
    std::vector<double> logits(state.bias.size());
    for (std::size_t c = 0; c < state.bias.size(); ++c) {
        double z = state.bias[c];
        for (std::size_t f = 0; f < x.size(); ++f) z += state.weights[c][f] * x[f];
        logits[c] = z;
    }
    return CategoricalDistribution(softmax_from_logs(std::move(logits)));
}

}  // namespace detail

inline PosteriorMatrix predict_posteriors(
    const FittedModel& model, const std::vector<std::vector<double>>& features) {
    std::vector<CategoricalDistribution> rows;
    rows.reserve(features.size());
    for (const auto& x : features) {
        if (x.size() != model.dim) {
            fail(ErrorCode::DimensionMismatch,
                 "query has " + std::to_string(x.size()) + " features, model expects " +
                     std::to_string(model.dim));
        }
        if (const auto* knn = std::get_if<KnnState>(&model.state)) {
            rows.push_back(detail::knn_posterior(*knn, model.num_classes, x));
        } else if (const auto* gnb = std::get_if<GaussianNbState>(&model.state)) {
            rows.push_back(detail::gaussian_nb_posterior(*gnb, x));
        } else {
            rows.push_back(detail::lr_posterior(
                std::get<LogisticRegressionState>(model.state), x));
        }
    }
    return PosteriorMatrix(std::move(rows));
}

}  // namespace labelshift
