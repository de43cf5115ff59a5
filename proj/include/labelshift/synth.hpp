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
#include "labelshift/models.hpp"
#include "labelshift/posterior.hpp"
#include "labelshift/rng.hpp"

namespace labelshift {

/// Diagonal Gaussian class-conditionals with a categorical prior. The
/// class-conditionals stay fixed while the prior varies, so closed-form
/// posteriors under any prior are available as test oracles.
struct GaussianMixtureSpec {
    std::vector<std::vector<double>> means;      // C x d
    std::vector<std::vector<double>> variances;  // C x d, all > 0
    CategoricalDistribution prior;
    std::uint64_t seed = 0;

    std::size_t num_classes() const noexcept { return means.size(); }
    std::size_t dim() const noexcept {
        return means.empty() ? 0 : means.front().size();
    }
};

namespace detail {

inline void validate(const GaussianMixtureSpec& spec) {
    if (spec.means.size() != spec.prior.size() ||
        spec.variances.size() != spec.prior.size()) {
        fail(ErrorCode::DimensionMismatch,
             "means/variances must have one row per class");
    }
    const std::size_t d = spec.dim();
    for (std::size_t c = 0; c < spec.num_classes(); ++c) {
        if (spec.means[c].size() != d || spec.variances[c].size() != d) {
            fail(ErrorCode::DimensionMismatch, "mixture rows disagree on dimension");
        }
        for (double v : spec.variances[c]) {
            if (!(v > 0.0)) {
                fail(ErrorCode::InvalidParameter, "variances must be positive");
            }
        }
    }
}

}  // namespace detail

/// Two overlapping classes at (-1,-1) and (+1,+1) with unit variances:
/// separated enough to classify well, overlapping enough that accuracy
/// moves measurably under prior shift.
inline GaussianMixtureSpec two_cluster_fixture(CategoricalDistribution prior,
                                               std::uint64_t seed) {
    if (prior.size() != 2) {
        fail(ErrorCode::DimensionMismatch, "fixture is two-class");
    }
    GaussianMixtureSpec spec{{{-1.0, -1.0}, {1.0, 1.0}},
                             {{1.0, 1.0}, {1.0, 1.0}},
                             std::move(prior),
                             seed};
    return spec;
}

/// Draw n instances: class per prior, features per that class's diagonal
/// Gaussian. Deterministic per seed.
inline Dataset sample(const GaussianMixtureSpec& spec, std::size_t n) {
    detail::validate(spec);
    if (n < 1) {
        fail(ErrorCode::InvalidParameter, "need at least one sample");
    }
    std::vector<double> cumulative(spec.prior.size());
    std::partial_sum(spec.prior.begin(), spec.prior.end(), cumulative.begin());
    cumulative.back() = 1.0;

    Dataset out;
    out.num_classes = spec.num_classes();
    for (std::size_t c = 0; c < spec.num_classes(); ++c) {
        out.label_dictionary.push_back(std::to_string(c));
    }
    for (std::size_t f = 0; f < spec.dim(); ++f) {
        out.schema.push_back({"f" + std::to_string(f), ColumnKind::Numeric, {}});
    }
    Rng rng(spec.seed);
    out.features.reserve(n);
    out.labels.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double u = rng.uniform01();
        const std::size_t cls = std::min<std::size_t>(
            static_cast<std::size_t>(
                std::lower_bound(cumulative.begin(), cumulative.end(), u) -
                cumulative.begin()),
            spec.num_classes() - 1);
        std::vector<double> x(spec.dim());
        for (std::size_t f = 0; f < spec.dim(); ++f) {
            x[f] = spec.means[cls][f] +
                   std::sqrt(spec.variances[cls][f]) * rng.normal();
        }
        out.features.push_back(std::move(x));
        out.labels.push_back(cls);
    }
    return out;
}

/// Closed-form posterior Norm(prior_c * prod_f N(x_f; mu_cf, var_cf)),
/// computed in log space.
inline CategoricalDistribution bayes_posterior(const GaussianMixtureSpec& spec,
                                               std::span<const double> x) {
    detail::validate(spec);
    if (x.size() != spec.dim()) {
        fail(ErrorCode::DimensionMismatch,
             "query has " + std::to_string(x.size()) + " features, mixture has " +
                 std::to_string(spec.dim()));
    }
    std::vector<double> logs(spec.num_classes());
    for (std::size_t c = 0; c < spec.num_classes(); ++c) {
        double lp = std::log(spec.prior[c]);
        for (std::size_t f = 0; f < x.size(); ++f) {
            const double var = spec.variances[c][f];
            const double d = x[f] - spec.means[c][f];
            lp += -0.5 * std::log(2.0 * 3.14159265358979323846 * var) -
                  0.5 * d * d / var;
        }
        logs[c] = lp;
    }
    return CategoricalDistribution(detail::softmax_from_logs(std::move(logs)));
}

inline PosteriorMatrix bayes_posteriors(const GaussianMixtureSpec& spec,
                                        const std::vector<std::vector<double>>& X) {
    std::vector<CategoricalDistribution> rows;
    rows.reserve(X.size());
    for (const auto& x : X) rows.push_back(bayes_posterior(spec, x));
    return PosteriorMatrix(std::move(rows));
}

}  // namespace labelshift
