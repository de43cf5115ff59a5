#pragma once

#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "labelshift/distribution.hpp"
#include "labelshift/error.hpp"

namespace labelshift {

/// N per-instance class posteriors sharing one class count.
class PosteriorMatrix {
public:
    PosteriorMatrix() = default;

    explicit PosteriorMatrix(std::vector<CategoricalDistribution> rows)
        : rows_(std::move(rows)) {
        for (const auto& row : rows_) {
            if (row.size() != rows_.front().size()) {
                fail(ErrorCode::DimensionMismatch,
                     "posterior rows disagree on class count");
            }
        }
    }

    static PosteriorMatrix from_rows(const std::vector<std::vector<double>>& rows) {
        std::vector<CategoricalDistribution> out;
        out.reserve(rows.size());
        for (const auto& r : rows) out.emplace_back(r);
        return PosteriorMatrix(std::move(out));
    }

    std::size_t size() const noexcept { return rows_.size(); }
    bool empty() const noexcept { return rows_.empty(); }
    std::size_t num_classes() const noexcept {
        return rows_.empty() ? 0 : rows_.front().size();
    }

    const CategoricalDistribution& row(std::size_t i) const { return rows_[i]; }
    const std::vector<CategoricalDistribution>& rows() const noexcept { return rows_; }

    auto begin() const noexcept { return rows_.begin(); }
    auto end() const noexcept { return rows_.end(); }

private:
    std::vector<CategoricalDistribution> rows_;
};

/// Column mean of the matrix; a valid distribution by convexity.
inline CategoricalDistribution mean_posterior(const PosteriorMatrix& posteriors) {
    if (posteriors.empty()) {
        fail(ErrorCode::EmptyMatrix, "mean of an empty posterior matrix");
    }
    std::vector<double> acc(posteriors.num_classes(), 0.0);
    for (const auto& row : posteriors) {
        for (std::size_t c = 0; c < acc.size(); ++c) acc[c] += row[c];
    }
    return normalize(acc);
}

}  // namespace labelshift
