#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "labelshift/adjust.hpp"
#include "labelshift/models.hpp"
#include "labelshift/rng.hpp"
#include "labelshift/synth.hpp"

using namespace labelshift;

TEST_CASE("sampling follows the prior") {
    auto spec = two_cluster_fixture(CategoricalDistribution({1.0, 0.0}), 4);
    const auto degenerate = sample(spec, 50);
    for (std::size_t label : degenerate.labels) CHECK(label == 0);

    spec = two_cluster_fixture(CategoricalDistribution({0.7, 0.3}), 8);
    const auto big = sample(spec, 100000);
    const auto freq = empirical_label_distribution(big.labels, 2, 0.0);
    CHECK(std::abs(freq[0] - 0.7) < 0.01);
    CHECK(std::abs(freq[1] - 0.3) < 0.01);
}

TEST_CASE("sampling is deterministic per seed") {
    const auto spec = two_cluster_fixture(CategoricalDistribution({0.6, 0.4}), 21);
    const auto a = sample(spec, 100);
    const auto b = sample(spec, 100);
    CHECK(a.labels == b.labels);
    CHECK(a.features == b.features);
}

TEST_CASE("bayes posterior symmetry cases") {
    const auto uniform = two_cluster_fixture(CategoricalDistribution({0.5, 0.5}), 0);
    const auto mid = bayes_posterior(uniform, std::vector<double>{0.0, 0.0});
    CHECK(mid[0] == Catch::Approx(0.5).margin(1e-12));

    const auto skewed = two_cluster_fixture(CategoricalDistribution({0.8, 0.2}), 0);
    const auto at_mid = bayes_posterior(skewed, std::vector<double>{0.0, 0.0});
    CHECK(at_mid[0] == Catch::Approx(0.8).margin(1e-12));
    CHECK(at_mid[1] == Catch::Approx(0.2).margin(1e-12));
}

TEST_CASE("bayes posterior matches a direct density-ratio evaluation") {
    GaussianMixtureSpec spec{{{-0.5, 1.0, 0.0}, {1.5, -1.0, 0.5}},
                             {{0.8, 1.2, 0.6}, {1.1, 0.9, 1.4}},
                             CategoricalDistribution({0.35, 0.65}),
                             2};
    Rng rng(55);
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<double> x(3);
        for (double& v : x) v = 6.0 * rng.uniform01() - 3.0;
        const auto posterior = bayes_posterior(spec, x);
        std::vector<double> weight(2);
        for (std::size_t c = 0; c < 2; ++c) {
            double density = 1.0;
            for (std::size_t f = 0; f < 3; ++f) {
                const double var = spec.variances[c][f];
                const double d = x[f] - spec.means[c][f];
                density *= std::exp(-0.5 * d * d / var) /
                           std::sqrt(2.0 * 3.14159265358979323846 * var);
            }
            weight[c] = spec.prior[c] * density;
        }
        const auto expected = normalize(weight);
        CHECK(posterior[0] == Catch::Approx(expected[0]).margin(1e-10));
        CHECK(posterior[1] == Catch::Approx(expected[1]).margin(1e-10));
    }
}

TEST_CASE("prior swap identity links bayes posteriors across priors") {
    const CategoricalDistribution pi_a({0.75, 0.25});
    const CategoricalDistribution pi_b({0.15, 0.85});
    auto spec_a = two_cluster_fixture(pi_a, 0);
    auto spec_b = two_cluster_fixture(pi_b, 0);
    Rng rng(66);
    std::vector<std::vector<double>> points;
    for (int i = 0; i < 200; ++i) {
        points.push_back({6.0 * rng.uniform01() - 3.0, 6.0 * rng.uniform01() - 3.0});
    }
    const auto under_a = bayes_posteriors(spec_a, points);
    const auto under_b = bayes_posteriors(spec_b, points);
    const auto corrected = prior_ratio_adjust(under_a, pi_a, pi_b);
    for (std::size_t i = 0; i < points.size(); ++i) {
        for (std::size_t c = 0; c < 2; ++c) {
            CHECK(corrected.row(i)[c] ==
                  Catch::Approx(under_b.row(i)[c]).margin(1e-9));
        }
    }
}

TEST_CASE("gaussian nb recovers the mixture means from a large sample") {
    const auto spec = two_cluster_fixture(CategoricalDistribution({0.5, 0.5}), 12);
    const std::size_t n = 20000;
    const auto train = sample(spec, n);
    ModelSpec model_spec;
    model_spec.kind = ModelKind::GaussianNb;
    const auto model = fit(model_spec, train);
    const auto& state = std::get<GaussianNbState>(model.state);
    for (std::size_t c = 0; c < 2; ++c) {
        const double class_n = state.prior[c] * static_cast<double>(n);
        const double se = 1.0 / std::sqrt(class_n);  // unit variances
        for (std::size_t f = 0; f < 2; ++f) {
            CHECK(std::abs(state.means[c][f] - spec.means[c][f]) < 3.0 * se);
        }
    }
}

TEST_CASE("mixture specs are validated") {
    GaussianMixtureSpec bad{{{0.0}, {1.0}},
                            {{1.0}, {-1.0}},
                            CategoricalDistribution({0.5, 0.5}),
                            0};
    CHECK_THROWS_MATCHES(sample(bad, 5), Error,
                         Catch::Matchers::Predicate<Error>([](const Error& e) {
                             return e.code() == ErrorCode::InvalidParameter;
                         }));
    const auto spec = two_cluster_fixture(CategoricalDistribution({0.5, 0.5}), 0);
    CHECK_THROWS_MATCHES(bayes_posterior(spec, std::vector<double>{1.0}), Error,
                         Catch::Matchers::Predicate<Error>([](const Error& e) {
                             return e.code() == ErrorCode::DimensionMismatch;
                         }));
}
