#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <set>
#include <vector>

#include "labelshift/shiftbench.hpp"
#include "labelshift/synth.hpp"

using namespace labelshift;

namespace {

Dataset labeled_dataset(const std::vector<std::size_t>& labels,
                        std::size_t num_classes) {
    Dataset ds;
    ds.num_classes = num_classes;
    ds.labels = labels;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        ds.features.push_back({static_cast<double>(i)});
    }
    return ds;
}

std::vector<std::size_t> repeated_labels(std::vector<std::size_t> counts) {
    std::vector<std::size_t> labels;
    for (std::size_t c = 0; c < counts.size(); ++c) {
        labels.insert(labels.end(), counts[c], c);
    }
    return labels;
}

}  // namespace

TEST_CASE("inverse frequency weights match the worked examples") {
    const auto uniform =
        inverse_frequency_weights(CategoricalDistribution({0.8, 0.2}), 0.0);
    CHECK(uniform[0] == Catch::Approx(0.5).margin(1e-15));

    const auto flipped =
        inverse_frequency_weights(CategoricalDistribution({0.8, 0.2}), 1.0);
    CHECK(flipped[0] == Catch::Approx(0.2).margin(1e-12));
    CHECK(flipped[1] == Catch::Approx(0.8).margin(1e-12));

    const auto strong =
        inverse_frequency_weights(CategoricalDistribution({0.5, 0.3, 0.2}), 2.0);
    CHECK(strong[0] == Catch::Approx(0.09972299168975068).margin(1e-12));
    CHECK(strong[1] == Catch::Approx(0.2770083102493075).margin(1e-12));
    CHECK(strong[2] == Catch::Approx(0.6232686980609418).margin(1e-12));

    CHECK_THROWS_MATCHES(
        inverse_frequency_weights(CategoricalDistribution({1.0, 0.0}), 1.0), Error,
        Catch::Matchers::Predicate<Error>([](const Error& e) {
            return e.code() == ErrorCode::ZeroClassProbability;
        }));
}

TEST_CASE("inverse frequency weights are monotone in beta") {
    const CategoricalDistribution probs({0.5, 0.3, 0.15, 0.05});
    double prev_rare = 0.0, prev_frequent = 1.0;
    for (double beta : {0.0, 0.25, 0.5, 1.0, 2.0, 4.0}) {
        const auto w = inverse_frequency_weights(probs, beta);
        CHECK(w[3] >= prev_rare - 1e-12);       // rarest class never shrinks
        CHECK(w[0] <= prev_frequent + 1e-12);   // most frequent never grows
        prev_rare = w[3];
        prev_frequent = w[0];
    }
}

TEST_CASE("oversampling converges to the target marginal") {
    const auto train = labeled_dataset(repeated_labels({800, 200}), 2);
    for (double beta : {0.0, 1.0}) {
        ShiftConfig config{beta, 100000, 99};
        const auto out = oversample(train, config);
        const auto expected = inverse_frequency_weights(
            empirical_label_distribution(train.labels, 2, 0.0), beta);
        const auto realized = empirical_label_distribution(out.labels, 2, 0.0);
        CHECK(std::abs(realized[0] - expected[0]) < 0.01);
        CHECK(std::abs(realized[1] - expected[1]) < 0.01);
    }
}

TEST_CASE("oversampling only replays existing instances") {
    const auto fixture = two_cluster_fixture(CategoricalDistribution({0.7, 0.3}), 1);
    const auto train = sample(fixture, 50);
    const auto out = oversample(train, ShiftConfig{2.0, 120, 7});
    CHECK(out.size() == 120);
    for (std::size_t i = 0; i < out.size(); ++i) {
        bool found = false;
        for (std::size_t j = 0; j < train.size(); ++j) {
            if (out.features[i] == train.features[j] &&
                out.labels[i] == train.labels[j]) {
                found = true;
                break;
            }
        }
        CHECK(found);
    }
}

TEST_CASE("oversampling is seeded and validates input") {
    const auto train = labeled_dataset(repeated_labels({6, 4}), 2);
    const auto a = oversample(train, ShiftConfig{1.0, 0, 5});
    const auto b = oversample(train, ShiftConfig{1.0, 0, 5});
    CHECK(a.size() == train.size());  // target_size 0 keeps the input size
    CHECK(a.labels == b.labels);
    CHECK(a.features == b.features);

    const auto single = oversample(train, ShiftConfig{3.0, 1, 2});
    CHECK(single.size() == 1);

    CHECK_THROWS_MATCHES(oversample(Dataset{}, ShiftConfig{}), Error,
                         Catch::Matchers::Predicate<Error>([](const Error& e) {
                             return e.code() == ErrorCode::EmptyTrain;
                         }));
    const auto missing = labeled_dataset(repeated_labels({5, 0, 5}), 3);
    CHECK_THROWS_MATCHES(oversample(missing, ShiftConfig{}), Error,
                         Catch::Matchers::Predicate<Error>([](const Error& e) {
                             return e.code() == ErrorCode::ZeroClassProbability;
                         }));
}

TEST_CASE("fixed split partitions the dataset") {
    const auto data = labeled_dataset({0, 1, 0, 1, 0, 1, 0, 1, 0, 1}, 2);
    SplitSpec spec;
    spec.train_fraction = 0.5;
    spec.seed = 3;
    const auto [train, test] = split_fixed(data, spec);
    CHECK(train.size() == 5);
    CHECK(test.size() == 5);
    std::multiset<double> seen;
    for (const auto& row : train.features) seen.insert(row[0]);
    for (const auto& row : test.features) seen.insert(row[0]);
    CHECK(seen.size() == 10);
    for (std::size_t i = 0; i < 10; ++i) {
        CHECK(seen.count(static_cast<double>(i)) == 1);
    }

    const auto [train2, test2] = split_fixed(data, spec);
    CHECK(train.features == train2.features);
    CHECK(test.labels == test2.labels);
}

TEST_CASE("stratified split keeps class proportions") {
    const auto data = labeled_dataset({0, 0, 1, 1}, 2);
    SplitSpec spec;
    spec.train_fraction = 0.5;
    spec.stratified = true;
    const auto [train, test] = split_fixed(data, spec);
    REQUIRE(train.size() == 2);
    REQUIRE(test.size() == 2);
    const auto count = [](const Dataset& ds, std::size_t cls) {
        return std::count(ds.labels.begin(), ds.labels.end(), cls);
    };
    CHECK(count(train, 0) == 1);
    CHECK(count(train, 1) == 1);
    CHECK(count(test, 0) == 1);
    CHECK(count(test, 1) == 1);
}

TEST_CASE("split rejects undersized input") {
    const auto tiny = labeled_dataset({0}, 2);
    CHECK_THROWS_MATCHES(split_fixed(tiny, SplitSpec{}), Error,
                         Catch::Matchers::Predicate<Error>([](const Error& e) {
                             return e.code() == ErrorCode::TooSmall;
                         }));
}

TEST_CASE("balance ratio reports min over max counts") {
    const auto skewed = repeated_labels({90, 10});
    const auto r = balance_ratio(skewed, 2);
    CHECK(r.all_classes_present);
    CHECK(r.value == Catch::Approx(10.0 / 90.0).margin(1e-12));

    const auto balanced = repeated_labels({25, 25});
    CHECK(balance_ratio(balanced, 2).value == Catch::Approx(1.0).margin(1e-15));

    const auto absent = balance_ratio(repeated_labels({50, 0}), 2);
    CHECK_FALSE(absent.all_classes_present);
    CHECK(absent.value == 0.0);
}

TEST_CASE("label shift kl matches the divergence module") {
    const auto train = repeated_labels({80, 20});
    const auto test = repeated_labels({20, 80});
    CHECK(label_shift_kl(train, test, 2, 0.0) ==
          Catch::Approx(0.8317766166719343).margin(1e-12));

    CHECK(label_shift_kl(train, train, 2) == Catch::Approx(0.0).margin(1e-15));

    const auto all_zero = repeated_labels({30, 0});
    const auto all_one = repeated_labels({0, 30});
    const double smoothed = label_shift_kl(all_zero, all_one, 2, 1e-6);
    CHECK(smoothed > 10.0);  // on the order of ln(1/epsilon)
    CHECK(std::isfinite(smoothed));

    CHECK_THROWS_MATCHES(
        label_shift_kl(std::vector<std::size_t>{}, test, 2), Error,
        Catch::Matchers::Predicate<Error>([](const Error& e) {
            return e.code() == ErrorCode::EmptyLabels;
        }));
}
