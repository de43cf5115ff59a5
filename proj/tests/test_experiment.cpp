#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "labelshift/experiment.hpp"
#include "labelshift/synth.hpp"

using namespace labelshift;

namespace {

struct TempDir {
    std::filesystem::path path;

    explicit TempDir(const std::string& tag) {
        path = std::filesystem::temp_directory_path() / ("labelshift_" + tag);
        std::filesystem::remove_all(path);
        std::filesystem::create_directories(path);
    }
    ~TempDir() { std::filesystem::remove_all(path); }
};

std::string synth_csv(const std::filesystem::path& dir, std::uint64_t seed,
                      std::size_t n) {
    const auto data =
        sample(two_cluster_fixture(CategoricalDistribution({0.7, 0.3}), seed), n);
    const auto path = (dir / "synth.csv").string();
    write_csv(path, data);
    return path;
}

ExperimentConfig tiny_config(const std::string& csv_path) {
    nlohmann::json j;
    j["datasets"] = {{{"path", csv_path}, {"label", "label"}, {"name", "synth"}}};
    j["split"] = {{"train_fraction", 0.5}, {"seed", 3}};
    j["betas"] = {0.0, 1.0};
    j["models"] = {{{"kind", "gnb"}}};
    j["methods"] = {nlohmann::json{{"method", "none"}},
                    nlohmann::json{{"method", "distpfn"}}};
    j["seeds"] = {0};
    j["record_durations"] = false;
    return parse_config(j);
}

std::string report_to_string(const ExperimentReport& report) {
    std::ostringstream os;
    write_report_csv(os, report);
    return os.str();
}

}  // namespace

TEST_CASE("config parsing applies defaults and validates") {
    nlohmann::json j;
    j["datasets"] = {{{"path", "x.csv"}}};
    j["models"] = {{{"kind", "knn"}, {"k", 7}}};
    j["methods"] = {nlohmann::json{{"method", "distpfn_t"}}};
    const auto cfg = parse_config(j);
    CHECK(cfg.betas == std::vector<double>{0.0, 0.1, 0.5, 1.0, 2.0, 5.0});
    CHECK(cfg.seeds.size() == 5);
    CHECK(cfg.models[0].spec.knn_k == 7);
    CHECK(cfg.models[0].name == "knn");
    CHECK(cfg.methods[0].name == "distpfn_t");
    CHECK(cfg.methods[0].spec.numerator_mode == NumeratorMode::TestAverage);

    nlohmann::json bad = j;
    bad["methods"] = {nlohmann::json{{"method", "mystery"}}};
    CHECK_THROWS_AS(parse_config(bad), Error);
    bad = j;
    bad["betas"] = {-1.0};
    CHECK_THROWS_AS(parse_config(bad), Error);
}

TEST_CASE("a sweep emits one record per cell") {
    TempDir dir("sweep");
    const auto csv = synth_csv(dir.path, 42, 120);
    const auto config = tiny_config(csv);
    const auto report = run(config);
    // 1 dataset x 1 model x 2 methods x 1 seed x (2 betas + control)
    CHECK(report.records.size() == 6);
    CHECK(report.failed_count() == 0);
    std::size_t controls = 0;
    for (const auto& r : report.records) {
        controls += r.is_control ? 1 : 0;
        // realized class counts cover the resampled training split
        std::size_t total = 0;
        for (std::size_t c : r.train_histogram) total += c;
        CHECK(total == r.n_train);
    }
    CHECK(controls == 2);
}

TEST_CASE("adding a method never perturbs existing records") {
    TempDir dir("addmethod");
    const auto csv = synth_csv(dir.path, 29, 140);
    auto config = tiny_config(csv);
    config.methods = {config.methods[0]};  // none only
    const auto narrow = report_to_string(run(config));

    auto wide_config = tiny_config(csv);  // none + distpfn
    const auto wide = report_to_string(run(wide_config));

    std::istringstream narrow_is(narrow), wide_is(wide);
    std::vector<std::string> narrow_lines, wide_none_lines;
    std::string line;
    std::getline(narrow_is, line);  // headers
    std::getline(wide_is, line);
    while (std::getline(narrow_is, line)) narrow_lines.push_back(line);
    while (std::getline(wide_is, line)) {
        std::istringstream fields(line);
        std::string field;
        for (int i = 0; i < 3; ++i) std::getline(fields, field, ',');
        if (field == "none") wide_none_lines.push_back(line);  // method column
    }
    CHECK(narrow_lines == wide_none_lines);
}

TEST_CASE("reruns produce byte-identical reports") {
    TempDir dir("determinism");
    const auto csv = synth_csv(dir.path, 7, 150);
    const auto config = tiny_config(csv);
    const auto first = report_to_string(run(config));
    const auto second = report_to_string(run(config));
    CHECK(first == second);
    CHECK(first.find("failed") == std::string::npos);
}

TEST_CASE("the unshifted control does not depend on the beta grid") {
    TempDir dir("control");
    const auto csv = synth_csv(dir.path, 19, 120);
    auto config = tiny_config(csv);
    config.betas = {0.0};
    const auto narrow = run(config);
    config.betas = {0.0, 1.0, 2.0};
    const auto wide = run(config);

    auto control_lines = [](const ExperimentReport& report) {
        std::vector<std::string> lines;
        std::ostringstream os;
        write_report_csv(os, report);
        std::istringstream is(os.str());
        std::string line;
        while (std::getline(is, line)) {
            // beta is the fourth field; "none" there marks the control record
            std::istringstream fields(line);
            std::string field;
            for (int i = 0; i < 4; ++i) std::getline(fields, field, ',');
            if (field == "none") lines.push_back(line);
        }
        return lines;
    };
    CHECK(control_lines(narrow) == control_lines(wide));
}

TEST_CASE("failures are recorded without aborting the sweep") {
    TempDir dir("failures");
    const auto good = synth_csv(dir.path, 5, 100);
    nlohmann::json j;
    j["datasets"] = {{{"path", (dir.path / "missing.csv").string()},
                      {"name", "missing"}},
                     {{"path", good}, {"name", "synth"}}};
    j["models"] = {{{"kind", "gnb"}}};
    j["methods"] = {nlohmann::json{{"method", "none"}}};
    j["seeds"] = {0};
    j["betas"] = {0.0};
    j["record_durations"] = false;
    const auto report = run(parse_config(j));
    CHECK(report.failed_count() == 1);
    // the good dataset still produced its 2 records (control + one beta)
    std::size_t ok = 0;
    for (const auto& r : report.records) ok += r.status == "ok" ? 1 : 0;
    CHECK(ok == 2);
}

TEST_CASE("every adjustment method survives an end-to-end sweep") {
    TempDir dir("methods");
    const auto csv = synth_csv(dir.path, 11, 240);
    nlohmann::json j;
    j["datasets"] = {{{"path", csv}, {"name", "synth"}}};
    j["models"] = {{{"kind", "knn"}, {"k", 10}}, {{"kind", "logreg"}, {"epochs", 60}}};
    j["methods"] = {nlohmann::json{{"method", "none"}},
                    nlohmann::json{{"method", "distpfn"}},
                    nlohmann::json{{"method", "distpfn_t"}},
                    nlohmann::json{{"method", "prior_ratio"}},
                    nlohmann::json{{"method", "eme"}},
                    nlohmann::json{{"method", "bbe"}},
                    nlohmann::json{{"method", "distpfn_t"},
                                   {"reference_prior", "train_prediction"},
                                   {"name", "distpfn_t_pred"}}};
    j["seeds"] = {0};
    j["betas"] = {1.0};
    j["record_durations"] = false;
    const auto report = run(parse_config(j));
    CHECK(report.records.size() == 2 * 7 * 2);
    CHECK(report.failed_count() == 0);
}

TEST_CASE("shift-gen writes an oversampled csv with a sidecar") {
    TempDir dir("shiftgen");
    const auto csv = synth_csv(dir.path, 23, 200);
    const auto out = (dir.path / "shifted.csv").string();
    shift_gen(csv, "label", true, 5.0, 9, out);

    const auto table = load_csv(out, "label", true);
    CHECK(table.num_rows() == 200);

    std::ifstream sidecar_in(out + ".json");
    REQUIRE(sidecar_in.good());
    nlohmann::json sidecar;
    sidecar_in >> sidecar;
    CHECK(sidecar["beta"].get<double>() == 5.0);
    CHECK(sidecar["seed"].get<std::uint64_t>() == 9);
    // at beta = 5 the minority class dominates the resample
    const auto hist = sidecar["class_histogram"];
    CHECK(hist["1"].get<std::size_t>() > hist["0"].get<std::size_t>());

    // beta = 0 resamples classes uniformly
    const auto out0 = (dir.path / "shifted0.csv").string();
    shift_gen(csv, "label", true, 0.0, 9, out0);
    std::ifstream sidecar0_in(out0 + ".json");
    nlohmann::json sidecar0;
    sidecar0_in >> sidecar0;
    const double n0 = sidecar0["class_histogram"]["0"].get<double>();
    CHECK(std::abs(n0 / 200.0 - 0.5) < 0.15);
}

TEST_CASE("report aggregation groups, averages and ranks") {
    const std::string report_csv =
        "dataset,model,method,beta,seed,accuracy,macro_precision,ece,label_kl,"
        "balance_ratio,n_train,n_test,duration_ms,status\n"
        "d1,m,a,0,0,0.900000,0.800000,0.100000,0.0,1.0,10,10,0,ok\n"
        "d1,m,a,0,1,0.700000,0.600000,0.300000,0.0,1.0,10,10,0,ok\n"
        "d1,m,b,0,0,0.500000,0.400000,0.200000,0.0,1.0,10,10,0,ok\n"
        "d1,m,b,0,1,0.300000,0.200000,0.400000,0.0,1.0,10,10,0,ok\n";

    const auto grouped = aggregate_report_csv(report_csv, {"method"});
    std::istringstream is(grouped);
    std::string header, row_a, row_b;
    std::getline(is, header);
    std::getline(is, row_a);
    std::getline(is, row_b);
    CHECK(header ==
          "method,n,accuracy_mean,accuracy_std,macro_precision_mean,"
          "macro_precision_std,ece_mean,ece_std,rank");
    CHECK(row_a == "a,2,0.800000,0.100000,0.700000,0.100000,0.200000,0.100000,"
                   "1.000000");
    CHECK(row_b == "b,2,0.400000,0.100000,0.300000,0.100000,0.300000,0.100000,"
                   "2.000000");

    CHECK_THROWS_MATCHES(aggregate_report_csv(report_csv, {"planet"}), Error,
                         Catch::Matchers::Predicate<Error>([](const Error& e) {
                             return e.code() == ErrorCode::UnknownAxis;
                         }));
}

TEST_CASE("aggregation matches an independent recomputation") {
    TempDir dir("aggregate");
    const auto csv = synth_csv(dir.path, 13, 160);
    auto config = tiny_config(csv);
    config.seeds = {0, 1, 2};
    const auto report = run(config);
    const auto text = report_to_string(report);
    const auto table = aggregate_report(text, {"method", "beta"});

    // Recompute grouped accuracy means from the same emitted CSV values.
    std::map<std::pair<std::string, std::string>, std::vector<double>> cells;
    std::istringstream text_is(text);
    std::string line;
    std::getline(text_is, line);  // header
    while (std::getline(text_is, line)) {
        std::istringstream fields(line);
        std::vector<std::string> parts;
        std::string part;
        while (std::getline(fields, part, ',')) parts.push_back(part);
        if (parts[13] != "ok") continue;
        cells[{parts[2], parts[3]}].push_back(std::stod(parts[5]));
    }
    CHECK(table.rows.size() == cells.size());
    for (const auto& row : table.rows) {
        const auto& values = cells.at({row.key[0], row.key[1]});
        double expected = 0.0;
        for (double v : values) expected += v;
        expected /= static_cast<double>(values.size());
        CHECK(std::abs(row.accuracy_mean - expected) < 1e-12);
        CHECK(row.n == values.size());
    }

    // single-record groups report zero spread
    const auto singles = aggregate_report(text, {"method", "beta", "seed"});
    for (const auto& row : singles.rows) {
        CHECK(row.n == 1);
        CHECK(row.accuracy_std == 0.0);
        CHECK(row.ece_std == 0.0);
    }
}
