#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "labelshift/adjust.hpp"
#include "labelshift/data.hpp"
#include "labelshift/distribution.hpp"
#include "labelshift/error.hpp"
#include "labelshift/metrics.hpp"
#include "labelshift/models.hpp"
#include "labelshift/posterior.hpp"
#include "labelshift/rng.hpp"
#include "labelshift/shiftbench.hpp"

namespace labelshift {

struct DatasetConfig {
    std::string path;
    std::string label_column = "label";
    bool has_header = true;
    std::string name;  // defaults to the file stem
};

struct ModelConfig {
    ModelSpec spec;
    std::string name;
};

struct MethodConfig {
    AdjustmentSpec spec;
    std::string name;
};

struct ExperimentConfig {
    std::vector<DatasetConfig> datasets;
    SplitSpec split;
    std::vector<double> betas = {0.0, 0.1, 0.5, 1.0, 2.0, 5.0};
    std::vector<ModelConfig> models;
    std::vector<MethodConfig> methods;
    std::vector<std::uint64_t> seeds = {0, 1, 2, 3, 4};
    std::string out_dir;
    // Smoothing applied to empirical training priors before they enter an
    // adjustment denominator; heavy oversampling can empty a class.
    double prior_epsilon = 1e-6;
    std::size_t ece_bins = 15;
    bool record_durations = true;
};

struct ExperimentRecord {
    std::string dataset;
    std::string model;
    std::string method;
    bool is_control = false;  // trained on the unshifted split
    double beta = 0.0;        // meaningful only when !is_control
    std::uint64_t seed = 0;
    EvaluationResult eval;
    double label_kl = 0.0;
    BalanceRatio balance;
    std::vector<std::size_t> train_histogram;  // realized class counts
    std::size_t n_train = 0;
    std::size_t n_test = 0;
    std::int64_t duration_ms = 0;
    std::string status = "ok";
};

struct ExperimentReport {
    std::vector<ExperimentRecord> records;

    std::size_t failed_count() const {
        std::size_t n = 0;
        for (const auto& r : records) n += r.status == "ok" ? 0 : 1;
        return n;
    }
};

namespace detail {

inline std::string format_beta(const ExperimentRecord& r) {
    if (r.is_control) return "none";
    std::ostringstream os;
    os << r.beta;
    return os.str();
}

inline std::string format_metric(double v) {
    std::ostringstream os;
    os << std::fixed << std::setprecision(6) << v;
    return os.str();
}

inline std::string default_method_name(AdjustmentMethod m) {
    switch (m) {
        case AdjustmentMethod::None: return "none";
        case AdjustmentMethod::DistPfn: return "distpfn";
        case AdjustmentMethod::DistPfnT: return "distpfn_t";
        case AdjustmentMethod::PriorRatio: return "prior_ratio";
        case AdjustmentMethod::Eme: return "eme";
        case AdjustmentMethod::Bbe: return "bbe";
    }
    return "unknown";
}

inline std::string default_model_name(ModelKind k) {
    switch (k) {
        case ModelKind::Knn: return "knn";
        case ModelKind::GaussianNb: return "gnb";
        case ModelKind::LogisticRegression: return "logreg";
    }
    return "unknown";
}

}  // namespace detail

// ---------------------------------------------------------------------------
// JSON configuration
// ---------------------------------------------------------------------------

inline ModelConfig parse_model_config(const nlohmann::json& j) {
    ModelConfig cfg;
    const std::string kind = j.value("kind", "knn");
    if (kind == "knn") {
        cfg.spec.kind = ModelKind::Knn;
    } else if (kind == "gnb" || kind == "gaussian_nb") {
        cfg.spec.kind = ModelKind::GaussianNb;
    } else if (kind == "logreg" || kind == "logistic_regression") {
        cfg.spec.kind = ModelKind::LogisticRegression;
    } else {
        fail(ErrorCode::InvalidParameter, "unknown model kind '" + kind + "'");
    }
    cfg.spec.knn_k = j.value("k", cfg.spec.knn_k);
    const std::string weighting = j.value("weighting", "uniform");
    if (weighting == "uniform") {
        cfg.spec.knn_weighting = KnnWeighting::Uniform;
    } else if (weighting == "inverse_distance") {
        cfg.spec.knn_weighting = KnnWeighting::InverseDistance;
    } else {
        fail(ErrorCode::InvalidParameter, "unknown knn weighting '" + weighting + "'");
    }
    cfg.spec.knn_epsilon = j.value("epsilon", cfg.spec.knn_epsilon);
    cfg.spec.lr_learning_rate = j.value("learning_rate", cfg.spec.lr_learning_rate);
    cfg.spec.lr_epochs = j.value("epochs", cfg.spec.lr_epochs);
    cfg.spec.lr_l2 = j.value("l2", cfg.spec.lr_l2);
    cfg.name = j.value("name", detail::default_model_name(cfg.spec.kind));
    return cfg;
}

inline MethodConfig parse_method_config(const nlohmann::json& j) {
    MethodConfig cfg;
    const std::string method = j.value("method", "none");
    if (method == "none") {
        cfg.spec.method = AdjustmentMethod::None;
    } else if (method == "distpfn") {
        cfg.spec.method = AdjustmentMethod::DistPfn;
    } else if (method == "distpfn_t" || method == "distpfn-t") {
        cfg.spec.method = AdjustmentMethod::DistPfnT;
    } else if (method == "prior_ratio" || method == "oracle") {
        cfg.spec.method = AdjustmentMethod::PriorRatio;
    } else if (method == "eme") {
        cfg.spec.method = AdjustmentMethod::Eme;
    } else if (method == "bbe") {
        cfg.spec.method = AdjustmentMethod::Bbe;
    } else {
        fail(ErrorCode::InvalidParameter, "unknown method '" + method + "'");
    }
    const std::string mode = j.value("mode", "test_average");
    if (mode == "test_average") {
        cfg.spec.numerator_mode = NumeratorMode::TestAverage;
    } else if (mode == "per_instance") {
        cfg.spec.numerator_mode = NumeratorMode::PerInstance;
    } else {
        fail(ErrorCode::InvalidParameter, "unknown numerator mode '" + mode + "'");
    }
    const std::string metric = j.value("tau_metric", "ce");
    if (metric == "ce") {
        cfg.spec.tau_metric = TauMetric::CrossEntropy;
    } else if (metric == "kl") {
        cfg.spec.tau_metric = TauMetric::Kl;
    } else if (metric == "js") {
        cfg.spec.tau_metric = TauMetric::Js;
    } else if (metric == "l2") {
        cfg.spec.tau_metric = TauMetric::L2;
    } else {
        fail(ErrorCode::InvalidParameter, "unknown tau metric '" + metric + "'");
    }
    const std::string direction = j.value("ce_direction", "pred_first");
    if (direction == "pred_first") {
        cfg.spec.ce_direction = CeDirection::PredFirst;
    } else if (direction == "prior_first") {
        cfg.spec.ce_direction = CeDirection::PriorFirst;
    } else {
        fail(ErrorCode::InvalidParameter, "unknown ce direction '" + direction + "'");
    }
    const std::string reference = j.value("reference_prior", "train_labels");
    if (reference == "train_labels") {
        cfg.spec.reference_prior = ReferencePrior::TrainLabels;
    } else if (reference == "train_prediction") {
        cfg.spec.reference_prior = ReferencePrior::TrainPrediction;
    } else {
        fail(ErrorCode::InvalidParameter,
             "unknown reference prior '" + reference + "'");
    }
    cfg.name = j.value("name", detail::default_method_name(cfg.spec.method));
    return cfg;
}

inline ExperimentConfig parse_config(const nlohmann::json& j) {
    ExperimentConfig cfg;
    if (!j.contains("datasets") || !j["datasets"].is_array() || j["datasets"].empty()) {
        fail(ErrorCode::InvalidParameter, "config needs a non-empty datasets array");
    }
    for (const auto& d : j["datasets"]) {
        DatasetConfig ds;
        ds.path = d.at("path").get<std::string>();
        ds.label_column = d.value("label", ds.label_column);
        ds.has_header = d.value("has_header", true);
        ds.name = d.value("name",
                          std::filesystem::path(ds.path).stem().string());
        cfg.datasets.push_back(std::move(ds));
    }
    if (j.contains("split")) {
        const auto& s = j["split"];
        cfg.split.train_fraction = s.value("train_fraction", cfg.split.train_fraction);
        cfg.split.seed = s.value("seed", cfg.split.seed);
        cfg.split.stratified = s.value("stratified", cfg.split.stratified);
    }
    if (j.contains("betas")) {
        cfg.betas = j["betas"].get<std::vector<double>>();
    }
    for (double beta : cfg.betas) {
        if (beta < 0.0) {
            fail(ErrorCode::InvalidParameter, "beta values must be >= 0");
        }
    }
    if (j.contains("models")) {
        for (const auto& m : j["models"]) cfg.models.push_back(parse_model_config(m));
    }
    if (cfg.models.empty()) {
        fail(ErrorCode::InvalidParameter, "config needs at least one model");
    }
    if (j.contains("methods")) {
        for (const auto& m : j["methods"]) cfg.methods.push_back(parse_method_config(m));
    }
    if (cfg.methods.empty()) {
        fail(ErrorCode::InvalidParameter, "config needs at least one method");
    }
    if (j.contains("seeds")) {
        cfg.seeds = j["seeds"].get<std::vector<std::uint64_t>>();
    }
    if (cfg.seeds.empty()) {
        fail(ErrorCode::InvalidParameter, "config needs at least one seed");
    }
    cfg.out_dir = j.value("out_dir", cfg.out_dir);
    cfg.prior_epsilon = j.value("prior_epsilon", cfg.prior_epsilon);
    cfg.ece_bins = j.value("ece_bins", cfg.ece_bins);
    cfg.record_durations = j.value("record_durations", cfg.record_durations);
    return cfg;
}

inline ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) fail(ErrorCode::IoError, "cannot open config " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const std::exception& e) {
        fail(ErrorCode::ParseError, std::string("config parse error: ") + e.what());
    }
    return parse_config(j);
}

// ---------------------------------------------------------------------------
// Sweep execution
// ---------------------------------------------------------------------------

namespace detail {

struct CellInputs {
    const Dataset* train = nullptr;
    const Dataset* test = nullptr;
    std::uint64_t cell_seed = 0;
};

// Apply one adjustment method to a fitted model's test posteriors.
inline PosteriorMatrix apply_method(const MethodConfig& method,
                                    const ModelSpec& model_spec,
                                    const FittedModel& model,
                                    const CellInputs& cell,
                                    const PosteriorMatrix& test_posteriors,
                                    double prior_epsilon) {
    const std::size_t num_classes = cell.train->num_classes;
    auto reference_prior = [&]() {
        if (method.spec.reference_prior == ReferencePrior::TrainPrediction) {
            return mean_posterior(predict_posteriors(model, cell.train->features));
        }
        return empirical_label_distribution(cell.train->labels, num_classes,
                                            prior_epsilon);
    };
    switch (method.spec.method) {
        case AdjustmentMethod::None:
            return test_posteriors;
        case AdjustmentMethod::DistPfn:
            return distpfn_adjust(test_posteriors, reference_prior(),
                                  method.spec.numerator_mode);
        case AdjustmentMethod::DistPfnT:
            return distpfn_t_adjust(test_posteriors, reference_prior(), method.spec);
        case AdjustmentMethod::PriorRatio:
            // Oracle correction: the true test label distribution as target.
            return prior_ratio_adjust(
                test_posteriors, reference_prior(),
                empirical_label_distribution(cell.test->labels, num_classes, 0.0));
        case AdjustmentMethod::Eme:
            return em_estimate_prior(test_posteriors, reference_prior()).adjusted;
        case AdjustmentMethod::Bbe: {
            // The confusion matrix needs held-out labels, so BBE refits on
            // 80% of the training split and validates on the rest.
            SplitSpec holdout;
            holdout.train_fraction = 0.8;
            holdout.stratified = true;
            holdout.seed = seed_mix(cell.cell_seed, "bbe-holdout");
            const auto [fit_ds, val_ds] = split_fixed(*cell.train, holdout);
            auto spec = model_spec;
            spec.seed = seed_mix(cell.cell_seed, "bbe-fit");
            const auto bbe_model = fit(spec, fit_ds);
            const auto val_predictions =
                argmax_predictions(predict_posteriors(bbe_model, val_ds.features));
            const auto confusion = estimate_confusion(
                val_predictions, val_ds.labels, num_classes, 1e-9);
            const auto bbe_posteriors =
                predict_posteriors(bbe_model, cell.test->features);
            const auto predicted_dist = empirical_label_distribution(
                argmax_predictions(bbe_posteriors), num_classes, 0.0);
            const auto bbe_prior = empirical_label_distribution(
                fit_ds.labels, num_classes, prior_epsilon);
            return bbe_adjust(bbe_posteriors, bbe_prior, confusion, predicted_dist);
        }
    }
    fail(ErrorCode::InvalidParameter, "unhandled adjustment method");
}

inline bool record_order(const ExperimentRecord& a, const ExperimentRecord& b) {
    if (a.dataset != b.dataset) return a.dataset < b.dataset;
    if (a.model != b.model) return a.model < b.model;
    if (a.method != b.method) return a.method < b.method;
    if (a.is_control != b.is_control) return a.is_control;  // control first
    if (a.beta != b.beta) return a.beta < b.beta;
    return a.seed < b.seed;
}

}  // namespace detail

/// Execute the full sweep: per dataset, split once per seed, then for each
/// beta (plus one unshifted control) oversample the training split, fit each
/// model, adjust with each method and score. Failures are recorded per
/// dataset and never abort the sweep. Deterministic for a fixed config.
inline ExperimentReport run(const ExperimentConfig& config) {
    ExperimentReport report;
    for (const auto& dataset_cfg : config.datasets) {
        try {
            const RawTable raw =
                load_csv(dataset_cfg.path, dataset_cfg.label_column,
                         dataset_cfg.has_header);
            for (const std::uint64_t seed : config.seeds) {
                SplitSpec split = config.split;
                split.seed = seed_mix(seed_mix(seed_mix(config.split.seed, "split"),
                                               dataset_cfg.name),
                                      seed);
                // Stratify on label tokens when requested.
                std::vector<std::size_t> token_labels;
                if (split.stratified) {
                    std::map<std::string, std::size_t> dict;
                    for (const auto& row : raw.rows) {
                        dict.emplace(row[raw.label_column].text, dict.size());
                    }
                    for (const auto& row : raw.rows) {
                        token_labels.push_back(dict[row[raw.label_column].text]);
                    }
                }
                const auto [train_idx, test_idx] =
                    split_indices(raw.num_rows(), token_labels, split);
                const RawTable train_raw = raw.subset(train_idx);
                const RawTable test_raw = raw.subset(test_idx);
                auto [train_ds, stats] = preprocess_fit(train_raw);
                const Dataset test_ds = preprocess_apply(test_raw, stats);

                // Cells: the unshifted control plus one per beta.
                struct Cell {
                    bool is_control;
                    double beta;
                    std::string key;
                };
                std::vector<Cell> cells;
                cells.push_back({true, 0.0, "none"});
                for (double beta : config.betas) {
                    std::ostringstream key;
                    key << beta;
                    cells.push_back({false, beta, key.str()});
                }

                for (const auto& cell_desc : cells) {
                    const std::uint64_t cell_seed = seed_mix(
                        seed_mix(seed_mix(seed_mix(seed, "cell"), dataset_cfg.name),
                                 cell_desc.key),
                        config.split.seed);
                    Dataset shifted;
                    const Dataset* train_used = &train_ds;
                    if (!cell_desc.is_control) {
                        ShiftConfig shift;
                        shift.beta = cell_desc.beta;
                        shift.target_size = train_ds.size();
                        shift.seed = seed_mix(cell_seed, "shift");
                        shifted = oversample(train_ds, shift);
                        train_used = &shifted;
                    }
                    const double cell_kl =
                        label_shift_kl(train_used->labels, test_ds.labels,
                                       train_ds.num_classes);
                    const BalanceRatio cell_balance =
                        balance_ratio(train_used->labels, train_ds.num_classes);
                    std::vector<std::size_t> cell_histogram(train_ds.num_classes, 0);
                    for (std::size_t label : train_used->labels) {
                        ++cell_histogram[label];
                    }

                    for (const auto& model_cfg : config.models) {
                        detail::CellInputs inputs{train_used, &test_ds,
                                                  seed_mix(cell_seed, model_cfg.name)};
                        std::optional<FittedModel> model;
                        std::optional<PosteriorMatrix> posteriors;
                        std::string fit_error;
                        try {
                            auto spec = model_cfg.spec;
                            spec.seed = seed_mix(inputs.cell_seed, "fit");
                            model = fit(spec, *train_used);
                            posteriors = predict_posteriors(*model, test_ds.features);
                        } catch (const Error& e) {
                            fit_error = e.what();
                        }

                        for (const auto& method_cfg : config.methods) {
                            ExperimentRecord rec;
                            rec.dataset = dataset_cfg.name;
                            rec.model = model_cfg.name;
                            rec.method = method_cfg.name;
                            rec.is_control = cell_desc.is_control;
                            rec.beta = cell_desc.beta;
                            rec.seed = seed;
                            rec.label_kl = cell_kl;
                            rec.balance = cell_balance;
                            rec.train_histogram = cell_histogram;
                            rec.n_train = train_used->size();
                            rec.n_test = test_ds.size();
                            if (!fit_error.empty()) {
                                rec.status = "failed: " + fit_error;
                                report.records.push_back(std::move(rec));
                                continue;
                            }
                            const auto start = std::chrono::steady_clock::now();
                            try {
                                const auto adjusted = detail::apply_method(
                                    method_cfg, model_cfg.spec, *model, inputs,
                                    *posteriors, config.prior_epsilon);
                                rec.eval = evaluate(adjusted, test_ds.labels,
                                                    train_ds.num_classes,
                                                    config.ece_bins);
                            } catch (const Error& e) {
                                rec.status = std::string("failed: ") + e.what();
                            }
                            if (config.record_durations) {
                                rec.duration_ms =
                                    std::chrono::duration_cast<std::chrono::milliseconds>(
                                        std::chrono::steady_clock::now() - start)
                                        .count();
                            }
                            report.records.push_back(std::move(rec));
                        }
                    }
                }

                if (!config.out_dir.empty()) {
                    std::filesystem::create_directories(config.out_dir);
                    nlohmann::json sidecar;
                    sidecar["dataset"] = dataset_cfg.name;
                    sidecar["seed"] = seed;
                    nlohmann::json cols = nlohmann::json::array();
                    for (std::size_t f = 0; f < stats.schema.size(); ++f) {
                        nlohmann::json col;
                        col["name"] = stats.schema[f].name;
                        col["kind"] = stats.schema[f].kind == ColumnKind::Numeric
                                          ? "numeric"
                                          : "categorical";
                        col["missing"] = stats.missing_counts[f];
                        if (stats.schema[f].kind == ColumnKind::Numeric) {
                            col["mean"] = stats.numeric[f].mean;
                            col["stddev"] = stats.numeric[f].stddev;
                        } else {
                            col["mode"] = stats.categorical_mode[f];
                            col["categories"] = stats.schema[f].categories;
                        }
                        cols.push_back(std::move(col));
                    }
                    sidecar["columns"] = std::move(cols);
                    sidecar["label_dictionary"] = stats.label_dictionary;
                    std::ofstream out(std::filesystem::path(config.out_dir) /
                                      (dataset_cfg.name + "_seed" +
                                       std::to_string(seed) + ".stats.json"));
                    out << sidecar.dump(2) << '\n';
                }
            }
        } catch (const Error& e) {
            ExperimentRecord rec;
            rec.dataset = dataset_cfg.name;
            rec.model = "-";
            rec.method = "-";
            rec.is_control = true;
            rec.status = std::string("failed: ") + e.what();
            report.records.push_back(std::move(rec));
        }
    }
    // Canonical order so parallel or interleaved execution can never change
    // the emitted bytes.
    std::sort(report.records.begin(), report.records.end(), detail::record_order);
    return report;
}

inline void write_report_csv(std::ostream& out, const ExperimentReport& report) {
    out << "dataset,model,method,beta,seed,accuracy,macro_precision,ece,label_kl,"
           "balance_ratio,n_train,n_test,duration_ms,status\n";
    for (const auto& r : report.records) {
        out << detail::csv_escape(r.dataset) << ',' << detail::csv_escape(r.model)
            << ',' << detail::csv_escape(r.method) << ',' << detail::format_beta(r)
            << ',' << r.seed << ',' << detail::format_metric(r.eval.accuracy) << ','
            << detail::format_metric(r.eval.macro_precision) << ','
            << detail::format_metric(r.eval.ece) << ','
            << detail::format_metric(r.label_kl) << ','
            << detail::format_metric(r.balance.value) << ',' << r.n_train << ','
            << r.n_test << ',' << r.duration_ms << ','
            << detail::csv_escape(r.status) << '\n';
    }
}

inline void write_report_csv(const std::string& path, const ExperimentReport& report) {
    std::ofstream out(path, std::ios::binary);
    if (!out) fail(ErrorCode::IoError, "cannot write " + path);
    write_report_csv(out, report);
}

// ---------------------------------------------------------------------------
// shift-gen: materialize an oversampled CSV plus a JSON sidecar
// ---------------------------------------------------------------------------

inline void shift_gen(const std::string& data_path, const std::string& label_column,
                      bool has_header, double beta, std::uint64_t seed,
                      const std::string& out_path) {
    const RawTable raw = load_csv(data_path, label_column, has_header);
    std::map<std::string, std::size_t> dict;
    for (const auto& row : raw.rows) {
        const RawCell& cell = row[raw.label_column];
        if (cell.missing) {
            fail(ErrorCode::ParseError, "missing label value in " + data_path);
        }
        dict.emplace(cell.text, 0);
    }
    std::size_t next = 0;
    for (auto& [token, index] : dict) index = next++;
    std::vector<std::size_t> labels;
    labels.reserve(raw.num_rows());
    for (const auto& row : raw.rows) {
        labels.push_back(dict[row[raw.label_column].text]);
    }

    ShiftConfig config{beta, raw.num_rows(), seed};
    const auto indices = oversample_indices(labels, dict.size(), config);
    write_csv(out_path, raw, indices);

    std::vector<std::size_t> histogram(dict.size(), 0);
    std::vector<std::size_t> sampled_labels;
    sampled_labels.reserve(indices.size());
    for (std::size_t i : indices) {
        ++histogram[labels[i]];
        sampled_labels.push_back(labels[i]);
    }
    nlohmann::json sidecar;
    sidecar["source"] = data_path;
    sidecar["beta"] = beta;
    sidecar["seed"] = seed;
    nlohmann::json hist;
    for (const auto& [token, index] : dict) {
        hist[token] = histogram[index];
    }
    sidecar["class_histogram"] = std::move(hist);
    const BalanceRatio balance = balance_ratio(sampled_labels, dict.size());
    sidecar["balance_ratio"] = balance.all_classes_present ? balance.value : 0.0;
    sidecar["all_classes_present"] = balance.all_classes_present;
    std::ofstream out(out_path + ".json");
    if (!out) fail(ErrorCode::IoError, "cannot write " + out_path + ".json");
    out << sidecar.dump(2) << '\n';
}

// ---------------------------------------------------------------------------
// report: aggregate a report CSV by a list of axes
// ---------------------------------------------------------------------------

namespace detail {

inline std::vector<std::vector<std::string>> parse_csv_text(const std::string& text) {
    std::vector<std::vector<std::string>> records;
    std::size_t pos = 0;
    std::size_t index = 0;
    while (pos < text.size()) {
        auto fields = parse_csv_record(text, pos, index++);
        if (fields.size() == 1 && fields[0].empty() && pos >= text.size()) break;
        records.push_back(std::move(fields));
    }
    return records;
}

// Axis-aware ordering: beta sorts numerically with "none" first, seed
// numerically, everything else lexicographically.
inline bool axis_value_less(const std::string& axis, const std::string& a,
                            const std::string& b) {
    if (axis == "beta") {
        if (a == "none" || b == "none") return a == "none" && b != "none";
        return std::stod(a) < std::stod(b);
    }
    if (axis == "seed") return std::stoull(a) < std::stoull(b);
    return a < b;
}

}  // namespace detail

struct AggregateRow {
    std::vector<std::string> key;  // one value per group-by axis, in order
    std::size_t n = 0;
    double accuracy_mean = 0.0, accuracy_std = 0.0;
    double precision_mean = 0.0, precision_std = 0.0;
    double ece_mean = 0.0, ece_std = 0.0;
    bool has_rank = false;
    double rank = 0.0;
};

struct AggregateTable {
    std::vector<std::string> group_by;
    bool with_rank = false;
    std::vector<AggregateRow> rows;
};

/// Aggregate a report CSV: group rows by the requested axes and compute
/// per-group mean/std (population) for accuracy, precision and ECE, plus a
/// per-method average rank over accuracy across all complete non-method
/// cells when grouping by method.
inline AggregateTable aggregate_report(const std::string& report_text,
                                       const std::vector<std::string>& group_by) {
    static const std::vector<std::string> kAxes = {"dataset", "model", "method",
                                                   "beta", "seed"};
    if (group_by.empty()) {
        fail(ErrorCode::UnknownAxis, "need at least one group-by axis");
    }
    for (const auto& axis : group_by) {
        if (std::find(kAxes.begin(), kAxes.end(), axis) == kAxes.end()) {
            fail(ErrorCode::UnknownAxis, "unknown axis '" + axis + "'");
        }
    }
    const auto records = detail::parse_csv_text(report_text);
    if (records.size() < 2) {
        fail(ErrorCode::ParseError, "report holds no data rows");
    }
    std::map<std::string, std::size_t> col;
    for (std::size_t c = 0; c < records.front().size(); ++c) {
        col[records.front()[c]] = c;
    }
    for (const char* required :
         {"dataset", "model", "method", "beta", "seed", "accuracy",
          "macro_precision", "ece", "status"}) {
        if (!col.count(required)) {
            fail(ErrorCode::ParseError,
                 std::string("report is missing column '") + required + "'");
        }
    }

    struct Group {
        std::vector<double> accuracy, precision, ece;
    };
    std::map<std::vector<std::string>, Group> groups;
    // cell -> method -> accuracy, for the rank computation
    std::map<std::string, std::map<std::string, double>> cells;
    std::set<std::string> methods;
    for (std::size_t r = 1; r < records.size(); ++r) {
        const auto& row = records[r];
        if (row[col["status"]] != "ok") continue;
        std::vector<std::string> key;
        key.reserve(group_by.size());
        for (const auto& axis : group_by) key.push_back(row[col[axis]]);
        auto& group = groups[key];
        group.accuracy.push_back(std::stod(row[col["accuracy"]]));
        group.precision.push_back(std::stod(row[col["macro_precision"]]));
        group.ece.push_back(std::stod(row[col["ece"]]));

        const std::string cell = row[col["dataset"]] + "\x1f" + row[col["model"]] +
                                 "\x1f" + row[col["beta"]] + "\x1f" +
                                 row[col["seed"]];
        cells[cell][row[col["method"]]] = std::stod(row[col["accuracy"]]);
        methods.insert(row[col["method"]]);
    }

    AggregateTable table;
    table.group_by = group_by;
    table.with_rank =
        std::find(group_by.begin(), group_by.end(), "method") != group_by.end();
    std::map<std::string, double> ranks;
    if (table.with_rank && !methods.empty()) {
        std::map<std::string, std::vector<double>> score_table;
        for (const auto& [cell, by_method] : cells) {
            if (by_method.size() != methods.size()) continue;  // incomplete cell
            for (const auto& [method, acc] : by_method) {
                score_table[method].push_back(acc);
            }
        }
        if (!score_table.empty() && !score_table.begin()->second.empty()) {
            ranks = average_rank(score_table);
        }
    }

    std::vector<std::vector<std::string>> keys;
    keys.reserve(groups.size());
    for (const auto& [key, group] : groups) keys.push_back(key);
    std::sort(keys.begin(), keys.end(),
              [&group_by](const auto& a, const auto& b) {
                  for (std::size_t i = 0; i < a.size(); ++i) {
                      if (a[i] != b[i]) {
                          return detail::axis_value_less(group_by[i], a[i], b[i]);
                      }
                  }
                  return false;
              });

    auto mean_std = [](const std::vector<double>& v) {
        double mean = 0.0;
        for (double x : v) mean += x;
        mean /= static_cast<double>(v.size());
        double var = 0.0;
        for (double x : v) var += (x - mean) * (x - mean);
        var /= static_cast<double>(v.size());
        return std::pair<double, double>(mean, std::sqrt(var));
    };

    const auto method_pos = std::find(group_by.begin(), group_by.end(), "method");
    for (const auto& key : keys) {
        const auto& group = groups[key];
        AggregateRow row;
        row.key = key;
        row.n = group.accuracy.size();
        std::tie(row.accuracy_mean, row.accuracy_std) = mean_std(group.accuracy);
        std::tie(row.precision_mean, row.precision_std) = mean_std(group.precision);
        std::tie(row.ece_mean, row.ece_std) = mean_std(group.ece);
        if (table.with_rank) {
            const std::string& method = key[static_cast<std::size_t>(
                method_pos - group_by.begin())];
            auto it = ranks.find(method);
            if (it != ranks.end()) {
                row.has_rank = true;
                row.rank = it->second;
            }
        }
        table.rows.push_back(std::move(row));
    }
    return table;
}

inline std::string render_aggregate_csv(const AggregateTable& table) {
    std::ostringstream out;
    for (const auto& axis : table.group_by) out << axis << ',';
    out << "n,accuracy_mean,accuracy_std,macro_precision_mean,macro_precision_std,"
           "ece_mean,ece_std";
    if (table.with_rank) out << ",rank";
    out << '\n';
    for (const auto& row : table.rows) {
        for (const auto& part : row.key) out << detail::csv_escape(part) << ',';
        out << row.n << ',' << detail::format_metric(row.accuracy_mean) << ','
            << detail::format_metric(row.accuracy_std) << ','
            << detail::format_metric(row.precision_mean) << ','
            << detail::format_metric(row.precision_std) << ','
            << detail::format_metric(row.ece_mean) << ','
            << detail::format_metric(row.ece_std);
        if (table.with_rank) {
            out << ',';
            if (row.has_rank) out << detail::format_metric(row.rank);
        }
        out << '\n';
    }
    return out.str();
}

inline std::string aggregate_report_csv(const std::string& report_text,
                                        const std::vector<std::string>& group_by) {
    return render_aggregate_csv(aggregate_report(report_text, group_by));
}

}  // namespace labelshift
