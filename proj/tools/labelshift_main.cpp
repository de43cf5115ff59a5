// Command-line front end: run sweeps, materialize shifted training sets and
// aggregate report CSVs.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "labelshift/labelshift.hpp"

namespace {

int cmd_run(const std::string& config_path, const std::string& out_dir,
            const std::string& betas_csv, const std::string& seeds_csv) {
    auto config = labelshift::load_config(config_path);
    if (!out_dir.empty()) config.out_dir = out_dir;
    if (!betas_csv.empty()) {
        config.betas.clear();
        std::stringstream ss(betas_csv);
        std::string item;
        while (std::getline(ss, item, ',')) config.betas.push_back(std::stod(item));
    }
    if (!seeds_csv.empty()) {
        config.seeds.clear();
        std::stringstream ss(seeds_csv);
        std::string item;
        while (std::getline(ss, item, ',')) config.seeds.push_back(std::stoull(item));
    }

    const auto report = labelshift::run(config);
    if (config.out_dir.empty()) {
        labelshift::write_report_csv(std::cout, report);
    } else {
        std::filesystem::create_directories(config.out_dir);
        const auto path =
            (std::filesystem::path(config.out_dir) / "report.csv").string();
        labelshift::write_report_csv(path, report);
        std::cout << "wrote " << path << " (" << report.records.size()
                  << " records, " << report.failed_count() << " failed)\n";
    }
    return report.failed_count() == 0 ? 0 : 1;
}

int cmd_report(const std::string& in_path, const std::string& group_by_csv,
               const std::string& out_path) {
    std::ifstream in(in_path, std::ios::binary);
    if (!in) {
        std::cerr << "cannot open " << in_path << "\n";
        return 1;
    }
    std::stringstream buffer;
    buffer << in.rdbuf();
    std::vector<std::string> axes;
    std::stringstream ss(group_by_csv);
    std::string axis;
    while (std::getline(ss, axis, ',')) {
        if (!axis.empty()) axes.push_back(axis);
    }
    const std::string table = labelshift::aggregate_report_csv(buffer.str(), axes);
    if (out_path.empty()) {
        std::cout << table;
    } else {
        std::ofstream out(out_path, std::ios::binary);
        out << table;
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"label-shift correction and benchmarking toolkit"};
    app.require_subcommand(1);

    std::string config_path, out_dir, betas_csv, seeds_csv;
    auto* run_cmd = app.add_subcommand("run", "execute a sweep from a JSON config");
    run_cmd->add_option("--config", config_path, "experiment config (JSON)")
        ->required();
    run_cmd->add_option("--out", out_dir, "output directory (overrides config)");
    run_cmd->add_option("--betas", betas_csv,
                        "comma-separated shift strengths (overrides config)");
    run_cmd->add_option("--seeds", seeds_csv,
                        "comma-separated seeds (overrides config)");

    std::string data_path, label_column = "label", shift_out;
    double beta = 1.0;
    std::uint64_t seed = 0;
    bool no_header = false;
    auto* shift_cmd = app.add_subcommand(
        "shift-gen", "materialize an oversampled CSV plus a JSON sidecar");
    shift_cmd->add_option("--data", data_path, "input CSV")->required();
    shift_cmd->add_option("--label", label_column, "label column name or index");
    shift_cmd->add_option("--beta", beta, "shift strength (>= 0)")->required();
    shift_cmd->add_option("--seed", seed, "sampling seed");
    shift_cmd->add_option("--out", shift_out, "output CSV path")->required();
    shift_cmd->add_flag("--no-header", no_header, "input has no header row");

    std::string report_in, group_by = "method,beta", report_out;
    auto* report_cmd =
        app.add_subcommand("report", "aggregate a report CSV by axes");
    report_cmd->add_option("--in", report_in, "report CSV produced by run")
        ->required();
    report_cmd->add_option("--group-by", group_by,
                           "comma-separated axes from "
                           "{dataset,model,method,beta,seed}");
    report_cmd->add_option("--out", report_out, "write the table here instead of stdout");

    CLI11_PARSE(app, argc, argv);

    try {
        if (run_cmd->parsed()) {
            return cmd_run(config_path, out_dir, betas_csv, seeds_csv);
        }
        if (shift_cmd->parsed()) {
            labelshift::shift_gen(data_path, label_column, !no_header, beta, seed,
                                  shift_out);
            std::cout << "wrote " << shift_out << " and " << shift_out << ".json\n";
            return 0;
        }
        if (report_cmd->parsed()) {
            return cmd_report(report_in, group_by, report_out);
        }
    } catch (const labelshift::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
