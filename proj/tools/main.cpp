#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "fedmlac/config.hpp"
#include "fedmlac/metrics.hpp"
#include "fedmlac/orchestrator.hpp"
#include "fedmlac/partition.hpp"

namespace fs = std::filesystem;
using namespace fedmlac;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitRuntime = 1;
constexpr int kExitConfig = 2;

int cmd_run(const std::string& config_path, const std::vector<std::string>& overrides,
            const std::string& out_dir, bool quiet) {
    ConfigMap map;
    try {
        map = load_config_file(config_path);
        apply_env_defaults(map);
        for (const std::string& o : overrides) apply_override(map, o);
    } catch (const std::exception& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    }

    std::vector<ConfigError> errors;
    const FederationConfig cfg = resolve_config(map, errors);
    if (!errors.empty()) {
        for (const ConfigError& e : errors) {
            std::cerr << "config error: " << e.field << ": " << e.message << "\n";
        }
        return kExitConfig;
    }

    try {
        fs::create_directories(out_dir);
        const std::string metrics_path = (fs::path(out_dir) / "metrics.csv").string();
        const std::string audit_path = (fs::path(out_dir) / "audit.jsonl").string();
        const std::string manifest_path = (fs::path(out_dir) / "manifest.json").string();
        const std::string personalized_path =
            cfg.eval_personalized ? (fs::path(out_dir) / "personalized.csv").string() : "";

        RunManifest manifest;
        manifest.version = FEDMLAC_VERSION;
        manifest.config = canonical_map(cfg);
        manifest.outputs = {{"metrics_csv", "metrics.csv"}, {"audit_jsonl", "audit.jsonl"}};
        if (cfg.eval_personalized) manifest.outputs["personalized_csv"] = "personalized.csv";
        std::ofstream(manifest_path) << manifest.render();

        const SimulationResult result =
            run_simulation(cfg, metrics_path, audit_path, personalized_path);

        if (!quiet) {
            const RoundRecord& last = result.records.back();
            std::cout << "algorithm " << algorithm_name(cfg.algorithm) << ", seed " << cfg.master_seed
                      << ", " << result.records.size() << " rounds\n"
                      << "final test_acc " << format_double(last.test_acc) << ", macro_f1 "
                      << format_double(last.macro_f1) << "\n";
            if (result.records.size() >= 50) {
                std::cout << "grad^2 decay slope " << format_double(rate_check(result.records))
                          << "\n";
            }
            std::cout << "outputs in " << out_dir << "\n";
        }
        return kExitOk;
    } catch (const std::exception& e) {
        std::cerr << "run failed: " << e.what() << "\n";
        return kExitRuntime;
    }
}

int cmd_partition(const std::string& data_path, const std::string& strategy, double alpha,
                  std::size_t clients, std::uint64_t seed, const std::string& out_path, bool quiet) {
    try {
        const Dataset ds = load_feature_csv(data_path);
        PartitionPlan plan;
        if (strategy == "dirichlet") {
            plan = dirichlet_partition(ds, clients, alpha, seed);
        } else if (strategy == "iid") {
            plan = dirichlet_partition(ds, clients, kIidDirichletAlpha, seed);
        } else if (strategy == "group") {
            plan = group_partition(ds);
        } else {
            std::cerr << "config error: unknown strategy '" << strategy << "'\n";
            return kExitConfig;
        }
        std::ofstream os(out_path);
        if (!os) throw std::runtime_error("cannot write plan: " + out_path);
        os << plan.to_json() << "\n";

        if (!quiet) {
            std::cout << "client,size";
            for (int c = 0; c < ds.num_classes; ++c) std::cout << ",class" << c;
            std::cout << ",entropy\n";
            for (std::size_t k = 0; k < plan.num_clients(); ++k) {
                const Dataset sub = ds.subset(plan.client_indices[k]);
                const auto hist = sub.class_histogram();
                std::cout << k << "," << sub.size();
                for (std::size_t c : hist) std::cout << "," << c;
                std::cout << "," << format_double(label_entropy(hist)) << "\n";
            }
        }
        return kExitOk;
    } catch (const std::invalid_argument& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const std::exception& e) {
        std::cerr << "partition failed: " << e.what() << "\n";
        return kExitConfig; // parse errors are configuration problems
    }
}

struct FinalRow {
    std::string file;
    std::map<std::string, double> values;
};

int cmd_compare(const std::vector<std::string>& csv_paths, bool quiet) {
    const std::vector<std::string> header = {
        "round", "algorithm", "seed", "test_acc", "macro_f1", "mean_train_loss",
        "mean_grad_sq", "n_sampled", "trusted_min", "trusted_max"};
    std::vector<FinalRow> rows;
    try {
        for (const std::string& path : csv_paths) {
            std::ifstream is(path);
            if (!is) throw std::runtime_error("cannot open " + path);
            std::string line;
            if (!std::getline(is, line)) throw std::runtime_error(path + ": empty file");
            // schema check
            std::vector<std::string> cols;
            {
                std::stringstream ss(line);
                std::string col;
                while (std::getline(ss, col, ',')) cols.push_back(col);
            }
            for (const std::string& want : header) {
                if (std::find(cols.begin(), cols.end(), want) == cols.end()) {
                    throw std::invalid_argument(path + ": missing column '" + want + "'");
                }
            }
            std::string last;
            while (std::getline(is, line)) {
                if (!line.empty()) last = line;
            }
            if (last.empty()) throw std::runtime_error(path + ": no data rows");
            std::stringstream ss(last);
            std::string field;
            FinalRow row;
            row.file = path;
            for (const std::string& col : cols) {
                if (!std::getline(ss, field, ',')) {
                    throw std::runtime_error(path + ": ragged final row");
                }
                if (col == "test_acc" || col == "macro_f1" || col == "mean_train_loss" ||
                    col == "mean_grad_sq" || col == "round") {
                    row.values[col] = std::stod(field);
                }
            }
            rows.push_back(std::move(row));
        }
    } catch (const std::exception& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    }

    if (!quiet) {
        std::cout << "run,final_round,test_acc,macro_f1,acc_drop_vs_first,f1_drop_vs_first\n";
    }
    const double base_acc = rows.front().values.at("test_acc");
    const double base_f1 = rows.front().values.at("macro_f1");
    for (const FinalRow& row : rows) {
        std::cout << row.file << "," << row.values.at("round") << ","
                  << format_double(row.values.at("test_acc")) << ","
                  << format_double(row.values.at("macro_f1")) << ","
                  << format_double(base_acc - row.values.at("test_acc")) << ","
                  << format_double(base_f1 - row.values.at("macro_f1")) << "\n";
    }
    return kExitOk;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"fedmlac: federated learning simulator with mutual-learning clients and "
                 "layer-wise pruning aggregation"};
    app.set_version_flag("--version", std::string(FEDMLAC_VERSION));
    app.require_subcommand(1);

    // run
    auto* run = app.add_subcommand("run", "run an experiment from a config file or manifest");
    std::string config_path, out_dir = "fedmlac_out";
    std::vector<std::string> overrides;
    bool quiet = false;
    run->add_option("--config", config_path, "config file (key-value) or manifest JSON")->required();
    run->add_option("--override", overrides, "KEY=VALUE override, repeatable");
    run->add_option("--out", out_dir, "output directory");
    run->add_flag("--quiet", quiet, "suppress the summary line");

    // partition
    auto* part = app.add_subcommand("partition", "write a partition plan for a feature CSV");
    std::string data_path, strategy = "dirichlet", plan_out = "plan.json";
    double alpha = 0.5;
    std::size_t clients = 10;
    std::uint64_t seed = 1;
    part->add_option("data", data_path, "feature CSV")->required();
    part->add_option("--strategy", strategy, "dirichlet|group|iid");
    part->add_option("--alpha", alpha, "dirichlet concentration");
    part->add_option("--clients", clients, "client count (dirichlet/iid)");
    part->add_option("--seed", seed, "partition seed");
    part->add_option("--out", plan_out, "plan JSON path");
    part->add_flag("--quiet", quiet, "suppress the histogram table");

    // compare
    auto* cmp = app.add_subcommand("compare", "final-round metrics with drops vs the first run");
    std::vector<std::string> csvs;
    cmp->add_option("metrics", csvs, "metrics CSV files (first one is the baseline)")
        ->expected(2, -1);
    cmp->add_flag("--quiet", quiet, "suppress the header row");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitConfig;
    }

    if (run->parsed()) return cmd_run(config_path, overrides, out_dir, quiet);
    if (part->parsed()) return cmd_partition(data_path, strategy, alpha, clients, seed, plan_out, quiet);
    if (cmp->parsed()) return cmd_compare(csvs, quiet);
    return kExitConfig;
}
