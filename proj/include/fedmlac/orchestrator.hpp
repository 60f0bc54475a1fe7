#pragma once

#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "fedmlac/client.hpp"
#include "fedmlac/dataset.hpp"
#include "fedmlac/server.hpp"

namespace fedmlac {

enum class Algorithm { fedmlac, fedmlac_no_lpa, fedmlac_no_ml, fedavg, fedprox };

std::string algorithm_name(Algorithm a);
Algorithm algorithm_from_name(const std::string& name);

struct AdversaryConfig {
    enum class Kind { none, label_flip, feature_noise, model_scale };

    Kind kind = Kind::none;
    double rate = 0.3;      // label_flip: per-sample flip rate
    double snr_db = 20.0;   // feature_noise: target SNR
    double factor = 10.0;   // model_scale: upload multiplier
    double fraction = 0.0;  // fraction of clients poisoned
    std::uint64_t seed = 0;

    void validate() const;
};

std::string adversary_kind_name(AdversaryConfig::Kind k);
AdversaryConfig::Kind adversary_kind_from_name(const std::string& name);

struct DataConfig {
    enum class Source { synthetic, csv };
    enum class Partition { dirichlet, group, iid };

    Source source = Source::synthetic;
    int classes = 4;
    std::size_t dim = 8;
    std::size_t n_per_class = 200;
    double cluster_spread = 0.3;
    std::uint64_t seed = 1;
    std::string csv_path;

    Partition partition = Partition::dirichlet;
    double dirichlet_alpha = 0.5;
    double test_fraction = 0.1;    // global clean test set, carved before partitioning
    double client_holdout = 0.2;   // per-client eval split

    void validate() const;
};

struct FederationConfig {
    Algorithm algorithm = Algorithm::fedmlac;
    // round protocol defaults: 5000 rounds, 20% participation, E=1/batch 16/lr 0.01
    int rounds = 5000;
    double active_ratio = 0.2;
    std::size_t num_clients = 10;

    std::vector<std::size_t> plugin_dims = {8, 16, 4};
    std::vector<std::vector<std::size_t>> local_dims; // empty = homogeneous with the plug-in
    Activation activation = Activation::Tanh;

    LocalUpdateConfig update;
    AggregationConfig aggregation;
    AdversaryConfig adversary;
    DataConfig data;

    std::uint64_t master_seed = 1;
    bool eval_personalized = false;

    ModelSpec plugin_spec() const;
    std::vector<ModelSpec> local_specs() const; // resolved, may equal {plugin_spec()}
    void validate() const;
};

struct RoundRecord {
    int round = 0;
    std::vector<int> sampled;
    double test_acc = 0.0;
    double macro_f1 = 0.0;
    double mean_train_loss = 0.0;
    double mean_grad_sq = 0.0;
    std::vector<std::size_t> trusted_sizes;        // per layer
    std::vector<std::vector<int>> trusted_members; // per layer; filled on LPA rounds
    // personalized-model metrics (only when eval_personalized is on)
    double personalized_acc_local = std::numeric_limits<double>::quiet_NaN();
    double personalized_acc_global = std::numeric_limits<double>::quiet_NaN();
};

struct EvalMetrics {
    double accuracy = 0.0;
    double macro_f1 = 0.0;
};

// accuracy = argmax hit rate; macro-F1 = unweighted mean of per-class F1
// with the 0/0 := 0 convention.
EvalMetrics evaluate(const ModelParams& model, const Dataset& test_set);

// Uniform sample without replacement of size max(1, round(active_ratio * N)).
std::vector<int> sample_clients(std::size_t num_clients, double active_ratio,
                                std::uint64_t round_seed);

// Least-squares slope of log(running-mean grad^2) against log(round) over the
// trailing 80% of rounds. Needs >= 50 records.
double fitted_decay_slope(const std::vector<double>& per_round_grad_sq);
double rate_check(const std::vector<RoundRecord>& records);

class MetricsCsvWriter;
class AuditJsonlWriter;
class PersonalizedCsvWriter;

// A full federation: datasets, clients, the shared global model, and the
// round loop. All randomness derives from (master_seed, salts), so a config
// determines the entire trajectory.
class Federation {
public:
    explicit Federation(const FederationConfig& cfg);
    Federation(const FederationConfig& cfg, const Dataset& parent);

    // Runs round t (1-based); broadcasts, updates sampled clients, applies
    // the model-scale adversary, aggregates, evaluates.
    RoundRecord run_round(int t, AuditJsonlWriter* audit = nullptr);

    std::vector<RoundRecord> run(MetricsCsvWriter* metrics = nullptr,
                                 AuditJsonlWriter* audit = nullptr,
                                 PersonalizedCsvWriter* personalized = nullptr);

    const FederationConfig& config() const { return cfg_; }
    const ModelParams& global_model() const { return global_model_; }
    const Dataset& global_test() const { return global_test_; }
    const std::vector<ClientState>& clients() const { return clients_; }
    const std::vector<int>& poisoned_clients() const { return poisoned_; }

    // mean personalized accuracy over all clients, on the global clean test
    // set and on per-client holdouts respectively
    double personalized_accuracy_global() const;
    double personalized_accuracy_local() const;

private:
    void setup(const Dataset& parent);

    FederationConfig cfg_;
    Dataset global_test_;
    std::vector<ClientState> clients_;
    std::vector<Dataset> client_eval_;
    std::vector<int> poisoned_; // ascending client ids
    ModelParams global_model_;
};

struct SimulationResult {
    std::vector<RoundRecord> records;
    ModelParams global_model;
};

// Convenience wrapper: build a federation from the config, run all rounds,
// optionally streaming metrics/audit/personalized files.
SimulationResult run_simulation(const FederationConfig& cfg,
                                const std::string& metrics_csv_path = "",
                                const std::string& audit_jsonl_path = "",
                                const std::string& personalized_csv_path = "");

} // namespace fedmlac
