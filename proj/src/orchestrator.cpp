#include "fedmlac/orchestrator.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <numeric>
#include <stdexcept>

#include "fedmlac/corruption.hpp"
#include "fedmlac/metrics.hpp"
#include "fedmlac/partition.hpp"
#include "fedmlac/rng.hpp"

namespace fedmlac {

std::string algorithm_name(Algorithm a) {
    switch (a) {
        case Algorithm::fedmlac: return "fedmlac";
        case Algorithm::fedmlac_no_lpa: return "fedmlac_no_lpa";
        case Algorithm::fedmlac_no_ml: return "fedmlac_no_ml";
        case Algorithm::fedavg: return "fedavg";
        case Algorithm::fedprox: return "fedprox";
    }
    throw std::logic_error("unreachable");
}

Algorithm algorithm_from_name(const std::string& name) {
    if (name == "fedmlac") return Algorithm::fedmlac;
    if (name == "fedmlac_no_lpa") return Algorithm::fedmlac_no_lpa;
    if (name == "fedmlac_no_ml") return Algorithm::fedmlac_no_ml;
    if (name == "fedavg") return Algorithm::fedavg;
    if (name == "fedprox") return Algorithm::fedprox;
    throw std::invalid_argument("unknown algorithm '" + name + "'");
}

std::string adversary_kind_name(AdversaryConfig::Kind k) {
    switch (k) {
        case AdversaryConfig::Kind::none: return "none";
        case AdversaryConfig::Kind::label_flip: return "label_flip";
        case AdversaryConfig::Kind::feature_noise: return "feature_noise";
        case AdversaryConfig::Kind::model_scale: return "model_scale";
    }
    throw std::logic_error("unreachable");
}

AdversaryConfig::Kind adversary_kind_from_name(const std::string& name) {
    if (name == "none") return AdversaryConfig::Kind::none;
    if (name == "label_flip") return AdversaryConfig::Kind::label_flip;
    if (name == "feature_noise") return AdversaryConfig::Kind::feature_noise;
    if (name == "model_scale") return AdversaryConfig::Kind::model_scale;
    throw std::invalid_argument("unknown adversary kind '" + name + "'");
}

void AdversaryConfig::validate() const {
    if (fraction < 0.0 || fraction > 1.0) throw std::invalid_argument("adversary fraction must be in [0, 1]");
    if (kind == Kind::label_flip && (rate < 0.0 || rate > 1.0)) {
        throw std::invalid_argument("label flip rate must be in [0, 1]");
    }
    if (kind == Kind::model_scale && !std::isfinite(factor)) {
        throw std::invalid_argument("model scale factor must be finite");
    }
}

void DataConfig::validate() const {
    if (source == Source::synthetic) {
        if (classes < 2) throw std::invalid_argument("data.classes must be >= 2");
        if (dim < 1) throw std::invalid_argument("data.dim must be >= 1");
        if (n_per_class < 1) throw std::invalid_argument("data.n_per_class must be >= 1");
        if (cluster_spread < 0.0) throw std::invalid_argument("data.cluster_spread must be >= 0");
    } else if (csv_path.empty()) {
        throw std::invalid_argument("data.csv_path required for csv source");
    }
    if (partition == Partition::dirichlet && !(dirichlet_alpha > 0.0)) {
        throw std::invalid_argument("data.dirichlet_alpha must be positive");
    }
    if (test_fraction < 0.0 || test_fraction >= 1.0) {
        throw std::invalid_argument("data.test_fraction must be in [0, 1)");
    }
    if (client_holdout < 0.0 || client_holdout >= 1.0) {
        throw std::invalid_argument("data.client_holdout must be in [0, 1)");
    }
}

ModelSpec FederationConfig::plugin_spec() const {
    return ModelSpec::dense(plugin_dims, activation);
}

std::vector<ModelSpec> FederationConfig::local_specs() const {
    if (local_dims.empty()) return {plugin_spec()};
    std::vector<ModelSpec> specs;
    specs.reserve(local_dims.size());
    for (const auto& dims : local_dims) specs.push_back(ModelSpec::dense(dims, activation));
    return specs;
}

void FederationConfig::validate() const {
    if (rounds < 1) throw std::invalid_argument("rounds must be >= 1");
    if (!(active_ratio > 0.0 && active_ratio <= 1.0)) {
        throw std::invalid_argument("active_ratio must be in (0, 1]");
    }
    if (num_clients < 1) throw std::invalid_argument("clients must be >= 1");
    const ModelSpec plugin = plugin_spec();
    const auto specs = local_specs();
    for (const ModelSpec& s : specs) {
        if (s.input_dim() != plugin.input_dim() || s.output_dim != plugin.output_dim) {
            throw std::invalid_argument("every local spec must share the plug-in input/output dims");
        }
    }
    const bool homogeneous_required =
        algorithm == Algorithm::fedavg || algorithm == Algorithm::fedprox;
    if (homogeneous_required) {
        for (const ModelSpec& s : specs) {
            if (s != plugin) {
                throw std::invalid_argument(algorithm_name(algorithm) +
                                            " requires a homogeneous fleet (local specs equal to the "
                                            "global model)");
            }
        }
    }
    update.validate();
    const bool uses_lpa = algorithm == Algorithm::fedmlac || algorithm == Algorithm::fedmlac_no_ml;
    if (uses_lpa) {
        const std::size_t cohort = static_cast<std::size_t>(std::max<long>(
            1, std::lround(active_ratio * static_cast<double>(num_clients))));
        aggregation.validate_for_cohort(cohort);
    } else {
        aggregation.validate();
    }
    adversary.validate();
    data.validate();
    if (data.source == DataConfig::Source::synthetic) {
        if (data.dim != plugin.input_dim()) {
            throw std::invalid_argument("plug-in input dim " + std::to_string(plugin.input_dim()) +
                                        " != data dim " + std::to_string(data.dim));
        }
        if (static_cast<std::size_t>(data.classes) != plugin.output_dim) {
            throw std::invalid_argument("plug-in output dim " + std::to_string(plugin.output_dim) +
                                        " != class count " + std::to_string(data.classes));
        }
    }
}

EvalMetrics evaluate(const ModelParams& model, const Dataset& test_set) {
    if (test_set.size() == 0) throw std::invalid_argument("evaluate: empty test set");
    const Batch batch = make_batch(test_set);
    const Matrix logits = forward(model, batch);
    const std::size_t classes = logits.cols();

    std::vector<std::size_t> tp(classes, 0), fp(classes, 0), fn(classes, 0);
    std::size_t hits = 0;
    for (std::size_t r = 0; r < logits.rows(); ++r) {
        std::size_t pred = 0;
        for (std::size_t c = 1; c < classes; ++c) {
            if (logits(r, c) > logits(r, pred)) pred = c;
        }
        const auto truth = static_cast<std::size_t>(batch.labels[r]);
        if (pred == truth) {
            ++hits;
            ++tp[pred];
        } else {
            ++fp[pred];
            ++fn[truth];
        }
    }

    EvalMetrics m;
    m.accuracy = static_cast<double>(hits) / static_cast<double>(logits.rows());
    double f1_sum = 0.0;
    for (std::size_t c = 0; c < classes; ++c) {
        const double denom = static_cast<double>(2 * tp[c] + fp[c] + fn[c]);
        f1_sum += denom > 0.0 ? 2.0 * static_cast<double>(tp[c]) / denom : 0.0; // 0/0 := 0
    }
    m.macro_f1 = f1_sum / static_cast<double>(classes);
    return m;
}

std::vector<int> sample_clients(std::size_t num_clients, double active_ratio,
                                std::uint64_t round_seed) {
    if (!(active_ratio > 0.0 && active_ratio <= 1.0)) {
        throw std::invalid_argument("active_ratio must be in (0, 1]");
    }
    const std::size_t k = static_cast<std::size_t>(std::max<long>(
        1, std::lround(active_ratio * static_cast<double>(num_clients))));
    std::vector<int> ids(num_clients);
    std::iota(ids.begin(), ids.end(), 0);
    Rng rng(round_seed);
    for (std::size_t i = 0; i < k; ++i) {
        const std::size_t j = i + static_cast<std::size_t>(rng.below(num_clients - i));
        std::swap(ids[i], ids[j]);
    }
    ids.resize(k);
    std::sort(ids.begin(), ids.end());
    return ids;
}

double fitted_decay_slope(const std::vector<double>& per_round_grad_sq) {
    const std::size_t n = per_round_grad_sq.size();
    if (n < 50) throw std::invalid_argument("rate check needs at least 50 rounds");
    std::vector<double> x, y;
    double running = 0.0;
    const std::size_t start = static_cast<std::size_t>(
        std::floor(0.2 * static_cast<double>(n))); // trailing 80%
    for (std::size_t t = 0; t < n; ++t) {
        running += per_round_grad_sq[t];
        const double mean = running / static_cast<double>(t + 1);
        if (t >= start) {
            x.push_back(std::log(static_cast<double>(t + 1)));
            y.push_back(std::log(std::max(mean, 1e-300)));
        }
    }
    const double xbar = std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
    const double ybar = std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(y.size());
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        num += (x[i] - xbar) * (y[i] - ybar);
        den += (x[i] - xbar) * (x[i] - xbar);
    }
    return num / den;
}

double rate_check(const std::vector<RoundRecord>& records) {
    std::vector<double> g;
    g.reserve(records.size());
    for (const RoundRecord& r : records) g.push_back(r.mean_grad_sq);
    return fitted_decay_slope(g);
}

namespace {

Dataset build_parent(const DataConfig& data) {
    if (data.source == DataConfig::Source::synthetic) {
        return synth_gaussian_mixture(data.classes, data.dim, data.n_per_class,
                                      data.cluster_spread, data.seed);
    }
    return load_feature_csv(data.csv_path);
}

// Scale-poisoned upload: every parameter multiplied by `factor`. Entries are
// clipped to +/-1e100 so an attack that compounds through repeated
// re-broadcast stays representable instead of overflowing the run.
constexpr double kUploadClamp = 1e100;

void scale_model(ModelParams& model, double factor) {
    for (auto& layer : model.layers) {
        for (double& v : layer.weights.values()) {
            v = std::clamp(v * factor, -kUploadClamp, kUploadClamp);
        }
        for (double& v : layer.bias) {
            v = std::clamp(v * factor, -kUploadClamp, kUploadClamp);
        }
    }
}

} // namespace

Federation::Federation(const FederationConfig& cfg) : cfg_(cfg) {
    cfg_.validate();
    setup(build_parent(cfg_.data));
}

Federation::Federation(const FederationConfig& cfg, const Dataset& parent) : cfg_(cfg) {
    cfg_.validate();
    setup(parent);
}

void Federation::setup(const Dataset& parent) {
    parent.validate();
    const std::uint64_t master = cfg_.master_seed;

    // global clean test set is carved before partitioning
    const SplitResult carved =
        split_held_out(parent, cfg_.data.test_fraction, stable_hash({master, seed_salt::kTestSplit}));
    global_test_ = carved.held_out;
    if (global_test_.size() == 0) throw std::invalid_argument("global test set is empty");

    PartitionPlan plan;
    if (cfg_.num_clients == 1) {
        plan.client_indices.emplace_back(carved.main.size());
        std::iota(plan.client_indices[0].begin(), plan.client_indices[0].end(), std::size_t{0});
    } else switch (cfg_.data.partition) {
        case DataConfig::Partition::dirichlet:
            plan = dirichlet_partition(carved.main, cfg_.num_clients, cfg_.data.dirichlet_alpha,
                                       stable_hash({master, seed_salt::kPartition}));
            break;
        case DataConfig::Partition::iid:
            plan = dirichlet_partition(carved.main, cfg_.num_clients, kIidDirichletAlpha,
                                       stable_hash({master, seed_salt::kPartition}));
            break;
        case DataConfig::Partition::group:
            plan = group_partition(carved.main);
            if (plan.num_clients() != cfg_.num_clients) {
                throw std::invalid_argument("group partition yields " +
                                            std::to_string(plan.num_clients()) +
                                            " clients but config says " +
                                            std::to_string(cfg_.num_clients));
            }
            break;
    }

    // adversary picks its victims once, up front
    poisoned_.clear();
    const std::size_t n_poisoned = static_cast<std::size_t>(
        std::floor(cfg_.adversary.fraction * static_cast<double>(cfg_.num_clients)));
    if (cfg_.adversary.kind != AdversaryConfig::Kind::none && n_poisoned > 0) {
        std::vector<int> ids(cfg_.num_clients);
        std::iota(ids.begin(), ids.end(), 0);
        Rng rng(cfg_.adversary.seed);
        for (std::size_t i = 0; i < n_poisoned; ++i) {
            const std::size_t j = i + static_cast<std::size_t>(rng.below(cfg_.num_clients - i));
            std::swap(ids[i], ids[j]);
        }
        poisoned_.assign(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(n_poisoned));
        std::sort(poisoned_.begin(), poisoned_.end());
    }
    auto is_poisoned = [&](int id) {
        return std::binary_search(poisoned_.begin(), poisoned_.end(), id);
    };

    const auto specs = cfg_.local_specs();
    const auto fleet = make_heterogeneous_fleet(specs, cfg_.num_clients,
                                                stable_hash({master, seed_salt::kFleet}));

    clients_.clear();
    client_eval_.clear();
    for (std::size_t k = 0; k < cfg_.num_clients; ++k) {
        Dataset client_ds = carved.main.subset(plan.client_indices[k]);
        const SplitResult split = split_held_out(client_ds, cfg_.data.client_holdout,
                                                 stable_hash({master, seed_salt::kClientSplit, k}));
        Dataset train = split.main;
        if (train.size() == 0) {
            throw std::invalid_argument("client " + std::to_string(k) + " has an empty train split");
        }

        const int id = static_cast<int>(k);
        if (is_poisoned(id)) {
            switch (cfg_.adversary.kind) {
                case AdversaryConfig::Kind::label_flip:
                    train = inject_label_errors(train, cfg_.adversary.rate,
                                                stable_hash({cfg_.adversary.seed, k}));
                    break;
                case AdversaryConfig::Kind::feature_noise:
                    train = inject_gaussian_noise(train, cfg_.adversary.snr_db,
                                                  stable_hash({cfg_.adversary.seed, k}));
                    break;
                default:
                    break; // model_scale acts on uploads, not data
            }
        }

        Rng init_rng(stable_hash({master, seed_salt::kModelInit, k}));
        clients_.push_back(ClientState{id, std::move(train), init_model(fleet[k], init_rng),
                                       stable_hash({master, seed_salt::kClientStream, k})});
        client_eval_.push_back(split.held_out);
    }

    Rng plugin_rng(stable_hash({master, seed_salt::kPluginInit}));
    global_model_ = init_model(cfg_.plugin_spec(), plugin_rng);
}

RoundRecord Federation::run_round(int t, AuditJsonlWriter* audit) {
    const std::uint64_t master = cfg_.master_seed;
    const auto sampled = sample_clients(
        cfg_.num_clients, cfg_.active_ratio,
        stable_hash({master, seed_salt::kSampleClients, static_cast<std::uint64_t>(t)}));

    std::vector<ClientUpload> uploads;
    uploads.reserve(sampled.size());
    double loss_acc = 0.0, grad_acc = 0.0;
    for (int id : sampled) {
        ClientState& state = clients_[static_cast<std::size_t>(id)];
        const std::uint64_t stream = stable_hash({master, seed_salt::kClientStream,
                                                  static_cast<std::uint64_t>(id),
                                                  static_cast<std::uint64_t>(t)});
        ClientUpload upload;
        switch (cfg_.algorithm) {
            case Algorithm::fedmlac:
            case Algorithm::fedmlac_no_lpa:
                upload = fedmlac_update(state, global_model_, cfg_.update, stream);
                break;
            case Algorithm::fedmlac_no_ml: {
                // no mutual learning: CE-only training. Homogeneous clients
                // train the broadcast model directly and upload it;
                // heterogeneous clients train their personalized model and
                // return the broadcast unchanged.
                if (state.local_model.spec == global_model_.spec) {
                    upload = fedavg_update(state, global_model_, cfg_.update, stream);
                } else {
                    LocalUpdateConfig ce_only = cfg_.update;
                    ce_only.alpha = 1.0;
                    ce_only.update_plugin = false;
                    upload = fedmlac_update(state, global_model_, ce_only, stream);
                }
                break;
            }
            case Algorithm::fedavg:
                upload = fedavg_update(state, global_model_, cfg_.update, stream);
                break;
            case Algorithm::fedprox:
                upload = fedprox_update(state, global_model_, cfg_.update, stream);
                break;
        }
        if (cfg_.adversary.kind == AdversaryConfig::Kind::model_scale &&
            std::binary_search(poisoned_.begin(), poisoned_.end(), id)) {
            scale_model(upload.model, cfg_.adversary.factor);
        }
        loss_acc += upload.train_loss;
        grad_acc += upload.grad_sq_norm;
        uploads.push_back(std::move(upload));
    }

    RoundRecord record;
    record.round = t;
    record.sampled = sampled;
    record.mean_train_loss = loss_acc / static_cast<double>(uploads.size());
    record.mean_grad_sq = grad_acc / static_cast<double>(uploads.size());

    const bool uses_lpa =
        cfg_.algorithm == Algorithm::fedmlac || cfg_.algorithm == Algorithm::fedmlac_no_ml;
    if (uses_lpa) {
        LpaResult result = lpa_aggregate(uploads, cfg_.aggregation);
        global_model_ = std::move(result.global);
        for (const TrustedSet& ts : result.trusted) {
            record.trusted_sizes.push_back(ts.members.size());
            record.trusted_members.push_back(ts.members);
        }
        if (audit != nullptr) audit->append(t, result);
    } else {
        global_model_ = fedavg_aggregate(uploads);
        record.trusted_sizes.assign(global_model_.layers.size(), uploads.size());
    }

    const EvalMetrics m = evaluate(global_model_, global_test_);
    record.test_acc = m.accuracy;
    record.macro_f1 = m.macro_f1;
    if (cfg_.eval_personalized) {
        record.personalized_acc_global = personalized_accuracy_global();
        record.personalized_acc_local = personalized_accuracy_local();
    }
    return record;
}

std::vector<RoundRecord> Federation::run(MetricsCsvWriter* metrics, AuditJsonlWriter* audit,
                                         PersonalizedCsvWriter* personalized) {
    std::vector<RoundRecord> records;
    records.reserve(static_cast<std::size_t>(cfg_.rounds));
    for (int t = 1; t <= cfg_.rounds; ++t) {
        try {
            records.push_back(run_round(t, audit));
        } catch (const std::exception& e) {
            throw std::runtime_error("round " + std::to_string(t) + ": " + e.what());
        }
        if (metrics != nullptr) metrics->append(records.back());
        if (personalized != nullptr) personalized->append(records.back());
    }
    return records;
}

double Federation::personalized_accuracy_global() const {
    double acc = 0.0;
    for (const ClientState& c : clients_) {
        acc += evaluate(c.local_model, global_test_).accuracy;
    }
    return acc / static_cast<double>(clients_.size());
}

double Federation::personalized_accuracy_local() const {
    double acc = 0.0;
    std::size_t counted = 0;
    for (std::size_t k = 0; k < clients_.size(); ++k) {
        if (client_eval_[k].size() == 0) continue; // tiny clients have no holdout
        acc += evaluate(clients_[k].local_model, client_eval_[k]).accuracy;
        ++counted;
    }
    if (counted == 0) throw std::runtime_error("no client has a local eval split");
    return acc / static_cast<double>(counted);
}

SimulationResult run_simulation(const FederationConfig& cfg, const std::string& metrics_csv_path,
                                const std::string& audit_jsonl_path,
                                const std::string& personalized_csv_path) {
    Federation fed(cfg);
    std::unique_ptr<MetricsCsvWriter> metrics;
    std::unique_ptr<AuditJsonlWriter> audit;
    std::unique_ptr<PersonalizedCsvWriter> personalized;
    if (!metrics_csv_path.empty()) {
        metrics = std::make_unique<MetricsCsvWriter>(metrics_csv_path, cfg.algorithm, cfg.master_seed);
    }
    if (!audit_jsonl_path.empty()) audit = std::make_unique<AuditJsonlWriter>(audit_jsonl_path);
    if (!personalized_csv_path.empty()) {
        personalized = std::make_unique<PersonalizedCsvWriter>(personalized_csv_path);
    }
    SimulationResult result;
    result.records = fed.run(metrics.get(), audit.get(), personalized.get());
    result.global_model = fed.global_model();
    return result;
}

} // namespace fedmlac
