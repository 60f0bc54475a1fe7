#pragma once

#include <cstdint>
#include <vector>

#include "fedmlac/dataset.hpp"
#include "fedmlac/model.hpp"
#include "fedmlac/nn.hpp"

namespace fedmlac {

// Which client-model snapshot teaches the plug-in each batch: the one taken
// at the top of the batch iteration (default) or the just-updated one.
enum class PluginTeacher { snapshot, fresh };

struct LocalUpdateConfig {
    int epochs = 1;          // E
    int batch_size = 16;
    double lr = 0.01;        // eta
    double alpha = 0.5;      // CE/KD blend for the client objective
    double temperature = 1.0;
    double prox_mu = 0.0;    // FedProx only
    PluginTeacher plugin_teacher = PluginTeacher::snapshot;
    bool update_plugin = true; // off = mutual learning disabled on the plug-in side

    void validate() const;
};

struct ClientState {
    int id = 0;
    Dataset dataset;        // train split
    ModelParams local_model; // personalized, persists across rounds
    std::uint64_t rng_seed = 0;
};

struct ClientUpload {
    int client_id = 0;
    ModelParams model; // plug-in model for FedMLAC, local model for baselines
    std::size_t n_k = 0;
    double train_loss = 0.0;   // mean client objective over all steps
    double grad_sq_norm = 0.0; // mean squared l2 norm of the uploaded model's gradient
};

// Mutual-learning local round: per batch, the client model takes one step on
// the blended CE+KD objective, then the plug-in copy takes one KD step with
// the client model as teacher. Batch order is a pure function of
// (stream_seed, epoch). Returns the trained plug-in copy; the personalized
// model is mutated in place.
ClientUpload fedmlac_update(ClientState& state, const ModelParams& plugin,
                            const LocalUpdateConfig& cfg, std::uint64_t stream_seed);

// Baseline: local model is replaced by the broadcast global model, trained
// with plain CE, and uploaded.
ClientUpload fedavg_update(ClientState& state, const ModelParams& global_model,
                           const LocalUpdateConfig& cfg, std::uint64_t stream_seed);

// FedProx: CE plus (prox_mu / 2) * ||w - w_global||^2.
ClientUpload fedprox_update(ClientState& state, const ModelParams& global_model,
                            const LocalUpdateConfig& cfg, std::uint64_t stream_seed);

// Uniform seeded assignment of one spec per client.
std::vector<ModelSpec> make_heterogeneous_fleet(const std::vector<ModelSpec>& specs,
                                                std::size_t num_clients, std::uint64_t seed);

// Seeded-shuffled sample indices chunked into batches; exposed for the
// single-step replay tests.
std::vector<std::vector<std::size_t>> epoch_batches(std::size_t n, int batch_size,
                                                    std::uint64_t stream_seed, int epoch);

} // namespace fedmlac
