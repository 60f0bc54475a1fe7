#include "fedmlac/client.hpp"

#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

#include "fedmlac/rng.hpp"

namespace fedmlac {

void LocalUpdateConfig::validate() const {
    if (epochs < 1) throw std::invalid_argument("epochs must be >= 1");
    if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
    if (lr < 0.0 || !std::isfinite(lr)) throw std::invalid_argument("lr must be >= 0");
    if (alpha < 0.0 || alpha > 1.0) throw std::invalid_argument("alpha must be in [0, 1]");
    if (!(temperature > 0.0)) throw std::invalid_argument("temperature must be positive");
    if (prox_mu < 0.0) throw std::invalid_argument("prox_mu must be >= 0");
}

std::vector<std::vector<std::size_t>> epoch_batches(std::size_t n, int batch_size,
                                                    std::uint64_t stream_seed, int epoch) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(stable_hash({stream_seed, seed_salt::kBatchOrder, static_cast<std::uint64_t>(epoch)}));
    rng.shuffle(order);
    std::vector<std::vector<std::size_t>> batches;
    for (std::size_t start = 0; start < n; start += static_cast<std::size_t>(batch_size)) {
        const std::size_t stop = std::min(n, start + static_cast<std::size_t>(batch_size));
        batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                             order.begin() + static_cast<std::ptrdiff_t>(stop));
    }
    return batches;
}

namespace {

void check_model_fits_data(const ModelParams& model, const Dataset& ds, const std::string& what,
                           int client_id) {
    if (model.spec.input_dim() != ds.feature_dim || model.spec.output_dim != static_cast<std::size_t>(ds.num_classes)) {
        throw std::invalid_argument("client " + std::to_string(client_id) + ": " + what +
                                    " architecture does not match data (" +
                                    std::to_string(model.spec.input_dim()) + "->" +
                                    std::to_string(model.spec.output_dim) + " vs dim " +
                                    std::to_string(ds.feature_dim) + ", classes " +
                                    std::to_string(ds.num_classes) + ")");
    }
}

void check_finite_loss(double loss, int client_id) {
    if (!std::isfinite(loss)) {
        throw std::runtime_error("client " + std::to_string(client_id) + ": non-finite training loss");
    }
}

} // namespace

ClientUpload fedmlac_update(ClientState& state, const ModelParams& plugin,
                            const LocalUpdateConfig& cfg, std::uint64_t stream_seed) {
    cfg.validate();
    check_model_fits_data(plugin, state.dataset, "plug-in", state.id);
    check_model_fits_data(state.local_model, state.dataset, "local model", state.id);

    ModelParams plugin_model = plugin; // fresh copy of the broadcast every round
    double loss_acc = 0.0, grad_sq_acc = 0.0;
    std::size_t steps = 0;

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        for (const auto& idx : epoch_batches(state.dataset.size(), cfg.batch_size, stream_seed, epoch)) {
            const Batch batch = make_batch(state.dataset, idx);

            const LossGrads client = client_loss_and_grads(state.local_model, plugin_model, batch,
                                                           cfg.alpha, cfg.temperature);
            check_finite_loss(client.loss, state.id);

            LossGrads plug;
            if (cfg.update_plugin && cfg.plugin_teacher == PluginTeacher::snapshot) {
                plug = plugin_loss_and_grads(state.local_model, plugin_model, batch, cfg.temperature);
            }
            sgd_step(state.local_model, client.grads, cfg.lr);
            if (cfg.update_plugin && cfg.plugin_teacher == PluginTeacher::fresh) {
                plug = plugin_loss_and_grads(state.local_model, plugin_model, batch, cfg.temperature);
            }
            if (cfg.update_plugin) {
                check_finite_loss(plug.loss, state.id);
                sgd_step(plugin_model, plug.grads, cfg.lr);
                grad_sq_acc += plug.grads.squared_norm();
            } else {
                grad_sq_acc += client.grads.squared_norm();
            }
            loss_acc += client.loss;
            ++steps;
        }
    }

    ClientUpload upload;
    upload.client_id = state.id;
    upload.model = std::move(plugin_model);
    upload.n_k = state.dataset.size();
    upload.train_loss = loss_acc / static_cast<double>(steps);
    upload.grad_sq_norm = grad_sq_acc / static_cast<double>(steps);
    return upload;
}

namespace {

ClientUpload ce_baseline_update(ClientState& state, const ModelParams& global_model,
                                const LocalUpdateConfig& cfg, std::uint64_t stream_seed,
                                bool proximal) {
    cfg.validate();
    check_model_fits_data(global_model, state.dataset, "global model", state.id);
    if (state.local_model.spec != global_model.spec) {
        throw std::invalid_argument("client " + std::to_string(state.id) +
                                    ": local architecture differs from the global model "
                                    "(homogeneous fleet required)");
    }

    state.local_model = global_model;
    double loss_acc = 0.0, grad_sq_acc = 0.0;
    std::size_t steps = 0;

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        for (const auto& idx : epoch_batches(state.dataset.size(), cfg.batch_size, stream_seed, epoch)) {
            const Batch batch = make_batch(state.dataset, idx);
            LossGrads r = ce_loss_and_grads(state.local_model, batch);
            if (proximal && cfg.prox_mu > 0.0) {
                double sq = 0.0;
                for (std::size_t l = 0; l < state.local_model.layers.size(); ++l) {
                    const auto& cur = state.local_model.layers[l];
                    const auto& anchor = global_model.layers[l];
                    for (std::size_t i = 0; i < cur.weights.size(); ++i) {
                        const double d = cur.weights.values()[i] - anchor.weights.values()[i];
                        r.grads.layers[l].weights.values()[i] += cfg.prox_mu * d;
                        sq += d * d;
                    }
                    for (std::size_t i = 0; i < cur.bias.size(); ++i) {
                        const double d = cur.bias[i] - anchor.bias[i];
                        r.grads.layers[l].bias[i] += cfg.prox_mu * d;
                        sq += d * d;
                    }
                }
                r.loss += 0.5 * cfg.prox_mu * sq;
            }
            check_finite_loss(r.loss, state.id);
            sgd_step(state.local_model, r.grads, cfg.lr);
            loss_acc += r.loss;
            grad_sq_acc += r.grads.squared_norm();
            ++steps;
        }
    }

    ClientUpload upload;
    upload.client_id = state.id;
    upload.model = state.local_model;
    upload.n_k = state.dataset.size();
    upload.train_loss = loss_acc / static_cast<double>(steps);
    upload.grad_sq_norm = grad_sq_acc / static_cast<double>(steps);
    return upload;
}

} // namespace

ClientUpload fedavg_update(ClientState& state, const ModelParams& global_model,
                           const LocalUpdateConfig& cfg, std::uint64_t stream_seed) {
    return ce_baseline_update(state, global_model, cfg, stream_seed, false);
}

ClientUpload fedprox_update(ClientState& state, const ModelParams& global_model,
                            const LocalUpdateConfig& cfg, std::uint64_t stream_seed) {
    return ce_baseline_update(state, global_model, cfg, stream_seed, true);
}

std::vector<ModelSpec> make_heterogeneous_fleet(const std::vector<ModelSpec>& specs,
                                                std::size_t num_clients, std::uint64_t seed) {
    if (specs.empty()) throw std::invalid_argument("fleet needs at least one model spec");
    Rng rng(seed);
    std::vector<ModelSpec> fleet;
    fleet.reserve(num_clients);
    for (std::size_t k = 0; k < num_clients; ++k) {
        fleet.push_back(specs[rng.below(specs.size())]);
    }
    return fleet;
}

} // namespace fedmlac
