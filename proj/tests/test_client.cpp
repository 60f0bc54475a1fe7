#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <map>

#include "fedmlac/client.hpp"
#include "fedmlac/rng.hpp"
#include "oracles.hpp"

using namespace fedmlac;

namespace {

Dataset small_dataset(std::size_t n, std::uint64_t seed) {
    return synth_gaussian_mixture(3, 4, n / 3 + 1, 0.4, seed);
}

ClientState make_client(int id, const Dataset& ds, const ModelSpec& spec, std::uint64_t seed) {
    Rng rng(seed);
    return ClientState{id, ds, init_model(spec, rng), seed};
}

} // namespace

TEST_CASE("defaults follow the round protocol: one epoch, batch 16, lr 0.01") {
    const LocalUpdateConfig cfg;
    CHECK(cfg.epochs == 1);
    CHECK(cfg.batch_size == 16);
    CHECK(cfg.lr == 0.01);
    CHECK(cfg.temperature == 1.0);
    cfg.validate();
}

TEST_CASE("fedmlac_update: single batch, alpha=1 replays one CE step on the local model") {
    const Dataset ds = small_dataset(12, 1);
    const ModelSpec local_spec = ModelSpec::dense({4, 6, 3});
    const ModelSpec plugin_spec = ModelSpec::dense({4, 5, 3});
    ClientState state = make_client(0, ds, local_spec, 2);
    Rng prng(3);
    const ModelParams plugin = init_model(plugin_spec, prng);

    LocalUpdateConfig cfg;
    cfg.epochs = 1;
    cfg.batch_size = static_cast<int>(ds.size()); // one batch
    cfg.alpha = 1.0;
    cfg.lr = 0.05;

    // independent replay: same shuffled batch, one CE step
    ModelParams expected = state.local_model;
    const auto batches = epoch_batches(ds.size(), cfg.batch_size, 77, 0);
    REQUIRE(batches.size() == 1);
    const Batch batch = make_batch(ds, batches[0]);
    const LossGrads ce = ce_loss_and_grads(expected, batch);
    sgd_step(expected, ce.grads, cfg.lr);

    const ClientUpload upload = fedmlac_update(state, plugin, cfg, 77);
    CHECK(state.local_model == expected);
    CHECK(upload.n_k == ds.size());
    CHECK(upload.train_loss == doctest::Approx(ce.loss).epsilon(1e-12));
}

TEST_CASE("fedmlac_update: plug-in takes one KD step against the pre-step teacher") {
    const Dataset ds = small_dataset(9, 11);
    const ModelSpec spec = ModelSpec::dense({4, 5, 3});
    ClientState state = make_client(1, ds, spec, 12);
    Rng prng(13);
    const ModelParams plugin = init_model(spec, prng);

    LocalUpdateConfig cfg;
    cfg.batch_size = static_cast<int>(ds.size());
    cfg.alpha = 0.4;
    cfg.lr = 0.05;

    const ModelParams teacher_snapshot = state.local_model; // pre-step
    const auto batches = epoch_batches(ds.size(), cfg.batch_size, 99, 0);
    const Batch batch = make_batch(ds, batches[0]);
    ModelParams expected_plugin = plugin;
    const LossGrads kd = plugin_loss_and_grads(teacher_snapshot, expected_plugin, batch, cfg.temperature);
    sgd_step(expected_plugin, kd.grads, cfg.lr);

    const ClientUpload upload = fedmlac_update(state, plugin, cfg, 99);
    CHECK(upload.model == expected_plugin);
    CHECK(upload.grad_sq_norm == doctest::Approx(kd.grads.squared_norm()).epsilon(1e-12));
}

TEST_CASE("fedmlac_update: fresh teacher mode distills from the just-updated client model") {
    const Dataset ds = small_dataset(9, 15);
    const ModelSpec spec = ModelSpec::dense({4, 5, 3});
    ClientState snap_state = make_client(1, ds, spec, 16);
    ClientState fresh_state = snap_state;
    Rng prng(17);
    const ModelParams plugin = init_model(spec, prng);

    LocalUpdateConfig cfg;
    cfg.batch_size = static_cast<int>(ds.size());
    cfg.alpha = 0.4;
    cfg.lr = 0.05;
    const ClientUpload snap = fedmlac_update(snap_state, plugin, cfg, 18);
    cfg.plugin_teacher = PluginTeacher::fresh;
    const ClientUpload fresh = fedmlac_update(fresh_state, plugin, cfg, 18);

    // the client model path is unaffected by the teacher mode
    CHECK(snap_state.local_model == fresh_state.local_model);
    CHECK(snap.model != fresh.model);

    // replay: step the client first, then distill from the updated model
    const Batch batch = make_batch(ds, epoch_batches(ds.size(), cfg.batch_size, 18, 0)[0]);
    ModelParams client = snap_state.local_model; // post-step parameters
    ModelParams expected = plugin;
    const LossGrads kd = plugin_loss_and_grads(client, expected, batch, cfg.temperature);
    sgd_step(expected, kd.grads, cfg.lr);
    CHECK(fresh.model == expected);
}

TEST_CASE("fedmlac_update: identical models with alpha=0 are a mutual fixed point") {
    const Dataset ds = small_dataset(12, 21);
    const ModelSpec spec = ModelSpec::dense({4, 5, 3});
    ClientState state = make_client(2, ds, spec, 22);
    const ModelParams plugin = state.local_model; // same architecture and parameters

    LocalUpdateConfig cfg;
    cfg.alpha = 0.0;
    cfg.lr = 0.1;

    const ModelParams before = state.local_model;
    const ClientUpload upload = fedmlac_update(state, plugin, cfg, 31);

    auto max_abs_diff = [](const ModelParams& a, const ModelParams& b) {
        double m = 0.0;
        for (std::size_t l = 0; l < a.layers.size(); ++l) {
            for (std::size_t i = 0; i < a.layers[l].weights.size(); ++i) {
                m = std::max(m, std::abs(a.layers[l].weights.values()[i] -
                                         b.layers[l].weights.values()[i]));
            }
            for (std::size_t i = 0; i < a.layers[l].bias.size(); ++i) {
                m = std::max(m, std::abs(a.layers[l].bias[i] - b.layers[l].bias[i]));
            }
        }
        return m;
    };
    CHECK(max_abs_diff(state.local_model, before) <= 1e-9);
    CHECK(max_abs_diff(upload.model, before) <= 1e-9);
    CHECK(upload.grad_sq_norm <= 1e-18);
}

TEST_CASE("fedmlac_update: plug-in architecture mismatch rejected") {
    const Dataset ds = small_dataset(9, 41);
    ClientState state = make_client(3, ds, ModelSpec::dense({4, 5, 3}), 42);
    Rng prng(43);
    const ModelParams bad_plugin = init_model(ModelSpec::dense({5, 4, 3}), prng);
    const LocalUpdateConfig cfg;
    CHECK_THROWS_AS(fedmlac_update(state, bad_plugin, cfg, 44), std::invalid_argument);
}

TEST_CASE("fedmlac_update: upload does not alias client state") {
    const Dataset ds = small_dataset(9, 51);
    const ModelSpec spec = ModelSpec::dense({4, 5, 3});
    ClientState state = make_client(4, ds, spec, 52);
    Rng prng(53);
    const ModelParams plugin = init_model(spec, prng);
    ClientUpload upload = fedmlac_update(state, plugin, LocalUpdateConfig{}, 54);

    const ModelParams local_before = state.local_model;
    upload.model.layers[0].weights(0, 0) += 100.0;
    CHECK(state.local_model == local_before);
}

TEST_CASE("fedmlac with alpha=1 and plug-in updates disabled matches fedavg step-for-step") {
    const Dataset ds = small_dataset(20, 61);
    const ModelSpec spec = ModelSpec::dense({4, 6, 3});
    Rng grng(62);
    const ModelParams global = init_model(spec, grng);

    // fedmlac client starts from the broadcast parameters
    ClientState ml_state{10, ds, global, 0};
    LocalUpdateConfig ml_cfg;
    ml_cfg.epochs = 2;
    ml_cfg.batch_size = 8;
    ml_cfg.alpha = 1.0;
    ml_cfg.update_plugin = false;
    const ClientUpload ml = fedmlac_update(ml_state, global, ml_cfg, 63);

    ClientState avg_state{10, ds, global, 0};
    LocalUpdateConfig avg_cfg;
    avg_cfg.epochs = 2;
    avg_cfg.batch_size = 8;
    const ClientUpload avg = fedavg_update(avg_state, global, avg_cfg, 63);

    CHECK(ml_state.local_model == avg_state.local_model);
    CHECK(avg.model == ml_state.local_model);
    CHECK(ml.train_loss == doctest::Approx(avg.train_loss).epsilon(1e-12));
}

TEST_CASE("fedavg_update: lr=0 uploads the broadcast model unchanged") {
    const Dataset ds = small_dataset(12, 71);
    const ModelSpec spec = ModelSpec::dense({4, 6, 3});
    ClientState state = make_client(5, ds, spec, 72);
    Rng grng(73);
    const ModelParams global = init_model(spec, grng);
    LocalUpdateConfig cfg;
    cfg.lr = 0.0;
    const ClientUpload upload = fedavg_update(state, global, cfg, 74);
    CHECK(upload.model == global);
}

TEST_CASE("fedavg_update: one batch equals a single CE step") {
    const Dataset ds = small_dataset(10, 81);
    const ModelSpec spec = ModelSpec::dense({4, 6, 3});
    ClientState state = make_client(6, ds, spec, 82);
    Rng grng(83);
    const ModelParams global = init_model(spec, grng);

    LocalUpdateConfig cfg;
    cfg.batch_size = static_cast<int>(ds.size());
    cfg.lr = 0.05;

    ModelParams expected = global;
    const Batch batch = make_batch(ds, epoch_batches(ds.size(), cfg.batch_size, 84, 0)[0]);
    sgd_step(expected, ce_loss_and_grads(expected, batch).grads, cfg.lr);

    const ClientUpload upload = fedavg_update(state, global, cfg, 84);
    CHECK(upload.model == expected);
}

TEST_CASE("fedavg_update: identical data and seeds give identical uploads") {
    const Dataset ds = small_dataset(12, 91);
    const ModelSpec spec = ModelSpec::dense({4, 6, 3});
    ClientState a = make_client(7, ds, spec, 92);
    ClientState b = make_client(8, ds, spec, 92);
    Rng grng(93);
    const ModelParams global = init_model(spec, grng);
    const ClientUpload ua = fedavg_update(a, global, LocalUpdateConfig{}, 94);
    const ClientUpload ub = fedavg_update(b, global, LocalUpdateConfig{}, 94);
    CHECK(ua.model == ub.model);
    CHECK(ua.train_loss == ub.train_loss);
}

TEST_CASE("fedavg_update: heterogeneous local architecture rejected") {
    const Dataset ds = small_dataset(9, 101);
    ClientState state = make_client(9, ds, ModelSpec::dense({4, 5, 3}), 102);
    Rng grng(103);
    const ModelParams global = init_model(ModelSpec::dense({4, 6, 3}), grng);
    CHECK_THROWS_AS(fedavg_update(state, global, LocalUpdateConfig{}, 104), std::invalid_argument);
}

TEST_CASE("fedprox_update: mu=0 is exactly fedavg") {
    const Dataset ds = small_dataset(15, 111);
    const ModelSpec spec = ModelSpec::dense({4, 6, 3});
    Rng grng(112);
    const ModelParams global = init_model(spec, grng);
    ClientState a = make_client(11, ds, spec, 113);
    ClientState b = make_client(11, ds, spec, 113);
    LocalUpdateConfig cfg;
    cfg.epochs = 2;
    const ClientUpload ua = fedprox_update(a, global, cfg, 114);
    const ClientUpload ub = fedavg_update(b, global, cfg, 114);
    CHECK(ua.model == ub.model);
    CHECK(ua.train_loss == ub.train_loss);
}

TEST_CASE("fedprox_update: huge mu anchors the upload to the global model") {
    const Dataset ds = small_dataset(12, 121);
    const ModelSpec spec = ModelSpec::dense({4, 6, 3});
    Rng grng(122);
    const ModelParams global = init_model(spec, grng);
    ClientState state = make_client(12, ds, spec, 123);
    LocalUpdateConfig cfg;
    cfg.prox_mu = 1e6;
    cfg.lr = 1e-7;
    cfg.epochs = 3;
    const ClientUpload upload = fedprox_update(state, global, cfg, 124);
    for (std::size_t l = 0; l < global.layers.size(); ++l) {
        for (std::size_t i = 0; i < global.layers[l].weights.size(); ++i) {
            CHECK(std::abs(upload.model.layers[l].weights.values()[i] -
                           global.layers[l].weights.values()[i]) <= 1e-3);
        }
    }
}

TEST_CASE("fedprox_update: proximal gradient matches finite differences") {
    const Dataset ds = small_dataset(8, 131);
    const ModelSpec spec = ModelSpec::dense({4, 4, 3});
    Rng grng(132);
    const ModelParams global = init_model(spec, grng);
    Rng wrng(133);
    ModelParams point = init_model(spec, wrng); // some point away from the anchor
    const Batch batch = make_batch(ds);
    const double mu = 0.7;

    auto prox_loss = [&](const ModelParams& m) {
        double sq = 0.0;
        for (std::size_t l = 0; l < m.layers.size(); ++l) {
            for (std::size_t i = 0; i < m.layers[l].weights.size(); ++i) {
                const double d = m.layers[l].weights.values()[i] - global.layers[l].weights.values()[i];
                sq += d * d;
            }
            for (std::size_t i = 0; i < m.layers[l].bias.size(); ++i) {
                const double d = m.layers[l].bias[i] - global.layers[l].bias[i];
                sq += d * d;
            }
        }
        return ce_loss_and_grads(m, batch).loss + 0.5 * mu * sq;
    };

    // analytic: CE grads plus mu * (w - w_global)
    LossGrads analytic = ce_loss_and_grads(point, batch);
    for (std::size_t l = 0; l < point.layers.size(); ++l) {
        for (std::size_t i = 0; i < point.layers[l].weights.size(); ++i) {
            analytic.grads.layers[l].weights.values()[i] +=
                mu * (point.layers[l].weights.values()[i] - global.layers[l].weights.values()[i]);
        }
        for (std::size_t i = 0; i < point.layers[l].bias.size(); ++i) {
            analytic.grads.layers[l].bias[i] +=
                mu * (point.layers[l].bias[i] - global.layers[l].bias[i]);
        }
    }
    const auto fd = oracles::finite_difference_grads(point, prox_loss);
    CHECK(oracles::gradient_relative_error(analytic.grads, fd) < 1e-4);
}

TEST_CASE("make_heterogeneous_fleet: single spec gives a homogeneous fleet") {
    const std::vector<ModelSpec> specs = {ModelSpec::dense({4, 6, 3})};
    const auto fleet = make_heterogeneous_fleet(specs, 20, 1);
    CHECK(fleet.size() == 20);
    for (const auto& s : fleet) CHECK(s == specs[0]);
}

TEST_CASE("make_heterogeneous_fleet: assignment is roughly uniform and seeded") {
    std::vector<ModelSpec> specs;
    for (std::size_t h : {4, 5, 6, 7, 8}) specs.push_back(ModelSpec::dense({4, h, 3}));
    const auto fleet = make_heterogeneous_fleet(specs, 100, 7);
    CHECK(fleet == make_heterogeneous_fleet(specs, 100, 7));
    CHECK(fleet != make_heterogeneous_fleet(specs, 100, 8));
    std::map<std::size_t, int> counts;
    for (const auto& s : fleet) ++counts[s.layer_dims[0].second];
    for (const auto& [dim, count] : counts) {
        CHECK(count >= 10);
        CHECK(count <= 30);
    }
}

TEST_CASE("batch order is a pure function of (stream seed, epoch)") {
    const auto a = epoch_batches(50, 16, 1234, 0);
    const auto b = epoch_batches(50, 16, 1234, 0);
    CHECK(a == b);
    CHECK(a != epoch_batches(50, 16, 1234, 1)); // epoch changes the order
    CHECK(a != epoch_batches(50, 16, 1235, 0)); // stream changes the order
    // chunk structure: ceil(50/16) batches, last one partial
    CHECK(a.size() == 4);
    CHECK(a.back().size() == 2);
}
