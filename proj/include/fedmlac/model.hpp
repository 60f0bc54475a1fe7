#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "fedmlac/matrix.hpp"
#include "fedmlac/rng.hpp"

namespace fedmlac {

enum class Activation { Tanh, Relu };

std::string activation_name(Activation a);
Activation activation_from_name(const std::string& name);

// One dense layer: out = act(weights * x + bias), weights [out_dim x in_dim].
struct LayerParams {
    Matrix weights;
    std::vector<double> bias;

    std::size_t in_dim() const { return weights.cols(); }
    std::size_t out_dim() const { return weights.rows(); }
    std::size_t num_params() const { return weights.size() + bias.size(); }

    bool operator==(const LayerParams&) const = default;
};

// Architecture of a dense classifier: layer dims chain into each other and
// the final out_dim is the class count. Hidden layers use `activation`;
// the last layer emits raw logits.
struct ModelSpec {
    std::vector<std::pair<std::size_t, std::size_t>> layer_dims; // (in, out)
    Activation activation = Activation::Tanh;
    std::size_t output_dim = 0;

    // dims = {input, hidden..., classes}
    static ModelSpec dense(const std::vector<std::size_t>& dims,
                           Activation act = Activation::Tanh);

    std::size_t input_dim() const { return layer_dims.front().first; }
    std::size_t num_layers() const { return layer_dims.size(); }

    void validate() const; // throws std::invalid_argument on broken chains

    bool operator==(const ModelSpec&) const = default;
};

struct ModelParams {
    ModelSpec spec;
    std::vector<LayerParams> layers;

    std::size_t num_params() const;
    bool all_finite() const;
    void validate() const; // shape conformance + finiteness

    bool operator==(const ModelParams&) const = default;
};

// Per-layer gradients, shape-congruent with the model they were taken from.
struct GradientSet {
    std::vector<LayerParams> layers;

    double squared_norm() const;
    bool all_finite() const;
};

// Mini-batch of row-major feature vectors with integer class labels.
struct Batch {
    Matrix features; // [B x in_dim]
    std::vector<int> labels;

    std::size_t size() const { return labels.size(); }
};

// Xavier-uniform weights, zero bias; deterministic per rng stream.
ModelParams init_model(const ModelSpec& spec, Rng& rng);

// Checkpoint file, little-endian throughout:
//   "FMLC" | version u16 | layer count u16 |
//   per layer: out_dim u32 | in_dim u32 | weights f64[out*in] row-major | bias f64[out]
// Activations are not stored; load_model applies `act` to hidden layers.
void save_model(const ModelParams& model, const std::string& path);
ModelParams load_model(const std::string& path, Activation act = Activation::Tanh);

} // namespace fedmlac
