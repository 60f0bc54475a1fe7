#include "fedmlac/model.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>

namespace fedmlac {

std::string activation_name(Activation a) {
    return a == Activation::Tanh ? "tanh" : "relu";
}

Activation activation_from_name(const std::string& name) {
    if (name == "tanh") return Activation::Tanh;
    if (name == "relu") return Activation::Relu;
    throw std::invalid_argument("unknown activation '" + name + "' (expected tanh|relu)");
}

ModelSpec ModelSpec::dense(const std::vector<std::size_t>& dims, Activation act) {
    if (dims.size() < 2) throw std::invalid_argument("model spec needs at least input and output dims");
    ModelSpec spec;
    spec.activation = act;
    spec.output_dim = dims.back();
    for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
        spec.layer_dims.emplace_back(dims[i], dims[i + 1]);
    }
    spec.validate();
    return spec;
}

void ModelSpec::validate() const {
    if (layer_dims.empty()) throw std::invalid_argument("model spec has no layers");
    for (std::size_t i = 0; i < layer_dims.size(); ++i) {
        if (layer_dims[i].first == 0 || layer_dims[i].second == 0) {
            throw std::invalid_argument("layer " + std::to_string(i) + ": zero dimension");
        }
        if (i + 1 < layer_dims.size() && layer_dims[i].second != layer_dims[i + 1].first) {
            throw std::invalid_argument("layer " + std::to_string(i) + ": out_dim " +
                                        std::to_string(layer_dims[i].second) + " does not chain into layer " +
                                        std::to_string(i + 1) + " in_dim " +
                                        std::to_string(layer_dims[i + 1].first));
        }
    }
    if (layer_dims.back().second != output_dim) {
        throw std::invalid_argument("last layer out_dim " + std::to_string(layer_dims.back().second) +
                                    " != class count " + std::to_string(output_dim));
    }
}

std::size_t ModelParams::num_params() const {
    std::size_t n = 0;
    for (const auto& l : layers) n += l.num_params();
    return n;
}

bool ModelParams::all_finite() const {
    for (const auto& l : layers) {
        for (double v : l.weights.values())
            if (!std::isfinite(v)) return false;
        for (double v : l.bias)
            if (!std::isfinite(v)) return false;
    }
    return true;
}

void ModelParams::validate() const {
    spec.validate();
    if (layers.size() != spec.layer_dims.size()) {
        throw std::invalid_argument("model has " + std::to_string(layers.size()) + " layers, spec expects " +
                                    std::to_string(spec.layer_dims.size()));
    }
    for (std::size_t i = 0; i < layers.size(); ++i) {
        const auto& [in, out] = spec.layer_dims[i];
        if (layers[i].weights.rows() != out || layers[i].weights.cols() != in ||
            layers[i].bias.size() != out) {
            throw std::invalid_argument("layer " + std::to_string(i) + ": parameter shape does not match spec");
        }
    }
    if (!all_finite()) throw std::invalid_argument("model contains non-finite parameters");
}

double GradientSet::squared_norm() const {
    double s = 0.0;
    for (const auto& l : layers) {
        for (double v : l.weights.values()) s += v * v;
        for (double v : l.bias) s += v * v;
    }
    return s;
}

bool GradientSet::all_finite() const {
    for (const auto& l : layers) {
        for (double v : l.weights.values())
            if (!std::isfinite(v)) return false;
        for (double v : l.bias)
            if (!std::isfinite(v)) return false;
    }
    return true;
}

ModelParams init_model(const ModelSpec& spec, Rng& rng) {
    spec.validate();
    ModelParams model;
    model.spec = spec;
    model.layers.reserve(spec.layer_dims.size());
    for (const auto& [in, out] : spec.layer_dims) {
        LayerParams layer;
        layer.weights = Matrix(out, in);
        const double bound = std::sqrt(6.0 / static_cast<double>(in + out));
        for (double& w : layer.weights.values()) w = rng.uniform(-bound, bound);
        layer.bias.assign(out, 0.0);
        model.layers.push_back(std::move(layer));
    }
    return model;
}

namespace {

constexpr char kMagic[4] = {'F', 'M', 'L', 'C'};
constexpr std::uint16_t kFormatVersion = 1;

void put_u16(std::ostream& os, std::uint16_t v) {
    const unsigned char b[2] = {static_cast<unsigned char>(v & 0xff),
                                static_cast<unsigned char>(v >> 8)};
    os.write(reinterpret_cast<const char*>(b), 2);
}

void put_u32(std::ostream& os, std::uint32_t v) {
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
    os.write(reinterpret_cast<const char*>(b), 4);
}

void put_f64(std::ostream& os, double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, 8);
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((bits >> (8 * i)) & 0xff);
    os.write(reinterpret_cast<const char*>(b), 8);
}

std::uint16_t get_u16(std::istream& is) {
    unsigned char b[2];
    is.read(reinterpret_cast<char*>(b), 2);
    return static_cast<std::uint16_t>(b[0] | (b[1] << 8));
}

std::uint32_t get_u32(std::istream& is) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
    return v;
}

double get_f64(std::istream& is) {
    unsigned char b[8];
    is.read(reinterpret_cast<char*>(b), 8);
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    double v;
    std::memcpy(&v, &bits, 8);
    return v;
}

} // namespace

void save_model(const ModelParams& model, const std::string& path) {
    model.validate();
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot open checkpoint for writing: " + path);
    os.write(kMagic, 4);
    put_u16(os, kFormatVersion);
    put_u16(os, static_cast<std::uint16_t>(model.layers.size()));
    for (const auto& layer : model.layers) {
        put_u32(os, static_cast<std::uint32_t>(layer.out_dim()));
        put_u32(os, static_cast<std::uint32_t>(layer.in_dim()));
        for (double w : layer.weights.values()) put_f64(os, w);
        for (double b : layer.bias) put_f64(os, b);
    }
    if (!os) throw std::runtime_error("checkpoint write failed: " + path);
}

ModelParams load_model(const std::string& path, Activation act) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open checkpoint: " + path);
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, kMagic, 4) != 0) {
        throw std::runtime_error("not a model checkpoint (bad magic): " + path);
    }
    const std::uint16_t version = get_u16(is);
    if (version != kFormatVersion) {
        throw std::runtime_error("unsupported checkpoint version " + std::to_string(version) + ": " + path);
    }
    const std::uint16_t num_layers = get_u16(is);
    if (num_layers == 0) throw std::runtime_error("checkpoint has zero layers: " + path);

    ModelParams model;
    model.spec.activation = act;
    for (std::uint16_t i = 0; i < num_layers; ++i) {
        const std::uint32_t out = get_u32(is);
        const std::uint32_t in = get_u32(is);
        if (!is || out == 0 || in == 0) {
            throw std::runtime_error("checkpoint layer " + std::to_string(i) + " header corrupt: " + path);
        }
        LayerParams layer;
        layer.weights = Matrix(out, in);
        for (double& w : layer.weights.values()) w = get_f64(is);
        layer.bias.resize(out);
        for (double& b : layer.bias) b = get_f64(is);
        if (!is) throw std::runtime_error("checkpoint truncated at layer " + std::to_string(i) + ": " + path);
        model.spec.layer_dims.emplace_back(in, out);
        model.layers.push_back(std::move(layer));
    }
    model.spec.output_dim = model.spec.layer_dims.back().second;
    model.validate();
    return model;
}

} // namespace fedmlac
