#include "fedmlac/nn.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace fedmlac {

namespace {

constexpr double kLogFloor = 1e-12;

double activate(Activation act, double x) {
    return act == Activation::Tanh ? std::tanh(x) : (x > 0.0 ? x : 0.0);
}

// tanh'(x) from the activation value; relu' at 0 taken as 0.
double activate_grad_from_output(Activation act, double y) {
    return act == Activation::Tanh ? 1.0 - y * y : (y > 0.0 ? 1.0 : 0.0);
}

// Per-layer outputs kept for backprop. post[i] is layer i's activated
// output ([B x out_i]); the last entry holds raw logits.
struct ForwardCache {
    std::vector<Matrix> post;
};

Matrix layer_affine(const LayerParams& layer, const Matrix& input, std::size_t layer_index) {
    if (input.cols() != layer.in_dim()) {
        throw std::invalid_argument("layer " + std::to_string(layer_index) + ": input width " +
                                    std::to_string(input.cols()) + " != expected " +
                                    std::to_string(layer.in_dim()));
    }
    Matrix out(input.rows(), layer.out_dim());
    for (std::size_t r = 0; r < input.rows(); ++r) {
        const double* x = input.row(r);
        double* y = out.row(r);
        for (std::size_t o = 0; o < layer.out_dim(); ++o) {
            double acc = layer.bias[o];
            const double* w = layer.weights.row(o);
            for (std::size_t i = 0; i < layer.in_dim(); ++i) acc += w[i] * x[i];
            y[o] = acc;
        }
    }
    return out;
}

ForwardCache forward_cached(const ModelParams& model, const Matrix& features) {
    ForwardCache cache;
    cache.post.reserve(model.layers.size());
    const Matrix* input = &features;
    for (std::size_t l = 0; l < model.layers.size(); ++l) {
        Matrix z = layer_affine(model.layers[l], *input, l);
        if (l + 1 < model.layers.size()) {
            for (double& v : z.values()) v = activate(model.spec.activation, v);
        }
        cache.post.push_back(std::move(z));
        input = &cache.post.back();
    }
    return cache;
}

// dLogits is dLoss/dZ of the final layer (already batch-averaged).
GradientSet backprop(const ModelParams& model, const Matrix& features, const ForwardCache& cache,
                     Matrix dlogits) {
    GradientSet grads;
    grads.layers.resize(model.layers.size());
    Matrix delta = std::move(dlogits); // dLoss/dZ of the current layer
    for (std::size_t l = model.layers.size(); l-- > 0;) {
        const LayerParams& layer = model.layers[l];
        const Matrix& input = l == 0 ? features : cache.post[l - 1];

        LayerParams& g = grads.layers[l];
        g.weights = Matrix(layer.out_dim(), layer.in_dim());
        g.bias.assign(layer.out_dim(), 0.0);
        for (std::size_t r = 0; r < delta.rows(); ++r) {
            const double* d = delta.row(r);
            const double* x = input.row(r);
            for (std::size_t o = 0; o < layer.out_dim(); ++o) {
                g.bias[o] += d[o];
                double* gw = g.weights.row(o);
                for (std::size_t i = 0; i < layer.in_dim(); ++i) gw[i] += d[o] * x[i];
            }
        }

        if (l == 0) break;
        // delta_prev = (delta * W) .* act'(post[l-1])
        Matrix prev(delta.rows(), layer.in_dim());
        for (std::size_t r = 0; r < delta.rows(); ++r) {
            const double* d = delta.row(r);
            const double* a = cache.post[l - 1].row(r);
            double* p = prev.row(r);
            for (std::size_t i = 0; i < layer.in_dim(); ++i) {
                double acc = 0.0;
                for (std::size_t o = 0; o < layer.out_dim(); ++o) acc += d[o] * layer.weights(o, i);
                p[i] = acc * activate_grad_from_output(model.spec.activation, a[i]);
            }
        }
        delta = std::move(prev);
    }
    return grads;
}

void check_batch(const ModelParams& model, const Batch& batch) {
    if (batch.size() == 0) throw std::invalid_argument("empty batch");
    if (batch.features.rows() != batch.labels.size()) {
        throw std::invalid_argument("batch features/labels row mismatch");
    }
    if (batch.features.cols() != model.spec.input_dim()) {
        throw std::invalid_argument("layer 0: input width " + std::to_string(batch.features.cols()) +
                                    " != expected " + std::to_string(model.spec.input_dim()));
    }
}

void check_labels(const std::vector<int>& labels, std::size_t num_classes) {
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= num_classes) {
            throw std::invalid_argument("label " + std::to_string(labels[i]) + " at row " +
                                        std::to_string(i) + " out of range [0, " +
                                        std::to_string(num_classes) + ")");
        }
    }
}

} // namespace

Matrix forward(const ModelParams& model, const Batch& batch) {
    check_batch(model, batch);
    return forward_cached(model, batch.features).post.back();
}

Matrix softmax(const Matrix& logits, double temperature) {
    if (!(temperature > 0.0)) throw std::invalid_argument("softmax temperature must be positive");
    Matrix probs(logits.rows(), logits.cols());
    for (std::size_t r = 0; r < logits.rows(); ++r) {
        const double* z = logits.row(r);
        double* p = probs.row(r);
        double zmax = z[0];
        for (std::size_t c = 1; c < logits.cols(); ++c) zmax = std::max(zmax, z[c]);
        double sum = 0.0;
        for (std::size_t c = 0; c < logits.cols(); ++c) {
            p[c] = std::exp((z[c] - zmax) / temperature);
            sum += p[c];
        }
        for (std::size_t c = 0; c < logits.cols(); ++c) p[c] /= sum;
    }
    return probs;
}

double cross_entropy(const Matrix& probs, const std::vector<int>& labels) {
    if (probs.rows() != labels.size()) throw std::invalid_argument("probs/labels row mismatch");
    if (probs.rows() == 0) throw std::invalid_argument("empty probability matrix");
    check_labels(labels, probs.cols());
    double total = 0.0;
    for (std::size_t r = 0; r < probs.rows(); ++r) {
        total += -std::log(std::max(probs(r, static_cast<std::size_t>(labels[r])), kLogFloor));
    }
    return total / static_cast<double>(probs.rows());
}

double kl_divergence(const Matrix& p, const Matrix& q) {
    if (!p.same_shape(q)) throw std::invalid_argument("KL divergence: shape mismatch");
    if (p.rows() == 0) throw std::invalid_argument("KL divergence: empty input");
    double total = 0.0;
    for (std::size_t r = 0; r < p.rows(); ++r) {
        const double* pr = p.row(r);
        const double* qr = q.row(r);
        for (std::size_t c = 0; c < p.cols(); ++c) {
            if (pr[c] > 0.0) total += pr[c] * std::log(pr[c] / std::max(qr[c], kLogFloor));
        }
    }
    return total / static_cast<double>(p.rows());
}

LossGrads ce_loss_and_grads(const ModelParams& model, const Batch& batch) {
    check_batch(model, batch);
    check_labels(batch.labels, model.spec.output_dim);
    ForwardCache cache = forward_cached(model, batch.features);
    const Matrix probs = softmax(cache.post.back(), 1.0);

    LossGrads out;
    out.loss = cross_entropy(probs, batch.labels);
    const double inv_b = 1.0 / static_cast<double>(batch.size());
    Matrix dlogits(probs.rows(), probs.cols());
    for (std::size_t r = 0; r < dlogits.rows(); ++r) {
        const auto label = static_cast<std::size_t>(batch.labels[r]);
        for (std::size_t c = 0; c < dlogits.cols(); ++c) {
            // kept in lockstep with the alpha-blended form so alpha=1 blends
            // are parameter-exact against plain CE
            const double ce_part = probs(r, c) - (c == label ? 1.0 : 0.0);
            dlogits(r, c) = 1.0 * ce_part * inv_b;
        }
    }
    out.grads = backprop(model, batch.features, cache, std::move(dlogits));
    return out;
}

LossGrads client_loss_and_grads(const ModelParams& client_model, const ModelParams& plugin_model,
                                const Batch& batch, double alpha, double temperature) {
    if (!(alpha >= 0.0 && alpha <= 1.0)) {
        throw std::invalid_argument("alpha must be in [0, 1], got " + std::to_string(alpha));
    }
    check_batch(client_model, batch);
    check_batch(plugin_model, batch);
    check_labels(batch.labels, client_model.spec.output_dim);
    if (plugin_model.spec.output_dim != client_model.spec.output_dim) {
        throw std::invalid_argument("client/plugin class count mismatch");
    }

    ForwardCache cache = forward_cached(client_model, batch.features);
    const Matrix& student_logits = cache.post.back();
    const Matrix teacher_logits = forward(plugin_model, batch);

    const Matrix probs_ce = softmax(student_logits, 1.0);
    const Matrix student = softmax(student_logits, temperature);
    const Matrix teacher = softmax(teacher_logits, temperature);

    const double ce = cross_entropy(probs_ce, batch.labels);
    const double kl = kl_divergence(teacher, student);

    LossGrads out;
    out.loss = alpha * ce + (1.0 - alpha) * kl;

    const double inv_b = 1.0 / static_cast<double>(batch.size());
    Matrix dlogits(student_logits.rows(), student_logits.cols());
    for (std::size_t r = 0; r < dlogits.rows(); ++r) {
        const auto label = static_cast<std::size_t>(batch.labels[r]);
        for (std::size_t c = 0; c < dlogits.cols(); ++c) {
            const double ce_part = probs_ce(r, c) - (c == label ? 1.0 : 0.0);
            const double kd_part = (student(r, c) - teacher(r, c)) / temperature;
            dlogits(r, c) = alpha * ce_part * inv_b + (1.0 - alpha) * kd_part * inv_b;
        }
    }
    out.grads = backprop(client_model, batch.features, cache, std::move(dlogits));
    return out;
}

LossGrads plugin_loss_and_grads(const ModelParams& client_model, const ModelParams& plugin_model,
                                const Batch& batch, double temperature) {
    check_batch(client_model, batch);
    check_batch(plugin_model, batch);
    if (plugin_model.spec.output_dim != client_model.spec.output_dim) {
        throw std::invalid_argument("client/plugin class count mismatch");
    }

    ForwardCache cache = forward_cached(plugin_model, batch.features);
    const Matrix teacher_logits = forward(client_model, batch);

    const Matrix student = softmax(cache.post.back(), temperature);
    const Matrix teacher = softmax(teacher_logits, temperature);

    LossGrads out;
    out.loss = kl_divergence(teacher, student);

    const double scale = 1.0 / (temperature * static_cast<double>(batch.size()));
    Matrix dlogits(student.rows(), student.cols());
    for (std::size_t r = 0; r < student.rows(); ++r) {
        for (std::size_t c = 0; c < student.cols(); ++c) {
            dlogits(r, c) = (student(r, c) - teacher(r, c)) * scale;
        }
    }
    out.grads = backprop(plugin_model, batch.features, cache, std::move(dlogits));
    return out;
}

void sgd_step(ModelParams& model, const GradientSet& grads, double lr) {
    if (grads.layers.size() != model.layers.size()) {
        throw std::invalid_argument("gradient/model layer count mismatch");
    }
    if (!grads.all_finite()) throw std::invalid_argument("non-finite gradient entry");
    for (std::size_t l = 0; l < model.layers.size(); ++l) {
        LayerParams& layer = model.layers[l];
        const LayerParams& g = grads.layers[l];
        if (!layer.weights.same_shape(g.weights) || layer.bias.size() != g.bias.size()) {
            throw std::invalid_argument("layer " + std::to_string(l) + ": gradient shape mismatch");
        }
        for (std::size_t i = 0; i < layer.weights.size(); ++i) {
            layer.weights.values()[i] -= lr * g.weights.values()[i];
        }
        for (std::size_t i = 0; i < layer.bias.size(); ++i) layer.bias[i] -= lr * g.bias[i];
    }
    if (!model.all_finite()) throw std::invalid_argument("sgd step produced non-finite parameters");
}

} // namespace fedmlac
