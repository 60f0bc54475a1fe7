#pragma once

#include <vector>

#include "fedmlac/model.hpp"

namespace fedmlac {

// Logits [B x C] for a batch; hidden layers apply the configured activation,
// the final layer is linear.
Matrix forward(const ModelParams& model, const Batch& batch);

// Row-wise softmax of logits / temperature, max-subtracted for stability.
Matrix softmax(const Matrix& logits, double temperature = 1.0);

// Mean over the batch of -log(max(p[label], 1e-12)).
double cross_entropy(const Matrix& probs, const std::vector<int>& labels);

// Mean over rows of sum_c p(c) * log(p(c) / max(q(c), 1e-12)); terms with
// p(c) == 0 contribute zero.
double kl_divergence(const Matrix& p, const Matrix& q);

struct LossGrads {
    double loss = 0.0;
    GradientSet grads;
};

// Plain cross-entropy objective; gradients w.r.t. `model`.
LossGrads ce_loss_and_grads(const ModelParams& model, const Batch& batch);

// Client objective: alpha * CE(student, y) + (1 - alpha) * KL(teacher || student)
// with the plug-in model as teacher. Teacher outputs are constants; gradients
// flow only through `client_model`. The KL term evaluates both softmaxes at
// `temperature` (no T^2 rescaling); the CE term always uses temperature 1.
LossGrads client_loss_and_grads(const ModelParams& client_model, const ModelParams& plugin_model,
                                const Batch& batch, double alpha, double temperature = 1.0);

// Plug-in objective: KL(client || plugin) with the client model as teacher.
// Gradients flow only through `plugin_model`.
LossGrads plugin_loss_and_grads(const ModelParams& client_model, const ModelParams& plugin_model,
                                const Batch& batch, double temperature = 1.0);

// p' = p - lr * g, in place. Rejects non-finite gradients and results
// (poisoned-update guard).
void sgd_step(ModelParams& model, const GradientSet& grads, double lr);

} // namespace fedmlac
