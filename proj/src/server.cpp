#include "fedmlac/server.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace fedmlac {

void AggregationConfig::validate() const {
    if (v_l < 0.0 || v_l >= 1.0) throw std::invalid_argument("v_l must be in [0, 1)");
    if (v_h < 0.0 || v_h >= 1.0) throw std::invalid_argument("v_h must be in [0, 1)");
}

void AggregationConfig::validate_for_cohort(std::size_t cohort) const {
    validate();
    const auto low = static_cast<std::size_t>(std::floor(v_l * static_cast<double>(cohort)));
    const auto high = static_cast<std::size_t>(std::floor(v_h * static_cast<double>(cohort)));
    if (low + high >= cohort) {
        throw std::invalid_argument("pruning config violates floor(v_l*|S|) + floor(v_h*|S|) < |S| "
                                    "(cohort " + std::to_string(cohort) + ", v_l=" + std::to_string(v_l) +
                                    ", v_h=" + std::to_string(v_h) + ")");
    }
}

namespace {

void check_same_arch(const std::vector<const ModelParams*>& uploads) {
    if (uploads.empty()) throw std::invalid_argument("aggregation over an empty upload list");
    for (std::size_t k = 1; k < uploads.size(); ++k) {
        if (uploads[k]->spec != uploads[0]->spec) {
            throw std::invalid_argument("upload " + std::to_string(k) +
                                        " architecture differs from the cohort");
        }
    }
}

// Weighted per-layer average, anchored at the first member so identical
// inputs aggregate to themselves bitwise, then clamped to the members'
// envelope so rounding never leaves the convex hull.
LayerParams weighted_layer_average(const std::vector<const LayerParams*>& layers,
                                   const std::vector<double>& weights) {
    const LayerParams& anchor = *layers.front();
    LayerParams out = anchor;
    for (std::size_t i = 0; i < out.weights.size(); ++i) {
        double acc = 0.0, lo = anchor.weights.values()[i], hi = lo;
        for (std::size_t k = 0; k < layers.size(); ++k) {
            const double v = layers[k]->weights.values()[i];
            acc += weights[k] * (v - anchor.weights.values()[i]);
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
        out.weights.values()[i] = std::clamp(anchor.weights.values()[i] + acc, lo, hi);
    }
    for (std::size_t i = 0; i < out.bias.size(); ++i) {
        double acc = 0.0, lo = anchor.bias[i], hi = lo;
        for (std::size_t k = 0; k < layers.size(); ++k) {
            const double v = layers[k]->bias[i];
            acc += weights[k] * (v - anchor.bias[i]);
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
        out.bias[i] = std::clamp(anchor.bias[i] + acc, lo, hi);
    }
    return out;
}

// Uploads sorted ascending by client id; summation order is fixed by the sort.
std::vector<std::size_t> sorted_order(const std::vector<ClientUpload>& uploads) {
    std::vector<std::size_t> order(uploads.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return uploads[a].client_id < uploads[b].client_id;
    });
    return order;
}

} // namespace

ModelParams layer_mean(const std::vector<const ModelParams*>& uploads) {
    check_same_arch(uploads);
    const std::vector<double> weights(uploads.size(), 1.0 / static_cast<double>(uploads.size()));
    ModelParams mean;
    mean.spec = uploads[0]->spec;
    for (std::size_t l = 0; l < uploads[0]->layers.size(); ++l) {
        std::vector<const LayerParams*> layers;
        layers.reserve(uploads.size());
        for (const ModelParams* m : uploads) layers.push_back(&m->layers[l]);
        mean.layers.push_back(weighted_layer_average(layers, weights));
    }
    return mean;
}

ModelParams layer_mean(const std::vector<ModelParams>& uploads) {
    std::vector<const ModelParams*> ptrs;
    ptrs.reserve(uploads.size());
    for (const ModelParams& m : uploads) ptrs.push_back(&m);
    return layer_mean(ptrs);
}

std::vector<LayerDeviation> layer_deviations(const std::vector<const ModelParams*>& uploads,
                                             const std::vector<int>& client_ids,
                                             const ModelParams& mean_model) {
    check_same_arch(uploads);
    if (client_ids.size() != uploads.size()) {
        throw std::invalid_argument("layer_deviations: id/upload count mismatch");
    }
    std::vector<LayerDeviation> devs;
    devs.reserve(uploads.size() * mean_model.layers.size());
    for (std::size_t k = 0; k < uploads.size(); ++k) {
        if (uploads[k]->spec != mean_model.spec) {
            throw std::invalid_argument("layer_deviations: upload/mean architecture mismatch");
        }
        for (std::size_t l = 0; l < mean_model.layers.size(); ++l) {
            const LayerParams& a = uploads[k]->layers[l];
            const LayerParams& b = mean_model.layers[l];
            double sq = 0.0;
            for (std::size_t i = 0; i < a.weights.size(); ++i) {
                const double d = a.weights.values()[i] - b.weights.values()[i];
                sq += d * d;
            }
            for (std::size_t i = 0; i < a.bias.size(); ++i) {
                const double d = a.bias[i] - b.bias[i];
                sq += d * d;
            }
            devs.push_back({client_ids[k], l, std::sqrt(sq)});
        }
    }
    return devs;
}

TrustedSet trusted_set(std::vector<LayerDeviation> devs, const AggregationConfig& cfg,
                       const std::unordered_map<int, std::size_t>& sample_counts) {
    if (devs.empty()) throw std::invalid_argument("trusted_set: no deviations given");
    cfg.validate_for_cohort(devs.size());
    std::sort(devs.begin(), devs.end(), [](const LayerDeviation& a, const LayerDeviation& b) {
        if (a.deviation != b.deviation) return a.deviation < b.deviation;
        return a.client_id < b.client_id; // deterministic tie-break
    });
    const std::size_t m = devs.size();
    const auto low = static_cast<std::size_t>(std::floor(cfg.v_l * static_cast<double>(m)));
    const auto high = static_cast<std::size_t>(std::floor(cfg.v_h * static_cast<double>(m)));
    if (low + high >= m) throw std::invalid_argument("trusted set would be empty");

    TrustedSet out;
    out.layer = devs.front().layer;
    for (std::size_t i = low; i < m - high; ++i) {
        out.members.push_back(devs[i].client_id);
        const auto it = sample_counts.find(devs[i].client_id);
        if (it == sample_counts.end()) {
            throw std::invalid_argument("trusted_set: unknown client id " +
                                        std::to_string(devs[i].client_id));
        }
        out.total_weight += it->second;
    }
    std::sort(out.members.begin(), out.members.end());
    return out;
}

LpaResult lpa_aggregate(const std::vector<ClientUpload>& uploads, const AggregationConfig& cfg) {
    if (uploads.empty()) throw std::invalid_argument("lpa_aggregate: no uploads");
    cfg.validate_for_cohort(uploads.size());

    const auto order = sorted_order(uploads);
    std::vector<const ModelParams*> models;
    std::vector<int> ids;
    std::unordered_map<int, std::size_t> counts;
    std::unordered_map<int, const ModelParams*> by_id;
    for (std::size_t i : order) {
        models.push_back(&uploads[i].model);
        ids.push_back(uploads[i].client_id);
        if (!counts.emplace(uploads[i].client_id, uploads[i].n_k).second) {
            throw std::invalid_argument("duplicate client id " + std::to_string(uploads[i].client_id) +
                                        " in cohort");
        }
        by_id.emplace(uploads[i].client_id, &uploads[i].model);
    }
    check_same_arch(models);

    const ModelParams mean = layer_mean(models);
    const auto all_devs = layer_deviations(models, ids, mean);
    const std::size_t num_layers = mean.layers.size();

    LpaResult result;
    result.global.spec = mean.spec;
    result.trusted.reserve(num_layers);
    result.deviations.assign(num_layers, {});

    for (std::size_t l = 0; l < num_layers; ++l) {
        std::vector<LayerDeviation> devs;
        for (const LayerDeviation& d : all_devs) {
            if (d.layer == l) devs.push_back(d);
        }
        TrustedSet trusted = trusted_set(devs, cfg, counts);
        trusted.layer = l;

        std::sort(devs.begin(), devs.end(), [](const LayerDeviation& a, const LayerDeviation& b) {
            if (a.deviation != b.deviation) return a.deviation < b.deviation;
            return a.client_id < b.client_id;
        });
        result.deviations[l] = std::move(devs);

        if (trusted.total_weight == 0) {
            throw std::invalid_argument("trusted set for layer " + std::to_string(l) +
                                        " carries zero total sample weight");
        }
        std::vector<const LayerParams*> member_layers;
        std::vector<double> weights;
        for (int id : trusted.members) {
            member_layers.push_back(&by_id.at(id)->layers[l]);
            weights.push_back(static_cast<double>(counts.at(id)) /
                              static_cast<double>(trusted.total_weight));
        }
        result.global.layers.push_back(weighted_layer_average(member_layers, weights));
        result.trusted.push_back(std::move(trusted));
    }
    return result;
}

ModelParams fedavg_aggregate(const std::vector<ClientUpload>& uploads) {
    if (uploads.empty()) throw std::invalid_argument("fedavg_aggregate: no uploads");
    const auto order = sorted_order(uploads);
    std::vector<const ModelParams*> models;
    std::size_t total = 0;
    for (std::size_t i : order) {
        models.push_back(&uploads[i].model);
        total += uploads[i].n_k;
    }
    check_same_arch(models);
    if (total == 0) throw std::invalid_argument("fedavg_aggregate: zero total sample count");

    std::vector<double> weights;
    weights.reserve(models.size());
    for (std::size_t i : order) {
        weights.push_back(static_cast<double>(uploads[i].n_k) / static_cast<double>(total));
    }

    ModelParams global;
    global.spec = models[0]->spec;
    for (std::size_t l = 0; l < models[0]->layers.size(); ++l) {
        std::vector<const LayerParams*> layers;
        for (const ModelParams* m : models) layers.push_back(&m->layers[l]);
        global.layers.push_back(weighted_layer_average(layers, weights));
    }
    return global;
}

} // namespace fedmlac
