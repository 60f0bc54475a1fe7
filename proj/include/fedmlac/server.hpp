#pragma once

#include <cstdint>
#include <unordered_map>
#include <vector>

#include "fedmlac/client.hpp"
#include "fedmlac/model.hpp"

namespace fedmlac {

struct LayerDeviation {
    int client_id = 0;
    std::size_t layer = 0;
    double deviation = 0.0; // l2 norm of (weights || bias) minus the layer mean
};

struct TrustedSet {
    std::size_t layer = 0;
    std::vector<int> members;      // ascending client id
    std::size_t total_weight = 0;  // sum of n_k over members
};

struct AggregationConfig {
    double v_l = 0.1; // fraction of lowest-deviation clients pruned per layer
    double v_h = 0.1; // fraction of highest-deviation clients pruned per layer

    void validate() const;
    // floor(v_l * m) + floor(v_h * m) must stay below the cohort size m.
    void validate_for_cohort(std::size_t cohort) const;
};

// Unweighted per-layer arithmetic mean over the uploads, in the order given.
// Exact when all uploads are identical.
ModelParams layer_mean(const std::vector<const ModelParams*>& uploads);
ModelParams layer_mean(const std::vector<ModelParams>& uploads);

// delta^{k,l} for every upload and layer, against the given mean model.
std::vector<LayerDeviation> layer_deviations(const std::vector<const ModelParams*>& uploads,
                                             const std::vector<int>& client_ids,
                                             const ModelParams& mean_model);

// Sort ascending by (deviation, client_id), drop floor(v_l*m) lowest and
// floor(v_h*m) highest; the remainder is the trusted set.
TrustedSet trusted_set(std::vector<LayerDeviation> devs, const AggregationConfig& cfg,
                       const std::unordered_map<int, std::size_t>& sample_counts);

struct LpaResult {
    ModelParams global;
    std::vector<TrustedSet> trusted;                    // per layer
    std::vector<std::vector<LayerDeviation>> deviations; // per layer, ascending (deviation, id)
};

// Layer-wise pruning aggregation: per layer, n_k-weighted average over that
// layer's trusted set. Layers may draw from different trusted sets.
LpaResult lpa_aggregate(const std::vector<ClientUpload>& uploads, const AggregationConfig& cfg);

// n_k-weighted average of all uploads.
ModelParams fedavg_aggregate(const std::vector<ClientUpload>& uploads);

} // namespace fedmlac
