#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fedmlac/dataset.hpp"

namespace fedmlac {

// Disjoint index lists into a parent dataset, one per client, covering every
// sample. Serializable for reproducibility.
struct PartitionPlan {
    enum class Strategy { dirichlet, group_id };

    Strategy strategy = Strategy::dirichlet;
    double alpha = 0.0; // dirichlet only
    std::uint64_t seed = 0;
    std::vector<std::vector<std::size_t>> client_indices;

    std::size_t num_clients() const { return client_indices.size(); }
    // Disjointness + exact coverage of [0, parent_size).
    void validate(std::size_t parent_size) const;

    std::string to_json() const;
    static PartitionPlan from_json(const std::string& text);
};

// Label-skewed split: for each class, client proportions are drawn from
// Dirichlet(alpha * 1_N) and samples assigned by largest-remainder rounding.
// Empty clients are repaired by stealing one sample from the largest client.
PartitionPlan dirichlet_partition(const Dataset& ds, std::size_t num_clients, double alpha,
                                  std::uint64_t seed);

// One client per distinct group_id, ordered by ascending group_id.
PartitionPlan group_partition(const Dataset& ds);

// IID splits are expressed as dirichlet_partition with this concentration.
inline constexpr double kIidDirichletAlpha = 1e6;

} // namespace fedmlac
