#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "fedmlac/model.hpp"

namespace fedmlac {

struct Sample {
    std::vector<double> features;
    int label = 0;
    std::optional<int> group_id; // speaker/actor tag

    bool operator==(const Sample&) const = default;
};

struct Dataset {
    std::vector<Sample> samples;
    int num_classes = 0;
    std::size_t feature_dim = 0;

    std::size_t size() const { return samples.size(); }
    void validate() const;

    Dataset subset(const std::vector<std::size_t>& indices) const;
    std::vector<std::size_t> class_histogram() const;

    bool operator==(const Dataset&) const = default;
};

// Gathers dataset rows into a training batch.
Batch make_batch(const Dataset& ds, const std::vector<std::size_t>& indices);
Batch make_batch(const Dataset& ds); // whole dataset

// Gaussian blobs around class means on a deterministic simplex-like
// arrangement (centered unit basis vectors for C <= d, signed axes beyond).
// cluster_spread is the per-dimension noise stddev.
Dataset synth_gaussian_mixture(int num_classes, std::size_t dim, std::size_t n_per_class,
                               double cluster_spread, std::uint64_t seed);

// CSV schema: mandatory header; a column named "label" (integer class),
// an optional column named "group" (integer tag), every other column a
// feature. Decimal point, comma separator. If expected_classes > 0,
// labels outside [0, expected_classes) are parse errors naming the row.
Dataset load_feature_csv(const std::string& path, int expected_classes = 0);
void save_feature_csv(const Dataset& ds, const std::string& path);

// Seeded-shuffle split: first fraction of the shuffled order becomes the
// held-out part; both halves keep original dataset order.
struct SplitResult {
    Dataset main;
    Dataset held_out;
};
SplitResult split_held_out(const Dataset& ds, double held_out_fraction, std::uint64_t seed);

// Natural-log entropy of a label histogram.
double label_entropy(const std::vector<std::size_t>& histogram);

} // namespace fedmlac
