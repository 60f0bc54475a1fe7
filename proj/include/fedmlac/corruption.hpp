#pragma once

#include <cstdint>

#include "fedmlac/dataset.hpp"

namespace fedmlac {

// Additive white Gaussian noise on features at a target SNR. The signal
// power is the dataset-mean squared feature entry, so one snr_db yields one
// noise variance for the whole dataset. snr_db >= 100 is the clean
// pass-through convention. Labels, groups, and size are preserved.
Dataset inject_gaussian_noise(const Dataset& ds, double snr_db, std::uint64_t seed);

// Flips exactly floor(rate * n) uniformly chosen labels, each to a uniform
// draw over the other C-1 classes. Features and size are preserved.
Dataset inject_label_errors(const Dataset& ds, double rate, std::uint64_t seed);

// Empirical SNR in dB of `noisy` against the clean reference.
double measure_snr_db(const Dataset& clean, const Dataset& noisy);

} // namespace fedmlac
