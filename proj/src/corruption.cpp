#include "fedmlac/corruption.hpp"

#include <cmath>
#include <numeric>
#include <stdexcept>

#include "fedmlac/rng.hpp"

namespace fedmlac {

namespace {

double mean_feature_power(const Dataset& ds) {
    double total = 0.0;
    std::size_t count = 0;
    for (const Sample& s : ds.samples) {
        for (double v : s.features) total += v * v;
        count += s.features.size();
    }
    return count > 0 ? total / static_cast<double>(count) : 0.0;
}

} // namespace

Dataset inject_gaussian_noise(const Dataset& ds, double snr_db, std::uint64_t seed) {
    ds.validate();
    if (snr_db >= 100.0) return ds; // clean condition

    const double signal_power = mean_feature_power(ds);
    const double noise_sigma = std::sqrt(signal_power / std::pow(10.0, snr_db / 10.0));

    Rng rng(seed);
    Dataset out = ds;
    for (Sample& s : out.samples) {
        for (double& v : s.features) v += noise_sigma * rng.normal();
    }
    return out;
}

Dataset inject_label_errors(const Dataset& ds, double rate, std::uint64_t seed) {
    ds.validate();
    if (rate < 0.0 || rate > 1.0) throw std::invalid_argument("label error rate must be in [0, 1]");
    if (ds.num_classes < 2) throw std::invalid_argument("label errors need at least 2 classes");

    const std::size_t n_flip = static_cast<std::size_t>(
        std::floor(rate * static_cast<double>(ds.size())));
    Rng rng(seed);
    std::vector<std::size_t> idx(ds.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    rng.shuffle(idx);
    idx.resize(n_flip);
    std::sort(idx.begin(), idx.end());

    Dataset out = ds;
    for (std::size_t i : idx) {
        const int old_label = out.samples[i].label;
        int new_label = rng.uniform_int(0, ds.num_classes - 2);
        if (new_label >= old_label) ++new_label;
        out.samples[i].label = new_label;
    }
    return out;
}

double measure_snr_db(const Dataset& clean, const Dataset& noisy) {
    if (clean.size() != noisy.size() || clean.feature_dim != noisy.feature_dim) {
        throw std::invalid_argument("SNR measurement: dataset shape mismatch");
    }
    double signal = 0.0, noise = 0.0;
    for (std::size_t i = 0; i < clean.size(); ++i) {
        for (std::size_t j = 0; j < clean.feature_dim; ++j) {
            const double s = clean.samples[i].features[j];
            const double d = noisy.samples[i].features[j] - s;
            signal += s * s;
            noise += d * d;
        }
    }
    if (noise == 0.0) throw std::invalid_argument("SNR measurement: datasets are identical");
    return 10.0 * std::log10(signal / noise);
}

} // namespace fedmlac
