#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>

#include "fedmlac/corruption.hpp"
#include "fedmlac/dataset.hpp"
#include "fedmlac/partition.hpp"
#include "oracles.hpp"

using namespace fedmlac;

TEST_CASE("synth: zero spread collapses each class onto its mean") {
    const Dataset ds = synth_gaussian_mixture(3, 5, 10, 0.0, 42);
    CHECK(ds.size() == 30);
    for (int c = 0; c < 3; ++c) {
        const Sample& first = ds.samples[static_cast<std::size_t>(c) * 10];
        for (std::size_t i = 0; i < 10; ++i) {
            CHECK(ds.samples[static_cast<std::size_t>(c) * 10 + i].features == first.features);
        }
    }
    // 1-NN on distinct means classifies perfectly
    std::size_t hits = 0;
    for (const Sample& s : ds.samples) {
        double best = 1e300;
        int best_label = -1;
        for (const Sample& t : ds.samples) {
            if (&t == &s) continue;
            double d2 = 0.0;
            for (std::size_t j = 0; j < ds.feature_dim; ++j) {
                const double d = s.features[j] - t.features[j];
                d2 += d * d;
            }
            if (d2 < best) {
                best = d2;
                best_label = t.label;
            }
        }
        if (best_label == s.label) ++hits;
    }
    CHECK(hits == ds.size());
}

TEST_CASE("synth: fixed seed reproduces the dataset bitwise") {
    const Dataset a = synth_gaussian_mixture(4, 8, 50, 0.3, 7);
    const Dataset b = synth_gaussian_mixture(4, 8, 50, 0.3, 7);
    CHECK(a == b);
    const Dataset c = synth_gaussian_mixture(4, 8, 50, 0.3, 8);
    CHECK(a.samples != c.samples);
}

TEST_CASE("synth: linearly separable at moderate spread (logistic oracle >= 95%)") {
    const Dataset ds = synth_gaussian_mixture(4, 8, 200, 0.3, 11);
    const SplitResult split = split_held_out(ds, 0.25, 12);
    std::vector<std::vector<double>> xtr, xte;
    std::vector<int> ytr, yte;
    for (const Sample& s : split.main.samples) {
        xtr.push_back(s.features);
        ytr.push_back(s.label);
    }
    for (const Sample& s : split.held_out.samples) {
        xte.push_back(s.features);
        yte.push_back(s.label);
    }
    const auto oracle = oracles::LogisticOracle::train(xtr, ytr, 4);
    CHECK(oracle.accuracy(xte, yte) >= 0.95);
}

TEST_CASE("dirichlet: huge alpha approaches a uniform split") {
    const Dataset ds = synth_gaussian_mixture(4, 4, 250, 0.5, 3); // 1000 samples, balanced
    const PartitionPlan plan = dirichlet_partition(ds, 5, 1e6, 9);
    for (const auto& idx : plan.client_indices) {
        const Dataset sub = ds.subset(idx);
        const auto hist = sub.class_histogram();
        for (std::size_t c = 0; c < 4; ++c) {
            CHECK(std::abs(static_cast<double>(hist[c]) - 50.0) <= 2.5); // within 5% relative
        }
    }
}

TEST_CASE("dirichlet: plan is a true partition") {
    const Dataset ds = synth_gaussian_mixture(5, 4, 60, 0.5, 21);
    for (double alpha : {0.1, 0.5, 1.0}) {
        const PartitionPlan plan = dirichlet_partition(ds, 7, alpha, 22);
        plan.validate(ds.size()); // throws on duplication or gaps
        std::set<std::size_t> all;
        for (const auto& idx : plan.client_indices) {
            CHECK(!idx.empty());
            all.insert(idx.begin(), idx.end());
        }
        CHECK(all.size() == ds.size());
    }
}

TEST_CASE("dirichlet: smaller alpha gives lower mean label entropy") {
    const Dataset ds = synth_gaussian_mixture(10, 4, 100, 0.5, 31);
    auto mean_entropy = [&](double alpha) {
        double total = 0.0;
        int plans = 0;
        for (std::uint64_t seed = 0; seed < 20; ++seed) {
            const PartitionPlan plan = dirichlet_partition(ds, 10, alpha, 1000 + seed);
            for (const auto& idx : plan.client_indices) {
                total += label_entropy(ds.subset(idx).class_histogram());
                ++plans;
            }
        }
        return total / plans;
    };
    const double h01 = mean_entropy(0.1);
    const double h03 = mean_entropy(0.3);
    const double h05 = mean_entropy(0.5);
    const double h10 = mean_entropy(1.0);
    CHECK(h01 < h10);
    // statistical monotonicity across the ladder
    CHECK(h01 <= h03);
    CHECK(h03 <= h05);
    CHECK(h05 <= h10);
}

TEST_CASE("dirichlet: more clients than samples rejected") {
    const Dataset ds = synth_gaussian_mixture(2, 2, 3, 0.1, 41); // 6 samples
    CHECK_THROWS_AS(dirichlet_partition(ds, 7, 0.5, 42), std::invalid_argument);
}

TEST_CASE("group partition: one client per group") {
    Dataset ds;
    ds.num_classes = 2;
    ds.feature_dim = 1;
    for (int i = 0; i < 9; ++i) {
        Sample s;
        s.features = {static_cast<double>(i)};
        s.label = i % 2;
        s.group_id = i % 3;
        ds.samples.push_back(s);
    }
    const PartitionPlan plan = group_partition(ds);
    CHECK(plan.num_clients() == 3);
    for (const auto& idx : plan.client_indices) {
        CHECK(idx.size() == 3);
        const int g = *ds.samples[idx[0]].group_id;
        for (std::size_t i : idx) CHECK(*ds.samples[i].group_id == g);
    }
}

TEST_CASE("group partition: single group yields a single client") {
    Dataset ds;
    ds.num_classes = 2;
    ds.feature_dim = 1;
    for (int i = 0; i < 4; ++i) {
        Sample s;
        s.features = {0.5};
        s.label = i % 2;
        s.group_id = 7;
        ds.samples.push_back(s);
    }
    const PartitionPlan plan = group_partition(ds);
    CHECK(plan.num_clients() == 1);
    CHECK(plan.client_indices[0].size() == 4);
}

TEST_CASE("group partition: order-insensitive up to ascending group ids") {
    Dataset ds;
    ds.num_classes = 2;
    ds.feature_dim = 1;
    for (int i = 0; i < 12; ++i) {
        Sample s;
        s.features = {static_cast<double>(i)};
        s.label = i % 2;
        s.group_id = (i * 5) % 4;
        ds.samples.push_back(s);
    }
    const PartitionPlan a = group_partition(ds);

    // permute samples, then map plan indices back to feature identity
    Dataset shuffled = ds;
    std::rotate(shuffled.samples.begin(), shuffled.samples.begin() + 5, shuffled.samples.end());
    const PartitionPlan b = group_partition(shuffled);
    CHECK(a.num_clients() == b.num_clients());
    for (std::size_t k = 0; k < a.num_clients(); ++k) {
        std::multiset<double> fa, fb;
        for (std::size_t i : a.client_indices[k]) fa.insert(ds.samples[i].features[0]);
        for (std::size_t i : b.client_indices[k]) fb.insert(shuffled.samples[i].features[0]);
        CHECK(fa == fb);
    }
}

TEST_CASE("group partition: missing group id rejected") {
    Dataset ds = synth_gaussian_mixture(2, 2, 3, 0.1, 51);
    CHECK_THROWS_WITH_AS(group_partition(ds), doctest::Contains("group_id"), std::invalid_argument);
}

TEST_CASE("noise injection: snr >= 100 dB is a clean pass-through") {
    const Dataset ds = synth_gaussian_mixture(3, 6, 40, 0.4, 61);
    CHECK(inject_gaussian_noise(ds, 100.0, 62) == ds);
    CHECK(inject_gaussian_noise(ds, 120.0, 62) == ds);
}

TEST_CASE("noise injection: variance follows the SNR definition") {
    // features all +/-1 so the signal power is exactly 1
    Dataset ds;
    ds.num_classes = 2;
    ds.feature_dim = 16;
    Rng rng(63);
    for (int i = 0; i < 2000; ++i) {
        Sample s;
        s.label = i % 2;
        s.features.resize(16);
        for (double& v : s.features) v = rng.uniform() < 0.5 ? -1.0 : 1.0;
        ds.samples.push_back(s);
    }
    const Dataset noisy = inject_gaussian_noise(ds, 20.0, 64);
    double var = 0.0;
    std::size_t count = 0;
    for (std::size_t i = 0; i < ds.size(); ++i) {
        for (std::size_t j = 0; j < ds.feature_dim; ++j) {
            const double d = noisy.samples[i].features[j] - ds.samples[i].features[j];
            var += d * d;
            ++count;
        }
    }
    var /= static_cast<double>(count);
    CHECK(var == doctest::Approx(0.01).epsilon(0.05));
}

TEST_CASE("noise injection: measured SNR within 0.5 dB of target") {
    const Dataset ds = synth_gaussian_mixture(4, 16, 2500, 0.5, 65); // 1e4 samples
    for (double snr : {10.0, 20.0, 30.0}) {
        const Dataset noisy = inject_gaussian_noise(ds, snr, 66);
        CHECK(std::abs(measure_snr_db(ds, noisy) - snr) <= 0.5);
    }
}

TEST_CASE("noise injection: labels, groups and size preserved; deterministic") {
    Dataset ds = synth_gaussian_mixture(3, 6, 30, 0.4, 67);
    for (std::size_t i = 0; i < ds.size(); ++i) ds.samples[i].group_id = static_cast<int>(i % 4);
    const Dataset a = inject_gaussian_noise(ds, 15.0, 68);
    const Dataset b = inject_gaussian_noise(ds, 15.0, 68);
    CHECK(a == b);
    CHECK(a.size() == ds.size());
    for (std::size_t i = 0; i < ds.size(); ++i) {
        CHECK(a.samples[i].label == ds.samples[i].label);
        CHECK(a.samples[i].group_id == ds.samples[i].group_id);
    }
}

TEST_CASE("label errors: rate 0 leaves the dataset unchanged") {
    const Dataset ds = synth_gaussian_mixture(4, 4, 25, 0.3, 71);
    CHECK(inject_label_errors(ds, 0.0, 72) == ds);
}

TEST_CASE("label errors: exact flip count, never to the original class") {
    const Dataset ds = synth_gaussian_mixture(4, 4, 25, 0.3, 73); // n = 100
    const Dataset flipped = inject_label_errors(ds, 0.5, 74);
    std::size_t flips = 0;
    for (std::size_t i = 0; i < ds.size(); ++i) {
        CHECK(flipped.samples[i].features == ds.samples[i].features);
        if (flipped.samples[i].label != ds.samples[i].label) ++flips;
    }
    CHECK(flips == 50);
}

TEST_CASE("label errors: rate 1.0 flips uniformly over the other classes") {
    const Dataset ds = synth_gaussian_mixture(4, 2, 2500, 0.3, 75); // n = 1e4
    const Dataset flipped = inject_label_errors(ds, 1.0, 76);
    // frequency of each new label per old class
    double counts[4][4] = {};
    for (std::size_t i = 0; i < ds.size(); ++i) {
        const int old_label = ds.samples[i].label;
        const int new_label = flipped.samples[i].label;
        CHECK(new_label != old_label);
        counts[old_label][new_label] += 1.0;
    }
    // chi-squared against uniform over the 3 other classes, per old class;
    // 99.9th percentile of chi2(2) is 13.8
    for (int c = 0; c < 4; ++c) {
        const double expected = 2500.0 / 3.0;
        double chi2 = 0.0;
        for (int d = 0; d < 4; ++d) {
            if (d == c) continue;
            const double diff = counts[c][d] - expected;
            chi2 += diff * diff / expected;
        }
        CHECK(chi2 < 13.8);
    }
}

TEST_CASE("label errors: invalid rate rejected") {
    const Dataset ds = synth_gaussian_mixture(2, 2, 5, 0.1, 77);
    CHECK_THROWS_AS(inject_label_errors(ds, -0.1, 78), std::invalid_argument);
    CHECK_THROWS_AS(inject_label_errors(ds, 1.5, 78), std::invalid_argument);
}

TEST_CASE("csv: two-row file parses") {
    const std::string path = "test_two_rows.csv";
    {
        std::ofstream os(path);
        os << "f0,f1,label\n0.5,-1.25,0\n1.5,2.0,1\n";
    }
    const Dataset ds = load_feature_csv(path);
    CHECK(ds.size() == 2);
    CHECK(ds.feature_dim == 2);
    CHECK(ds.num_classes == 2);
    CHECK(ds.samples[0].features[1] == doctest::Approx(-1.25));
    CHECK(ds.samples[1].label == 1);
    std::remove(path.c_str());
}

TEST_CASE("csv: out-of-range label names the row") {
    const std::string path = "test_bad_label.csv";
    {
        std::ofstream os(path);
        os << "f0,label\n0.5,0\n1.5,2\n";
    }
    CHECK_THROWS_WITH_AS(load_feature_csv(path, 2), doctest::Contains("row 3"), std::runtime_error);
    std::remove(path.c_str());
}

TEST_CASE("csv: ragged row and non-numeric field rejected with row numbers") {
    const std::string path = "test_ragged.csv";
    {
        std::ofstream os(path);
        os << "f0,f1,label\n0.5,1.0,0\n0.5,1\n";
    }
    CHECK_THROWS_WITH_AS(load_feature_csv(path), doctest::Contains("row 3"), std::runtime_error);
    {
        std::ofstream os(path);
        os << "f0,f1,label\n0.5,abc,0\n";
    }
    CHECK_THROWS_WITH_AS(load_feature_csv(path), doctest::Contains("row 2"), std::runtime_error);
    std::remove(path.c_str());
}

TEST_CASE("csv: round trip preserves the dataset") {
    Dataset ds = synth_gaussian_mixture(3, 5, 20, 0.4, 81);
    for (std::size_t i = 0; i < ds.size(); ++i) ds.samples[i].group_id = static_cast<int>(i % 3);
    const std::string path = "test_roundtrip.csv";
    save_feature_csv(ds, path);
    const Dataset loaded = load_feature_csv(path, ds.num_classes);
    CHECK(loaded == ds);
    std::remove(path.c_str());
}

TEST_CASE("split: held-out fraction and determinism") {
    const Dataset ds = synth_gaussian_mixture(4, 4, 50, 0.3, 91); // n = 200
    const SplitResult a = split_held_out(ds, 0.1, 92);
    CHECK(a.held_out.size() == 20);
    CHECK(a.main.size() == 180);
    const SplitResult b = split_held_out(ds, 0.1, 92);
    CHECK(a.main == b.main);
    CHECK(a.held_out == b.held_out);
}

TEST_CASE("partition plan: JSON round trip") {
    const Dataset ds = synth_gaussian_mixture(3, 4, 30, 0.4, 93);
    const PartitionPlan plan = dirichlet_partition(ds, 4, 0.5, 94);
    const PartitionPlan reloaded = PartitionPlan::from_json(plan.to_json());
    CHECK(reloaded.strategy == plan.strategy);
    CHECK(reloaded.alpha == plan.alpha);
    CHECK(reloaded.seed == plan.seed);
    CHECK(reloaded.client_indices == plan.client_indices);
}
