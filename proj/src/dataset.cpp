#include "fedmlac/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "fedmlac/rng.hpp"

namespace fedmlac {

void Dataset::validate() const {
    if (samples.empty()) throw std::invalid_argument("dataset is empty");
    if (num_classes < 2) throw std::invalid_argument("dataset needs at least 2 classes");
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const Sample& s = samples[i];
        if (s.features.size() != feature_dim) {
            throw std::invalid_argument("sample " + std::to_string(i) + ": feature dim " +
                                        std::to_string(s.features.size()) + " != " +
                                        std::to_string(feature_dim));
        }
        if (s.label < 0 || s.label >= num_classes) {
            throw std::invalid_argument("sample " + std::to_string(i) + ": label out of range");
        }
        for (double v : s.features) {
            if (!std::isfinite(v)) {
                throw std::invalid_argument("sample " + std::to_string(i) + ": non-finite feature");
            }
        }
    }
}

Dataset Dataset::subset(const std::vector<std::size_t>& indices) const {
    Dataset out;
    out.num_classes = num_classes;
    out.feature_dim = feature_dim;
    out.samples.reserve(indices.size());
    for (std::size_t i : indices) {
        if (i >= samples.size()) throw std::invalid_argument("subset index out of range");
        out.samples.push_back(samples[i]);
    }
    return out;
}

std::vector<std::size_t> Dataset::class_histogram() const {
    std::vector<std::size_t> hist(static_cast<std::size_t>(num_classes), 0);
    for (const Sample& s : samples) ++hist[static_cast<std::size_t>(s.label)];
    return hist;
}

Batch make_batch(const Dataset& ds, const std::vector<std::size_t>& indices) {
    if (indices.empty()) throw std::invalid_argument("empty batch indices");
    Batch b;
    b.features = Matrix(indices.size(), ds.feature_dim);
    b.labels.resize(indices.size());
    for (std::size_t r = 0; r < indices.size(); ++r) {
        const Sample& s = ds.samples.at(indices[r]);
        std::copy(s.features.begin(), s.features.end(), b.features.row(r));
        b.labels[r] = s.label;
    }
    return b;
}

Batch make_batch(const Dataset& ds) {
    std::vector<std::size_t> idx(ds.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    return make_batch(ds, idx);
}

namespace {

// Class means: for C <= d, centered unit basis vectors (a regular simplex);
// beyond that, +/- unit axes; beyond 2d, fixed unit directions drawn from a
// stream seeded only by the class index so the arrangement stays a pure
// function of (C, d).
std::vector<std::vector<double>> class_means(int num_classes, std::size_t dim) {
    const std::size_t c_count = static_cast<std::size_t>(num_classes);
    std::vector<std::vector<double>> means(c_count, std::vector<double>(dim, 0.0));
    if (c_count <= dim) {
        const double centroid = 1.0 / static_cast<double>(c_count);
        const double norm = std::sqrt(1.0 - centroid);
        for (std::size_t c = 0; c < c_count; ++c) {
            for (std::size_t j = 0; j < c_count; ++j) {
                means[c][j] = ((j == c ? 1.0 : 0.0) - centroid) / norm;
            }
        }
        return means;
    }
    for (std::size_t c = 0; c < c_count; ++c) {
        if (c < 2 * dim) {
            means[c][c % dim] = (c / dim) % 2 == 0 ? 1.0 : -1.0;
        } else {
            Rng rng(stable_hash({0x6d65616eULL, c}));
            double norm = 0.0;
            for (double& v : means[c]) {
                v = rng.normal();
                norm += v * v;
            }
            norm = std::sqrt(norm);
            for (double& v : means[c]) v /= norm;
        }
    }
    return means;
}

} // namespace

Dataset synth_gaussian_mixture(int num_classes, std::size_t dim, std::size_t n_per_class,
                               double cluster_spread, std::uint64_t seed) {
    if (num_classes < 2) throw std::invalid_argument("synth: need at least 2 classes");
    if (dim < 1) throw std::invalid_argument("synth: need dim >= 1");
    if (n_per_class < 1) throw std::invalid_argument("synth: need n_per_class >= 1");
    if (cluster_spread < 0.0) throw std::invalid_argument("synth: cluster_spread must be >= 0");

    const auto means = class_means(num_classes, dim);
    Rng rng(seed);
    Dataset ds;
    ds.num_classes = num_classes;
    ds.feature_dim = dim;
    ds.samples.reserve(static_cast<std::size_t>(num_classes) * n_per_class);
    for (int c = 0; c < num_classes; ++c) {
        for (std::size_t i = 0; i < n_per_class; ++i) {
            Sample s;
            s.label = c;
            s.features.resize(dim);
            for (std::size_t j = 0; j < dim; ++j) {
                s.features[j] = means[static_cast<std::size_t>(c)][j] + cluster_spread * rng.normal();
            }
            ds.samples.push_back(std::move(s));
        }
    }
    return ds;
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string cur;
    for (char ch : line) {
        if (ch == ',') {
            fields.push_back(cur);
            cur.clear();
        } else if (ch != '\r') {
            cur += ch;
        }
    }
    fields.push_back(cur);
    return fields;
}

double parse_double_field(const std::string& s, std::size_t row, const std::string& col) {
    double v = 0.0;
    const char* begin = s.data();
    const char* end = begin + s.size();
    auto [ptr, ec] = std::from_chars(begin, end, v);
    if (ec != std::errc{} || ptr != end) {
        throw std::runtime_error("row " + std::to_string(row) + ": non-numeric value '" + s +
                                 "' in column " + col);
    }
    return v;
}

int parse_int_field(const std::string& s, std::size_t row, const std::string& col) {
    int v = 0;
    const char* begin = s.data();
    const char* end = begin + s.size();
    auto [ptr, ec] = std::from_chars(begin, end, v);
    if (ec != std::errc{} || ptr != end) {
        throw std::runtime_error("row " + std::to_string(row) + ": non-integer value '" + s +
                                 "' in column " + col);
    }
    return v;
}

} // namespace

Dataset load_feature_csv(const std::string& path, int expected_classes) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open CSV: " + path);

    std::string line;
    if (!std::getline(is, line)) throw std::runtime_error("CSV is empty (header required): " + path);
    const auto header = split_csv_line(line);

    std::ptrdiff_t label_col = -1, group_col = -1;
    std::vector<std::size_t> feature_cols;
    for (std::size_t i = 0; i < header.size(); ++i) {
        if (header[i] == "label") {
            if (label_col >= 0) throw std::runtime_error("duplicate 'label' column: " + path);
            label_col = static_cast<std::ptrdiff_t>(i);
        } else if (header[i] == "group") {
            if (group_col >= 0) throw std::runtime_error("duplicate 'group' column: " + path);
            group_col = static_cast<std::ptrdiff_t>(i);
        } else {
            feature_cols.push_back(i);
        }
    }
    if (label_col < 0) throw std::runtime_error("CSV header lacks a 'label' column: " + path);
    if (feature_cols.empty()) throw std::runtime_error("CSV has no feature columns: " + path);

    Dataset ds;
    ds.feature_dim = feature_cols.size();
    int max_label = -1;
    std::size_t row = 1; // header is row 1
    while (std::getline(is, line)) {
        ++row;
        if (line.empty() || (line.size() == 1 && line[0] == '\r')) continue;
        const auto fields = split_csv_line(line);
        if (fields.size() != header.size()) {
            throw std::runtime_error("row " + std::to_string(row) + ": expected " +
                                     std::to_string(header.size()) + " fields, got " +
                                     std::to_string(fields.size()));
        }
        Sample s;
        s.features.reserve(ds.feature_dim);
        for (std::size_t i : feature_cols) {
            s.features.push_back(parse_double_field(fields[i], row, header[i]));
        }
        s.label = parse_int_field(fields[static_cast<std::size_t>(label_col)], row, "label");
        if (s.label < 0 || (expected_classes > 0 && s.label >= expected_classes)) {
            throw std::runtime_error("row " + std::to_string(row) + ": label " +
                                     std::to_string(s.label) + " out of range");
        }
        if (group_col >= 0) {
            s.group_id = parse_int_field(fields[static_cast<std::size_t>(group_col)], row, "group");
        }
        max_label = std::max(max_label, s.label);
        ds.samples.push_back(std::move(s));
    }
    if (ds.samples.empty()) throw std::runtime_error("CSV has no data rows: " + path);
    ds.num_classes = expected_classes > 0 ? expected_classes : max_label + 1;
    ds.validate();
    return ds;
}

void save_feature_csv(const Dataset& ds, const std::string& path) {
    ds.validate();
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot open CSV for writing: " + path);
    const bool has_group = !ds.samples.empty() && ds.samples.front().group_id.has_value();
    for (std::size_t j = 0; j < ds.feature_dim; ++j) os << "f" << j << ",";
    os << "label";
    if (has_group) os << ",group";
    os << "\n";
    os.precision(17);
    for (const Sample& s : ds.samples) {
        for (double v : s.features) os << v << ",";
        os << s.label;
        if (has_group) os << "," << s.group_id.value_or(0);
        os << "\n";
    }
    if (!os) throw std::runtime_error("CSV write failed: " + path);
}

SplitResult split_held_out(const Dataset& ds, double held_out_fraction, std::uint64_t seed) {
    if (held_out_fraction < 0.0 || held_out_fraction >= 1.0) {
        throw std::invalid_argument("held_out_fraction must be in [0, 1)");
    }
    std::vector<std::size_t> idx(ds.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    Rng rng(seed);
    rng.shuffle(idx);
    const std::size_t n_held = static_cast<std::size_t>(
        std::floor(held_out_fraction * static_cast<double>(ds.size())));
    std::vector<std::size_t> held(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_held));
    std::vector<std::size_t> main(idx.begin() + static_cast<std::ptrdiff_t>(n_held), idx.end());
    std::sort(held.begin(), held.end());
    std::sort(main.begin(), main.end());
    return {ds.subset(main), ds.subset(held)};
}

double label_entropy(const std::vector<std::size_t>& histogram) {
    std::size_t total = 0;
    for (std::size_t c : histogram) total += c;
    if (total == 0) return 0.0;
    double h = 0.0;
    for (std::size_t c : histogram) {
        if (c == 0) continue;
        const double p = static_cast<double>(c) / static_cast<double>(total);
        h -= p * std::log(p);
    }
    return h;
}

} // namespace fedmlac
