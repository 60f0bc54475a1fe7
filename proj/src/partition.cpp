#include "fedmlac/partition.hpp"

#include <algorithm>
#include <map>
#include <numeric>
#include <stdexcept>

#include "json.hpp"

#include "fedmlac/rng.hpp"

namespace fedmlac {

void PartitionPlan::validate(std::size_t parent_size) const {
    if (client_indices.empty()) throw std::invalid_argument("partition plan has no clients");
    std::vector<char> seen(parent_size, 0);
    std::size_t covered = 0;
    for (std::size_t k = 0; k < client_indices.size(); ++k) {
        if (client_indices[k].empty()) {
            throw std::invalid_argument("client " + std::to_string(k) + " has no samples");
        }
        for (std::size_t i : client_indices[k]) {
            if (i >= parent_size) throw std::invalid_argument("partition index out of range");
            if (seen[i]) throw std::invalid_argument("partition index " + std::to_string(i) + " duplicated");
            seen[i] = 1;
            ++covered;
        }
    }
    if (covered != parent_size) {
        throw std::invalid_argument("partition covers " + std::to_string(covered) + " of " +
                                    std::to_string(parent_size) + " samples");
    }
}

std::string PartitionPlan::to_json() const {
    nlohmann::json j;
    j["strategy"] = strategy == Strategy::dirichlet ? "dirichlet" : "group";
    if (strategy == Strategy::dirichlet) j["alpha"] = alpha;
    j["seed"] = seed;
    j["clients"] = client_indices;
    return j.dump(2);
}

PartitionPlan PartitionPlan::from_json(const std::string& text) {
    const nlohmann::json j = nlohmann::json::parse(text);
    PartitionPlan plan;
    const std::string strategy = j.at("strategy").get<std::string>();
    if (strategy == "dirichlet") {
        plan.strategy = Strategy::dirichlet;
        plan.alpha = j.at("alpha").get<double>();
    } else if (strategy == "group") {
        plan.strategy = Strategy::group_id;
    } else {
        throw std::runtime_error("unknown partition strategy '" + strategy + "'");
    }
    plan.seed = j.value("seed", std::uint64_t{0});
    plan.client_indices = j.at("clients").get<std::vector<std::vector<std::size_t>>>();
    return plan;
}

namespace {

// Largest-remainder apportionment of m items by proportions p (sum 1).
std::vector<std::size_t> apportion(const std::vector<double>& p, std::size_t m) {
    const std::size_t n = p.size();
    std::vector<std::size_t> counts(n, 0);
    std::vector<std::pair<double, std::size_t>> remainders; // (-frac, index) for stable sort
    std::size_t assigned = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const double quota = p[i] * static_cast<double>(m);
        counts[i] = static_cast<std::size_t>(quota);
        assigned += counts[i];
        remainders.emplace_back(-(quota - static_cast<double>(counts[i])), i);
    }
    std::sort(remainders.begin(), remainders.end());
    for (std::size_t r = 0; assigned < m; ++r, ++assigned) {
        ++counts[remainders[r % n].second];
    }
    return counts;
}

} // namespace

PartitionPlan dirichlet_partition(const Dataset& ds, std::size_t num_clients, double alpha,
                                  std::uint64_t seed) {
    ds.validate();
    if (num_clients < 2) throw std::invalid_argument("dirichlet partition needs at least 2 clients");
    if (num_clients > ds.size()) {
        throw std::invalid_argument("more clients (" + std::to_string(num_clients) +
                                    ") than samples (" + std::to_string(ds.size()) + ")");
    }
    if (!(alpha > 0.0)) throw std::invalid_argument("dirichlet alpha must be positive");

    Rng rng(seed);
    PartitionPlan plan;
    plan.strategy = PartitionPlan::Strategy::dirichlet;
    plan.alpha = alpha;
    plan.seed = seed;
    plan.client_indices.assign(num_clients, {});

    for (int c = 0; c < ds.num_classes; ++c) {
        std::vector<std::size_t> class_idx;
        for (std::size_t i = 0; i < ds.size(); ++i) {
            if (ds.samples[i].label == c) class_idx.push_back(i);
        }
        if (class_idx.empty()) continue;
        rng.shuffle(class_idx);

        std::vector<double> proportions(num_clients);
        double total = 0.0;
        for (double& g : proportions) {
            g = rng.gamma(alpha);
            total += g;
        }
        if (total <= 0.0) {
            std::fill(proportions.begin(), proportions.end(), 1.0 / static_cast<double>(num_clients));
        } else {
            for (double& g : proportions) g /= total;
        }

        const auto counts = apportion(proportions, class_idx.size());
        std::size_t cursor = 0;
        for (std::size_t k = 0; k < num_clients; ++k) {
            for (std::size_t j = 0; j < counts[k]; ++j) {
                plan.client_indices[k].push_back(class_idx[cursor++]);
            }
        }
    }

    // Empty-client repair: steal one sample from the largest client.
    for (;;) {
        std::ptrdiff_t empty = -1;
        for (std::size_t k = 0; k < num_clients; ++k) {
            if (plan.client_indices[k].empty()) {
                empty = static_cast<std::ptrdiff_t>(k);
                break;
            }
        }
        if (empty < 0) break;
        std::size_t donor = 0;
        for (std::size_t k = 1; k < num_clients; ++k) {
            if (plan.client_indices[k].size() > plan.client_indices[donor].size()) donor = k;
        }
        if (plan.client_indices[donor].size() <= 1) {
            throw std::runtime_error("cannot repair empty client: no donor with more than one sample");
        }
        plan.client_indices[static_cast<std::size_t>(empty)].push_back(plan.client_indices[donor].back());
        plan.client_indices[donor].pop_back();
    }

    for (auto& idx : plan.client_indices) std::sort(idx.begin(), idx.end());
    plan.validate(ds.size());
    return plan;
}

PartitionPlan group_partition(const Dataset& ds) {
    ds.validate();
    std::map<int, std::vector<std::size_t>> by_group;
    for (std::size_t i = 0; i < ds.size(); ++i) {
        if (!ds.samples[i].group_id.has_value()) {
            throw std::invalid_argument("sample " + std::to_string(i) + " has no group_id");
        }
        by_group[*ds.samples[i].group_id].push_back(i);
    }
    PartitionPlan plan;
    plan.strategy = PartitionPlan::Strategy::group_id;
    for (auto& [group, idx] : by_group) plan.client_indices.push_back(std::move(idx));
    plan.validate(ds.size());
    return plan;
}

} // namespace fedmlac
