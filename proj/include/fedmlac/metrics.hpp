#pragma once

#include <cstdint>
#include <fstream>
#include <string>

#include "fedmlac/orchestrator.hpp"

namespace fedmlac {

// Per-round metrics stream. One row per round, flushed immediately so a
// crashed run keeps every completed round.
class MetricsCsvWriter {
public:
    static constexpr const char* kHeader =
        "round,algorithm,seed,test_acc,macro_f1,mean_train_loss,mean_grad_sq,"
        "n_sampled,trusted_min,trusted_max";

    MetricsCsvWriter(const std::string& path, Algorithm algorithm, std::uint64_t seed);

    void append(const RoundRecord& record);

private:
    std::ofstream os_;
    std::string algorithm_;
    std::uint64_t seed_;
};

// Optional companion stream for personalized-model metrics, one row per
// round. Kept separate so the main metrics CSV schema stays fixed.
class PersonalizedCsvWriter {
public:
    static constexpr const char* kHeader =
        "round,personalized_acc_local,personalized_acc_global";

    explicit PersonalizedCsvWriter(const std::string& path);

    void append(const RoundRecord& record);

private:
    std::ofstream os_;
};

// Aggregation audit stream: one JSON line per (round, layer) with the sorted
// (client_id, deviation) list and the trusted member ids.
class AuditJsonlWriter {
public:
    explicit AuditJsonlWriter(const std::string& path);

    void append(int round, const LpaResult& result);

private:
    std::ofstream os_;
};

// Shortest decimal form that parses back to the same double.
std::string format_double(double v);

} // namespace fedmlac
