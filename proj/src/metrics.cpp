#include "fedmlac/metrics.hpp"

#include <algorithm>
#include <charconv>
#include <stdexcept>

#include "json.hpp"

namespace fedmlac {

std::string format_double(double v) {
    char buf[32];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    if (ec != std::errc{}) throw std::runtime_error("double formatting failed");
    return std::string(buf, ptr);
}

MetricsCsvWriter::MetricsCsvWriter(const std::string& path, Algorithm algorithm, std::uint64_t seed)
    : os_(path), algorithm_(algorithm_name(algorithm)), seed_(seed) {
    if (!os_) throw std::runtime_error("cannot open metrics CSV for writing: " + path);
    os_ << kHeader << "\n";
    os_.flush();
}

void MetricsCsvWriter::append(const RoundRecord& r) {
    std::size_t trusted_min = 0, trusted_max = 0;
    if (!r.trusted_sizes.empty()) {
        trusted_min = *std::min_element(r.trusted_sizes.begin(), r.trusted_sizes.end());
        trusted_max = *std::max_element(r.trusted_sizes.begin(), r.trusted_sizes.end());
    }
    os_ << r.round << ',' << algorithm_ << ',' << seed_ << ',' << format_double(r.test_acc) << ','
        << format_double(r.macro_f1) << ',' << format_double(r.mean_train_loss) << ','
        << format_double(r.mean_grad_sq) << ',' << r.sampled.size() << ',' << trusted_min << ','
        << trusted_max << "\n";
    os_.flush();
    if (!os_) throw std::runtime_error("metrics CSV write failed");
}

PersonalizedCsvWriter::PersonalizedCsvWriter(const std::string& path) : os_(path) {
    if (!os_) throw std::runtime_error("cannot open personalized CSV for writing: " + path);
    os_ << kHeader << "\n";
    os_.flush();
}

void PersonalizedCsvWriter::append(const RoundRecord& r) {
    os_ << r.round << ',' << format_double(r.personalized_acc_local) << ','
        << format_double(r.personalized_acc_global) << "\n";
    os_.flush();
    if (!os_) throw std::runtime_error("personalized CSV write failed");
}

AuditJsonlWriter::AuditJsonlWriter(const std::string& path) : os_(path) {
    if (!os_) throw std::runtime_error("cannot open audit JSONL for writing: " + path);
}

void AuditJsonlWriter::append(int round, const LpaResult& result) {
    for (std::size_t l = 0; l < result.trusted.size(); ++l) {
        nlohmann::json j;
        j["round"] = round;
        j["layer"] = l;
        auto& devs = j["devs"] = nlohmann::json::array();
        for (const LayerDeviation& d : result.deviations[l]) {
            devs.push_back({d.client_id, d.deviation});
        }
        j["trusted"] = result.trusted[l].members;
        os_ << j.dump() << "\n";
    }
    os_.flush();
    if (!os_) throw std::runtime_error("audit JSONL write failed");
}

} // namespace fedmlac
