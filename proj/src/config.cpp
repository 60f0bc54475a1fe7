#include "fedmlac/config.hpp"

#include <algorithm>
#include <charconv>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

#include "fedmlac/metrics.hpp"

namespace fedmlac {

namespace {

const std::vector<std::string> kSchemaKeys = {
    "federation.algorithm",
    "federation.rounds",
    "federation.clients",
    "federation.active_ratio",
    "federation.master_seed",
    "federation.eval_personalized",
    "model.plugin_layers",
    "model.local_layers",
    "model.activation",
    "train.epochs",
    "train.batch_size",
    "train.lr",
    "train.alpha",
    "train.temperature",
    "train.prox_mu",
    "train.plugin_teacher",
    "aggregation.v_l",
    "aggregation.v_h",
    "adversary.kind",
    "adversary.rate",
    "adversary.snr_db",
    "adversary.factor",
    "adversary.fraction",
    "adversary.seed",
    "data.source",
    "data.classes",
    "data.dim",
    "data.n_per_class",
    "data.cluster_spread",
    "data.seed",
    "data.csv_path",
    "data.partition",
    "data.dirichlet_alpha",
    "data.test_fraction",
    "data.client_holdout",
};

std::string trim(const std::string& s) {
    const auto begin = s.find_first_not_of(" \t\r\n");
    if (begin == std::string::npos) return "";
    const auto end = s.find_last_not_of(" \t\r\n");
    return s.substr(begin, end - begin + 1);
}

std::vector<std::size_t> parse_dims(const std::string& s) {
    std::vector<std::size_t> dims;
    std::stringstream ss(s);
    std::string part;
    while (std::getline(ss, part, ',')) {
        part = trim(part);
        std::size_t v = 0;
        const auto [ptr, ec] = std::from_chars(part.data(), part.data() + part.size(), v);
        if (ec != std::errc{} || ptr != part.data() + part.size() || v == 0) {
            throw std::invalid_argument("bad layer dim '" + part + "'");
        }
        dims.push_back(v);
    }
    if (dims.size() < 2) throw std::invalid_argument("need at least input and output dims");
    return dims;
}

std::string render_dims(const std::vector<std::size_t>& dims) {
    std::string out;
    for (std::size_t i = 0; i < dims.size(); ++i) {
        if (i) out += ",";
        out += std::to_string(dims[i]);
    }
    return out;
}

// Typed readers over the flat map, collecting per-field errors.
class Reader {
public:
    Reader(const ConfigMap& map, std::vector<ConfigError>& errors) : map_(map), errors_(errors) {}

    std::string get_string(const std::string& key, const std::string& fallback) const {
        const auto it = map_.find(key);
        return it == map_.end() ? fallback : it->second;
    }

    template <typename Parse>
    auto get(const std::string& key, auto fallback, Parse parse) const {
        const auto it = map_.find(key);
        if (it == map_.end()) return fallback;
        try {
            return parse(it->second);
        } catch (const std::exception& e) {
            errors_.push_back({key, e.what()});
            return fallback;
        }
    }

    double get_double(const std::string& key, double fallback) const {
        return get(key, fallback, [&](const std::string& s) {
            std::size_t pos = 0;
            const double v = std::stod(s, &pos);
            if (pos != s.size()) throw std::invalid_argument("not a number: '" + s + "'");
            return v;
        });
    }

    int get_int(const std::string& key, int fallback) const {
        return get(key, fallback, [&](const std::string& s) {
            std::size_t pos = 0;
            const long v = std::stol(s, &pos);
            if (pos != s.size()) throw std::invalid_argument("not an integer: '" + s + "'");
            return static_cast<int>(v);
        });
    }

    std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const {
        return get(key, fallback, [&](const std::string& s) {
            std::uint64_t v = 0;
            const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
            if (ec != std::errc{} || ptr != s.data() + s.size()) {
                throw std::invalid_argument("not an unsigned integer: '" + s + "'");
            }
            return v;
        });
    }

    bool get_bool(const std::string& key, bool fallback) const {
        return get(key, fallback, [&](const std::string& s) {
            if (s == "true" || s == "1" || s == "yes") return true;
            if (s == "false" || s == "0" || s == "no") return false;
            throw std::invalid_argument("not a boolean: '" + s + "'");
        });
    }

private:
    const ConfigMap& map_;
    std::vector<ConfigError>& errors_;
};

} // namespace

const std::vector<std::string>& config_schema_keys() { return kSchemaKeys; }

ConfigMap parse_config_text(const std::string& text) {
    ConfigMap map;
    std::stringstream ss(text);
    std::string line, section;
    std::size_t line_no = 0;
    while (std::getline(ss, line)) {
        ++line_no;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']') {
                throw std::invalid_argument("line " + std::to_string(line_no) + ": unterminated section");
            }
            section = trim(line.substr(1, line.size() - 2));
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw std::invalid_argument("line " + std::to_string(line_no) + ": expected key = value");
        }
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key.empty()) {
            throw std::invalid_argument("line " + std::to_string(line_no) + ": empty key");
        }
        const std::string qualified = section.empty() ? key : section + "." + key;
        if (std::find(kSchemaKeys.begin(), kSchemaKeys.end(), qualified) == kSchemaKeys.end()) {
            throw std::invalid_argument("line " + std::to_string(line_no) + ": unknown config key '" +
                                        qualified + "'");
        }
        map[qualified] = value;
    }
    return map;
}

ConfigMap load_config_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open config: " + path);
    std::stringstream buffer;
    buffer << is.rdbuf();
    const std::string text = buffer.str();
    const auto first = text.find_first_not_of(" \t\r\n");
    if (first != std::string::npos && text[first] == '{') {
        return RunManifest::parse(text).config;
    }
    return parse_config_text(text);
}

void apply_override(ConfigMap& map, const std::string& key_value) {
    const auto eq = key_value.find('=');
    if (eq == std::string::npos) {
        throw std::invalid_argument("override must be KEY=VALUE, got '" + key_value + "'");
    }
    const std::string key = trim(key_value.substr(0, eq));
    const std::string value = trim(key_value.substr(eq + 1));

    if (key.find('.') != std::string::npos) {
        if (std::find(kSchemaKeys.begin(), kSchemaKeys.end(), key) == kSchemaKeys.end()) {
            throw std::invalid_argument("unknown config key '" + key + "'");
        }
        map[key] = value;
        return;
    }
    std::vector<std::string> matches;
    for (const std::string& q : kSchemaKeys) {
        if (q.substr(q.find('.') + 1) == key) matches.push_back(q);
    }
    if (matches.empty()) throw std::invalid_argument("unknown config key '" + key + "'");
    if (matches.size() > 1) {
        std::string msg = "ambiguous config key '" + key + "' (candidates:";
        for (const std::string& m : matches) msg += " " + m;
        throw std::invalid_argument(msg + ")");
    }
    map[matches.front()] = value;
}

void apply_env_defaults(ConfigMap& map) {
    if (map.contains("federation.master_seed")) return;
    if (const char* env = std::getenv("FEDMLAC_SEED")) {
        map["federation.master_seed"] = env;
    }
}

FederationConfig resolve_config(const ConfigMap& map, std::vector<ConfigError>& errors) {
    for (const auto& [key, value] : map) {
        if (std::find(kSchemaKeys.begin(), kSchemaKeys.end(), key) == kSchemaKeys.end()) {
            errors.push_back({key, "unknown config key"});
        }
    }

    const Reader r(map, errors);
    FederationConfig cfg;

    cfg.algorithm = r.get("federation.algorithm", cfg.algorithm,
                          [](const std::string& s) { return algorithm_from_name(s); });
    cfg.rounds = r.get_int("federation.rounds", cfg.rounds);
    cfg.num_clients = r.get_u64("federation.clients", cfg.num_clients);
    cfg.active_ratio = r.get_double("federation.active_ratio", cfg.active_ratio);
    cfg.master_seed = r.get_u64("federation.master_seed", cfg.master_seed);
    cfg.eval_personalized = r.get_bool("federation.eval_personalized", cfg.eval_personalized);

    cfg.plugin_dims = r.get("model.plugin_layers", cfg.plugin_dims,
                            [](const std::string& s) { return parse_dims(s); });
    cfg.local_dims = r.get("model.local_layers", cfg.local_dims, [](const std::string& s) {
        std::vector<std::vector<std::size_t>> all;
        std::stringstream ss(s);
        std::string part;
        while (std::getline(ss, part, ';')) {
            part = trim(part);
            if (!part.empty()) all.push_back(parse_dims(part));
        }
        return all;
    });
    cfg.activation = r.get("model.activation", cfg.activation,
                           [](const std::string& s) { return activation_from_name(s); });

    cfg.update.epochs = r.get_int("train.epochs", cfg.update.epochs);
    cfg.update.batch_size = r.get_int("train.batch_size", cfg.update.batch_size);
    cfg.update.lr = r.get_double("train.lr", cfg.update.lr);
    cfg.update.alpha = r.get_double("train.alpha", cfg.update.alpha);
    cfg.update.temperature = r.get_double("train.temperature", cfg.update.temperature);
    cfg.update.prox_mu = r.get_double("train.prox_mu", cfg.update.prox_mu);
    cfg.update.plugin_teacher =
        r.get("train.plugin_teacher", cfg.update.plugin_teacher, [](const std::string& s) {
            if (s == "snapshot") return PluginTeacher::snapshot;
            if (s == "fresh") return PluginTeacher::fresh;
            throw std::invalid_argument("expected snapshot|fresh, got '" + s + "'");
        });

    cfg.aggregation.v_l = r.get_double("aggregation.v_l", cfg.aggregation.v_l);
    cfg.aggregation.v_h = r.get_double("aggregation.v_h", cfg.aggregation.v_h);

    cfg.adversary.kind = r.get("adversary.kind", cfg.adversary.kind,
                               [](const std::string& s) { return adversary_kind_from_name(s); });
    cfg.adversary.rate = r.get_double("adversary.rate", cfg.adversary.rate);
    cfg.adversary.snr_db = r.get_double("adversary.snr_db", cfg.adversary.snr_db);
    cfg.adversary.factor = r.get_double("adversary.factor", cfg.adversary.factor);
    cfg.adversary.fraction = r.get_double("adversary.fraction", cfg.adversary.fraction);
    cfg.adversary.seed = r.get_u64("adversary.seed", cfg.adversary.seed);

    cfg.data.source = r.get("data.source", cfg.data.source, [](const std::string& s) {
        if (s == "synthetic") return DataConfig::Source::synthetic;
        if (s == "csv") return DataConfig::Source::csv;
        throw std::invalid_argument("expected synthetic|csv, got '" + s + "'");
    });
    cfg.data.classes = r.get_int("data.classes", cfg.data.classes);
    cfg.data.dim = r.get_u64("data.dim", cfg.data.dim);
    cfg.data.n_per_class = r.get_u64("data.n_per_class", cfg.data.n_per_class);
    cfg.data.cluster_spread = r.get_double("data.cluster_spread", cfg.data.cluster_spread);
    cfg.data.seed = r.get_u64("data.seed", cfg.data.seed);
    cfg.data.csv_path = r.get_string("data.csv_path", cfg.data.csv_path);
    cfg.data.partition = r.get("data.partition", cfg.data.partition, [](const std::string& s) {
        if (s == "dirichlet") return DataConfig::Partition::dirichlet;
        if (s == "group") return DataConfig::Partition::group;
        if (s == "iid") return DataConfig::Partition::iid;
        throw std::invalid_argument("expected dirichlet|group|iid, got '" + s + "'");
    });
    cfg.data.dirichlet_alpha = r.get_double("data.dirichlet_alpha", cfg.data.dirichlet_alpha);
    cfg.data.test_fraction = r.get_double("data.test_fraction", cfg.data.test_fraction);
    cfg.data.client_holdout = r.get_double("data.client_holdout", cfg.data.client_holdout);

    if (errors.empty()) {
        try {
            cfg.validate();
        } catch (const std::exception& e) {
            errors.push_back({"config", e.what()});
        }
    }
    return cfg;
}

ConfigMap canonical_map(const FederationConfig& cfg) {
    ConfigMap map;
    map["federation.algorithm"] = algorithm_name(cfg.algorithm);
    map["federation.rounds"] = std::to_string(cfg.rounds);
    map["federation.clients"] = std::to_string(cfg.num_clients);
    map["federation.active_ratio"] = format_double(cfg.active_ratio);
    map["federation.master_seed"] = std::to_string(cfg.master_seed);
    map["federation.eval_personalized"] = cfg.eval_personalized ? "true" : "false";

    map["model.plugin_layers"] = render_dims(cfg.plugin_dims);
    std::string locals;
    for (std::size_t i = 0; i < cfg.local_dims.size(); ++i) {
        if (i) locals += ";";
        locals += render_dims(cfg.local_dims[i]);
    }
    map["model.local_layers"] = locals;
    map["model.activation"] = activation_name(cfg.activation);

    map["train.epochs"] = std::to_string(cfg.update.epochs);
    map["train.batch_size"] = std::to_string(cfg.update.batch_size);
    map["train.lr"] = format_double(cfg.update.lr);
    map["train.alpha"] = format_double(cfg.update.alpha);
    map["train.temperature"] = format_double(cfg.update.temperature);
    map["train.prox_mu"] = format_double(cfg.update.prox_mu);
    map["train.plugin_teacher"] =
        cfg.update.plugin_teacher == PluginTeacher::snapshot ? "snapshot" : "fresh";

    map["aggregation.v_l"] = format_double(cfg.aggregation.v_l);
    map["aggregation.v_h"] = format_double(cfg.aggregation.v_h);

    map["adversary.kind"] = adversary_kind_name(cfg.adversary.kind);
    map["adversary.rate"] = format_double(cfg.adversary.rate);
    map["adversary.snr_db"] = format_double(cfg.adversary.snr_db);
    map["adversary.factor"] = format_double(cfg.adversary.factor);
    map["adversary.fraction"] = format_double(cfg.adversary.fraction);
    map["adversary.seed"] = std::to_string(cfg.adversary.seed);

    map["data.source"] = cfg.data.source == DataConfig::Source::synthetic ? "synthetic" : "csv";
    map["data.classes"] = std::to_string(cfg.data.classes);
    map["data.dim"] = std::to_string(cfg.data.dim);
    map["data.n_per_class"] = std::to_string(cfg.data.n_per_class);
    map["data.cluster_spread"] = format_double(cfg.data.cluster_spread);
    map["data.seed"] = std::to_string(cfg.data.seed);
    map["data.csv_path"] = cfg.data.csv_path;
    switch (cfg.data.partition) {
        case DataConfig::Partition::dirichlet: map["data.partition"] = "dirichlet"; break;
        case DataConfig::Partition::group: map["data.partition"] = "group"; break;
        case DataConfig::Partition::iid: map["data.partition"] = "iid"; break;
    }
    map["data.dirichlet_alpha"] = format_double(cfg.data.dirichlet_alpha);
    map["data.test_fraction"] = format_double(cfg.data.test_fraction);
    map["data.client_holdout"] = format_double(cfg.data.client_holdout);
    return map;
}

std::string RunManifest::render() const {
    nlohmann::json j;
    j["tool"] = "fedmlac";
    j["version"] = version;
    j["config"] = config;
    j["outputs"] = outputs;
    return j.dump(2) + "\n";
}

RunManifest RunManifest::parse(const std::string& text) {
    const nlohmann::json j = nlohmann::json::parse(text);
    RunManifest m;
    m.version = j.value("version", "");
    m.config = j.at("config").get<ConfigMap>();
    if (j.contains("outputs")) {
        m.outputs = j.at("outputs").get<std::map<std::string, std::string>>();
    }
    return m;
}

} // namespace fedmlac
