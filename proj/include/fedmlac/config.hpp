#pragma once

#include <map>
#include <string>
#include <vector>

#include "fedmlac/orchestrator.hpp"

namespace fedmlac {

// Flat, sectioned key-value config. Keys are stored fully qualified as
// "section.key"; see configs/smoke.cfg and the README for the schema.
using ConfigMap = std::map<std::string, std::string>;

struct ConfigError {
    std::string field;
    std::string message;
};

// INI-style text: [section] headers, key = value lines, '#' comments.
ConfigMap parse_config_text(const std::string& text);

// Reads either an INI config or a run manifest JSON (detected by content);
// a manifest contributes its embedded config map.
ConfigMap load_config_file(const std::string& path);

// "key=value" with a qualified or unique-leaf key; throws std::invalid_argument
// on unknown or ambiguous keys.
void apply_override(ConfigMap& map, const std::string& key_value);

// FEDMLAC_SEED -> federation.master_seed, only when the config did not set it
// (lowest precedence).
void apply_env_defaults(ConfigMap& map);

// Typed extraction + validation. Returns a default-initialized config and a
// non-empty error list when the map does not resolve.
FederationConfig resolve_config(const ConfigMap& map, std::vector<ConfigError>& errors);

// Every field of the resolved config, rendered back to the flat schema.
// resolve_config(canonical_map(cfg)) reproduces cfg exactly.
ConfigMap canonical_map(const FederationConfig& cfg);

// All recognized qualified keys.
const std::vector<std::string>& config_schema_keys();

struct RunManifest {
    std::string version;
    ConfigMap config; // fully resolved
    std::map<std::string, std::string> outputs;

    std::string render() const;
    static RunManifest parse(const std::string& text);

    bool operator==(const RunManifest&) const = default;
};

} // namespace fedmlac
