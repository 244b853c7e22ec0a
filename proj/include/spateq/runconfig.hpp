#pragma once

#include <optional>
#include <string>

#include "spateq/families.hpp"

// nlohmann single-header from vendor/
#include "json.hpp"

namespace spateq {

/// Model source: a named family with scalars, or explicit matrices.
struct ModelSection {
    bool custom = false;
    Family family;
    Matrix proximity;    // custom only
    Matrix externality;  // custom only
    double custom_sigma = 4.0;

    ModelConfig expand() const;
    int regions() const;
};

struct OutputSection {
    std::string dir = ".";
    bool csv = true;
    bool json = true;
    bool svg = false;
};

/// One CLI invocation: model source, command name, command parameters,
/// output controls. Serializes to a single JSON document and back.
struct RunConfig {
    ModelSection model;
    std::string command;
    nlohmann::ordered_json params = nlohmann::ordered_json::object();  // command keys
    OutputSection output;
};

RunConfig parse_run_config(const nlohmann::ordered_json& doc);
nlohmann::ordered_json serialize_run_config(const RunConfig& rc);

/// Sets one dotted key ("model.phi", "command.range", "output.dir"); the
/// value string is parsed as JSON when possible, else kept verbatim.
/// Overrides take precedence over file values.
void apply_override(RunConfig& rc, const std::string& key, const std::string& value);

/// "a:b" or "a:b:count" range syntax used by grid and bifurcate flags.
struct RangeSpec {
    double lo = 0.0;
    double hi = 1.0;
    int count = 0;  // 0 when unspecified
};
RangeSpec parse_range(const std::string& text);

}  // namespace spateq
