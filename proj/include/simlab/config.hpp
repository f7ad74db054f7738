#pragma once

#include <json.hpp>

#include <string>

namespace simlab::config {

/// Validates `value` against a schema written in the small dialect used by
/// the shipped schema files (type/enum/properties/required/
/// additionalProperties/items/minItems/minimum/oneOf/$ref/default).
/// Violations raise ConfigError naming the offending JSON path.
void validate(const nlohmann::json& value, const nlohmann::json& schema,
              const nlohmann::json& root_schema, const std::string& path);

/// The run-config schema loaded from the schemas directory (SIMLAB_SCHEMA_DIR
/// environment variable, falling back to the build-time location).
const nlohmann::json& run_config_schema();

/// Validates a raw run config and returns it with schema defaults
/// materialized, ready to embed in reports.
nlohmann::json resolve_run_config(const nlohmann::json& raw);

/// Reads, parses, validates, and resolves a config file.
nlohmann::json load_config_file(const std::string& path);

}  // namespace simlab::config
