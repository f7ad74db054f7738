#include "simlab/config.hpp"

#include <cstdlib>
#include <fstream>

#include "simlab/common.hpp"

#ifndef SIMLAB_SCHEMA_DIR
#define SIMLAB_SCHEMA_DIR "schemas"
#endif

namespace simlab::config {

namespace {

using nlohmann::json;

const json& deref(const json& schema, const json& root) {
  if (schema.is_object() && schema.contains("$ref")) {
    const std::string ref = schema["$ref"].get<std::string>();
    const std::string prefix = "#/defs/";
    if (ref.rfind(prefix, 0) != 0) throw ConfigError("unsupported $ref: " + ref);
    const std::string name = ref.substr(prefix.size());
    if (!root.contains("defs") || !root["defs"].contains(name)) {
      throw ConfigError("unresolved $ref: " + ref);
    }
    return root["defs"][name];
  }
  return schema;
}

bool type_matches(const json& value, const std::string& type) {
  if (type == "object") return value.is_object();
  if (type == "array") return value.is_array();
  if (type == "string") return value.is_string();
  if (type == "boolean") return value.is_boolean();
  if (type == "integer") return value.is_number_integer() || value.is_number_unsigned();
  if (type == "number") return value.is_number();
  throw ConfigError("unknown schema type: " + type);
}

bool try_validate(const json& value, const json& schema, const json& root) {
  try {
    validate(value, schema, root, "");
    return true;
  } catch (const ConfigError&) {
    return false;
  }
}

}  // namespace

void validate(const json& value, const json& schema_in, const json& root,
              const std::string& path) {
  const json& schema = deref(schema_in, root);
  const std::string where = path.empty() ? "$" : path;

  if (schema.contains("oneOf")) {
    for (const auto& branch : schema["oneOf"]) {
      if (try_validate(value, branch, root)) return;
    }
    throw ConfigError(where + ": value matches no allowed form");
  }
  if (schema.contains("enum")) {
    for (const auto& allowed : schema["enum"]) {
      if (value == allowed) return;
    }
    throw ConfigError(where + ": value not in the allowed set");
  }
  if (schema.contains("type")) {
    const std::string type = schema["type"].get<std::string>();
    if (!type_matches(value, type)) {
      throw ConfigError(where + ": expected " + type);
    }
    if (type == "object") {
      const json props =
          schema.contains("properties") ? schema["properties"] : json::object();
      const bool extra = schema.value("additionalProperties", true);
      for (auto it = value.begin(); it != value.end(); ++it) {
        if (props.contains(it.key())) {
          validate(it.value(), props[it.key()], root, where + "." + it.key());
        } else if (!extra) {
          throw ConfigError(where + ": unknown key \"" + it.key() + "\"");
        }
      }
      if (schema.contains("required")) {
        for (const auto& req : schema["required"]) {
          if (!value.contains(req.get<std::string>())) {
            throw ConfigError(where + ": missing required key \"" +
                              req.get<std::string>() + "\"");
          }
        }
      }
    } else if (type == "array") {
      if (schema.contains("minItems") &&
          value.size() < schema["minItems"].get<std::size_t>()) {
        throw ConfigError(where + ": too few items");
      }
      if (schema.contains("items")) {
        int k = 0;
        for (const auto& item : value) {
          validate(item, schema["items"], root, where + "[" + std::to_string(k++) + "]");
        }
      }
    } else if (type == "integer" || type == "number") {
      if (schema.contains("minimum") &&
          value.get<double>() < schema["minimum"].get<double>()) {
        throw ConfigError(where + ": value below minimum");
      }
    }
  }
}

namespace {

// Fill absent object keys with schema defaults, recursively.
json materialize(const json& value, const json& schema_in, const json& root) {
  const json& schema = deref(schema_in, root);
  if (schema.contains("oneOf")) {
    for (const auto& branch : schema["oneOf"]) {
      if (try_validate(value, branch, root)) return materialize(value, branch, root);
    }
    return value;
  }
  if (!schema.contains("type")) return value;
  const std::string type = schema["type"].get<std::string>();
  if (type == "object" && value.is_object() && schema.contains("properties")) {
    json out = value;
    for (auto it = schema["properties"].begin(); it != schema["properties"].end(); ++it) {
      const json& prop = deref(it.value(), root);
      if (out.contains(it.key())) {
        out[it.key()] = materialize(out[it.key()], it.value(), root);
      } else if (prop.contains("default")) {
        out[it.key()] = materialize(prop["default"], it.value(), root);
      }
    }
    return out;
  }
  if (type == "array" && value.is_array() && schema.contains("items")) {
    json out = json::array();
    for (const auto& item : value) out.push_back(materialize(item, schema["items"], root));
    return out;
  }
  return value;
}

}  // namespace

const json& run_config_schema() {
  static const json schema = [] {
    std::string dir = SIMLAB_SCHEMA_DIR;
    if (const char* env = std::getenv("SIMLAB_SCHEMA_DIR")) dir = env;
    const std::string path = dir + "/run_config.schema.json";
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open schema file " + path);
    json j;
    in >> j;
    return j;
  }();
  return schema;
}

json resolve_run_config(const json& raw) {
  const json& schema = run_config_schema();
  validate(raw, schema, schema, "");
  return materialize(raw, schema, schema);
}

json load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    throw ConfigError(std::string("config parse error: ") + e.what());
  }
  return resolve_run_config(j);
}

}  // namespace simlab::config
