#pragma once

#include <json.hpp>

#include <string>

namespace simlab {

inline constexpr const char* kToolkitVersion = "simlab 0.1.0";

/// Canonical JSON text: keys in lexicographic order (nlohmann default),
/// numbers printed with 17 significant digits so finite doubles round-trip
/// bit-exactly, non-finite doubles as the strings "inf"/"-inf"/"nan".
/// Identical documents always produce byte-identical text.
std::string dump_canonical(const nlohmann::json& j, int indent = 2);

/// Writes text to path atomically (temp file in the same directory, then
/// rename).
void write_file_atomic(const std::string& path, const std::string& text);

/// dump_canonical + write_file_atomic with a trailing newline.
void write_report(const std::string& path, const nlohmann::json& j);

}  // namespace simlab
