#include "simlab/report.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "simlab/common.hpp"

namespace simlab {

namespace {

using nlohmann::json;

void dump_value(std::ostringstream& os, const json& j, int indent, int level) {
  const std::string pad(static_cast<std::size_t>(indent) * level, ' ');
  const std::string pad_in(static_cast<std::size_t>(indent) * (level + 1), ' ');
  switch (j.type()) {
    case json::value_t::object: {
      if (j.empty()) {
        os << "{}";
        return;
      }
      os << "{\n";
      bool first = true;
      for (auto it = j.begin(); it != j.end(); ++it) {
        if (!first) os << ",\n";
        first = false;
        os << pad_in << json(it.key()).dump() << ": ";
        dump_value(os, it.value(), indent, level + 1);
      }
      os << "\n" << pad << "}";
      return;
    }
    case json::value_t::array: {
      if (j.empty()) {
        os << "[]";
        return;
      }
      os << "[\n";
      bool first = true;
      for (const auto& v : j) {
        if (!first) os << ",\n";
        first = false;
        os << pad_in;
        dump_value(os, v, indent, level + 1);
      }
      os << "\n" << pad << "]";
      return;
    }
    case json::value_t::number_float: {
      const double v = j.get<double>();
      if (std::isnan(v)) {
        os << "\"nan\"";
      } else if (std::isinf(v)) {
        os << (v > 0 ? "\"inf\"" : "\"-inf\"");
      } else {
        char buf[32];
        std::snprintf(buf, sizeof(buf), "%.17g", v);
        os << buf;
      }
      return;
    }
    default:
      os << j.dump();
      return;
  }
}

}  // namespace

std::string dump_canonical(const nlohmann::json& j, int indent) {
  std::ostringstream os;
  dump_value(os, j, indent, 0);
  return os.str();
}

void write_file_atomic(const std::string& path, const std::string& text) {
  namespace fs = std::filesystem;
  const fs::path target(path);
  if (target.has_parent_path()) fs::create_directories(target.parent_path());
  const fs::path tmp = target.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw ConfigError("cannot write " + tmp.string());
    out << text;
  }
  fs::rename(tmp, target);
}

void write_report(const std::string& path, const nlohmann::json& j) {
  write_file_atomic(path, dump_canonical(j) + "\n");
}

}  // namespace simlab
