#pragma once

#include <nlohmann/json.hpp>

#include <functional>
#include <string>

namespace fairaudit {

using json = nlohmann::json;

// Rounds to 6 significant digits via text round-trip. Report values pass
// through this once so that serialized output is a pure function of the
// inputs, regardless of how the value was computed.
double canon6(double v);

// Recursively canon6-rounds every number in a json document.
json canonicalize(const json& j);

json load_json_file(const std::string& path, const std::string& module);
void write_text_file(const std::string& path, const std::string& content,
                     const std::string& module);
std::string read_text_file(const std::string& path, const std::string& module);

// Formats a double with up to 6 significant digits ("%.6g"), for CSV and
// markdown output.
std::string format_g6(double v);

// Shortest round-trip representation, for data files that must reload exactly.
std::string format_exact(double v);

// Runs fn(i) for i in [0, n). Honors the FAIRAUDIT_THREADS env var
// (default: hardware concurrency). Each index writes only to its own
// output slot, so scheduling never changes results. The first exception,
// by index order, is rethrown.
void parallel_for(int n, const std::function<void(int)>& fn);

}  // namespace fairaudit
