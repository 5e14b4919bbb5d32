#pragma once

#include "pce/dataset.hpp"

#include <filesystem>
#include <string>

namespace pce::io {

// CSV with header `z,s,y,w,x1,...,xp`; the schema lives in a sidecar JSON.
Dataset read_dataset(const std::filesystem::path& csv, const std::filesystem::path& schema_json);
void write_dataset(const Dataset& d, const std::filesystem::path& csv,
                   const std::filesystem::path& schema_json);

nlohmann::json read_json(const std::filesystem::path& path);
// Pretty-printed, LF-terminated.
void write_json(const nlohmann::json& j, const std::filesystem::path& path);

// Round-trippable decimal form of a double.
std::string format_double(double v);

}  // namespace pce::io
