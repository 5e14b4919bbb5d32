#pragma once

#include <string>
#include <vector>

namespace pce::cli {

inline constexpr const char* kVersion = "0.1.0";

// Runs one command line (args[0] is the program name) and returns the exit
// code: 0 success, 2 input error, 3 failed identifiability diagnostic,
// 4 numerical failure.
int run_cli(const std::vector<std::string>& args);

// Hex SHA-256 of a file's bytes.
std::string sha256_file(const std::string& path);

}  // namespace pce::cli
