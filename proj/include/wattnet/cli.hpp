#pragma once

#include <filesystem>
#include <ostream>
#include <string>
#include <vector>

#include "json.hpp"

namespace wattnet::cli {

inline constexpr const char* kVersion = "1.0.0";
inline constexpr int kSchema = 1;

// Effective configuration with every section filled by its defaults.
nlohmann::ordered_json default_config();

// Runs one command line; returns the process exit code.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

std::filesystem::path manifest_path(const std::filesystem::path& output);

}  // namespace wattnet::cli
