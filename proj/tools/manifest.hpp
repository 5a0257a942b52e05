#pragma once

#include <cdemr/io.hpp>

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace cdemr::cli {

std::string tool_version();

// Hex SHA-256 of a file's bytes.
std::string sha256_file(const std::filesystem::path& path);

struct RunManifest {
    std::string command;
    std::vector<std::string> argv;  // arguments after the program name
    Json config;
    std::uint64_t seed = 0;
    std::string version;
    std::map<std::string, std::string> input_digests;
    std::string timestamp;  // UTC, ISO 8601
};

RunManifest make_manifest(std::string command, const std::vector<std::string>& argv, Json config,
                          std::uint64_t seed, const std::vector<std::filesystem::path>& inputs);
Json to_json(const RunManifest& m);
RunManifest manifest_from_json(const Json& j);

}  // namespace cdemr::cli
