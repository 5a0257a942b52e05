#include "manifest.hpp"

#include <cdemr/errors.hpp>

#include <openssl/evp.h>

#include <chrono>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <memory>

namespace cdemr::cli {

std::string tool_version() { return CDEMR_VERSION; }

std::string sha256_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw SchemaError("cannot open " + path.string() + " for hashing");
    std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), EVP_MD_CTX_free);
    EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr);
    char buf[1 << 16];
    while (in.read(buf, sizeof buf) || in.gcount() > 0) {
        EVP_DigestUpdate(ctx.get(), buf, static_cast<std::size_t>(in.gcount()));
    }
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    EVP_DigestFinal_ex(ctx.get(), digest, &len);
    std::string hex;
    char two[3];
    for (unsigned int i = 0; i < len; ++i) {
        std::snprintf(two, sizeof two, "%02x", digest[i]);
        hex += two;
    }
    return hex;
}

namespace {

std::string utc_now() {
    const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

}  // namespace

RunManifest make_manifest(std::string command, const std::vector<std::string>& argv, Json config,
                          std::uint64_t seed, const std::vector<std::filesystem::path>& inputs) {
    RunManifest m;
    m.command = std::move(command);
    m.argv = argv;
    m.config = std::move(config);
    m.seed = seed;
    m.version = tool_version();
    for (const auto& p : inputs) m.input_digests[p.string()] = sha256_file(p);
    m.timestamp = utc_now();
    return m;
}

Json to_json(const RunManifest& m) {
    Json j;
    j["command"] = m.command;
    j["argv"] = m.argv;
    j["config"] = m.config;
    j["seed"] = m.seed;
    j["version"] = m.version;
    j["input_digests"] = m.input_digests;
    j["timestamp"] = m.timestamp;
    return j;
}

RunManifest manifest_from_json(const Json& j) {
    RunManifest m;
    try {
        m.command = j.at("command").get<std::string>();
        m.argv = j.at("argv").get<std::vector<std::string>>();
        m.config = j.value("config", Json::object());
        m.seed = j.value("seed", std::uint64_t{0});
        m.version = j.value("version", std::string{});
        m.input_digests = j.value("input_digests", std::map<std::string, std::string>{});
        m.timestamp = j.value("timestamp", std::string{});
    } catch (const nlohmann::json::exception& e) {
        throw SchemaError(std::string("malformed manifest: ") + e.what());
    }
    return m;
}

}  // namespace cdemr::cli
