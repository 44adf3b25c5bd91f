#include "manifest.hpp"

#include "spinbath/data_io.hpp"

#include <openssl/evp.h>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <memory>
#include <stdexcept>

#ifndef SPINBATH_VERSION
#define SPINBATH_VERSION "unknown"
#endif
#ifndef SPINBATH_BUILD_TYPE
#define SPINBATH_BUILD_TYPE "unknown"
#endif

namespace spinbath::cli {

std::string sha256_file(std::filesystem::path const& file) {
    std::ifstream in(file, std::ios::binary);
    if (!in)
        throw std::runtime_error("cannot open " + file.string());
    std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), EVP_MD_CTX_free);
    EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr);
    char buf[1 << 16];
    while (in.read(buf, sizeof buf) || in.gcount() > 0)
        EVP_DigestUpdate(ctx.get(), buf, static_cast<std::size_t>(in.gcount()));
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    EVP_DigestFinal_ex(ctx.get(), digest, &len);
    std::string hex;
    char byte[3];
    for (unsigned i = 0; i < len; ++i) {
        std::snprintf(byte, sizeof byte, "%02x", digest[i]);
        hex += byte;
    }
    return hex;
}

RunManifest::RunManifest(std::string subcommand)
    : subcommand_(std::move(subcommand)), start_(std::chrono::steady_clock::now()) {}

nlohmann::json RunManifest::to_json() const {
    using nlohmann::json;
    double const wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    json inputs = json::array();
    for (auto const& p : inputs_)
        inputs.push_back({{"path", p.string()}, {"sha256", sha256_file(p)}});
    json outputs = json::array();
    for (auto const& p : outputs_)
        outputs.push_back(p.string());
    return {{"schema_version", schema_version},
            {"subcommand", subcommand_},
            {"config", config_.empty() ? json(nullptr) : json(config_.string())},
            {"seed", has_seed_ ? json(seed_) : json(nullptr)},
            {"tool_version", version_string()},
            {"arguments", arguments_},
            {"parameters", parameters_},
            {"inputs", inputs},
            {"outputs", outputs},
            {"wall_time_s", wall}};
}

void RunManifest::emit(std::filesystem::path const& file) const {
    auto const text = to_json().dump(2) + "\n";
    if (file.empty())
        std::cerr << text;
    else
        write_atomically(file, text);
}

std::string version_string() {
    return std::string("spinbath ") + SPINBATH_VERSION + " (" + SPINBATH_BUILD_TYPE + ", " + __VERSION__ + ")";
}

} // namespace spinbath::cli
