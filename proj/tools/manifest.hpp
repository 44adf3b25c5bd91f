#pragma once

#include <json.hpp>

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace spinbath::cli {

/// Lowercase hex SHA-256 of a file's bytes.
std::string sha256_file(std::filesystem::path const& file);

/// Record of one CLI invocation; enough to replay it.
class RunManifest {
public:
    explicit RunManifest(std::string subcommand);

    void set_config(std::filesystem::path const& path) { config_ = path; }
    void set_seed(std::uint64_t seed) { seed_ = seed; has_seed_ = true; }
    void add_input(std::filesystem::path const& path) { inputs_.push_back(path); }
    void add_output(std::filesystem::path const& path) { outputs_.push_back(path); }
    void set_arguments(std::vector<std::string> args) { arguments_ = std::move(args); }
    void set_parameters(nlohmann::json p) { parameters_ = std::move(p); }

    nlohmann::json to_json() const;

    /// Writes to `file`, or to stderr when `file` is empty.
    void emit(std::filesystem::path const& file) const;

private:
    std::string subcommand_;
    std::filesystem::path config_;
    std::uint64_t seed_ = 0;
    bool has_seed_ = false;
    std::vector<std::filesystem::path> inputs_;
    std::vector<std::filesystem::path> outputs_;
    std::vector<std::string> arguments_;
    nlohmann::json parameters_;
    std::chrono::steady_clock::time_point start_;
};

std::string version_string();

} // namespace spinbath::cli
