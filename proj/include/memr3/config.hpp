#pragma once

// Layered runtime configuration: config file < environment < flags.

#include <filesystem>
#include <map>
#include <optional>
#include <string>

namespace memr3 {

struct AppConfig {
    int max_iterations = 5;
    int reflect_cap = 2;
    int chunks_per_iteration = 5;
    int chunk_tokens = 256;
    int max_retries = 2;
    int jobs = 1;
    int repeats = 1;
    double temperature = 0.0;
    std::string model = "gpt-4o-mini";
    std::string judge_model = "gpt-4.1";
    std::string backend = "http";  // "http" | "scripted"
    std::string script_path;       // scripted backend replay file
    std::string base_url;          // empty -> backend default / environment
    std::string api_key;
    double requests_per_minute = 0.0;
    std::optional<std::string> answer_template;  // inline template text
};

// JSON file with any subset of the documented keys; unknown keys are an
// error so typos do not silently fall back to defaults.
AppConfig load_config_file(const std::filesystem::path& path, AppConfig base = {});

// MEMR3_API_KEY / OPENAI_API_KEY, MEMR3_BASE_URL / OPENAI_BASE_URL,
// MEMR3_MODEL, MEMR3_JUDGE_MODEL.
void apply_environment(AppConfig& config);

// String-typed flag overrides, applied last. Keys match the config file.
void apply_overrides(AppConfig& config, const std::map<std::string, std::string>& overrides);

// file (optional) -> environment -> overrides.
AppConfig layered_config(const std::optional<std::filesystem::path>& file,
                         const std::map<std::string, std::string>& overrides);

} // namespace memr3
