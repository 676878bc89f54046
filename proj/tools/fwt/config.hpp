#pragma once

#include "fwt/ablation.hpp"
#include "fwt/optimizer.hpp"

#include <json.hpp>

#include <filesystem>
#include <string>
#include <vector>

namespace fwt::cli {

inline constexpr int kConfigVersion = 1;
inline constexpr int kReportSchemaVersion = 1;
inline constexpr const char* kToolVersion = "0.3.0";

using Json = nlohmann::ordered_json;

/// Every recognised key with its default value.
Json default_config();

/// Reads a config file and merges it over the defaults. Unknown keys, type
/// changes and version mismatches are errors; JSON syntax errors carry the
/// line and column.
Json load_config(const std::filesystem::path& path);

/// Applies `dotted.key=value`; the value is parsed as JSON when possible and
/// taken as a string otherwise.
void apply_override(Json& config, const std::string& assignment);
/// Sets one dotted key to an already-typed value.
void apply_value(Json& config, const std::string& key, Json value);

/// Typed views of the config sections.
RetrievalSetup retrieval_setup(const Json& c);
ModelConfig model_config(const Json& c, const RetrievalSetup& setup);
TrainConfig train_config(const Json& c);
NoiseSchedule schedule(const Json& c);
SynthOptions synth_options(const Json& c);
StrategyConfig strategy_config(const Json& j);
Thresholds thresholds(const Json& j);

std::uint64_t root_seed(const Json& c);
unsigned workers(const Json& c);

/// `c[section][key]` with a path-qualified error on a type mismatch.
template <typename T>
T get(const Json& c, const std::string& section, const std::string& key) {
    try {
        return c.at(section).at(key).get<T>();
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorCode::parse, "config key '" + section + "." + key + "': " + e.what());
    }
}

std::filesystem::path path_of(const Json& c, const std::string& key, bool required = true);

}  // namespace fwt::cli
