#include "commands.hpp"

#include <CLI11.hpp>

#include <iostream>
#include <optional>
#include <sstream>

namespace {

using fwt::cli::Json;
namespace fs = std::filesystem;

/// A flag that, when given, overwrites one config key.
struct Flag {
    std::string key;
    std::string value;
    CLI::Option* option = nullptr;
    bool is_list = false;
};

Json list_value(const std::string& text) {
    Json arr = Json::array();
    std::stringstream ss(text);
    for (std::string item; std::getline(ss, item, ',');) {
        try {
            arr.push_back(Json::parse(item));
        } catch (const nlohmann::json::parse_error&) {
            arr.push_back(item);
        }
    }
    return arr;
}

void print_error(const std::string& code, const std::string& message, const std::string& command) {
    Json err = {{"error", {{"code", code}, {"message", message}, {"command", command}}}};
    std::cerr << err.dump() << '\n';
}

struct Invocation {
    std::string config_path;
    std::vector<std::string> overrides;
    std::vector<Flag> flags;
};

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Retrieval-augmented diffusion toolkit for return panels"};
    app.set_version_flag("--version", fwt::cli::kToolVersion);
    app.require_subcommand(1);

    // CLI11 binds option storage by address, so each flag vector is reserved
    // up front and never reallocates.
    std::map<std::string, Invocation> invocations;
    const std::vector<std::pair<std::string, std::string>> common = {
        {"--out", "paths.out"},         {"--panel", "paths.panel"}, {"--checkpoint", "paths.checkpoint"},
        {"--seed", "seed"},             {"--workers", "workers"},
    };
    const std::map<std::string, std::vector<std::pair<std::string, std::string>>> specific = {
        {"ingest", {{"--input", "paths.input"}, {"--market", "data.market"}, {"--frequency", "data.frequency"},
                    {"--resample", "data.resample"}}},
        {"synth-data", {{"--n-stocks", "synth.n_stocks"}, {"--n-steps", "synth.n_steps"},
                        {"--frequency", "synth.frequency"}, {"--market", "synth.market"}}},
        {"train", {{"--batches", "train.batches"}, {"--init-checkpoint", "paths.init_checkpoint"}}},
        {"generate", {{"--symbol", "generate.symbol"}, {"--anchor", "generate.anchor"},
                      {"--n-paths", "generate.n_paths"}, {"--mode", "generate.mode"},
                      {"--predicate", "generate.predicate"}}},
        {"evaluate", {{"--n-paths", "evaluate.n_paths"}}},
        {"whatif", {{"--symbol", "generate.symbol"}, {"--anchor", "generate.anchor"},
                    {"--n-paths", "generate.n_paths"}, {"--predicate", "generate.predicate"}}},
        {"cross-market", {{"--source-panel", "paths.source_panel"}, {"--symbol", "generate.symbol"},
                          {"--anchor", "generate.anchor"}, {"--n-paths", "generate.n_paths"}}},
        {"ablate", {}},
        {"optimize", {{"--predicate", "optimize.predicate"}}},
        {"sensitivity", {{"--k", "sensitivity.k"}, {"--steps", "sensitivity.steps"}}},
    };
    const std::map<std::string, std::string> about = {
        {"ingest", "Load a price CSV, align and clean it, write panel.csv"},
        {"synth-data", "Write a synthetic factor panel"},
        {"train", "Train the denoiser and write a checkpoint"},
        {"generate", "Sample future paths for one symbol"},
        {"evaluate", "Held-out correlation and market ranking"},
        {"whatif", "Compare unconditioned and predicate-filtered generation"},
        {"cross-market", "Generate with neighbours retrieved from another market"},
        {"ablate", "Retrieval method x generator ablation table"},
        {"optimize", "Scenario-based strategy filtering and forecaster search"},
        {"sensitivity", "Grid over retrieval count and diffusion steps"},
    };

    bool resume = false;
    for (const auto& [name, flags] : specific) {
        Invocation& inv = invocations[name];
        inv.flags.reserve(common.size() + flags.size());
        CLI::App* sub = app.add_subcommand(name, about.at(name));
        sub->add_option("--config", inv.config_path, "JSON config file")->check(CLI::ExistingFile);
        sub->add_option("--set", inv.overrides, "Override a config key: section.key=value (repeatable)");
        auto bind = [&](const std::string& flag, const std::string& key) {
            const bool is_list = flag == "--k" || flag == "--steps";
            inv.flags.push_back(Flag{key, {}, nullptr, is_list});
            Flag& f = inv.flags.back();
            f.option = sub->add_option(flag, f.value, "Sets " + key);
        };
        for (const auto& [flag, key] : common) bind(flag, key);
        for (const auto& [flag, key] : flags) bind(flag, key);
        if (name == "train") sub->add_flag("--resume", resume, "Continue from paths.checkpoint");
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);
        print_error("usage", e.what(), "");
        return 2;
    }

    const std::string command = app.get_subcommands().front()->get_name();
    const Invocation& inv = invocations.at(command);
    try {
        Json config = inv.config_path.empty() ? fwt::cli::default_config() : fwt::cli::load_config(inv.config_path);
        for (const auto& o : inv.overrides) fwt::cli::apply_override(config, o);
        for (const auto& f : inv.flags) {
            if (f.option->count() == 0) continue;
            if (f.is_list) {
                fwt::cli::apply_value(config, f.key, list_value(f.value));
            } else {
                Json v;
                try {
                    v = Json::parse(f.value);
                } catch (const nlohmann::json::parse_error&) {
                    v = f.value;
                }
                // String-typed keys keep numeric-looking text as text.
                const auto dot = f.key.find('.');
                const Json& slot = dot == std::string::npos
                                       ? config.at(f.key)
                                       : config.at(f.key.substr(0, dot)).at(f.key.substr(dot + 1));
                if (slot.is_string()) v = f.value;
                fwt::cli::apply_value(config, f.key, std::move(v));
            }
        }
        if (resume) fwt::cli::apply_value(config, "train.resume", true);

        const fs::path out = fwt::cli::get<std::string>(config, "paths", "out");
        fwt::require(!out.empty(), fwt::ErrorCode::invalid_argument, "paths.out must not be empty");
        fs::create_directories(out);
        Json resolved = config;
        resolved["tool_version"] = fwt::cli::kToolVersion;
        resolved["command"] = command;
        fwt::cli::write_json(out / "resolved_config.json", resolved);

        Json report = {{"schema_version", fwt::cli::kReportSchemaVersion},
                       {"tool_version", fwt::cli::kToolVersion},
                       {"command", command}};
        fwt::cli::commands().at(command)(fwt::cli::Context{config, out}, report);
        fwt::cli::write_json(out / "report.json", report);
    } catch (const fwt::Error& e) {
        print_error(std::string(fwt::to_string(e.code())), e.what(), command);
        return 1;
    } catch (const std::filesystem::filesystem_error& e) {
        print_error("io", e.what(), command);
        return 1;
    } catch (const std::exception& e) {
        print_error("internal", e.what(), command);
        return 1;
    }
    return 0;
}
