#include "config.hpp"

#include "fwt/parallel.hpp"

#include <fstream>
#include <sstream>

namespace fwt::cli {

Json default_config() {
    return Json::parse(R"({
  "config_version": 1,
  "seed": 0,
  "workers": 1,
  "paths": {
    "input": "",
    "panel": "",
    "source_panel": "",
    "checkpoint": "",
    "init_checkpoint": "",
    "out": "out"
  },
  "data": {
    "market": "MKT",
    "frequency": "day",
    "resample": "",
    "clip_sigma": 5.0
  },
  "synth": {
    "n_stocks": 60,
    "n_steps": 1000,
    "n_factors": 6,
    "noise_vol": 0.001,
    "factor_vol": 0.01,
    "frequency": "day",
    "market": "SYNTH",
    "symbol_prefix": "S",
    "regime_switch_prob": 0.0,
    "regime_high_mult": 1.0,
    "drift_persistence": 0.0,
    "drift_vol": 0.0
  },
  "retrieval": {
    "history_len": 250,
    "horizon": 20,
    "k": 16,
    "measure": "excess_return_correlation",
    "excess_keys": true,
    "dtw_band": -1
  },
  "model": {
    "layers": 4,
    "heads": 8,
    "d_model": 64,
    "step_embed_dim": 128,
    "ff_mult": 4,
    "row_encoding": true
  },
  "schedule": {
    "steps": 100,
    "beta_min": 0.0001,
    "beta_max": 0.02
  },
  "train": {
    "learning_rate": 0.00015,
    "batch_size": 32,
    "batches": 500,
    "train_fraction": 0.8,
    "resume": false
  },
  "generate": {
    "symbol": "",
    "anchor": -1,
    "n_paths": 16,
    "mode": "auto",
    "pool_stride": 1,
    "predicate": ""
  },
  "evaluate": {
    "windows": 50,
    "n_paths": 4
  },
  "ablate": {
    "methods": ["excess_return_correlation", "random", "none"],
    "models": ["diffusion", "transformer", "linear", "gan"],
    "windows": 50,
    "n_paths": 4,
    "linear_samples": 2000,
    "linear_ridge": 1.0
  },
  "sensitivity": {
    "k": [4, 8, 16, 32],
    "steps": [25, 50, 100, 200],
    "windows": 30,
    "n_paths": 4
  },
  "optimize": {
    "strategies": [
      {"name": "mom20", "signal": "momentum", "lookback": 20, "horizon": 20, "rebalance_every": 5,
       "turnover_fraction": 0.25, "n_long": 5, "n_short": 5}
    ],
    "thresholds": {"min_sharpe": null, "max_drawdown": null, "min_annual_return": null},
    "scenarios": 8,
    "predicate": "",
    "pool_stride": 5,
    "grid": [{"lags": 20, "ridge": 1.0}],
    "multipliers": [0, 1, 5, 10],
    "vol_multiplier": 0,
    "real_anchors": 3,
    "sims_per_anchor": 10,
    "n_long": 5,
    "n_short": 5
  }
})");
}

namespace {

bool compatible(const Json& def, const Json& val) {
    if (def.is_null() || val.is_null()) return true;  // optional numbers
    if (def.is_number_float()) return val.is_number();
    if (def.is_number_integer()) return val.is_number_integer();
    return def.type() == val.type();
}

void merge_checked(Json& base, const Json& patch, const std::string& where) {
    for (auto it = patch.begin(); it != patch.end(); ++it) {
        const std::string key = where.empty() ? it.key() : where + "." + it.key();
        if (where.empty() && (it.key() == "tool_version" || it.key() == "command")) continue;
        require(base.contains(it.key()), ErrorCode::parse, "unknown config key '" + key + "'");
        Json& slot = base[it.key()];
        if (slot.is_object()) {
            require(it.value().is_object(), ErrorCode::parse, "config key '" + key + "' must be an object");
            merge_checked(slot, it.value(), key);
        } else {
            require(compatible(slot, it.value()), ErrorCode::parse,
                    "config key '" + key + "' has the wrong type (expected " + std::string(slot.type_name()) + ")");
            slot = it.value();
        }
    }
}

}  // namespace

Json load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    require(in.good(), ErrorCode::io, "cannot read config " + path.string());
    Json patch;
    try {
        patch = Json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        fail(ErrorCode::parse, path.string() + ": " + e.what());
    }
    require(patch.is_object(), ErrorCode::parse, path.string() + ": config must be a JSON object");
    require(patch.contains("config_version"), ErrorCode::parse, path.string() + ": missing config_version");
    require(patch["config_version"] == kConfigVersion, ErrorCode::parse,
            path.string() + ": unsupported config_version " + patch["config_version"].dump());
    Json config = default_config();
    merge_checked(config, patch, "");
    return config;
}

void apply_override(Json& config, const std::string& assignment) {
    const auto eq = assignment.find('=');
    require(eq != std::string::npos && eq > 0, ErrorCode::parse, "override '" + assignment + "' is not key=value");
    const std::string key = assignment.substr(0, eq);
    const std::string text = assignment.substr(eq + 1);
    Json value;
    try {
        value = Json::parse(text);
    } catch (const nlohmann::json::parse_error&) {
        value = text;
    }
    apply_value(config, key, std::move(value));
}

void apply_value(Json& config, const std::string& key, Json value) {
    Json patch = std::move(value);
    std::string rest = key;
    std::vector<std::string> parts;
    for (std::size_t pos; (pos = rest.find('.')) != std::string::npos;) {
        parts.push_back(rest.substr(0, pos));
        rest = rest.substr(pos + 1);
    }
    parts.push_back(rest);
    for (auto it = parts.rbegin(); it != parts.rend(); ++it) patch = Json{{*it, patch}};
    merge_checked(config, patch, "");
}

RetrievalSetup retrieval_setup(const Json& c) {
    RetrievalSetup s;
    s.history_len = get<Eigen::Index>(c, "retrieval", "history_len");
    s.horizon = get<Eigen::Index>(c, "retrieval", "horizon");
    s.k = get<Eigen::Index>(c, "retrieval", "k");
    s.measure = parse_measure(get<std::string>(c, "retrieval", "measure"));
    s.excess_keys = get<bool>(c, "retrieval", "excess_keys");
    s.dtw_band = get<int>(c, "retrieval", "dtw_band");
    require(s.history_len >= 2 && s.horizon >= 1 && s.k >= 0, ErrorCode::invalid_argument,
            "retrieval: history_len >= 2, horizon >= 1 and k >= 0 required");
    return s;
}

ModelConfig model_config(const Json& c, const RetrievalSetup& setup) {
    ModelConfig m;
    m.layers = get<int>(c, "model", "layers");
    m.heads = get<int>(c, "model", "heads");
    m.d_model = get<int>(c, "model", "d_model");
    m.step_embed_dim = get<int>(c, "model", "step_embed_dim");
    m.ff_mult = get<int>(c, "model", "ff_mult");
    m.row_encoding = get<bool>(c, "model", "row_encoding");
    m.k = static_cast<int>(setup.effective_k());
    m.history_len = static_cast<int>(setup.history_len);
    m.horizon = static_cast<int>(setup.horizon);
    m.seed = derive_seed(root_seed(c), "model/init");
    m.validate();
    return m;
}

TrainConfig train_config(const Json& c) {
    TrainConfig t;
    t.learning_rate = get<double>(c, "train", "learning_rate");
    t.batch_size = get<int>(c, "train", "batch_size");
    t.batches = get<int>(c, "train", "batches");
    t.seed = derive_seed(root_seed(c), "train");
    t.workers = workers(c);
    require(t.learning_rate > 0.0 && t.batch_size >= 1 && t.batches >= 0, ErrorCode::invalid_argument,
            "train: learning_rate > 0, batch_size >= 1 and batches >= 0 required");
    return t;
}

NoiseSchedule schedule(const Json& c) {
    return make_schedule(get<int>(c, "schedule", "steps"), get<double>(c, "schedule", "beta_min"),
                         get<double>(c, "schedule", "beta_max"));
}

SynthOptions synth_options(const Json& c) {
    SynthOptions o;
    o.frequency = parse_frequency(get<std::string>(c, "synth", "frequency"));
    o.market = get<std::string>(c, "synth", "market");
    o.symbol_prefix = get<std::string>(c, "synth", "symbol_prefix");
    o.regime_switch_prob = get<double>(c, "synth", "regime_switch_prob");
    o.regime_high_mult = get<double>(c, "synth", "regime_high_mult");
    o.drift_persistence = get<double>(c, "synth", "drift_persistence");
    o.drift_vol = get<double>(c, "synth", "drift_vol");
    return o;
}

StrategyConfig strategy_config(const Json& j) {
    StrategyConfig s;
    try {
        s.name = j.value("name", std::string("strategy"));
        s.signal = parse_signal(j.value("signal", std::string("momentum")));
        s.lookback = j.value("lookback", s.lookback);
        s.horizon = j.value("horizon", s.horizon);
        s.rebalance_every = j.value("rebalance_every", s.rebalance_every);
        s.turnover_fraction = j.value("turnover_fraction", s.turnover_fraction);
        s.n_long = j.value("n_long", s.n_long);
        s.n_short = j.value("n_short", s.n_short);
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorCode::parse, std::string("optimize.strategies: ") + e.what());
    }
    return s;
}

Thresholds thresholds(const Json& j) {
    Thresholds t;
    auto read = [&](const char* key, double& slot) {
        if (j.contains(key) && !j[key].is_null()) slot = j[key].get<double>();
    };
    read("min_sharpe", t.min_sharpe);
    read("max_drawdown", t.max_drawdown);
    read("min_annual_return", t.min_annual_return);
    return t;
}

std::uint64_t root_seed(const Json& c) { return c.at("seed").get<std::uint64_t>(); }

unsigned workers(const Json& c) {
    const int w = c.at("workers").get<int>();
    return w <= 0 ? default_workers() : static_cast<unsigned>(w);
}

std::filesystem::path path_of(const Json& c, const std::string& key, bool required) {
    const auto p = get<std::string>(c, "paths", key);
    require(!required || !p.empty(), ErrorCode::invalid_argument, "paths." + key + " is required");
    return p;
}

}  // namespace fwt::cli
