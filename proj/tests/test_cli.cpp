#include "helpers.hpp"

#include "fwt/commands.hpp"

#include <cstdlib>
#include <fstream>

using namespace fwt;
using namespace fwt::cli;
using fwt::test::check_error;

namespace {

std::filesystem::path write_config(const fwt::test::TempDir& dir, const std::string& body) {
    const auto p = dir / "c.json";
    fwt::test::write_text(p, body);
    return p;
}

std::string error_message(const std::function<void()>& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.what();
    }
    return "";
}

int run_tool(const std::string& args, const std::filesystem::path& err) {
    const std::string cmd = std::string("\"") + FWT_BINARY + "\" " + args + " >/dev/null 2>\"" + err.string() + "\"";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("config files merge over the defaults") {
    fwt::test::TempDir dir("cfg");
    const Json c = load_config(write_config(dir, R"({"config_version": 1, "retrieval": {"k": 4}, "seed": 9})"));
    CHECK(c["retrieval"]["k"] == 4);
    CHECK(c["retrieval"]["history_len"] == 250);
    CHECK(root_seed(c) == 9);
    CHECK(retrieval_setup(c).k == 4);
}

TEST_CASE("defaults carry the reference hyperparameters") {
    const Json c = default_config();
    const RetrievalSetup s = retrieval_setup(c);
    CHECK(s.history_len == 250);
    CHECK(s.k == 16);
    CHECK(s.horizon == 20);
    CHECK(s.measure == SimilarityMeasure::excess_return_correlation);
    CHECK(schedule(c).alpha_bar.size() == 100);
    const ModelConfig m = model_config(c, s);
    CHECK(m.layers == 4);
    CHECK(m.heads == 8);
    const TrainConfig t = train_config(c);
    CHECK(t.learning_rate == 1.5e-4);
    CHECK(t.batches == 500);
}

TEST_CASE("config errors are reported") {
    fwt::test::TempDir dir("cfg_bad");
    check_error([&] { load_config(write_config(dir, R"({"config_version": 1, "retrieval": {"kk": 4}})")); },
                ErrorCode::parse);
    CHECK(error_message([&] { load_config(write_config(dir, R"({"config_version": 1, "retrieval": {"kk": 4}})")); })
              .find("retrieval.kk") != std::string::npos);
    check_error([&] { load_config(write_config(dir, R"({"config_version": 1, "retrieval": {"k": "four"}})")); },
                ErrorCode::parse);
    check_error([&] { load_config(write_config(dir, R"({"config_version": 1, "retrieval": {"k": 4.5}})")); },
                ErrorCode::parse);
    check_error([&] { load_config(write_config(dir, R"({"config_version": 2})")); }, ErrorCode::parse);
    check_error([&] { load_config(write_config(dir, R"({"seed": 1})")); }, ErrorCode::parse);
    check_error([&] { load_config(write_config(dir, "[1, 2]")); }, ErrorCode::parse);
    check_error([&] { load_config(dir / "absent.json"); }, ErrorCode::io);

    const std::string syntax = error_message([&] { load_config(write_config(dir, "{\n  \"seed\": 1,\n  oops\n}")); });
    CHECK(syntax.find("line 3") != std::string::npos);
}

TEST_CASE("integer keys accept integers, float keys accept any number") {
    fwt::test::TempDir dir("cfg_num");
    const Json c = load_config(write_config(dir, R"({"config_version": 1, "train": {"learning_rate": 1}})"));
    CHECK(train_config(c).learning_rate == 1.0);
}

TEST_CASE("overrides are typed and checked") {
    Json c = default_config();
    apply_override(c, "retrieval.k=8");
    apply_override(c, "retrieval.measure=dtw");
    apply_override(c, "sensitivity.k=[1,2]");
    apply_override(c, "optimize.thresholds.min_sharpe=0.5");
    CHECK(c["retrieval"]["k"] == 8);
    CHECK(retrieval_setup(c).measure == SimilarityMeasure::dtw);
    CHECK(c["sensitivity"]["k"].size() == 2);
    CHECK(thresholds(c["optimize"]["thresholds"]).min_sharpe == 0.5);
    CHECK(std::isinf(thresholds(c["optimize"]["thresholds"]).max_drawdown));

    check_error([&] { apply_override(c, "retrieval.nope=1"); }, ErrorCode::parse);
    check_error([&] { apply_override(c, "retrieval.k=many"); }, ErrorCode::parse);
    check_error([&] { apply_override(c, "no_equals_sign"); }, ErrorCode::parse);
    check_error([&] { apply_override(c, "retrieval=3"); }, ErrorCode::parse);
}

TEST_CASE("typed views validate their sections") {
    Json c = default_config();
    apply_override(c, "retrieval.horizon=0");
    check_error([&] { retrieval_setup(c); }, ErrorCode::invalid_argument);

    c = default_config();
    apply_override(c, "model.heads=5");
    check_error([&] { model_config(c, retrieval_setup(c)); }, ErrorCode::invalid_argument);

    c = default_config();
    apply_override(c, "retrieval.measure=none");
    CHECK(model_config(c, retrieval_setup(c)).k == 0);
    check_error([&] { path_of(c, "panel"); }, ErrorCode::invalid_argument);
    CHECK(path_of(c, "panel", false).empty());

    const StrategyConfig s = strategy_config(c["optimize"]["strategies"][0]);
    CHECK(s.name == "mom20");
    CHECK(s.lookback == 20);
    check_error([] { strategy_config(Json{{"signal", "tea leaves"}}); }, ErrorCode::parse);
}

TEST_CASE("numbers are written in shortest round-trip form") {
    CHECK(format_double(0.1) == "0.1");
    CHECK(format_double(-2.0) == "-2");
    CHECK(std::stod(format_double(1.0 / 3.0)) == 1.0 / 3.0);
    CHECK(format_double(std::numeric_limits<double>::quiet_NaN()) == "nan");
}

TEST_CASE("the tool writes artifacts and structured errors") {
    fwt::test::TempDir dir("cli_run");
    const auto err = dir / "err.txt";
    const std::string out = (dir / "data").string();
    CHECK(run_tool("synth-data --n-stocks 5 --n-steps 40 --set synth.n_factors=2 --out \"" + out + "\"", err) == 0);
    CHECK(std::filesystem::exists(dir / "data" / "panel.csv"));
    CHECK(std::filesystem::exists(dir / "data" / "report.json"));
    const Json resolved = Json::parse(std::ifstream(dir / "data" / "resolved_config.json"));
    CHECK(resolved["synth"]["n_stocks"] == 5);
    CHECK(resolved["command"] == "synth-data");
    const Json report = Json::parse(std::ifstream(dir / "data" / "report.json"));
    CHECK(report["schema_version"] == kReportSchemaVersion);

    // Rerunning from the resolved config reproduces the panel byte for byte.
    const std::string again = (dir / "again").string();
    CHECK(run_tool("synth-data --config \"" + (dir / "data" / "resolved_config.json").string() + "\" --out \"" +
                       again + "\"",
                   err) == 0);
    CHECK(fwt::test::read_bytes(dir / "again" / "panel.csv") == fwt::test::read_bytes(dir / "data" / "panel.csv"));

    CHECK(run_tool("train --panel \"" + (dir / "absent.csv").string() + "\" --out \"" + out + "\"", err) == 1);
    const Json e = Json::parse(fwt::test::read_bytes(err));
    CHECK(e["error"]["code"] == "io");
    CHECK(e["error"]["command"] == "train");

    CHECK(run_tool("synth-data --set retrieval.bogus=1 --out \"" + out + "\"", err) == 1);
    CHECK(Json::parse(fwt::test::read_bytes(err))["error"]["code"] == "parse");
    CHECK(run_tool("no-such-command", err) == 2);
    CHECK(Json::parse(fwt::test::read_bytes(err))["error"]["code"] == "usage");
}

}  // TEST_SUITE
