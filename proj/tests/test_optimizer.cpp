#include "helpers.hpp"

#include "fwt/optimizer.hpp"
#include "fwt/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <set>

using namespace fwt;
using fwt::test::check_error;

namespace {

ReturnPanel walk(std::uint64_t seed, int stocks = 20, int steps = 300) {
    return to_returns(synth_factor_panel(stocks, steps, 4, seed, 0.01, 0.01));
}

ReturnPanel shifted(const ReturnPanel& p, double c) {
    MatrixXd r = p.returns().array() + c;
    return ReturnPanel(p.symbols(), p.timestamps(), std::move(r), p.kind(), p.frequency(), p.market());
}

StrategyConfig strategy(SignalKind k, std::string name = "s") {
    StrategyConfig s;
    s.name = std::move(name);
    s.signal = k;
    s.lookback = 10;
    s.horizon = 5;
    s.rebalance_every = 5;
    s.turnover_fraction = 1.0;
    s.n_long = 3;
    s.n_short = 3;
    return s;
}

std::vector<StrategyConfig> grid() {
    std::vector<StrategyConfig> out;
    for (Eigen::Index lb : {5, 10, 20})
        for (double tf : {0.25, 1.0}) {
            StrategyConfig s = strategy(SignalKind::momentum, "m" + std::to_string(lb) + "_" + std::to_string(tf));
            s.lookback = lb;
            s.turnover_fraction = tf;
            out.push_back(s);
        }
    return out;
}

ScenarioSet scenarios(int n) {
    ScenarioSet set;
    for (int i = 0; i < n; ++i)
        set.add(Scenario{"sc" + std::to_string(i), walk(100 + static_cast<std::uint64_t>(i), 20, 200), 30,
                         static_cast<std::uint64_t>(i), ""});
    return set;
}

std::set<std::string> names(const OptimizationResult& r) {
    std::set<std::string> out;
    for (const auto& o : r.surviving) out.insert(o.config.name);
    return out;
}

std::vector<ForecastWindow> labelled(std::uint64_t seed, std::size_t n, const std::string& source) {
    Rng rng(seed);
    std::vector<ForecastWindow> out;
    for (std::size_t i = 0; i < n; ++i) {
        ForecastWindow w;
        w.features = VectorXd(4);
        for (Eigen::Index j = 0; j < 4; ++j) w.features[j] = standard_normal(rng);
        w.future = VectorXd::Constant(2, 0.5 * w.features[3] + 0.01 * standard_normal(rng));
        w.source = source;
        out.push_back(std::move(w));
    }
    return out;
}

class ZeroNoise final : public NoisePredictor {
public:
    VectorXd predict(const ConditionSet&, const Eigen::Ref<const VectorXd>& x, int) const override {
        return VectorXd::Zero(x.size());
    }
};

}  // namespace

TEST_SUITE("optimizer") {

TEST_CASE("foresight beats momentum") {
    const ReturnPanel p = walk(1);
    const PortfolioReport fore = simulate_portfolio(strategy(SignalKind::foresight), p, nullptr, 10);
    const PortfolioReport mom = simulate_portfolio(strategy(SignalKind::momentum), p, nullptr, 10);
    CHECK(fore.annualized_return > 0.0);
    CHECK(fore.annualized_return >= mom.annualized_return);
    CHECK(fore.nav.size() == p.n_steps() - 10 + 1);
}

TEST_CASE("a zero signal is deterministic") {
    const ReturnPanel p = walk(2);
    const PortfolioReport a = simulate_portfolio(strategy(SignalKind::zero), p);
    const PortfolioReport b = simulate_portfolio(strategy(SignalKind::zero), p);
    CHECK(a.nav == b.nav);
    // Ties break by symbol: long the first three, short the last three.
    double expect = 1.0;
    for (Eigen::Index t = 0; t < p.n_steps(); ++t) {
        double r = 0.0;
        for (Eigen::Index s = 0; s < 3; ++s) r += (p.returns()(s, t) - p.returns()(p.n_symbols() - 1 - s, t)) / 3.0;
        expect *= 1.0 + r;
    }
    CHECK(a.nav[a.nav.size() - 1] == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("a balanced long-short book ignores a common shift") {
    const ReturnPanel p = walk(3);
    for (double tf : {1.0, 0.3}) {
        StrategyConfig s = strategy(SignalKind::momentum);
        s.turnover_fraction = tf;
        const PortfolioReport a = simulate_portfolio(s, p);
        const PortfolioReport b = simulate_portfolio(s, shifted(p, 0.003));
        CHECK((a.nav - b.nav).cwiseAbs().maxCoeff() < 1e-10);
    }
}

TEST_CASE("strategy validation") {
    const ReturnPanel p = walk(4, 6, 50);
    StrategyConfig s = strategy(SignalKind::momentum);
    s.n_long = 4;
    check_error([&] { simulate_portfolio(s, p); }, ErrorCode::invalid_argument);
    s = strategy(SignalKind::momentum);
    s.turnover_fraction = 0.0;
    check_error([&] { simulate_portfolio(s, p); }, ErrorCode::invalid_argument);
    check_error([&] { simulate_portfolio(strategy(SignalKind::forecast), p); }, ErrorCode::precondition);
    const MatrixXd wrong = MatrixXd::Zero(3, 50);
    check_error([&] { simulate_portfolio(strategy(SignalKind::forecast), p, &wrong); }, ErrorCode::shape_mismatch);
    check_error([] { parse_signal("astrology"); }, ErrorCode::parse);
}

TEST_CASE("lax thresholds keep every configuration") {
    const auto configs = grid();
    const OptimizationResult r = rule_based_filter(configs, scenarios(3), Thresholds{});
    CHECK(r.surviving.size() == configs.size());
    CHECK(r.rejected.empty());
    for (const auto& o : r.surviving) CHECK(o.per_scenario.size() == 3);
}

TEST_CASE("a zero drawdown limit rejects every drawdown") {
    Thresholds t;
    t.max_drawdown = 0.0;
    const OptimizationResult r = rule_based_filter(grid(), scenarios(3), t);
    for (const auto& o : r.surviving)
        for (const auto& rep : o.per_scenario) CHECK(rep.max_drawdown == 0.0);
    for (const auto& rej : r.rejected) {
        CHECK(rej.metric == "max_drawdown");
        CHECK(rej.value < 0.0);
    }
    CHECK(r.surviving.size() + r.rejected.size() == grid().size());
}

TEST_CASE("tighter thresholds and more scenarios only remove survivors") {
    const auto configs = grid();
    const ScenarioSet two = scenarios(2), four = scenarios(4);
    Thresholds loose;
    loose.min_sharpe = -1.0;
    Thresholds tight = loose;
    tight.min_sharpe = 0.0;
    tight.max_drawdown = 0.3;
    const auto loose2 = names(rule_based_filter(configs, two, loose));
    const auto tight2 = names(rule_based_filter(configs, two, tight));
    const auto loose4 = names(rule_based_filter(configs, four, loose));
    CHECK(std::includes(loose2.begin(), loose2.end(), tight2.begin(), tight2.end()));
    CHECK(std::includes(loose2.begin(), loose2.end(), loose4.begin(), loose4.end()));

    // A survivor meets every threshold on every scenario.
    for (const auto& o : rule_based_filter(configs, four, tight).surviving)
        for (const auto& rep : o.per_scenario) {
            CHECK(rep.sharpe >= 0.0);
            CHECK(-rep.max_drawdown <= 0.3);
        }
    check_error([&] { rule_based_filter({}, two, loose); }, ErrorCode::invalid_argument);
    check_error([&] { rule_based_filter(configs, ScenarioSet{}, loose); }, ErrorCode::invalid_argument);
}

TEST_CASE("scenario sets reject mismatched panels") {
    ScenarioSet set;
    set.add(Scenario{"a", walk(1, 6, 50), 10, 0, ""});
    check_error([&] { set.add(Scenario{"b", walk(1, 6, 60), 10, 0, ""}); }, ErrorCode::shape_mismatch);
}

TEST_CASE("generated scenarios keep the real history") {
    const PreparedPanel p = PreparedPanel::from(walk(5, 8, 120));
    RetrievalSetup s;
    s.history_len = 30;
    s.horizon = 10;
    s.k = 3;
    const NoiseSchedule sched = make_schedule(5);
    ZeroNoise model;
    const Scenario a = generate_scenario(p, 60, s, model, sched, 7);
    CHECK(a.panel.n_steps() == 40);
    CHECK(a.eval_from == 30);
    CHECK(a.panel.returns().leftCols(30) == p.values.returns().middleCols(30, 30));
    CHECK(a.panel.returns().rightCols(10).allFinite());
    CHECK(a.panel.symbols() == p.values.symbols());
    CHECK(generate_scenario(p, 60, s, model, sched, 7).panel.returns() == a.panel.returns());
    CHECK(generate_scenario(p, 60, s, model, sched, 8).panel.returns() != a.panel.returns());
    // Past the end of the real panel the stamps continue at the nominal step.
    PoolOptions po;
    po.history_len = 30;
    po.horizon = 10;
    const auto pool = build_candidate_pool(p.values, po);
    const Scenario edge = generate_scenario(p, 120, s, model, sched, 7, &pool);
    CHECK(edge.panel.n_steps() == 40);
    CHECK(edge.panel.timestamps().back() > p.values.timestamps().back());
}

TEST_CASE("augmentation counts and real windows") {
    const auto real = labelled(1, 100, "real");
    const auto sim = labelled(2, 2000, "sim");
    const TrainingSet none = augment_dataset(real, sim, 0, 1);
    CHECK(none.windows.size() == 100);
    CHECK(none.n_sim == 0);

    const TrainingSet ten = augment_dataset(real, sim, 10, 1);
    CHECK(ten.windows.size() == 1100);
    CHECK(ten.n_real == 100);
    CHECK(ten.n_sim == 1000);
    CHECK_FALSE(ten.with_replacement);
    for (std::size_t i = 0; i < 100; ++i) CHECK(ten.windows[i].features == real[i].features);
    for (std::size_t i = 100; i < 1100; ++i) CHECK(ten.windows[i].source == "sim");

    const TrainingSet again = augment_dataset(real, sim, 10, 1);
    for (std::size_t i = 0; i < 1100; ++i) CHECK(again.windows[i].features == ten.windows[i].features);

    const TrainingSet small = augment_dataset(real, labelled(3, 50, "sim"), 2, 1);
    CHECK(small.windows.size() == 300);
    CHECK(small.with_replacement);

    TrainingSet mixed = augment_dataset(real, sim, 1, 1);
    add_simulated(mixed, labelled(4, 500, "vol-sim"), 2, 2);
    CHECK(mixed.windows.size() == 400);
    CHECK(std::count_if(mixed.windows.begin(), mixed.windows.end(),
                        [](const ForecastWindow& w) { return w.source == "vol-sim"; }) == 200);

    check_error([&] { augment_dataset(real, {}, 1, 1); }, ErrorCode::empty_pool);
    check_error([&] { augment_dataset({}, sim, 1, 1); }, ErrorCode::precondition);
    check_error([&] { augment_dataset(real, sim, -1, 1); }, ErrorCode::invalid_argument);
}

TEST_CASE("real windows slice lags and futures") {
    const ReturnPanel p = walk(6, 5, 80);
    const auto w = real_windows(p, {20, 50}, 10, 5);
    REQUIRE(w.size() == 10);
    CHECK(w[6].features == p.returns().row(1).segment(40, 10).transpose());
    CHECK(w[6].future == p.returns().row(1).segment(50, 5).transpose());
    CHECK(w[6].label() == doctest::Approx(p.returns().row(1).segment(50, 5).sum()));
    check_error([&] { real_windows(p, {5}, 10, 5); }, ErrorCode::precondition);
}

TEST_CASE("ridge forecaster recovers a linear label") {
    TrainingSet set;
    set.windows = labelled(7, 400, "real");
    set.n_real = 400;
    const RidgeForecaster f = RidgeForecaster::fit(set, 4, 0.0);
    VectorXd x(4);
    x << 0.3, -1.0, 2.0, 0.8;
    CHECK(f.predict(x) == doctest::Approx(2 * 0.5 * 0.8).epsilon(0.02));
    // Only the last `lags` features are used.
    const RidgeForecaster one = RidgeForecaster::fit(set, 1, 0.0);
    CHECK(one.coefficients().size() == 1);
    CHECK(one.predict(x) == doctest::Approx(f.predict(x)).epsilon(0.02));

    TrainingSet flat = set;
    for (auto& w : flat.windows) w.features.setConstant(0.2);
    check_error([&] { RidgeForecaster::fit(flat, 2, 1.0); }, ErrorCode::undefined_statistic);
    check_error([&] { RidgeForecaster::fit(set, 5, 1.0); }, ErrorCode::shape_mismatch);
}

TEST_CASE("model-based search picks the best validation Sharpe") {
    const ReturnPanel train = walk(8, 12, 300), valid = walk(9, 12, 200);
    std::vector<Eigen::Index> anchors;
    for (Eigen::Index t = 20; t + 5 <= 300; t += 5) anchors.push_back(t);
    TrainingSet real;
    real.windows = real_windows(train, anchors, 20, 5);
    real.n_real = real.windows.size();
    TrainingSet flat = real;
    for (auto& w : flat.windows) w.features.setConstant(0.0);

    const std::vector<ForecasterSpec> g = {{5, 1.0}, {20, 10.0}, {5, 1.0}};
    const OptimizationResult r =
        model_based_optimize(g, {{"real", real}, {"flat", flat}}, valid, strategy(SignalKind::momentum));
    REQUIRE(r.table.size() == 6);
    CHECK(r.table[0].dataset == "real");
    CHECK(r.table[1].dataset == "flat");
    CHECK_FALSE(r.table[1].ok);
    CHECK(r.table[1].status.rfind("failed: ", 0) == 0);
    // The duplicated grid point reproduces its row exactly and never wins the tie.
    CHECK(r.table[4].validation.nav == r.table[0].validation.nav);
    REQUIRE(r.best);
    CHECK(*r.best < 4);
    for (const auto& row : r.table)
        if (row.ok && row.validation.sharpe_defined) CHECK(row.validation.sharpe <= r.table[*r.best].validation.sharpe);

    check_error([&] { model_based_optimize({}, {{"real", real}}, valid, strategy(SignalKind::momentum)); },
                ErrorCode::invalid_argument);
}

}  // TEST_SUITE
