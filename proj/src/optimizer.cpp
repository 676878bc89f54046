#include "fwt/optimizer.hpp"

#include "fwt/parallel.hpp"

#include <Eigen/Cholesky>
#include <algorithm>
#include <cmath>
#include <numeric>

namespace fwt {

std::string_view to_string(SignalKind k) {
    switch (k) {
        case SignalKind::momentum: return "momentum";
        case SignalKind::foresight: return "foresight";
        case SignalKind::forecast: return "forecast";
        case SignalKind::zero: return "zero";
    }
    return "unknown";
}

SignalKind parse_signal(std::string_view name) {
    for (auto k : {SignalKind::momentum, SignalKind::foresight, SignalKind::forecast, SignalKind::zero})
        if (to_string(k) == name) return k;
    fail(ErrorCode::parse, "unknown signal '" + std::string(name) + "'");
}

void StrategyConfig::validate(Eigen::Index universe) const {
    require(turnover_fraction > 0.0 && turnover_fraction <= 1.0, ErrorCode::invalid_argument,
            "turnover_fraction must be in (0, 1]");
    require(rebalance_every >= 1, ErrorCode::invalid_argument, "rebalance_every must be >= 1");
    require(horizon >= 1, ErrorCode::invalid_argument, "horizon must be >= 1");
    require(lookback >= 1, ErrorCode::invalid_argument, "lookback must be >= 1");
    require(n_long >= 0 && n_short >= 0 && n_long + n_short >= 1, ErrorCode::invalid_argument,
            "strategy needs at least one position");
    require(2 * n_long <= universe && 2 * n_short <= universe, ErrorCode::invalid_argument,
            "position counts exceed half the universe");
}

MatrixXd signal_scores(const StrategyConfig& strategy, const ReturnPanel& panel) {
    const Eigen::Index n = panel.n_steps();
    const auto& r = panel.returns();
    MatrixXd s = MatrixXd::Constant(panel.n_symbols(), n, std::numeric_limits<double>::quiet_NaN());
    switch (strategy.signal) {
        case SignalKind::momentum:
            for (Eigen::Index t = strategy.lookback; t < n; ++t)
                s.col(t) = r.middleCols(t - strategy.lookback, strategy.lookback).rowwise().sum();
            break;
        case SignalKind::foresight:
            for (Eigen::Index t = 0; t < n; ++t)
                s.col(t) = r.middleCols(t, std::min(strategy.horizon, n - t)).rowwise().sum();
            break;
        case SignalKind::zero:
            s.setZero();
            break;
        case SignalKind::forecast:
            fail(ErrorCode::precondition, "forecast signals need an explicit score matrix");
    }
    return s;
}

namespace {

VectorXd target_book(const StrategyConfig& st, const ReturnPanel& panel, const Eigen::Ref<const VectorXd>& score) {
    const Eigen::Index n = panel.n_symbols();
    std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    std::sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
        if (score[a] != score[b]) return score[a] > score[b];
        return panel.symbols()[static_cast<std::size_t>(a)] < panel.symbols()[static_cast<std::size_t>(b)];
    });
    VectorXd w = VectorXd::Zero(n);
    for (Eigen::Index i = 0; i < st.n_long; ++i) w[order[static_cast<std::size_t>(i)]] += 1.0 / static_cast<double>(st.n_long);
    for (Eigen::Index i = 0; i < st.n_short; ++i)
        w[order[static_cast<std::size_t>(n - 1 - i)]] -= 1.0 / static_cast<double>(st.n_short);
    return w;
}

}  // namespace

PortfolioReport simulate_portfolio(const StrategyConfig& strategy, const ReturnPanel& panel, const MatrixXd* scores,
                                   Eigen::Index first_step) {
    strategy.validate(panel.n_symbols());
    require(panel.n_steps() > strategy.horizon, ErrorCode::precondition, "panel must be longer than the horizon");
    const MatrixXd own = scores ? MatrixXd() : signal_scores(strategy, panel);
    const MatrixXd& s = scores ? *scores : own;
    require(s.rows() == panel.n_symbols() && s.cols() == panel.n_steps(), ErrorCode::shape_mismatch,
            "score matrix does not match the panel");

    Eigen::Index start = first_step;
    if (start < 0) {
        start = 0;
        while (start < s.cols() && !s.col(start).allFinite()) ++start;
    }
    require(start + 2 <= panel.n_steps(), ErrorCode::precondition, "signal undefined on the backtest window");

    const Eigen::Index steps = panel.n_steps() - start;
    VectorXd period(steps);
    VectorXd w;
    for (Eigen::Index j = 0; j < steps; ++j) {
        const Eigen::Index t = start + j;
        if (j % strategy.rebalance_every == 0) {
            require(s.col(t).allFinite(), ErrorCode::precondition,
                    "signal undefined at step " + std::to_string(t));
            const VectorXd target = target_book(strategy, panel, s.col(t));
            if (j == 0)
                w = target;
            else
                w += strategy.turnover_fraction * (target - w);
        }
        period[j] = w.dot(panel.returns().col(t));
    }
    return portfolio_report(period, periods_per_year(panel.frequency()));
}

void ScenarioSet::add(Scenario s) {
    if (!items_.empty()) {
        const Scenario& first = items_.front();
        require(s.panel.symbols() == first.panel.symbols(), ErrorCode::shape_mismatch,
                "scenario '" + s.label + "' has a different symbol universe");
        require(s.panel.n_steps() == first.panel.n_steps() && s.eval_from == first.eval_from,
                ErrorCode::shape_mismatch, "scenario '" + s.label + "' has a different window");
    }
    items_.push_back(std::move(s));
}

Scenario generate_scenario(const PreparedPanel& panel, Eigen::Index t, const RetrievalSetup& setup,
                           const NoisePredictor& model, const NoiseSchedule& sched, std::uint64_t seed,
                           const std::vector<CandidateWindow>* pool, unsigned workers) {
    const ReturnPanel& v = panel.values;
    const Eigen::Index L = setup.history_len, T = setup.horizon, n = v.n_symbols();
    require(t >= L && t <= v.n_steps(), ErrorCode::precondition, "scenario anchor leaves the panel");
    MatrixXd returns(n, L + T);
    returns.leftCols(L) = v.returns().middleCols(t - L, L);
    parallel_for(
        static_cast<std::size_t>(n),
        [&](std::size_t i) {
            const auto row = static_cast<Eigen::Index>(i);
            const std::uint64_t rseed = derive_seed(seed, "scenario/retrieval", i);
            ConditionSet cond;
            if (pool) {
                const SeriesWindow history = window_of(v, row, t - L, L);
                const VectorXd key = panel.keys.returns().row(row).segment(t - L, L).transpose();
                cond = pool_condition(history, key, *pool, setup, rseed);
            } else {
                cond = contemporaneous_condition(panel, row, t, setup, rseed);
            }
            const Ensemble e = sample(cond, model, sched, derive_seed(seed, "scenario/sample", i), 1);
            returns.row(row).tail(T) = e.paths.row(0).cwiseMax(-0.95);
        },
        workers);

    std::vector<std::int64_t> stamps(v.timestamps().begin() + (t - L), v.timestamps().begin() + std::min(t, v.n_steps()));
    const std::int64_t dt = nominal_step_seconds(v.frequency());
    while (static_cast<Eigen::Index>(stamps.size()) < L + T) {
        const auto next = static_cast<Eigen::Index>(stamps.size()) + t - L;
        stamps.push_back(next < v.n_steps() ? v.timestamps()[static_cast<std::size_t>(next)] : stamps.back() + dt);
    }
    Scenario s{"", ReturnPanel(v.symbols(), std::move(stamps), std::move(returns), v.kind(), v.frequency(), v.market()),
               L, seed, ""};
    s.label = "t=" + std::to_string(t) + ",seed=" + std::to_string(seed);
    return s;
}

OptimizationResult rule_based_filter(const std::vector<StrategyConfig>& configs, const ScenarioSet& scenarios,
                                     const Thresholds& thresholds, unsigned workers) {
    require(!configs.empty(), ErrorCode::invalid_argument, "rule-based filter needs configurations");
    require(!scenarios.empty(), ErrorCode::invalid_argument, "rule-based filter needs scenarios");
    const auto& items = scenarios.items();
    const std::size_t n_s = items.size();
    std::vector<PortfolioReport> reports(configs.size() * n_s);
    parallel_for(
        reports.size(),
        [&](std::size_t i) {
            const Scenario& sc = items[i % n_s];
            reports[i] = simulate_portfolio(configs[i / n_s], sc.panel, nullptr, sc.eval_from);
        },
        workers);

    OptimizationResult out;
    for (std::size_t c = 0; c < configs.size(); ++c) {
        std::optional<Rejection> why;
        for (std::size_t s = 0; s < n_s && !why; ++s) {
            const PortfolioReport& r = reports[c * n_s + s];
            const double sharpe = r.sharpe_defined ? r.sharpe : std::numeric_limits<double>::quiet_NaN();
            if (!(sharpe >= thresholds.min_sharpe) && thresholds.min_sharpe > -std::numeric_limits<double>::infinity())
                why = Rejection{configs[c], items[s].label, "sharpe", sharpe, thresholds.min_sharpe};
            else if (-r.max_drawdown > thresholds.max_drawdown)
                why = Rejection{configs[c], items[s].label, "max_drawdown", r.max_drawdown, thresholds.max_drawdown};
            else if (r.annualized_return < thresholds.min_annual_return)
                why = Rejection{configs[c], items[s].label, "annualized_return", r.annualized_return,
                                thresholds.min_annual_return};
        }
        if (why) {
            out.rejected.push_back(std::move(*why));
        } else {
            ConfigOutcome o{configs[c], {}};
            o.per_scenario.assign(reports.begin() + static_cast<std::ptrdiff_t>(c * n_s),
                                  reports.begin() + static_cast<std::ptrdiff_t>((c + 1) * n_s));
            out.surviving.push_back(std::move(o));
        }
    }
    return out;
}

void add_simulated(TrainingSet& set, const std::vector<ForecastWindow>& sim, int multiplier, std::uint64_t seed) {
    require(multiplier >= 0, ErrorCode::invalid_argument, "multiplier must be >= 0");
    const std::size_t want = static_cast<std::size_t>(multiplier) * set.n_real;
    if (want == 0) return;
    require(!sim.empty(), ErrorCode::empty_pool, "simulated pool is empty");
    Rng rng(derive_seed(seed, "augment"));
    if (sim.size() >= want) {
        std::vector<std::size_t> idx(sim.size());
        std::iota(idx.begin(), idx.end(), std::size_t{0});
        for (std::size_t i = 0; i < want; ++i) {
            const std::size_t j = i + static_cast<std::size_t>(uniform_index(rng, idx.size() - i));
            std::swap(idx[i], idx[j]);
            set.windows.push_back(sim[idx[i]]);
        }
    } else {
        set.with_replacement = true;
        for (std::size_t i = 0; i < want; ++i) set.windows.push_back(sim[uniform_index(rng, sim.size())]);
    }
    set.n_sim += want;
}

TrainingSet augment_dataset(const std::vector<ForecastWindow>& real, const std::vector<ForecastWindow>& sim,
                            int multiplier, std::uint64_t seed) {
    require(!real.empty(), ErrorCode::precondition, "augmentation needs a non-empty real set");
    TrainingSet set;
    set.windows = real;
    set.n_real = real.size();
    add_simulated(set, sim, multiplier, seed);
    return set;
}

std::vector<ForecastWindow> real_windows(const ReturnPanel& panel, const std::vector<Eigen::Index>& anchors,
                                         Eigen::Index lags, Eigen::Index horizon) {
    std::vector<ForecastWindow> out;
    for (Eigen::Index t : anchors) {
        require(t >= lags && t + horizon <= panel.n_steps(), ErrorCode::precondition,
                "forecast window outside panel");
        for (Eigen::Index s = 0; s < panel.n_symbols(); ++s)
            out.push_back({panel.returns().row(s).segment(t - lags, lags).transpose(),
                           panel.returns().row(s).segment(t, horizon).transpose(), "real"});
    }
    return out;
}

RidgeForecaster RidgeForecaster::fit(const TrainingSet& data, Eigen::Index lags, double ridge) {
    require(lags >= 1, ErrorCode::invalid_argument, "lags must be >= 1");
    require(ridge >= 0.0, ErrorCode::invalid_argument, "ridge penalty must be >= 0");
    const auto n = static_cast<Eigen::Index>(data.windows.size());
    require(n >= 2, ErrorCode::precondition, "forecaster needs at least two training windows");
    MatrixXd X(n, lags);
    VectorXd y(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const ForecastWindow& w = data.windows[static_cast<std::size_t>(i)];
        require(w.features.size() >= lags, ErrorCode::shape_mismatch, "training window has too few lags");
        X.row(i) = w.features.tail(lags).transpose();
        y[i] = w.label();
    }
    RidgeForecaster f;
    f.lags_ = lags;
    f.mean_ = X.colwise().mean().transpose();
    X.rowwise() -= f.mean_.transpose();
    f.scale_ = (X.colwise().squaredNorm() / static_cast<double>(n)).cwiseSqrt().transpose();
    require((f.scale_.array() > 1e-12 * (1.0 + f.mean_.array().abs())).all(), ErrorCode::undefined_statistic,
            "degenerate training set: a feature has zero variance");
    X.array().rowwise() /= f.scale_.transpose().array();
    f.intercept_ = y.mean();
    MatrixXd gram = X.transpose() * X;
    gram.diagonal().array() += ridge;
    f.coef_ = gram.ldlt().solve(X.transpose() * (y.array() - f.intercept_).matrix());
    require(f.coef_.allFinite(), ErrorCode::non_finite, "forecaster produced non-finite coefficients");
    return f;
}

double RidgeForecaster::predict(const Eigen::Ref<const VectorXd>& lagged) const {
    require(lagged.size() >= lags_, ErrorCode::shape_mismatch, "too few lagged returns");
    return intercept_ + ((lagged.tail(lags_) - mean_).array() / scale_.array()).matrix().dot(coef_);
}

MatrixXd RidgeForecaster::scores(const ReturnPanel& panel) const {
    MatrixXd s = MatrixXd::Constant(panel.n_symbols(), panel.n_steps(), std::numeric_limits<double>::quiet_NaN());
    for (Eigen::Index t = lags_; t < panel.n_steps(); ++t)
        for (Eigen::Index r = 0; r < panel.n_symbols(); ++r)
            s(r, t) = predict(panel.returns().row(r).segment(t - lags_, lags_).transpose());
    return s;
}

OptimizationResult model_based_optimize(const std::vector<ForecasterSpec>& grid,
                                        const std::vector<NamedDataset>& datasets, const ReturnPanel& validation,
                                        StrategyConfig strategy) {
    require(!grid.empty(), ErrorCode::invalid_argument, "forecaster grid is empty");
    require(!datasets.empty(), ErrorCode::invalid_argument, "no training datasets");
    strategy.signal = SignalKind::forecast;
    OptimizationResult out;
    for (const auto& spec : grid)
        for (const auto& ds : datasets) {
            ForecasterRow row;
            row.dataset = ds.name;
            row.lags = spec.lags;
            row.ridge = spec.ridge;
            try {
                const RidgeForecaster f = RidgeForecaster::fit(ds.data, spec.lags, spec.ridge);
                const MatrixXd s = f.scores(validation);
                row.validation = simulate_portfolio(strategy, validation, &s);
                row.ok = true;
                row.status = "ok";
            } catch (const Error& e) {
                row.status = std::string("failed: ") + e.what();
            }
            out.table.push_back(std::move(row));
        }
    for (std::size_t i = 0; i < out.table.size(); ++i) {
        const auto& r = out.table[i];
        if (!r.ok || !r.validation.sharpe_defined) continue;
        if (!out.best || r.validation.sharpe > out.table[*out.best].validation.sharpe) out.best = i;
    }
    return out;
}

}  // namespace fwt
