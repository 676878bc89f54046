#pragma once

#include "fwt/evaluation.hpp"

#include <limits>
#include <optional>
#include <string>
#include <vector>

namespace fwt {

enum class SignalKind {
    momentum,   ///< trailing sum of `lookback` returns
    foresight,  ///< sum of the next `horizon` returns (an upper-bound oracle)
    forecast,   ///< externally supplied score matrix
    zero,
};

std::string_view to_string(SignalKind k);
SignalKind parse_signal(std::string_view name);

struct StrategyConfig {
    std::string name;
    SignalKind signal = SignalKind::momentum;
    Eigen::Index lookback = 20;
    Eigen::Index horizon = 20;
    Eigen::Index rebalance_every = 5;
    double turnover_fraction = 0.25;
    Eigen::Index n_long = 5;
    Eigen::Index n_short = 5;

    void validate(Eigen::Index universe) const;
};

/// Scores known at the start of each step, [n_symbols x n_steps]; NaN marks
/// steps where the signal is undefined.
MatrixXd signal_scores(const StrategyConfig& strategy, const ReturnPanel& panel);

/// Long-short backtest. The first rebalance (at `first_step`, or the first
/// step with a fully defined signal) builds the target book: +1/n_long on the
/// top n_long scores and -1/n_short on the bottom n_short, ties broken by
/// symbol. Every `rebalance_every` steps after that the weights move
/// `turnover_fraction` of the way to the new target. Weights are held
/// constant between rebalances and there are no costs.
PortfolioReport simulate_portfolio(const StrategyConfig& strategy, const ReturnPanel& panel,
                                   const MatrixXd* scores = nullptr, Eigen::Index first_step = -1);

/// A generated (or real) panel with where it came from.
struct Scenario {
    std::string label;
    ReturnPanel panel;
    Eigen::Index eval_from = 0;  ///< backtests start here; earlier steps are real history
    std::uint64_t seed = 0;
    std::string predicate;  ///< what-if filter, empty if unconditioned
};

class ScenarioSet {
public:
    /// All scenarios must share the symbol universe, length and eval_from.
    void add(Scenario s);
    const std::vector<Scenario>& items() const { return items_; }
    bool empty() const { return items_.empty(); }

private:
    std::vector<Scenario> items_;
};

/// Copy of the real panel's history [t - L, t) followed by one generated
/// future [t, t + T) per symbol. Without a pool the neighbours are the
/// contemporaneous windows; with a pool they are ranked from it.
Scenario generate_scenario(const PreparedPanel& panel, Eigen::Index t, const RetrievalSetup& setup,
                           const NoisePredictor& model, const NoiseSchedule& sched, std::uint64_t seed,
                           const std::vector<CandidateWindow>* pool = nullptr, unsigned workers = 1);

struct Thresholds {
    double min_sharpe = -std::numeric_limits<double>::infinity();
    double max_drawdown = std::numeric_limits<double>::infinity();  ///< largest tolerated |drawdown|
    double min_annual_return = -std::numeric_limits<double>::infinity();
};

struct ConfigOutcome {
    StrategyConfig config;
    std::vector<PortfolioReport> per_scenario;
};

struct Rejection {
    StrategyConfig config;
    std::string scenario;
    std::string metric;  ///< "sharpe", "max_drawdown" or "annualized_return"
    double value = 0.0;
    double threshold = 0.0;
};

/// One (forecaster, dataset) row of a model-based search.
struct ForecasterRow {
    std::string dataset;
    Eigen::Index lags = 0;
    double ridge = 0.0;
    bool ok = false;
    std::string status;
    PortfolioReport validation;
};

struct OptimizationResult {
    std::vector<ConfigOutcome> surviving;
    std::vector<Rejection> rejected;
    std::vector<ForecasterRow> table;
    std::optional<std::size_t> best;  ///< index into `table`
};

/// A configuration survives iff it meets every threshold on every scenario;
/// a rejection records the first violated (scenario, metric).
OptimizationResult rule_based_filter(const std::vector<StrategyConfig>& configs, const ScenarioSet& scenarios,
                                     const Thresholds& thresholds, unsigned workers = 1);

// ---------------------------------------------------------------------------
// Simulation-augmented forecaster search.

/// One supervised example: lagged returns (oldest first) and the return path
/// that followed; the label is the sum of `future`.
struct ForecastWindow {
    VectorXd features;
    VectorXd future;
    std::string source;  ///< "real", "sim", "vol-sim", ...

    double label() const { return future.sum(); }
};

struct TrainingSet {
    std::vector<ForecastWindow> windows;
    std::size_t n_real = 0;
    std::size_t n_sim = 0;
    bool with_replacement = false;  ///< the sim pool was smaller than requested
};

/// Real windows (verbatim, first) plus multiplier * |real| draws from `sim`.
TrainingSet augment_dataset(const std::vector<ForecastWindow>& real, const std::vector<ForecastWindow>& sim,
                            int multiplier, std::uint64_t seed);

/// Appends multiplier * n_real draws from another pool to an augmented set.
void add_simulated(TrainingSet& set, const std::vector<ForecastWindow>& sim, int multiplier, std::uint64_t seed);

/// Windows (lags before t, horizon from t) of every symbol at each anchor.
std::vector<ForecastWindow> real_windows(const ReturnPanel& panel, const std::vector<Eigen::Index>& anchors,
                                         Eigen::Index lags, Eigen::Index horizon);

/// Ridge regression of the label on the last `lags` features, standardized
/// on the training set; the intercept is not penalized.
class RidgeForecaster {
public:
    static RidgeForecaster fit(const TrainingSet& data, Eigen::Index lags, double ridge);
    double predict(const Eigen::Ref<const VectorXd>& lagged) const;
    /// Scores for simulate_portfolio: prediction from the `lags` returns before each step.
    MatrixXd scores(const ReturnPanel& panel) const;

    Eigen::Index lags() const { return lags_; }
    const VectorXd& coefficients() const { return coef_; }

private:
    Eigen::Index lags_ = 0;
    VectorXd mean_, scale_, coef_;
    double intercept_ = 0.0;
};

struct ForecasterSpec {
    Eigen::Index lags = 20;
    double ridge = 1.0;
};

struct NamedDataset {
    std::string name;
    TrainingSet data;
};

/// Fits one forecaster per (grid point, dataset), backtests its scores on the
/// validation panel with `strategy` (signal forced to forecast) and selects
/// the highest validation Sharpe; earlier rows win ties.
OptimizationResult model_based_optimize(const std::vector<ForecasterSpec>& grid,
                                        const std::vector<NamedDataset>& datasets, const ReturnPanel& validation,
                                        StrategyConfig strategy);

}  // namespace fwt
