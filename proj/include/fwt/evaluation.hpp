#pragma once

#include "fwt/pipeline.hpp"

#include <map>
#include <string>
#include <vector>

namespace fwt {

/// Pearson correlation between the realized and generated future.
double sim_real_correlation(const Eigen::Ref<const VectorXd>& real_future, const Eigen::Ref<const VectorXd>& generated);

struct RankingResult {
    double percentile = 0.0;          ///< in [0, 1]
    double generated_correlation = 0.0;
    std::size_t candidates = 0;       ///< generated + usable universe members
    std::vector<std::string> skipped;  ///< zero-variance universe members
};

/// Percentile of Coef(real, generated) among Coef(real, c) for c in
/// {generated} and the universe: the share of candidates whose coefficient is
/// <= the generated one. The generated path counts fully; universe members
/// with an equal coefficient count one half.
RankingResult market_ranking(const Eigen::Ref<const VectorXd>& real_future, const Eigen::Ref<const VectorXd>& generated,
                             const std::map<std::string, VectorXd>& universe_futures);

/// Same statistic from precomputed coefficients.
double ranking_percentile(double generated_coef, const std::vector<double>& universe_coefs);

double annualized_return(const Eigen::Ref<const VectorXd>& nav, double periods_per_year);
double max_drawdown(const Eigen::Ref<const VectorXd>& nav);
/// mean / sample std * sqrt(periods_per_year), risk-free rate 0.
double sharpe(const Eigen::Ref<const VectorXd>& period_returns, double periods_per_year);

/// Conventional bars per year for a frequency (252 trading days).
double periods_per_year(Frequency f);

struct PortfolioReport {
    double annualized_return = 0.0;
    double max_drawdown = 0.0;
    double sharpe = 0.0;
    bool sharpe_defined = true;
    VectorXd nav;
};

/// NAV metrics of a period-return series; nav starts at 1.
PortfolioReport portfolio_report(const Eigen::Ref<const VectorXd>& period_returns, double periods_per_year);

struct StockEvaluation {
    std::string symbol;
    Eigen::Index anchor = 0;
    double correlation = 0.0;
    double market_ranking = 0.0;
};

struct GenEvalReport {
    double correlation = 0.0;     ///< mean over evaluated windows
    double market_ranking = 0.0;  ///< mean over evaluated windows
    std::size_t universe_size = 0;
    std::size_t skipped = 0;      ///< windows with a degenerate real or generated path
    std::vector<StockEvaluation> per_stock;
};

/// Scores a generated mean path against the realized future of (row, t) and
/// the futures of every other panel symbol over the same steps.
StockEvaluation evaluate_window(const ReturnPanel& panel, Eigen::Index row, Eigen::Index t,
                                const Eigen::Ref<const VectorXd>& generated);

GenEvalReport summarize(std::vector<StockEvaluation> rows, std::size_t universe_size, std::size_t skipped);

}  // namespace fwt
