#include "fwt/evaluation.hpp"

#include <cmath>

namespace fwt {

double sim_real_correlation(const Eigen::Ref<const VectorXd>& real_future, const Eigen::Ref<const VectorXd>& generated) {
    return pearson(real_future, generated);
}

double ranking_percentile(double generated_coef, const std::vector<double>& universe_coefs) {
    double credit = 1.0;
    for (double c : universe_coefs) {
        if (c < generated_coef)
            credit += 1.0;
        else if (c == generated_coef)
            credit += 0.5;
    }
    return credit / static_cast<double>(universe_coefs.size() + 1);
}

RankingResult market_ranking(const Eigen::Ref<const VectorXd>& real_future, const Eigen::Ref<const VectorXd>& generated,
                             const std::map<std::string, VectorXd>& universe_futures) {
    RankingResult r;
    r.generated_correlation = pearson(real_future, generated);
    std::vector<double> coefs;
    for (const auto& [symbol, future] : universe_futures) {
        require(future.size() == real_future.size(), ErrorCode::shape_mismatch,
                "universe future for " + symbol + " has the wrong length");
        try {
            coefs.push_back(pearson(real_future, future));
        } catch (const Error& e) {
            if (e.code() != ErrorCode::undefined_statistic) throw;
            r.skipped.push_back(symbol);
        }
    }
    r.candidates = coefs.size() + 1;
    r.percentile = ranking_percentile(r.generated_correlation, coefs);
    return r;
}

double annualized_return(const Eigen::Ref<const VectorXd>& nav, double periods_per_year) {
    require(nav.size() >= 2, ErrorCode::precondition, "annualized_return needs at least two NAV points");
    require(nav.minCoeff() > 0.0, ErrorCode::precondition, "NAV must be positive");
    const double periods = static_cast<double>(nav.size() - 1);
    return std::pow(nav[nav.size() - 1] / nav[0], periods_per_year / periods) - 1.0;
}

double max_drawdown(const Eigen::Ref<const VectorXd>& nav) {
    require(nav.size() >= 1, ErrorCode::precondition, "max_drawdown needs a non-empty NAV");
    require(nav.minCoeff() > 0.0, ErrorCode::precondition, "NAV must be positive");
    double peak = nav[0];
    double worst = 0.0;
    for (Eigen::Index i = 0; i < nav.size(); ++i) {
        peak = std::max(peak, nav[i]);
        worst = std::min(worst, nav[i] / peak - 1.0);
    }
    return worst;
}

double sharpe(const Eigen::Ref<const VectorXd>& period_returns, double periods_per_year) {
    const auto n = period_returns.size();
    require(n >= 2, ErrorCode::precondition, "sharpe needs at least two returns");
    const double mean = period_returns.mean();
    const double var = (period_returns.array() - mean).square().sum() / static_cast<double>(n - 1);
    const double scale = period_returns.cwiseAbs().maxCoeff();
    if (!(var > 1e-26 * scale * scale) || var == 0.0)
        fail(ErrorCode::undefined_statistic, "sharpe: zero standard deviation");
    return mean / std::sqrt(var) * std::sqrt(periods_per_year);
}

double periods_per_year(Frequency f) {
    switch (f) {
        case Frequency::week: return 52.0;
        case Frequency::day: return 252.0;
        case Frequency::hour: return 252.0 * 4.0;
        case Frequency::minute: return 252.0 * 240.0;
        case Frequency::tick: return 252.0 * 240.0 * 60.0;
    }
    return 252.0;
}

PortfolioReport portfolio_report(const Eigen::Ref<const VectorXd>& period_returns, double ppy) {
    PortfolioReport r;
    r.nav = returns_to_prices(1.0, period_returns);
    r.annualized_return = annualized_return(r.nav, ppy);
    r.max_drawdown = max_drawdown(r.nav);
    try {
        r.sharpe = sharpe(period_returns, ppy);
    } catch (const Error& e) {
        if (e.code() != ErrorCode::undefined_statistic) throw;
        r.sharpe = 0.0;
        r.sharpe_defined = false;
    }
    return r;
}

StockEvaluation evaluate_window(const ReturnPanel& panel, Eigen::Index row, Eigen::Index t,
                                const Eigen::Ref<const VectorXd>& generated) {
    const Eigen::Index T = generated.size();
    const VectorXd real = true_future(panel, row, t, T);
    std::map<std::string, VectorXd> universe;
    for (Eigen::Index s = 0; s < panel.n_symbols(); ++s)
        if (s != row) universe.emplace(panel.symbols()[static_cast<std::size_t>(s)], true_future(panel, s, t, T));
    const RankingResult r = market_ranking(real, generated, universe);
    return StockEvaluation{panel.symbols()[static_cast<std::size_t>(row)], t, r.generated_correlation, r.percentile};
}

GenEvalReport summarize(std::vector<StockEvaluation> rows, std::size_t universe_size, std::size_t skipped) {
    GenEvalReport rep;
    rep.universe_size = universe_size;
    rep.skipped = skipped;
    for (const auto& r : rows) {
        rep.correlation += r.correlation;
        rep.market_ranking += r.market_ranking;
    }
    if (!rows.empty()) {
        rep.correlation /= static_cast<double>(rows.size());
        rep.market_ranking /= static_cast<double>(rows.size());
    }
    rep.per_stock = std::move(rows);
    return rep;
}

}  // namespace fwt
