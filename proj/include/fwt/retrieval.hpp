#pragma once

#include "fwt/market_data.hpp"

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace fwt {

/// Sample Pearson coefficient. Throws undefined_statistic on zero variance.
double pearson(const Eigen::Ref<const VectorXd>& a, const Eigen::Ref<const VectorXd>& b);

/// Dynamic time warping with |a_i - b_j| local cost. A negative `band` means
/// unconstrained warping; otherwise a Sakoe-Chiba radius (widened to cover
/// the length difference).
double dtw(const Eigen::Ref<const VectorXd>& a, const Eigen::Ref<const VectorXd>& b, int band = -1);

enum class SimilarityMeasure { excess_return_correlation, dtw, random, none };

std::string_view to_string(SimilarityMeasure m);
SimilarityMeasure parse_measure(std::string_view name);

// ---------------------------------------------------------------------------
// What-if predicates over future-slice statistics.

enum class WindowStat { vol, cumret, maxdd };

struct WindowStats {
    double vol = 0.0;     ///< sample std of the future returns
    double cumret = 0.0;  ///< compounded return of the future slice
    double maxdd = 0.0;   ///< max drawdown of the future NAV (<= 0)

    double get(WindowStat s) const;
};

WindowStats window_stats(const Eigen::Ref<const VectorXd>& future);

/// Parsed predicate: a disjunction of conjunctions ('and' binds tighter).
class Predicate {
public:
    enum class Cmp { le, ge, lt, gt };
    struct Clause {
        WindowStat stat = WindowStat::vol;
        Cmp cmp = Cmp::ge;
        double value = 0.0;
        bool is_quantile = false;  ///< value is a quantile level in (0, 1)
    };

    /// Grammar: expr := clause (('and'|'or') clause)*;
    /// clause := stat cmp value; stat in {vol, cumret, maxdd};
    /// cmp in {<=, >=, <, >}; value := float | q(p), 0 < p < 1.
    static Predicate parse(std::string_view text);

    const std::vector<std::vector<Clause>>& disjuncts() const noexcept { return disjuncts_; }
    const std::string& text() const noexcept { return text_; }

private:
    std::vector<std::vector<Clause>> disjuncts_;
    std::string text_;
};

/// Linear-interpolation quantile (type 7) of `values`, p in [0, 1].
double quantile(std::vector<double> values, double p);

// ---------------------------------------------------------------------------
// Candidate windows and neighbour search.

struct CandidateWindow {
    std::string symbol;
    Eigen::Index row = 0;    ///< row in the panel the window was cut from
    Eigen::Index start = 0;  ///< first history step
    VectorXd history;        ///< returns as fed to the generator
    VectorXd future;         ///< next `T` returns
    VectorXd key;            ///< series used for similarity (excess history by default)
    WindowStats stats;       ///< statistics of `future`
};

struct PoolOptions {
    Eigen::Index history_len = 250;
    Eigen::Index horizon = 20;
    /// Windows whose future ends after this step index are excluded (-1: no limit).
    Eigen::Index future_end_limit = -1;
    /// Only windows with history starting at these indices; empty = every `stride`.
    std::vector<Eigen::Index> starts;
    Eigen::Index stride = 1;
    /// Symbols never placed in the pool.
    std::vector<std::string> exclude;
    /// When non-empty, only these symbols are eligible.
    std::vector<std::string> include_only;
    bool excess_keys = true;
};

/// Cuts every eligible (symbol, start) window out of `panel`.
std::vector<CandidateWindow> build_candidate_pool(const ReturnPanel& panel, const PoolOptions& options);

/// Keeps the windows whose future statistics satisfy `predicate`. Quantile
/// literals resolve against the incoming pool. Order is preserved; an empty
/// result throws empty_pool.
std::vector<CandidateWindow> scenario_filter(const std::vector<CandidateWindow>& pool, const Predicate& predicate);

struct RankOptions {
    SimilarityMeasure measure = SimilarityMeasure::excess_return_correlation;
    Eigen::Index k = 16;
    std::uint64_t seed = 0;  ///< random baseline only
    int dtw_band = -1;
    unsigned workers = 1;
};

struct RankedWindow {
    std::size_t pool_index = 0;
    double score = 0.0;  ///< correlation, DTW distance, or 0 for random
};

/// Top-k pool entries by similarity of `key` to each window's key:
/// correlation descending, DTW ascending, ties by symbol then start.
/// Zero-variance windows are ineligible for correlation.
std::vector<RankedWindow> rank_pool(const Eigen::Ref<const VectorXd>& key, const std::vector<CandidateWindow>& pool,
                                    const RankOptions& options);

enum class ScopeKind { same_market, other_market, symbol_list };

struct RetrievalScope {
    ScopeKind kind = ScopeKind::same_market;
    std::string market;                ///< other_market: name of the candidate panel's market
    std::vector<std::string> symbols;  ///< symbol_list: the eligible universe
};

struct RetrievalQuery {
    std::string target_symbol;
    Eigen::Index t = 0;  ///< history covers steps [t - history_len, t)
    Eigen::Index history_len = 250;
    Eigen::Index horizon = 20;
    Eigen::Index k = 16;
    SimilarityMeasure measure = SimilarityMeasure::excess_return_correlation;
    RetrievalScope scope;
    std::optional<Predicate> predicate;
    std::uint64_t seed = 0;
    int dtw_band = -1;
    bool excess_keys = true;

    void validate() const;
};

/// The K symbols most similar to the target over its history window, from
/// contemporaneous windows of `panel` (target excluded).
std::vector<std::string> similar_stocks(const RetrievalQuery& query, const ReturnPanel& panel);

// ---------------------------------------------------------------------------
// Conditional observation matrix.

/// X and mask M of the conditional generator: row 0 is the target, rows 1..K
/// the neighbours; columns are history followed by horizon. Rows are z-scored
/// on their observed cells; target-future cells of X hold NaN unless set via
/// with_target().
struct ConditionSet {
    MatrixXd values;
    MaskMatrix mask;
    std::vector<std::string> row_symbols;
    Eigen::Index history_len = 0;
    Eigen::Index horizon = 0;
    Eigen::Index anchor = 0;  ///< t of the query
    VectorXd row_mean;
    VectorXd row_std;

    Eigen::Index rows() const noexcept { return values.rows(); }
    Eigen::Index cols() const noexcept { return values.cols(); }
    Eigen::Index n_target() const noexcept { return horizon; }

    /// Target cells (row 0, last `horizon` columns) of X, normalized units.
    VectorXd target_values() const;
    /// Copy with the target cells set from raw (un-normalized) future returns.
    ConditionSet with_target(const Eigen::Ref<const VectorXd>& raw_future) const;
    /// Maps normalized target-row values back to returns.
    VectorXd denormalize_target(const Eigen::Ref<const VectorXd>& normalized) const;
};

struct NeighborWindow {
    SeriesWindow history;
    SeriesWindow future;
};

ConditionSet build_observation(const SeriesWindow& target_history, const std::vector<NeighborWindow>& neighbors,
                               Eigen::Index horizon);

/// Z-scores `row` with population statistics; constant rows get std 1.
struct RowStats {
    double mean = 0.0;
    double std = 1.0;
};
RowStats row_stats(const Eigen::Ref<const VectorXd>& observed);

}  // namespace fwt
