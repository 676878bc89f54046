#include "fwt/retrieval.hpp"

#include "fwt/parallel.hpp"
#include "fwt/rng.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstring>
#include <cmath>
#include <limits>
#include <numeric>

namespace fwt {

namespace {

bool degenerate(const Eigen::Ref<const VectorXd>& centered, double scale) {
    const double ss = centered.squaredNorm();
    const double floor = 1e-13 * scale;
    return !(ss > static_cast<double>(centered.size()) * floor * floor);
}

}  // namespace

double pearson(const Eigen::Ref<const VectorXd>& a, const Eigen::Ref<const VectorXd>& b) {
    require(a.size() == b.size(), ErrorCode::shape_mismatch, "pearson: length mismatch");
    require(a.size() >= 2, ErrorCode::precondition, "pearson: need at least two observations");
    const VectorXd ca = a.array() - a.mean();
    const VectorXd cb = b.array() - b.mean();
    if (degenerate(ca, a.cwiseAbs().maxCoeff()) || degenerate(cb, b.cwiseAbs().maxCoeff()))
        fail(ErrorCode::undefined_statistic, "pearson: zero-variance input");
    const double r = ca.dot(cb) / std::sqrt(ca.squaredNorm() * cb.squaredNorm());
    return std::clamp(r, -1.0, 1.0);
}

double dtw(const Eigen::Ref<const VectorXd>& a, const Eigen::Ref<const VectorXd>& b, int band) {
    require(a.size() > 0 && b.size() > 0, ErrorCode::precondition, "dtw: empty input");
    const Eigen::Index n = a.size();
    const Eigen::Index m = b.size();
    Eigen::Index radius = std::max(n, m);
    if (band >= 0) radius = std::max<Eigen::Index>(band, std::abs(n - m));

    constexpr double inf = std::numeric_limits<double>::infinity();
    std::vector<double> prev(static_cast<std::size_t>(m) + 1, inf);
    std::vector<double> cur(static_cast<std::size_t>(m) + 1, inf);
    prev[0] = 0.0;
    for (Eigen::Index i = 1; i <= n; ++i) {
        std::fill(cur.begin(), cur.end(), inf);
        const Eigen::Index lo = std::max<Eigen::Index>(1, i - radius);
        const Eigen::Index hi = std::min<Eigen::Index>(m, i + radius);
        for (Eigen::Index j = lo; j <= hi; ++j) {
            const auto ju = static_cast<std::size_t>(j);
            const double best = std::min({prev[ju], prev[ju - 1], cur[ju - 1]});
            cur[ju] = std::abs(a[i - 1] - b[j - 1]) + best;
        }
        std::swap(prev, cur);
    }
    return prev[static_cast<std::size_t>(m)];
}

std::string_view to_string(SimilarityMeasure m) {
    switch (m) {
        case SimilarityMeasure::excess_return_correlation: return "excess_return_correlation";
        case SimilarityMeasure::dtw: return "dtw";
        case SimilarityMeasure::random: return "random";
        case SimilarityMeasure::none: return "none";
    }
    return "unknown";
}

SimilarityMeasure parse_measure(std::string_view name) {
    if (name == "corr" || name == "correlation") return SimilarityMeasure::excess_return_correlation;
    for (auto m : {SimilarityMeasure::excess_return_correlation, SimilarityMeasure::dtw, SimilarityMeasure::random,
                   SimilarityMeasure::none})
        if (to_string(m) == name) return m;
    fail(ErrorCode::parse, "unknown similarity measure '" + std::string(name) + "'");
}

double WindowStats::get(WindowStat s) const {
    switch (s) {
        case WindowStat::vol: return vol;
        case WindowStat::cumret: return cumret;
        case WindowStat::maxdd: return maxdd;
    }
    return 0.0;
}

WindowStats window_stats(const Eigen::Ref<const VectorXd>& future) {
    WindowStats s;
    const auto n = future.size();
    if (n >= 2) s.vol = std::sqrt((future.array() - future.mean()).square().sum() / static_cast<double>(n - 1));
    double nav = 1.0, peak = 1.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        nav *= 1.0 + future[i];
        peak = std::max(peak, nav);
        s.maxdd = std::min(s.maxdd, nav / peak - 1.0);
    }
    s.cumret = nav - 1.0;
    return s;
}

namespace {

class PredicateLexer {
public:
    explicit PredicateLexer(std::string_view text) : text_(text) {}

    std::string next() {
        while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
        if (pos_ >= text_.size()) return {};
        const std::size_t start = pos_;
        const char c = text_[pos_];
        if (c == '<' || c == '>') {
            ++pos_;
            if (pos_ < text_.size() && text_[pos_] == '=') ++pos_;
        } else if (c == '(' || c == ')') {
            ++pos_;
        } else if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
            while (pos_ < text_.size() &&
                   (std::isalnum(static_cast<unsigned char>(text_[pos_])) || text_[pos_] == '_'))
                ++pos_;
        } else {
            while (pos_ < text_.size() && (std::isdigit(static_cast<unsigned char>(text_[pos_])) ||
                                           std::strchr("+-.eE", text_[pos_]) != nullptr))
                ++pos_;
            if (pos_ == start) ++pos_;
        }
        return std::string(text_.substr(start, pos_ - start));
    }

    std::string peek() {
        const std::size_t saved = pos_;
        std::string tok = next();
        pos_ = saved;
        return tok;
    }

private:
    std::string_view text_;
    std::size_t pos_ = 0;
};

double parse_float(const std::string& tok, std::string_view text) {
    double v = 0.0;
    const char* first = tok.data();
    if (!tok.empty() && tok[0] == '+') ++first;
    auto [ptr, ec] = std::from_chars(first, tok.data() + tok.size(), v);
    require(!tok.empty() && ec == std::errc() && ptr == tok.data() + tok.size() && std::isfinite(v),
            ErrorCode::parse, "predicate '" + std::string(text) + "': bad number '" + tok + "'");
    return v;
}

}  // namespace

Predicate Predicate::parse(std::string_view text) {
    Predicate p;
    p.text_ = std::string(text);
    PredicateLexer lex(text);
    auto bad = [&](const std::string& why) { fail(ErrorCode::parse, "predicate '" + p.text_ + "': " + why); };

    std::vector<Clause> conj;
    while (true) {
        Clause c;
        const std::string stat = lex.next();
        if (stat == "vol")
            c.stat = WindowStat::vol;
        else if (stat == "cumret")
            c.stat = WindowStat::cumret;
        else if (stat == "maxdd")
            c.stat = WindowStat::maxdd;
        else
            bad(stat.empty() ? "expected a statistic" : "unknown statistic '" + stat + "'");

        const std::string cmp = lex.next();
        if (cmp == "<=")
            c.cmp = Cmp::le;
        else if (cmp == ">=")
            c.cmp = Cmp::ge;
        else if (cmp == "<")
            c.cmp = Cmp::lt;
        else if (cmp == ">")
            c.cmp = Cmp::gt;
        else
            bad("expected comparison, got '" + cmp + "'");

        std::string tok = lex.next();
        if (tok == "q") {
            if (lex.next() != "(") bad("expected '(' after q");
            c.value = parse_float(lex.next(), text);
            c.is_quantile = true;
            if (lex.next() != ")") bad("expected ')' closing q(");
            if (!(c.value > 0.0 && c.value < 1.0)) bad("quantile level must lie in (0, 1)");
        } else {
            c.value = parse_float(tok, text);
        }
        conj.push_back(c);

        const std::string joiner = lex.next();
        if (joiner.empty()) break;
        if (joiner == "or") {
            p.disjuncts_.push_back(std::move(conj));
            conj.clear();
        } else if (joiner != "and") {
            bad("expected 'and'/'or', got '" + joiner + "'");
        }
    }
    p.disjuncts_.push_back(std::move(conj));
    return p;
}

double quantile(std::vector<double> values, double p) {
    require(!values.empty(), ErrorCode::precondition, "quantile of empty set");
    std::sort(values.begin(), values.end());
    const double h = (static_cast<double>(values.size()) - 1.0) * p;
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const std::size_t hi = std::min(lo + 1, values.size() - 1);
    return values[lo] + (h - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

std::vector<CandidateWindow> build_candidate_pool(const ReturnPanel& panel, const PoolOptions& options) {
    require(options.history_len >= 1 && options.horizon >= 0 && options.stride >= 1, ErrorCode::invalid_argument,
            "pool: bad window geometry");
    const Eigen::Index span = options.history_len + options.horizon;
    Eigen::Index end_limit = panel.n_steps();
    if (options.future_end_limit >= 0) end_limit = std::min(end_limit, options.future_end_limit);

    std::vector<Eigen::Index> starts = options.starts;
    if (starts.empty())
        for (Eigen::Index s = 0; s + span <= end_limit; s += options.stride) starts.push_back(s);

    const ReturnPanel keys_panel =
        options.excess_keys && panel.kind() == ReturnKind::plain ? excess_returns(panel) : panel;

    auto listed = [](const std::vector<std::string>& list, const std::string& s) {
        return std::find(list.begin(), list.end(), s) != list.end();
    };
    std::vector<CandidateWindow> pool;
    for (Eigen::Index row = 0; row < panel.n_symbols(); ++row) {
        const std::string& sym = panel.symbols()[static_cast<std::size_t>(row)];
        if (listed(options.exclude, sym)) continue;
        if (!options.include_only.empty() && !listed(options.include_only, sym)) continue;
        for (Eigen::Index start : starts) {
            if (start < 0 || start + span > end_limit) continue;
            CandidateWindow w;
            w.symbol = sym;
            w.row = row;
            w.start = start;
            w.history = panel.returns().row(row).segment(start, options.history_len).transpose();
            w.future = panel.returns().row(row).segment(start + options.history_len, options.horizon).transpose();
            w.key = keys_panel.returns().row(row).segment(start, options.history_len).transpose();
            w.stats = window_stats(w.future);
            pool.push_back(std::move(w));
        }
    }
    return pool;
}

std::vector<CandidateWindow> scenario_filter(const std::vector<CandidateWindow>& pool, const Predicate& predicate) {
    require(!pool.empty(), ErrorCode::empty_pool, "scenario_filter: empty input pool");
    // Resolve quantile literals against the incoming pool.
    auto resolved = predicate.disjuncts();
    for (auto& conj : resolved) {
        for (auto& c : conj) {
            if (!c.is_quantile) continue;
            std::vector<double> values;
            values.reserve(pool.size());
            for (const auto& w : pool) values.push_back(w.stats.get(c.stat));
            c.value = quantile(std::move(values), c.value);
            c.is_quantile = false;
        }
    }
    auto holds = [](const Predicate::Clause& c, double v) {
        switch (c.cmp) {
            case Predicate::Cmp::le: return v <= c.value;
            case Predicate::Cmp::ge: return v >= c.value;
            case Predicate::Cmp::lt: return v < c.value;
            case Predicate::Cmp::gt: return v > c.value;
        }
        return false;
    };
    std::vector<CandidateWindow> out;
    for (const auto& w : pool) {
        bool any = false;
        for (const auto& conj : resolved) {
            bool all = true;
            for (const auto& c : conj) all = all && holds(c, w.stats.get(c.stat));
            any = any || all;
        }
        if (any) out.push_back(w);
    }
    require(!out.empty(), ErrorCode::empty_pool, "scenario_filter: no window satisfies '" + predicate.text() + "'");
    return out;
}

std::vector<RankedWindow> rank_pool(const Eigen::Ref<const VectorXd>& key, const std::vector<CandidateWindow>& pool,
                                    const RankOptions& options) {
    require(options.k >= 0, ErrorCode::invalid_argument, "k must be >= 0");
    if (options.measure == SimilarityMeasure::none || options.k == 0) return {};

    auto order_key = [&](std::size_t i, std::size_t j) {
        if (pool[i].symbol != pool[j].symbol) return pool[i].symbol < pool[j].symbol;
        return pool[i].start < pool[j].start;
    };

    std::vector<RankedWindow> eligible;
    if (options.measure == SimilarityMeasure::random) {
        std::vector<std::size_t> idx(pool.size());
        std::iota(idx.begin(), idx.end(), std::size_t{0});
        std::sort(idx.begin(), idx.end(), order_key);
        Rng rng(derive_seed(options.seed, "retrieval/random"));
        for (std::size_t i = 0; i + 1 < idx.size(); ++i)
            std::swap(idx[i], idx[i + uniform_index(rng, idx.size() - i)]);
        for (std::size_t i : idx) eligible.push_back({i, 0.0});
    } else {
        const bool corr = options.measure == SimilarityMeasure::excess_return_correlation;
        std::vector<double> scores(pool.size(), std::numeric_limits<double>::quiet_NaN());
        parallel_for(
            pool.size(),
            [&](std::size_t i) {
                if (corr) {
                    try {
                        scores[i] = pearson(key, pool[i].key);
                    } catch (const Error&) {
                    }
                } else {
                    scores[i] = dtw(key, pool[i].key, options.dtw_band);
                }
            },
            options.workers);
        for (std::size_t i = 0; i < pool.size(); ++i)
            if (!std::isnan(scores[i])) eligible.push_back({i, scores[i]});
        std::sort(eligible.begin(), eligible.end(), [&](const RankedWindow& x, const RankedWindow& y) {
            if (x.score != y.score) return corr ? x.score > y.score : x.score < y.score;
            return order_key(x.pool_index, y.pool_index);
        });
    }
    require(static_cast<Eigen::Index>(eligible.size()) >= options.k, ErrorCode::insufficient_candidates,
            "only " + std::to_string(eligible.size()) + " eligible candidates for k=" + std::to_string(options.k));
    eligible.resize(static_cast<std::size_t>(options.k));
    return eligible;
}

void RetrievalQuery::validate() const {
    require(history_len >= 2, ErrorCode::invalid_argument, "history_len must be >= 2");
    require(horizon >= 1, ErrorCode::invalid_argument, "horizon must be >= 1");
    require(k >= 0, ErrorCode::invalid_argument, "k must be >= 0");
    require((k == 0) == (measure == SimilarityMeasure::none), ErrorCode::invalid_argument,
            "k = 0 exactly when measure = none");
}

std::vector<std::string> similar_stocks(const RetrievalQuery& query, const ReturnPanel& panel) {
    query.validate();
    const Eigen::Index row = panel.index_of(query.target_symbol);
    require(row >= 0, ErrorCode::precondition, "target '" + query.target_symbol + "' not in panel");
    require(query.t - query.history_len >= 0 && query.t <= panel.n_steps(), ErrorCode::precondition,
            "target history window outside panel");
    if (query.measure == SimilarityMeasure::none) return {};

    PoolOptions po;
    po.history_len = query.history_len;
    po.horizon = 0;
    po.starts = {query.t - query.history_len};
    po.exclude = {query.target_symbol};
    po.excess_keys = query.excess_keys;
    if (query.scope.kind == ScopeKind::symbol_list) po.include_only = query.scope.symbols;
    const auto pool = build_candidate_pool(panel, po);

    const ReturnPanel keys =
        query.excess_keys && panel.kind() == ReturnKind::plain ? excess_returns(panel) : panel;
    const VectorXd target_key = keys.returns().row(row).segment(po.starts[0], query.history_len).transpose();

    RankOptions ro;
    ro.measure = query.measure;
    ro.k = query.k;
    ro.seed = query.seed;
    ro.dtw_band = query.dtw_band;
    std::vector<std::string> out;
    for (const auto& r : rank_pool(target_key, pool, ro)) out.push_back(pool[r.pool_index].symbol);
    return out;
}

RowStats row_stats(const Eigen::Ref<const VectorXd>& observed) {
    RowStats s;
    if (observed.size() == 0) return s;
    s.mean = observed.mean();
    const double var = (observed.array() - s.mean).square().mean();
    s.std = var > 1e-24 ? std::sqrt(var) : 1.0;
    return s;
}

VectorXd ConditionSet::target_values() const {
    return values.row(0).segment(history_len, horizon).transpose();
}

ConditionSet ConditionSet::with_target(const Eigen::Ref<const VectorXd>& raw_future) const {
    require(raw_future.size() == horizon, ErrorCode::shape_mismatch, "target future length must equal horizon");
    ConditionSet out = *this;
    out.values.row(0).segment(history_len, horizon) =
        ((raw_future.array() - row_mean[0]) / row_std[0]).matrix().transpose();
    return out;
}

VectorXd ConditionSet::denormalize_target(const Eigen::Ref<const VectorXd>& normalized) const {
    return (normalized.array() * row_std[0] + row_mean[0]).matrix();
}

ConditionSet build_observation(const SeriesWindow& target_history, const std::vector<NeighborWindow>& neighbors,
                               Eigen::Index horizon) {
    const Eigen::Index hist = target_history.length();
    require(hist >= 1 && horizon >= 1, ErrorCode::precondition, "build_observation: empty history or horizon");
    for (const auto& nb : neighbors)
        require(nb.history.length() == hist && nb.future.length() == horizon, ErrorCode::shape_mismatch,
                "build_observation: neighbour window length mismatch");

    const auto rows = static_cast<Eigen::Index>(neighbors.size()) + 1;
    ConditionSet c;
    c.history_len = hist;
    c.horizon = horizon;
    c.anchor = target_history.start + hist;
    c.values = MatrixXd::Zero(rows, hist + horizon);
    c.mask = MaskMatrix::Ones(rows, hist + horizon);
    c.row_mean.resize(rows);
    c.row_std.resize(rows);

    const RowStats ts = row_stats(target_history.values);
    c.row_mean[0] = ts.mean;
    c.row_std[0] = ts.std;
    c.values.row(0).head(hist) = ((target_history.values.array() - ts.mean) / ts.std).matrix().transpose();
    c.values.row(0).tail(horizon).setConstant(std::numeric_limits<double>::quiet_NaN());
    c.mask.row(0).tail(horizon).setZero();
    c.row_symbols.push_back(target_history.symbol);

    for (Eigen::Index r = 1; r < rows; ++r) {
        const auto& nb = neighbors[static_cast<std::size_t>(r - 1)];
        VectorXd full(hist + horizon);
        full << nb.history.values, nb.future.values;
        const RowStats s = row_stats(full);
        c.row_mean[r] = s.mean;
        c.row_std[r] = s.std;
        c.values.row(r) = ((full.array() - s.mean) / s.std).matrix().transpose();
        c.row_symbols.push_back(nb.history.symbol);
    }
    return c;
}

}  // namespace fwt
