#include "fwt/pipeline.hpp"

#include <numeric>

namespace fwt {

PreparedPanel PreparedPanel::from(ReturnPanel values, bool excess_keys) {
    ReturnPanel keys = excess_keys && values.kind() == ReturnKind::plain ? excess_returns(values) : values;
    return PreparedPanel{std::move(values), std::move(keys)};
}

AnchorRange AnchorRange::of(Eigen::Index steps_begin, Eigen::Index steps_end, const RetrievalSetup& setup) {
    return AnchorRange{steps_begin + setup.history_len, steps_end - setup.horizon};
}

VectorXd true_future(const ReturnPanel& panel, Eigen::Index row, Eigen::Index t, Eigen::Index horizon) {
    require(t >= 0 && t + horizon <= panel.n_steps(), ErrorCode::precondition, "future window outside panel");
    return panel.returns().row(row).segment(t, horizon).transpose();
}

namespace {

ConditionSet assemble(const SeriesWindow& target_history, const std::vector<CandidateWindow>& pool,
                      const std::vector<RankedWindow>& ranked, Eigen::Index horizon) {
    std::vector<NeighborWindow> neighbours;
    neighbours.reserve(ranked.size());
    for (const auto& r : ranked) {
        const CandidateWindow& w = pool[r.pool_index];
        neighbours.push_back({SeriesWindow{w.symbol, w.start, w.history},
                              SeriesWindow{w.symbol, w.start + w.history.size(), w.future}});
    }
    return build_observation(target_history, neighbours, horizon);
}

RankOptions rank_options(const RetrievalSetup& setup, std::uint64_t seed) {
    RankOptions ro;
    ro.measure = setup.measure;
    ro.k = setup.effective_k();
    ro.seed = seed;
    ro.dtw_band = setup.dtw_band;
    return ro;
}

}  // namespace

ConditionSet contemporaneous_condition(const PreparedPanel& panel, Eigen::Index row, Eigen::Index t,
                                       const RetrievalSetup& setup, std::uint64_t seed,
                                       std::vector<std::string>* neighbour_symbols) {
    const ReturnPanel& values = panel.values;
    const Eigen::Index L = setup.history_len, T = setup.horizon;
    require(row >= 0 && row < values.n_symbols(), ErrorCode::precondition, "target row out of range");
    require(t - L >= 0 && t <= values.n_steps(), ErrorCode::precondition, "target history window outside panel");
    const SeriesWindow history = window_of(values, row, t - L, L);

    std::vector<CandidateWindow> pool;
    std::vector<RankedWindow> ranked;
    if (setup.effective_k() > 0) {
        require(t + T <= values.n_steps(), ErrorCode::precondition,
                "contemporaneous neighbours need their future inside the panel");
        pool.reserve(static_cast<std::size_t>(values.n_symbols()));
        for (Eigen::Index s = 0; s < values.n_symbols(); ++s) {
            if (s == row) continue;
            CandidateWindow w;
            w.symbol = values.symbols()[static_cast<std::size_t>(s)];
            w.row = s;
            w.start = t - L;
            w.history = values.returns().row(s).segment(t - L, L).transpose();
            w.future = values.returns().row(s).segment(t, T).transpose();
            w.key = panel.keys.returns().row(s).segment(t - L, L).transpose();
            pool.push_back(std::move(w));
        }
        const VectorXd key = panel.keys.returns().row(row).segment(t - L, L).transpose();
        ranked = rank_pool(key, pool, rank_options(setup, seed));
    }
    if (neighbour_symbols) {
        neighbour_symbols->clear();
        for (const auto& r : ranked) neighbour_symbols->push_back(pool[r.pool_index].symbol);
    }
    ConditionSet c = assemble(history, pool, ranked, T);
    c.anchor = t;
    return c;
}

ConditionSet pool_condition(const SeriesWindow& target_history, const Eigen::Ref<const VectorXd>& target_key,
                            const std::vector<CandidateWindow>& pool, const RetrievalSetup& setup,
                            std::uint64_t seed) {
    const auto ranked = rank_pool(target_key, pool, rank_options(setup, seed));
    return assemble(target_history, pool, ranked, setup.horizon);
}

PanelSampleSource::PanelSampleSource(PreparedPanel panel, RetrievalSetup setup, AnchorRange anchors)
    : panel_(std::move(panel)), setup_(setup), anchors_(anchors) {
    require(anchors_.first >= setup_.history_len && anchors_.last + setup_.horizon <= panel_.values.n_steps(),
            ErrorCode::precondition, "anchor range leaves the panel");
    require(panel_.values.n_symbols() > setup_.effective_k(), ErrorCode::insufficient_candidates,
            "panel has too few symbols for k neighbours");
}

ConditionSet PanelSampleSource::draw(Rng& rng) {
    require(!empty(), ErrorCode::precondition, "training data source is empty");
    const auto row = static_cast<Eigen::Index>(uniform_index(rng, static_cast<std::uint64_t>(panel_.values.n_symbols())));
    const Eigen::Index t =
        anchors_.first + static_cast<Eigen::Index>(uniform_index(rng, static_cast<std::uint64_t>(anchors_.size())));
    const std::uint64_t seed = rng();
    ConditionSet c = contemporaneous_condition(panel_, row, t, setup_, seed);
    return c.with_target(true_future(panel_.values, row, t, setup_.horizon));
}

MixtureSampleSource::MixtureSampleSource(std::vector<PanelSampleSource> sources) : sources_(std::move(sources)) {
    for (const auto& s : sources_)
        weights_.push_back(s.empty() ? 0.0 : static_cast<double>(s.anchor_count()));
}

bool MixtureSampleSource::empty() const {
    return std::accumulate(weights_.begin(), weights_.end(), 0.0) == 0.0;
}

ConditionSet MixtureSampleSource::draw(Rng& rng) {
    require(!empty(), ErrorCode::precondition, "training data source is empty");
    const double total = std::accumulate(weights_.begin(), weights_.end(), 0.0);
    double u = uniform01(rng) * total;
    for (std::size_t i = 0; i < sources_.size(); ++i) {
        if (u < weights_[i] || i + 1 == sources_.size()) return sources_[i].draw(rng);
        u -= weights_[i];
    }
    return sources_.back().draw(rng);
}

ConditionSet ListSampleSource::draw(Rng& rng) {
    require(!items_.empty(), ErrorCode::precondition, "training data source is empty");
    return items_[uniform_index(rng, items_.size())];
}

}  // namespace fwt
