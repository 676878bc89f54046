#pragma once

#include "fwt/diffusion.hpp"

#include <optional>
#include <vector>

namespace fwt {

/// Window geometry and neighbour-selection rule shared by training,
/// generation and evaluation.
struct RetrievalSetup {
    Eigen::Index history_len = 250;
    Eigen::Index horizon = 20;
    Eigen::Index k = 16;
    SimilarityMeasure measure = SimilarityMeasure::excess_return_correlation;
    bool excess_keys = true;
    int dtw_band = -1;

    /// k forced to 0 for measure none.
    Eigen::Index effective_k() const { return measure == SimilarityMeasure::none ? 0 : k; }
};

/// A return panel with its similarity keys (excess returns unless disabled).
struct PreparedPanel {
    ReturnPanel values;
    ReturnPanel keys;

    static PreparedPanel from(ReturnPanel values, bool excess_keys = true);
};

/// Anchors t with a full history and a known future inside [0, limit).
struct AnchorRange {
    Eigen::Index first = 0;  ///< smallest admissible t
    Eigen::Index last = 0;   ///< largest admissible t

    static AnchorRange of(Eigen::Index steps_begin, Eigen::Index steps_end, const RetrievalSetup& setup);
    Eigen::Index size() const { return last >= first ? last - first + 1 : 0; }
};

/// Condition set for target `row` anchored at t from the contemporaneous
/// windows [t - L, t + T) of the other panel symbols. Target cells are NaN.
ConditionSet contemporaneous_condition(const PreparedPanel& panel, Eigen::Index row, Eigen::Index t,
                                       const RetrievalSetup& setup, std::uint64_t seed,
                                       std::vector<std::string>* neighbour_symbols = nullptr);

/// Condition set whose neighbours come from a candidate pool (historical
/// analogues, another market, or a what-if filtered pool).
ConditionSet pool_condition(const SeriesWindow& target_history, const Eigen::Ref<const VectorXd>& target_key,
                            const std::vector<CandidateWindow>& pool, const RetrievalSetup& setup, std::uint64_t seed);

/// Raw future returns [t, t + T) of `row`.
VectorXd true_future(const ReturnPanel& panel, Eigen::Index row, Eigen::Index t, Eigen::Index horizon);

/// Uniformly samples (target, anchor) pairs from a panel and yields
/// contemporaneous condition sets with the true future in the target cells.
class PanelSampleSource final : public SampleSource {
public:
    PanelSampleSource(PreparedPanel panel, RetrievalSetup setup, AnchorRange anchors);

    ConditionSet draw(Rng& rng) override;
    bool empty() const override { return anchors_.size() == 0 || panel_.values.n_symbols() == 0; }

    const PreparedPanel& panel() const { return panel_; }
    const RetrievalSetup& setup() const { return setup_; }
    /// Number of distinct (row, anchor) pairs.
    Eigen::Index anchor_count() const { return anchors_.size() * panel_.values.n_symbols(); }

private:
    PreparedPanel panel_;
    RetrievalSetup setup_;
    AnchorRange anchors_;
};

/// Draws from several sources in proportion to their anchor counts.
class MixtureSampleSource final : public SampleSource {
public:
    explicit MixtureSampleSource(std::vector<PanelSampleSource> sources);
    ConditionSet draw(Rng& rng) override;
    bool empty() const override;

private:
    std::vector<PanelSampleSource> sources_;
    std::vector<double> weights_;
};

/// Fixed list of condition sets (targets populated), drawn uniformly.
class ListSampleSource final : public SampleSource {
public:
    explicit ListSampleSource(std::vector<ConditionSet> items) : items_(std::move(items)) {}
    ConditionSet draw(Rng& rng) override;
    bool empty() const override { return items_.empty(); }

private:
    std::vector<ConditionSet> items_;
};

}  // namespace fwt
