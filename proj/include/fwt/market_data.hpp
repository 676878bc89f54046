#pragma once

#include "fwt/types.hpp"

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace fwt {

/// Sampling frequencies, ordered from finest to coarsest.
enum class Frequency { tick = 0, minute = 1, hour = 2, day = 3, week = 4 };

std::string_view to_string(Frequency f);
Frequency parse_frequency(std::string_view name);

/// Nominal bar length in seconds for synthetic timestamps (tick = 1 s).
std::int64_t nominal_step_seconds(Frequency f);

/// Calendar bucket of an epoch-second timestamp at frequency `f`. Weeks start
/// on Monday.
std::int64_t calendar_bucket(std::int64_t epoch_seconds, Frequency f);

/// Parses an integer epoch (seconds) or an ISO-8601 date / date-time
/// (`YYYY-MM-DD`, `YYYY-MM-DDTHH:MM[:SS][Z]`, space separator allowed).
std::int64_t parse_timestamp(std::string_view text);

/// Immutable close-price matrix [symbols x timestamps].
class PricePanel {
public:
    PricePanel(std::vector<std::string> symbols, std::vector<std::int64_t> timestamps, MatrixXd prices,
               Frequency frequency, std::string market);

    const std::vector<std::string>& symbols() const noexcept { return symbols_; }
    const std::vector<std::int64_t>& timestamps() const noexcept { return timestamps_; }
    const MatrixXd& prices() const noexcept { return prices_; }
    Frequency frequency() const noexcept { return frequency_; }
    const std::string& market() const noexcept { return market_; }

    Eigen::Index n_symbols() const noexcept { return prices_.rows(); }
    Eigen::Index n_timestamps() const noexcept { return prices_.cols(); }
    /// Row of `symbol`, or -1.
    Eigen::Index index_of(std::string_view symbol) const;

private:
    std::vector<std::string> symbols_;
    std::vector<std::int64_t> timestamps_;
    MatrixXd prices_;
    Frequency frequency_;
    std::string market_;
};

enum class ReturnKind { plain, excess };

std::string_view to_string(ReturnKind k);

/// Simple returns; column i is the return ending at timestamps()[i].
class ReturnPanel {
public:
    ReturnPanel(std::vector<std::string> symbols, std::vector<std::int64_t> timestamps, MatrixXd returns,
                ReturnKind kind, Frequency frequency, std::string market);

    const std::vector<std::string>& symbols() const noexcept { return symbols_; }
    const std::vector<std::int64_t>& timestamps() const noexcept { return timestamps_; }
    const MatrixXd& returns() const noexcept { return returns_; }
    ReturnKind kind() const noexcept { return kind_; }
    Frequency frequency() const noexcept { return frequency_; }
    const std::string& market() const noexcept { return market_; }

    Eigen::Index n_symbols() const noexcept { return returns_.rows(); }
    Eigen::Index n_steps() const noexcept { return returns_.cols(); }
    Eigen::Index index_of(std::string_view symbol) const;

    /// Copy of this panel restricted to the given rows (in the given order).
    ReturnPanel select_rows(std::span<const Eigen::Index> rows) const;
    /// Copy restricted to columns [begin, begin + count).
    ReturnPanel slice_steps(Eigen::Index begin, Eigen::Index count) const;

private:
    std::vector<std::string> symbols_;
    std::vector<std::int64_t> timestamps_;
    MatrixXd returns_;
    ReturnKind kind_;
    Frequency frequency_;
    std::string market_;
};

/// Slice of one symbol's returns.
struct SeriesWindow {
    std::string symbol;
    Eigen::Index start = 0;
    VectorXd values;

    Eigen::Index length() const noexcept { return values.size(); }
};

SeriesWindow window_of(const ReturnPanel& panel, Eigen::Index row, Eigen::Index start, Eigen::Index length);

struct IngestReport {
    PricePanel panel;
    std::vector<std::string> dropped_symbols;
    std::size_t rows_read = 0;
    std::size_t rows_skipped = 0;
};

/// Reads `timestamp,symbol,close` rows. Missing cells are forward-filled per
/// symbol (leading gaps back-filled from the first observation); symbols
/// missing more than 10% of the panel's timestamps are dropped.
IngestReport ingest_csv(const std::filesystem::path& path, const std::string& market, Frequency frequency);

ReturnPanel to_returns(const PricePanel& panel);

/// Subtracts the equal-weight cross-sectional mean at every timestamp.
ReturnPanel excess_returns(const ReturnPanel& panel);

/// Clips each return to mean +/- n_sigma cross-sectional standard deviations
/// of its timestamp. Timestamps with fewer than two symbols are untouched.
ReturnPanel clip_outliers(const ReturnPanel& panel, double n_sigma = 5.0);

/// Last-close-in-bucket aggregation to a coarser frequency.
PricePanel resample(const PricePanel& panel, Frequency target);

/// Optional structure layered on top of the block factor model.
struct SynthOptions {
    Frequency frequency = Frequency::day;
    std::int64_t start_epoch = 1262563200;  // 2010-01-04 (Monday)
    std::string market = "SYNTH";
    std::string symbol_prefix = "S";
    /// Market-wide two-state volatility regime: per-step switch probability
    /// (0 disables) and the volatility multiplier of the high state.
    double regime_switch_prob = 0.0;
    double regime_high_mult = 1.0;
    /// Persistent factor drift: mu <- persistence * mu + drift_vol * xi, added
    /// to every factor return (0 disables).
    double drift_persistence = 0.0;
    double drift_vol = 0.0;
};

/// Block factor model r[s][i] = F[block(s)][i] + noise_vol * eta[s][i] with
/// stocks split evenly across factors; prices start at 100. `n_steps` is the
/// number of returns (the panel has n_steps + 1 timestamps).
PricePanel synth_factor_panel(int n_stocks, int n_steps, int n_factors, std::uint64_t seed, double noise_vol,
                              double factor_vol, const SynthOptions& options = {});

/// Factor block of stock `s` in a synthetic panel.
int synth_block_of(int s, int n_stocks, int n_factors);

/// Inverse of to_returns for one series; the result includes p0.
VectorXd returns_to_prices(double p0, const Eigen::Ref<const VectorXd>& returns);

/// Flat CSV dump: first line `FWTPANEL1`, then `market=<m>,frequency=<f>`,
/// then `timestamp,symbol,close` rows with round-trip precision.
void save_panel(const PricePanel& panel, const std::filesystem::path& path);
PricePanel load_panel(const std::filesystem::path& path);

}  // namespace fwt
