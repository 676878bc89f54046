#include "fwt/market_data.hpp"

#include "fwt/rng.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <unordered_map>

namespace fwt {

namespace {

std::int64_t floor_div(std::int64_t a, std::int64_t b) {
    std::int64_t q = a / b;
    if ((a % b != 0) && ((a < 0) != (b < 0))) --q;
    return q;
}

// Days since 1970-01-01 for a proleptic Gregorian date.
std::int64_t days_from_civil(std::int64_t y, unsigned m, unsigned d) {
    y -= m <= 2;
    const std::int64_t era = (y >= 0 ? y : y - 399) / 400;
    const auto yoe = static_cast<unsigned>(y - era * 400);
    const unsigned doy = (153 * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
    const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
    return era * 146097 + static_cast<std::int64_t>(doe) - 719468;
}

std::string trim(std::string_view s) {
    auto b = s.find_first_not_of(" \t\r\n\"");
    if (b == std::string_view::npos) return {};
    auto e = s.find_last_not_of(" \t\r\n\"");
    return std::string(s.substr(b, e - b + 1));
}

template <typename T>
bool parse_number(std::string_view s, T& out) {
    const char* first = s.data();
    const char* last = s.data() + s.size();
    if (first != last && *first == '+') ++first;
    auto [ptr, ec] = std::from_chars(first, last, out);
    return ec == std::errc() && ptr == last;
}

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cell;
    std::istringstream in(line);
    while (std::getline(in, cell, ',')) out.push_back(trim(cell));
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

void check_unique(const std::vector<std::string>& symbols) {
    std::vector<std::string> sorted = symbols;
    std::sort(sorted.begin(), sorted.end());
    require(std::adjacent_find(sorted.begin(), sorted.end()) == sorted.end(), ErrorCode::invalid_argument,
            "duplicate symbol in panel");
}

void check_increasing(const std::vector<std::int64_t>& ts) {
    for (std::size_t i = 1; i < ts.size(); ++i)
        require(ts[i] > ts[i - 1], ErrorCode::invalid_argument, "timestamps must be strictly increasing");
}

Eigen::Index find_symbol(const std::vector<std::string>& symbols, std::string_view symbol) {
    auto it = std::find(symbols.begin(), symbols.end(), symbol);
    return it == symbols.end() ? -1 : static_cast<Eigen::Index>(it - symbols.begin());
}

}  // namespace

std::string_view to_string(Frequency f) {
    switch (f) {
        case Frequency::tick: return "tick";
        case Frequency::minute: return "minute";
        case Frequency::hour: return "hour";
        case Frequency::day: return "day";
        case Frequency::week: return "week";
    }
    return "unknown";
}

Frequency parse_frequency(std::string_view name) {
    for (auto f : {Frequency::tick, Frequency::minute, Frequency::hour, Frequency::day, Frequency::week})
        if (to_string(f) == name) return f;
    fail(ErrorCode::parse, "unknown frequency '" + std::string(name) + "'");
}

std::int64_t nominal_step_seconds(Frequency f) {
    switch (f) {
        case Frequency::tick: return 1;
        case Frequency::minute: return 60;
        case Frequency::hour: return 3600;
        case Frequency::day: return 86400;
        case Frequency::week: return 7 * 86400;
    }
    return 1;
}

std::int64_t calendar_bucket(std::int64_t t, Frequency f) {
    switch (f) {
        case Frequency::tick: return t;
        case Frequency::minute: return floor_div(t, 60);
        case Frequency::hour: return floor_div(t, 3600);
        case Frequency::day: return floor_div(t, 86400);
        // 1970-01-01 was a Thursday; shift so buckets start on Monday.
        case Frequency::week: return floor_div(floor_div(t, 86400) + 3, 7);
    }
    return t;
}

std::int64_t parse_timestamp(std::string_view text) {
    const std::string s = trim(text);
    std::int64_t epoch = 0;
    if (parse_number(s, epoch)) return epoch;

    int y = 0;
    unsigned mo = 0, d = 0, hh = 0, mm = 0, ss = 0;
    auto digits = [&](std::size_t pos, std::size_t n, auto& out) {
        if (pos + n > s.size()) return false;
        return parse_number(std::string_view(s).substr(pos, n), out);
    };
    bool ok = s.size() >= 10 && s[4] == '-' && s[7] == '-' && digits(0, 4, y) && digits(5, 2, mo) &&
              digits(8, 2, d) && mo >= 1 && mo <= 12 && d >= 1 && d <= 31;
    if (ok && s.size() > 10) {
        ok = (s[10] == 'T' || s[10] == ' ') && s.size() >= 16 && s[13] == ':' && digits(11, 2, hh) &&
             digits(14, 2, mm);
        std::size_t pos = 16;
        if (ok && s.size() > pos && s[pos] == ':') {
            ok = digits(pos + 1, 2, ss);
            pos += 3;
        }
        if (ok && s.size() > pos) ok = (s.size() == pos + 1 && s[pos] == 'Z');
        ok = ok && hh < 24 && mm < 60 && ss < 61;
    }
    require(ok, ErrorCode::parse, "unparseable timestamp '" + s + "'");
    return days_from_civil(y, mo, d) * 86400 + hh * 3600 + mm * 60 + ss;
}

PricePanel::PricePanel(std::vector<std::string> symbols, std::vector<std::int64_t> timestamps, MatrixXd prices,
                       Frequency frequency, std::string market)
    : symbols_(std::move(symbols)),
      timestamps_(std::move(timestamps)),
      prices_(std::move(prices)),
      frequency_(frequency),
      market_(std::move(market)) {
    require(prices_.rows() == static_cast<Eigen::Index>(symbols_.size()) &&
                prices_.cols() == static_cast<Eigen::Index>(timestamps_.size()),
            ErrorCode::shape_mismatch, "price matrix shape does not match symbols x timestamps");
    check_unique(symbols_);
    check_increasing(timestamps_);
    require(prices_.allFinite() && (prices_.size() == 0 || prices_.minCoeff() > 0.0), ErrorCode::precondition,
            "prices must be strictly positive and finite");
}

Eigen::Index PricePanel::index_of(std::string_view symbol) const { return find_symbol(symbols_, symbol); }

std::string_view to_string(ReturnKind k) { return k == ReturnKind::plain ? "plain" : "excess"; }

ReturnPanel::ReturnPanel(std::vector<std::string> symbols, std::vector<std::int64_t> timestamps, MatrixXd returns,
                         ReturnKind kind, Frequency frequency, std::string market)
    : symbols_(std::move(symbols)),
      timestamps_(std::move(timestamps)),
      returns_(std::move(returns)),
      kind_(kind),
      frequency_(frequency),
      market_(std::move(market)) {
    require(returns_.rows() == static_cast<Eigen::Index>(symbols_.size()) &&
                returns_.cols() == static_cast<Eigen::Index>(timestamps_.size()),
            ErrorCode::shape_mismatch, "return matrix shape does not match symbols x timestamps");
    check_unique(symbols_);
    check_increasing(timestamps_);
    require(returns_.allFinite(), ErrorCode::non_finite, "returns must be finite");
}

Eigen::Index ReturnPanel::index_of(std::string_view symbol) const { return find_symbol(symbols_, symbol); }

ReturnPanel ReturnPanel::select_rows(std::span<const Eigen::Index> rows) const {
    std::vector<std::string> syms;
    MatrixXd r(static_cast<Eigen::Index>(rows.size()), returns_.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        syms.push_back(symbols_.at(static_cast<std::size_t>(rows[i])));
        r.row(static_cast<Eigen::Index>(i)) = returns_.row(rows[i]);
    }
    return ReturnPanel(std::move(syms), timestamps_, std::move(r), kind_, frequency_, market_);
}

ReturnPanel ReturnPanel::slice_steps(Eigen::Index begin, Eigen::Index count) const {
    require(begin >= 0 && count >= 0 && begin + count <= n_steps(), ErrorCode::precondition,
            "step slice out of range");
    std::vector<std::int64_t> ts(timestamps_.begin() + begin, timestamps_.begin() + begin + count);
    return ReturnPanel(symbols_, std::move(ts), returns_.middleCols(begin, count), kind_, frequency_, market_);
}

SeriesWindow window_of(const ReturnPanel& panel, Eigen::Index row, Eigen::Index start, Eigen::Index length) {
    require(row >= 0 && row < panel.n_symbols(), ErrorCode::precondition, "symbol row out of range");
    require(length >= 1 && start >= 0 && start + length <= panel.n_steps(), ErrorCode::precondition,
            "window outside panel");
    return SeriesWindow{panel.symbols()[static_cast<std::size_t>(row)], start,
                        panel.returns().row(row).segment(start, length).transpose()};
}

IngestReport ingest_csv(const std::filesystem::path& path, const std::string& market, Frequency frequency) {
    std::ifstream in(path);
    require(in.good(), ErrorCode::io, "cannot read " + path.string());

    std::map<std::string, std::map<std::int64_t, double>> rows;
    std::size_t read = 0, skipped = 0;
    std::string line;
    bool first = true;
    while (std::getline(in, line)) {
        if (first) {
            first = false;
            if (line.size() >= 3 && static_cast<unsigned char>(line[0]) == 0xEF) line.erase(0, 3);  // BOM
            auto cells = split_csv_line(line);
            if (!cells.empty() && cells[0] == "timestamp") continue;
        }
        if (trim(line).empty()) continue;
        auto cells = split_csv_line(line);
        double close = 0.0;
        if (cells.size() < 3 || cells[1].empty() || !parse_number(cells[2], close)) {
            ++skipped;
            continue;
        }
        std::int64_t ts = 0;
        try {
            ts = parse_timestamp(cells[0]);
        } catch (const Error&) {
            ++skipped;
            continue;
        }
        rows[cells[1]][ts] = close;
        ++read;
    }
    require(read > 0, ErrorCode::parse, "no parseable rows in " + path.string());

    std::vector<std::int64_t> all_ts;
    for (const auto& [sym, series] : rows)
        for (const auto& [ts, _] : series) all_ts.push_back(ts);
    std::sort(all_ts.begin(), all_ts.end());
    all_ts.erase(std::unique(all_ts.begin(), all_ts.end()), all_ts.end());

    std::unordered_map<std::int64_t, Eigen::Index> col_of;
    for (std::size_t i = 0; i < all_ts.size(); ++i) col_of[all_ts[i]] = static_cast<Eigen::Index>(i);

    const auto n_ts = static_cast<Eigen::Index>(all_ts.size());
    std::vector<std::string> kept, dropped;
    std::vector<VectorXd> kept_rows;
    for (const auto& [sym, series] : rows) {
        const auto missing = n_ts - static_cast<Eigen::Index>(series.size());
        if (static_cast<double>(missing) > 0.10 * static_cast<double>(n_ts)) {
            dropped.push_back(sym);
            continue;
        }
        VectorXd row = VectorXd::Constant(n_ts, std::numeric_limits<double>::quiet_NaN());
        for (const auto& [ts, px] : series) row[col_of[ts]] = px;
        double last = series.begin()->second;
        for (Eigen::Index i = 0; i < n_ts; ++i) {
            if (std::isnan(row[i]))
                row[i] = last;
            else
                last = row[i];
        }
        kept.push_back(sym);
        kept_rows.push_back(std::move(row));
    }
    require(!kept.empty(), ErrorCode::precondition, "every symbol was dropped by the missing-data rule");

    MatrixXd prices(static_cast<Eigen::Index>(kept.size()), n_ts);
    for (std::size_t s = 0; s < kept.size(); ++s) {
        require((kept_rows[s].array() > 0.0).all() && kept_rows[s].allFinite(), ErrorCode::precondition,
                "non-positive price after cleaning for symbol " + kept[s]);
        prices.row(static_cast<Eigen::Index>(s)) = kept_rows[s].transpose();
    }
    return IngestReport{PricePanel(std::move(kept), std::move(all_ts), std::move(prices), frequency, market),
                        std::move(dropped), read, skipped};
}

ReturnPanel to_returns(const PricePanel& panel) {
    require(panel.n_timestamps() >= 2, ErrorCode::precondition, "need at least two timestamps for returns");
    const MatrixXd& p = panel.prices();
    require((p.array() != 0.0).all(), ErrorCode::precondition, "zero price in panel");
    const Eigen::Index n = p.cols() - 1;
    MatrixXd r = (p.rightCols(n).array() - p.leftCols(n).array()) / p.leftCols(n).array();
    std::vector<std::int64_t> ts(panel.timestamps().begin() + 1, panel.timestamps().end());
    return ReturnPanel(panel.symbols(), std::move(ts), std::move(r), ReturnKind::plain, panel.frequency(),
                       panel.market());
}

ReturnPanel excess_returns(const ReturnPanel& panel) {
    require(panel.kind() == ReturnKind::plain, ErrorCode::precondition, "excess_returns expects plain returns");
    MatrixXd r = panel.returns();
    if (r.rows() > 0) r.rowwise() -= r.colwise().mean();
    return ReturnPanel(panel.symbols(), panel.timestamps(), std::move(r), ReturnKind::excess, panel.frequency(),
                       panel.market());
}

ReturnPanel clip_outliers(const ReturnPanel& panel, double n_sigma) {
    MatrixXd r = panel.returns();
    const Eigen::Index n = r.rows();
    if (n >= 2) {
        for (Eigen::Index i = 0; i < r.cols(); ++i) {
            auto col = r.col(i);
            const double mean = col.mean();
            const double sd = std::sqrt((col.array() - mean).square().sum() / static_cast<double>(n - 1));
            if (sd > 0.0) col = col.array().min(mean + n_sigma * sd).max(mean - n_sigma * sd).matrix();
        }
    }
    return ReturnPanel(panel.symbols(), panel.timestamps(), std::move(r), panel.kind(), panel.frequency(),
                       panel.market());
}

PricePanel resample(const PricePanel& panel, Frequency target) {
    require(static_cast<int>(target) >= static_cast<int>(panel.frequency()), ErrorCode::precondition,
            "cannot resample " + std::string(to_string(panel.frequency())) + " to finer frequency " +
                std::string(to_string(target)));
    const auto& ts = panel.timestamps();
    std::vector<Eigen::Index> last_in_bucket;
    for (std::size_t i = 0; i < ts.size(); ++i) {
        const bool closes = i + 1 == ts.size() || calendar_bucket(ts[i + 1], target) != calendar_bucket(ts[i], target);
        if (closes) last_in_bucket.push_back(static_cast<Eigen::Index>(i));
    }
    MatrixXd p(panel.n_symbols(), static_cast<Eigen::Index>(last_in_bucket.size()));
    std::vector<std::int64_t> out_ts;
    for (std::size_t j = 0; j < last_in_bucket.size(); ++j) {
        p.col(static_cast<Eigen::Index>(j)) = panel.prices().col(last_in_bucket[j]);
        out_ts.push_back(ts[static_cast<std::size_t>(last_in_bucket[j])]);
    }
    return PricePanel(panel.symbols(), std::move(out_ts), std::move(p), target, panel.market());
}

int synth_block_of(int s, int n_stocks, int n_factors) {
    return static_cast<int>(static_cast<std::int64_t>(s) * n_factors / n_stocks);
}

PricePanel synth_factor_panel(int n_stocks, int n_steps, int n_factors, std::uint64_t seed, double noise_vol,
                              double factor_vol, const SynthOptions& options) {
    require(n_stocks >= 1 && n_steps >= 1 && n_factors >= 1, ErrorCode::invalid_argument,
            "synthetic panel counts must be >= 1");
    require(noise_vol >= 0.0 && factor_vol > 0.0, ErrorCode::invalid_argument, "volatilities must be positive");
    require(n_factors <= n_stocks, ErrorCode::invalid_argument, "more factors than stocks");

    Rng factor_rng = make_rng(seed, "synth/factors");
    Rng noise_rng = make_rng(seed, "synth/noise");
    Rng regime_rng = make_rng(seed, "synth/regime");
    Rng drift_rng = make_rng(seed, "synth/drift");

    MatrixXd factors(n_factors, n_steps);
    VectorXd vol_mult(n_steps);
    VectorXd drift = VectorXd::Zero(n_factors);
    bool high = false;
    for (int i = 0; i < n_steps; ++i) {
        if (options.regime_switch_prob > 0.0 && uniform01(regime_rng) < options.regime_switch_prob) high = !high;
        vol_mult[i] = high ? options.regime_high_mult : 1.0;
        for (int f = 0; f < n_factors; ++f) {
            if (options.drift_vol > 0.0)
                drift[f] = options.drift_persistence * drift[f] + options.drift_vol * standard_normal(drift_rng);
            factors(f, i) = drift[f] + vol_mult[i] * factor_vol * standard_normal(factor_rng);
        }
    }

    MatrixXd returns(n_stocks, n_steps);
    for (int s = 0; s < n_stocks; ++s) {
        const int block = synth_block_of(s, n_stocks, n_factors);
        for (int i = 0; i < n_steps; ++i)
            returns(s, i) = factors(block, i) + vol_mult[i] * noise_vol * standard_normal(noise_rng);
    }
    returns = returns.cwiseMax(-0.95);

    const int width = std::max(2, static_cast<int>(std::to_string(n_stocks - 1).size()));
    std::vector<std::string> symbols;
    MatrixXd prices(n_stocks, n_steps + 1);
    for (int s = 0; s < n_stocks; ++s) {
        std::string num = std::to_string(s);
        symbols.push_back(options.symbol_prefix + std::string(static_cast<std::size_t>(width) - num.size(), '0') + num);
        prices.row(s) = returns_to_prices(100.0, returns.row(s).transpose()).transpose();
    }
    std::vector<std::int64_t> ts(static_cast<std::size_t>(n_steps) + 1);
    const std::int64_t step = nominal_step_seconds(options.frequency);
    for (std::size_t i = 0; i < ts.size(); ++i) ts[i] = options.start_epoch + static_cast<std::int64_t>(i) * step;
    return PricePanel(std::move(symbols), std::move(ts), std::move(prices), options.frequency, options.market);
}

VectorXd returns_to_prices(double p0, const Eigen::Ref<const VectorXd>& returns) {
    require(p0 > 0.0, ErrorCode::precondition, "initial price must be positive");
    require(returns.size() == 0 || returns.minCoeff() > -1.0, ErrorCode::precondition,
            "return <= -1 would make the price non-positive");
    VectorXd p(returns.size() + 1);
    p[0] = p0;
    for (Eigen::Index i = 0; i < returns.size(); ++i) p[i + 1] = p[i] * (1.0 + returns[i]);
    return p;
}

void save_panel(const PricePanel& panel, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    require(out.good(), ErrorCode::io, "cannot write " + path.string());
    out << "FWTPANEL1\n";
    out << "market=" << panel.market() << ",frequency=" << to_string(panel.frequency()) << "\n";
    out << "timestamp,symbol,close\n";
    char buf[64];
    for (Eigen::Index t = 0; t < panel.n_timestamps(); ++t) {
        for (Eigen::Index s = 0; s < panel.n_symbols(); ++s) {
            std::snprintf(buf, sizeof buf, "%.17g", panel.prices()(s, t));
            out << panel.timestamps()[static_cast<std::size_t>(t)] << ',' << panel.symbols()[static_cast<std::size_t>(s)]
                << ',' << buf << '\n';
        }
    }
    require(out.good(), ErrorCode::io, "write failed for " + path.string());
}

PricePanel load_panel(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    require(in.good(), ErrorCode::io, "cannot read " + path.string());
    std::string line;
    require(std::getline(in, line) && line == "FWTPANEL1", ErrorCode::corrupt_file,
            path.string() + ": missing FWTPANEL1 magic");
    require(static_cast<bool>(std::getline(in, line)), ErrorCode::corrupt_file, path.string() + ": truncated");
    std::string market;
    Frequency freq = Frequency::day;
    for (const auto& kv : split_csv_line(line)) {
        auto eq = kv.find('=');
        require(eq != std::string::npos, ErrorCode::corrupt_file, path.string() + ": bad metadata line");
        if (kv.substr(0, eq) == "market") market = kv.substr(eq + 1);
        if (kv.substr(0, eq) == "frequency") freq = parse_frequency(kv.substr(eq + 1));
    }
    require(std::getline(in, line) && line == "timestamp,symbol,close", ErrorCode::corrupt_file,
            path.string() + ": missing column header");

    std::vector<std::string> symbols;
    std::unordered_map<std::string, Eigen::Index> sym_index;
    std::vector<std::int64_t> ts;
    std::vector<double> values;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        auto cells = split_csv_line(line);
        std::int64_t t = 0;
        double px = 0.0;
        require(cells.size() == 3 && parse_number(cells[0], t) && parse_number(cells[2], px), ErrorCode::corrupt_file,
                path.string() + ": bad row '" + line + "'");
        if (ts.empty() || ts.back() != t) ts.push_back(t);
        if (!sym_index.count(cells[1])) {
            require(ts.size() == 1, ErrorCode::corrupt_file, path.string() + ": symbol set changes over time");
            sym_index[cells[1]] = static_cast<Eigen::Index>(symbols.size());
            symbols.push_back(cells[1]);
        }
        values.push_back(px);
    }
    const auto n_sym = static_cast<Eigen::Index>(symbols.size());
    const auto n_ts = static_cast<Eigen::Index>(ts.size());
    require(n_sym > 0 && static_cast<Eigen::Index>(values.size()) == n_sym * n_ts, ErrorCode::corrupt_file,
            path.string() + ": incomplete panel");
    MatrixXd prices(n_sym, n_ts);
    for (Eigen::Index t = 0; t < n_ts; ++t)
        for (Eigen::Index s = 0; s < n_sym; ++s) prices(s, t) = values[static_cast<std::size_t>(t * n_sym + s)];
    return PricePanel(std::move(symbols), std::move(ts), std::move(prices), freq, market);
}

std::string_view to_string(ErrorCode code) {
    switch (code) {
        case ErrorCode::invalid_argument: return "invalid_argument";
        case ErrorCode::io: return "io";
        case ErrorCode::parse: return "parse";
        case ErrorCode::precondition: return "precondition";
        case ErrorCode::undefined_statistic: return "undefined_statistic";
        case ErrorCode::insufficient_candidates: return "insufficient_candidates";
        case ErrorCode::empty_pool: return "empty_pool";
        case ErrorCode::shape_mismatch: return "shape_mismatch";
        case ErrorCode::corrupt_file: return "corrupt_file";
        case ErrorCode::fingerprint_mismatch: return "fingerprint_mismatch";
        case ErrorCode::non_finite: return "non_finite";
    }
    return "unknown";
}

}  // namespace fwt
