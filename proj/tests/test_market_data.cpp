#include "helpers.hpp"

#include "fwt/market_data.hpp"
#include "fwt/rng.hpp"

#include <algorithm>
#include <cmath>

using namespace fwt;
using fwt::test::check_error;

namespace {

PricePanel one_row(std::vector<double> closes, Frequency f = Frequency::day) {
    const auto n = static_cast<Eigen::Index>(closes.size());
    std::vector<std::int64_t> ts;
    for (Eigen::Index i = 0; i < n; ++i) ts.push_back(1704067200 + 86400 * i);  // 2024-01-01
    MatrixXd p(1, n);
    for (Eigen::Index i = 0; i < n; ++i) p(0, i) = closes[static_cast<std::size_t>(i)];
    return PricePanel({"A"}, ts, p, f, "M");
}

ReturnPanel returns_of(const MatrixXd& r) {
    std::vector<std::string> syms;
    for (Eigen::Index s = 0; s < r.rows(); ++s) syms.push_back("S" + std::to_string(s));
    std::vector<std::int64_t> ts;
    for (Eigen::Index i = 0; i < r.cols(); ++i) ts.push_back(i);
    return ReturnPanel(syms, ts, r, ReturnKind::plain, Frequency::day, "M");
}

double brute_corr(const VectorXd& a, const VectorXd& b) {
    const double ma = a.mean(), mb = b.mean();
    double sab = 0, saa = 0, sbb = 0;
    for (Eigen::Index i = 0; i < a.size(); ++i) {
        sab += (a[i] - ma) * (b[i] - mb);
        saa += (a[i] - ma) * (a[i] - ma);
        sbb += (b[i] - mb) * (b[i] - mb);
    }
    return sab / std::sqrt(saa * sbb);
}

}  // namespace

TEST_SUITE("market_data") {

TEST_CASE("ingest echoes a single symbol") {
    fwt::test::TempDir dir("ingest1");
    fwt::test::write_text(dir / "p.csv", "timestamp,symbol,close\n2024-01-01,A,100\n2024-01-02,A,110\n2024-01-03,A,99\n");
    const IngestReport r = ingest_csv(dir / "p.csv", "M", Frequency::day);
    REQUIRE(r.panel.n_symbols() == 1);
    REQUIRE(r.panel.n_timestamps() == 3);
    CHECK(r.panel.prices()(0, 0) == 100.0);
    CHECK(r.panel.prices()(0, 1) == 110.0);
    CHECK(r.panel.prices()(0, 2) == 99.0);
    CHECK(r.dropped_symbols.empty());
}

TEST_CASE("ingest forward-fills a gap and drops sparse symbols") {
    fwt::test::TempDir dir("ingest2");
    std::string csv = "timestamp,symbol,close\n";
    for (int d = 1; d <= 20; ++d) {
        const std::string date = "2024-01-" + std::string(d < 10 ? "0" : "") + std::to_string(d);
        if (d != 10) csv += date + ",A," + std::to_string(100 + d) + "\n";
        csv += date + ",B,50\n";
        if (d == 5) csv += date + ",C,10\n";
    }
    fwt::test::write_text(dir / "p.csv", csv);
    const IngestReport r = ingest_csv(dir / "p.csv", "M", Frequency::day);
    REQUIRE(r.panel.n_symbols() == 2);
    const Eigen::Index a = r.panel.index_of("A");
    REQUIRE(a >= 0);
    CHECK(r.panel.prices()(a, 9) == 109.0);  // gap on day 10 carries day 9's close
    REQUIRE(r.dropped_symbols.size() == 1);
    CHECK(r.dropped_symbols[0] == "C");
}

TEST_CASE("ingest back-fills a leading gap and skips bad rows") {
    fwt::test::TempDir dir("ingest3");
    std::string csv = "timestamp,symbol,close\n";
    for (int d = 1; d <= 20; ++d) {
        const std::string date = "2024-02-" + std::string(d < 10 ? "0" : "") + std::to_string(d);
        if (d > 1) csv += date + ",A,7\n";
        csv += date + ",B,3\n";
    }
    csv += "garbage line\n2024-02-21,A,notanumber\n";
    fwt::test::write_text(dir / "p.csv", csv);
    const IngestReport r = ingest_csv(dir / "p.csv", "M", Frequency::day);
    CHECK(r.panel.prices()(r.panel.index_of("A"), 0) == 7.0);
    CHECK(r.rows_skipped == 2);
    check_error([&] { ingest_csv(dir / "missing.csv", "M", Frequency::day); }, ErrorCode::io);
}

TEST_CASE("to_returns examples") {
    const ReturnPanel r = to_returns(one_row({100, 110, 99}));
    REQUIRE(r.n_steps() == 2);
    CHECK(r.returns()(0, 0) == doctest::Approx(0.10).epsilon(1e-12));
    CHECK(r.returns()(0, 1) == doctest::Approx(-0.10).epsilon(1e-12));
    CHECK(r.kind() == ReturnKind::plain);
    CHECK(to_returns(one_row({100, 100})).returns()(0, 0) == 0.0);
    check_error([] { to_returns(one_row({100})); }, ErrorCode::precondition);
}

TEST_CASE("excess_returns examples") {
    MatrixXd a(2, 1);
    a << 0.02, -0.02;
    MatrixXd ea = excess_returns(returns_of(a)).returns();
    CHECK(ea(0, 0) == doctest::Approx(0.02));
    CHECK(ea(1, 0) == doctest::Approx(-0.02));

    MatrixXd b(2, 1);
    b << 0.03, 0.01;
    const ReturnPanel eb = excess_returns(returns_of(b));
    CHECK(eb.returns()(0, 0) == doctest::Approx(0.01).epsilon(1e-12));
    CHECK(eb.returns()(1, 0) == doctest::Approx(-0.01).epsilon(1e-12));
    CHECK(eb.kind() == ReturnKind::excess);

    MatrixXd c = MatrixXd::Random(1, 5);
    CHECK(excess_returns(returns_of(c)).returns().isZero(0.0));
    check_error([&] { excess_returns(eb); }, ErrorCode::precondition);
}

TEST_CASE("excess_returns de-meaning is idempotent") {
    Rng rng(11);
    MatrixXd r(7, 30);
    for (Eigen::Index i = 0; i < r.size(); ++i) r.data()[i] = 0.02 * standard_normal(rng);
    const ReturnPanel once = excess_returns(returns_of(r));
    const ReturnPanel twice = excess_returns(returns_of(once.returns()));
    CHECK((once.returns() - twice.returns()).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("resample examples") {
    const PricePanel daily = one_row({101, 102, 103, 104, 105});  // Mon..Fri
    const PricePanel weekly = resample(daily, Frequency::week);
    REQUIRE(weekly.n_timestamps() == 1);
    CHECK(weekly.prices()(0, 0) == 105.0);
    CHECK(weekly.frequency() == Frequency::week);

    std::vector<std::int64_t> ts;
    MatrixXd p(1, 48);
    for (int i = 0; i < 48; ++i) {
        ts.push_back(1704067200 + 3600 * i);
        p(0, i) = 100 + i;
    }
    const PricePanel hourly({"A"}, ts, p, Frequency::hour, "M");
    const PricePanel days = resample(hourly, Frequency::day);
    REQUIRE(days.n_timestamps() == 2);
    CHECK(days.prices()(0, 0) == 123.0);
    CHECK(days.prices()(0, 1) == 147.0);

    check_error([&] { resample(daily, Frequency::hour); }, ErrorCode::precondition);
}

TEST_CASE("synthetic panel without noise has identical rows within a block") {
    const ReturnPanel r = to_returns(synth_factor_panel(10, 50, 2, 3, 0.0, 0.01));
    for (int s = 0; s < 10; ++s)
        for (int u = 0; u < 10; ++u)
            if (synth_block_of(s, 10, 2) == synth_block_of(u, 10, 2)) {
                // Rows are rebuilt from prices, so equal factor paths give bit-equal returns.
                CHECK(r.returns().row(s) == r.returns().row(u));
            }
}

TEST_CASE("synthetic panel is deterministic and strongly block-correlated") {
    const PricePanel a = synth_factor_panel(6, 400, 2, 9, 0.001, 0.02);
    const PricePanel b = synth_factor_panel(6, 400, 2, 9, 0.001, 0.02);
    CHECK(a.prices() == b.prices());
    CHECK(a.n_timestamps() == 401);
    const ReturnPanel r = to_returns(a);
    for (int s = 0; s < 6; ++s)
        for (int u = s + 1; u < 6; ++u)
            if (synth_block_of(s, 6, 2) == synth_block_of(u, 6, 2))
                CHECK(brute_corr(r.returns().row(s).transpose(), r.returns().row(u).transpose()) > 0.95);
    CHECK(synth_factor_panel(6, 400, 2, 10, 0.001, 0.02).prices() != a.prices());
}

TEST_CASE("returns_to_prices examples and round trip") {
    VectorXd r(2);
    r << 0.10, -0.10;
    const VectorXd p = returns_to_prices(100.0, r);
    REQUIRE(p.size() == 3);
    CHECK(p[0] == 100.0);
    CHECK(p[1] == doctest::Approx(110.0).epsilon(1e-14));
    CHECK(p[2] == doctest::Approx(99.0).epsilon(1e-14));
    CHECK(returns_to_prices(5.0, VectorXd()).size() == 1);
    VectorXd bad(1);
    bad << -1.0;
    check_error([&] { returns_to_prices(100.0, bad); }, ErrorCode::precondition);

    const PricePanel panel = synth_factor_panel(4, 300, 2, 5, 0.01, 0.02);
    const ReturnPanel rets = to_returns(panel);
    for (Eigen::Index s = 0; s < 4; ++s) {
        const VectorXd rebuilt = returns_to_prices(panel.prices()(s, 0), rets.returns().row(s).transpose());
        const VectorXd orig = panel.prices().row(s).transpose();
        CHECK(((rebuilt - orig).array().abs() / orig.array()).maxCoeff() < 1e-10);
    }
}

TEST_CASE("clip_outliers bounds every cell by its timestamp's spread") {
    Rng rng(4);
    MatrixXd r(20, 10);
    for (Eigen::Index i = 0; i < r.size(); ++i) r.data()[i] = 0.01 * standard_normal(rng);
    r(3, 4) = 5.0;
    const ReturnPanel clipped = clip_outliers(returns_of(r), 2.0);
    CHECK(clipped.returns()(3, 4) < 5.0);
    for (Eigen::Index c = 0; c < r.cols(); ++c) {
        const VectorXd col = r.col(c);
        const double m = col.mean();
        const double sd = std::sqrt((col.array() - m).square().sum() / static_cast<double>(col.size() - 1));
        CHECK(clipped.returns().col(c).maxCoeff() <= m + 2.0 * sd + 1e-15);
        CHECK(clipped.returns().col(c).minCoeff() >= m - 2.0 * sd - 1e-15);
    }
}

TEST_CASE("panel file round trip and corruption") {
    fwt::test::TempDir dir("panelio");
    const PricePanel p = synth_factor_panel(5, 40, 1, 2, 0.01, 0.01, SynthOptions{Frequency::hour});
    save_panel(p, dir / "a.csv");
    const PricePanel q = load_panel(dir / "a.csv");
    CHECK(q.prices() == p.prices());
    CHECK(q.symbols() == p.symbols());
    CHECK(q.timestamps() == p.timestamps());
    CHECK(q.frequency() == Frequency::hour);
    CHECK(q.market() == p.market());
    save_panel(q, dir / "b.csv");
    CHECK(fwt::test::read_bytes(dir / "a.csv") == fwt::test::read_bytes(dir / "b.csv"));

    fwt::test::write_text(dir / "bad.csv", "NOTAPANEL\n");
    check_error([&] { load_panel(dir / "bad.csv"); }, ErrorCode::corrupt_file);
}

TEST_CASE("timestamps and frequencies parse") {
    CHECK(parse_timestamp("2024-01-01") == 1704067200);
    CHECK(parse_timestamp("2024-01-01T01:00") == 1704070800);
    CHECK(parse_timestamp("2024-01-01 00:00:30Z") == 1704067230);
    CHECK(parse_timestamp("1704067200") == 1704067200);
    check_error([] { parse_timestamp("yesterday"); }, ErrorCode::parse);
    CHECK(parse_frequency("week") == Frequency::week);
    check_error([] { parse_frequency("fortnight"); }, ErrorCode::parse);
}

}  // TEST_SUITE

TEST_CASE("resample then to_returns compounds the finer returns" * doctest::test_suite("market_data")) {
    const PricePanel daily = synth_factor_panel(3, 60, 1, 8, 0.01, 0.01);
    const PricePanel weekly = resample(daily, Frequency::week);
    const ReturnPanel fine = to_returns(daily);
    const ReturnPanel coarse = to_returns(weekly);
    // Map each weekly timestamp back to its daily column, then compound in between.
    for (Eigen::Index w = 1; w < weekly.n_timestamps(); ++w) {
        const auto find_col = [&](std::int64_t ts) {
            const auto& t = daily.timestamps();
            return static_cast<Eigen::Index>(std::find(t.begin(), t.end(), ts) - t.begin());
        };
        const Eigen::Index a = find_col(weekly.timestamps()[w - 1]);
        const Eigen::Index b = find_col(weekly.timestamps()[w]);
        for (Eigen::Index s = 0; s < 3; ++s) {
            double g = 1.0;
            for (Eigen::Index i = a; i < b; ++i) g *= 1.0 + fine.returns()(s, i);
            const double expect = g - 1.0;
            CHECK(std::abs(coarse.returns()(s, w - 1) - expect) <= 1e-10 * std::max(1.0, std::abs(expect)));
        }
    }
}
