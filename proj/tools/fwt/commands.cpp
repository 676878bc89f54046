#include "commands.hpp"

#include "fwt/parallel.hpp"

#include <charconv>
#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <fstream>

namespace fwt::cli {

namespace fs = std::filesystem;

std::string format_double(double v) {
    if (std::isnan(v)) return "nan";
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

void write_json(const fs::path& path, const Json& j) {
    std::ofstream out(path, std::ios::binary);
    require(out.good(), ErrorCode::io, "cannot write " + path.string());
    out << j.dump(2) << '\n';
}

CsvWriter::CsvWriter(const fs::path& path, const std::vector<std::string>& header) : out_(path, std::ios::binary) {
    require(out_.good(), ErrorCode::io, "cannot write " + path.string());
    for (const auto& h : header) *this << h;
    end_row();
}

void CsvWriter::sep() {
    if (!first_) out_ << ',';
    first_ = false;
}

CsvWriter& CsvWriter::operator<<(const std::string& s) {
    sep();
    out_ << s;
    return *this;
}

CsvWriter& CsvWriter::operator<<(double v) {
    sep();
    out_ << format_double(v);
    return *this;
}

CsvWriter& CsvWriter::operator<<(long long v) {
    sep();
    out_ << v;
    return *this;
}

void CsvWriter::end_row() {
    out_ << '\n';
    first_ = true;
}

namespace {

// ---------------------------------------------------------------------------
// Shared plumbing.

struct LoadedPanel {
    PricePanel prices;
    PreparedPanel panel;
};

LoadedPanel load_prepared(const Json& c, const std::string& key = "panel") {
    PricePanel prices = load_panel(path_of(c, key));
    ReturnPanel returns = to_returns(prices);
    return LoadedPanel{std::move(prices), PreparedPanel::from(std::move(returns), get<bool>(c, "retrieval", "excess_keys"))};
}

Eigen::Index train_end(const Json& c, const ReturnPanel& panel) {
    const double f = get<double>(c, "train", "train_fraction");
    require(f > 0.0 && f <= 1.0, ErrorCode::invalid_argument, "train.train_fraction must be in (0, 1]");
    return static_cast<Eigen::Index>(std::floor(f * static_cast<double>(panel.n_steps())));
}

TransformerDenoiser<float> load_model(const Json& c, const RetrievalSetup& setup, const std::string& key = "checkpoint") {
    TrainingSession<float> s = load_checkpoint(path_of(c, key));
    const ModelConfig& m = s.params.config;
    require(m.k == setup.effective_k() && m.history_len == setup.history_len && m.horizon == setup.horizon,
            ErrorCode::fingerprint_mismatch,
            "checkpoint was trained for k=" + std::to_string(m.k) + ", history_len=" + std::to_string(m.history_len) +
                ", horizon=" + std::to_string(m.horizon) + " but the retrieval config asks for k=" +
                std::to_string(setup.effective_k()) + ", history_len=" + std::to_string(setup.history_len) +
                ", horizon=" + std::to_string(setup.horizon));
    return TransformerDenoiser<float>(std::move(s.params), workers(c));
}

Json portfolio_json(const PortfolioReport& r) {
    return Json{{"annualized_return", r.annualized_return},
                {"max_drawdown", r.max_drawdown},
                {"sharpe", r.sharpe_defined ? Json(r.sharpe) : Json(nullptr)}};
}

Json vector_json(const Eigen::Ref<const VectorXd>& v) {
    Json a = Json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
    return a;
}

Eigen::Index target_row(const Json& c, const ReturnPanel& panel) {
    const auto symbol = get<std::string>(c, "generate", "symbol");
    if (symbol.empty()) return 0;
    const Eigen::Index row = panel.index_of(symbol);
    require(row >= 0, ErrorCode::invalid_argument, "symbol '" + symbol + "' is not in the panel");
    return row;
}

Eigen::Index anchor_of(const Json& c, const ReturnPanel& panel, const RetrievalSetup& setup) {
    auto t = get<Eigen::Index>(c, "generate", "anchor");
    if (t < 0) t = panel.n_steps();
    require(t >= setup.history_len && t <= panel.n_steps(), ErrorCode::invalid_argument,
            "generate.anchor must lie in [history_len, n_steps]");
    return t;
}

std::vector<CandidateWindow> history_pool(const ReturnPanel& panel, const RetrievalSetup& setup, Eigen::Index t,
                                          Eigen::Index stride) {
    PoolOptions po;
    po.history_len = setup.history_len;
    po.horizon = setup.horizon;
    po.future_end_limit = t;
    po.stride = stride;
    po.excess_keys = setup.excess_keys;
    return build_candidate_pool(panel, po);
}

ConditionSet pooled_condition(const PreparedPanel& panel, Eigen::Index row, Eigen::Index t,
                              const RetrievalSetup& setup, const std::vector<CandidateWindow>& pool,
                              std::uint64_t seed) {
    const SeriesWindow history = window_of(panel.values, row, t - setup.history_len, setup.history_len);
    const VectorXd key = panel.keys.returns().row(row).segment(t - setup.history_len, setup.history_len).transpose();
    ConditionSet c = pool_condition(history, key, pool, setup, seed);
    c.anchor = t;
    return c;
}

double mean_path_vol(const Ensemble& e) {
    double v = 0.0;
    for (Eigen::Index i = 0; i < e.paths.rows(); ++i) v += window_stats(e.paths.row(i).transpose()).vol;
    return v / static_cast<double>(e.paths.rows());
}

// trajectories: path_id,step,return,price; bands: per-step quartiles.
void write_ensemble(const fs::path& dir, const std::string& stem, const Ensemble& e, double p0) {
    CsvWriter traj(dir / ("trajectories" + stem + ".csv"), {"path_id", "step", "return", "price"});
    MatrixXd prices(e.paths.rows(), e.paths.cols());
    for (Eigen::Index i = 0; i < e.paths.rows(); ++i) {
        const VectorXd p = returns_to_prices(p0, e.paths.row(i).transpose().cwiseMax(-0.95));
        prices.row(i) = p.tail(e.paths.cols()).transpose();
        for (Eigen::Index j = 0; j < e.paths.cols(); ++j) {
            traj << static_cast<long long>(i) << static_cast<long long>(j + 1) << e.paths(i, j) << prices(i, j);
            traj.end_row();
        }
    }
    const Ensemble price_ens{prices};
    const VectorXd r25 = e.quantile_path(0.25), r50 = e.quantile_path(0.5), r75 = e.quantile_path(0.75);
    const VectorXd p25 = price_ens.quantile_path(0.25), p50 = price_ens.quantile_path(0.5),
                   p75 = price_ens.quantile_path(0.75);
    const VectorXd mean = e.mean_path();
    CsvWriter bands(dir / ("bands" + stem + ".csv"),
                    {"step", "return_mean", "return_q25", "return_q50", "return_q75", "price_q25", "price_q50",
                     "price_q75"});
    for (Eigen::Index j = 0; j < e.paths.cols(); ++j) {
        bands << static_cast<long long>(j + 1) << mean[j] << r25[j] << r50[j] << r75[j] << p25[j] << p50[j] << p75[j];
        bands.end_row();
    }
}

Json neighbours_json(const ConditionSet& c) {
    Json a = Json::array();
    for (std::size_t i = 1; i < c.row_symbols.size(); ++i) a.push_back(c.row_symbols[i]);
    return a;
}

/// Held-out anchors: futures at or after the training split.
AnchorRange eval_anchors(const Json& c, const ReturnPanel& panel, const RetrievalSetup& setup) {
    const Eigen::Index split = train_end(c, panel);
    AnchorRange r{std::max(split, setup.history_len), panel.n_steps() - setup.horizon};
    require(r.size() > 0, ErrorCode::precondition,
            "no held-out anchors after the training split; lower train.train_fraction or extend the panel");
    return r;
}

Json gen_eval_json(const GenEvalReport& r) {
    return Json{{"market_ranking", r.market_ranking},
                {"correlation", r.correlation},
                {"universe_size", r.universe_size},
                {"windows", r.per_stock.size()},
                {"skipped", r.skipped}};
}

AblationConfig ablation_config(const Json& c, const ReturnPanel& panel) {
    AblationConfig a;
    a.setup = retrieval_setup(c);
    a.model = model_config(c, a.setup);
    a.train = train_config(c);
    a.diffusion_steps = get<int>(c, "schedule", "steps");
    a.beta_min = get<double>(c, "schedule", "beta_min");
    a.beta_max = get<double>(c, "schedule", "beta_max");
    a.train_end = train_end(c, panel);
    a.seed = root_seed(c);
    return a;
}

// ---------------------------------------------------------------------------
// Commands.

void cmd_ingest(const Context& ctx, Json& report) {
    const Json& c = ctx.config;
    IngestReport rep = ingest_csv(path_of(c, "input"), get<std::string>(c, "data", "market"),
                                  parse_frequency(get<std::string>(c, "data", "frequency")));
    PricePanel panel = rep.panel;
    const auto target = get<std::string>(c, "data", "resample");
    if (!target.empty()) panel = resample(panel, parse_frequency(target));
    const double sigma = get<double>(c, "data", "clip_sigma");
    if (sigma > 0.0) {
        const ReturnPanel clipped = clip_outliers(to_returns(panel), sigma);
        MatrixXd prices(panel.n_symbols(), panel.n_timestamps());
        for (Eigen::Index s = 0; s < panel.n_symbols(); ++s)
            prices.row(s) = returns_to_prices(panel.prices()(s, 0), clipped.returns().row(s).transpose()).transpose();
        panel = PricePanel(panel.symbols(), panel.timestamps(), std::move(prices), panel.frequency(), panel.market());
    }
    save_panel(panel, ctx.out / "panel.csv");
    report["rows_read"] = rep.rows_read;
    report["rows_skipped"] = rep.rows_skipped;
    report["dropped_symbols"] = rep.dropped_symbols;
    report["n_symbols"] = panel.n_symbols();
    report["n_timestamps"] = panel.n_timestamps();
    report["frequency"] = std::string(to_string(panel.frequency()));
    report["panel"] = "panel.csv";
}

void cmd_synth(const Context& ctx, Json& report) {
    const Json& c = ctx.config;
    const int n_stocks = get<int>(c, "synth", "n_stocks");
    const int n_factors = get<int>(c, "synth", "n_factors");
    const PricePanel panel =
        synth_factor_panel(n_stocks, get<int>(c, "synth", "n_steps"), n_factors, derive_seed(root_seed(c), "synth"),
                           get<double>(c, "synth", "noise_vol"), get<double>(c, "synth", "factor_vol"),
                           synth_options(c));
    save_panel(panel, ctx.out / "panel.csv");
    Json blocks = Json::object();
    for (int s = 0; s < n_stocks; ++s)
        blocks[panel.symbols()[static_cast<std::size_t>(s)]] = synth_block_of(s, n_stocks, n_factors);
    report["n_symbols"] = panel.n_symbols();
    report["n_timestamps"] = panel.n_timestamps();
    report["factor_blocks"] = blocks;
    report["panel"] = "panel.csv";
}

void cmd_train(const Context& ctx, Json& report) {
    const Json& c = ctx.config;
    const RetrievalSetup setup = retrieval_setup(c);
    const ModelConfig mc = model_config(c, setup);
    const TrainConfig tc = train_config(c);
    const NoiseSchedule sched = schedule(c);
    const LoadedPanel data = load_prepared(c);
    const Eigen::Index split = train_end(c, data.panel.values);
    PanelSampleSource source(data.panel, setup, AnchorRange::of(0, split, setup));

    TrainingSession<float> session;
    const auto resume_from = path_of(c, "checkpoint", false);
    const auto init_from = path_of(c, "init_checkpoint", false);
    if (get<bool>(c, "train", "resume")) {
        require(!resume_from.empty(), ErrorCode::invalid_argument, "train.resume needs paths.checkpoint");
        session = load_checkpoint(resume_from);
        require(session.params.config.fingerprint() == mc.fingerprint(), ErrorCode::fingerprint_mismatch,
                "checkpoint does not match the model configuration");
        const auto done = static_cast<int>(session.state.step);
        run_training(session, source, sched, std::max(0, tc.batches - done));
        report["resumed_at"] = done;
    } else if (!init_from.empty()) {
        const TrainingSession<float> init = load_checkpoint(init_from);
        session = train<float>(source, mc, tc, sched, &init.params);
        report["initialized_from"] = init_from.string();
    } else {
        session = train<float>(source, mc, tc, sched);
    }
    save_checkpoint(session, ctx.out / "model.ckpt");
    CsvWriter losses(ctx.out / "losses.csv", {"batch", "loss"});
    for (std::size_t i = 0; i < session.losses.size(); ++i) {
        losses << static_cast<long long>(i + 1) << session.losses[i];
        losses.end_row();
    }
    char fp[17];
    std::snprintf(fp, sizeof fp, "%016" PRIx64, mc.fingerprint());
    report["checkpoint"] = "model.ckpt";
    report["fingerprint"] = fp;
    report["parameter_count"] = session.params.parameter_count();
    report["optimizer_steps"] = session.state.step;
    report["train_end_step"] = split;
    report["final_loss"] = session.losses.empty() ? Json(nullptr) : Json(session.losses.back());
}

void cmd_generate(const Context& ctx, Json& report) {
    const Json& c = ctx.config;
    const RetrievalSetup setup = retrieval_setup(c);
    const LoadedPanel data = load_prepared(c);
    const ReturnPanel& v = data.panel.values;
    const TransformerDenoiser<float> model = load_model(c, setup);
    const NoiseSchedule sched = schedule(c);
    const Eigen::Index row = target_row(c, v);
    const Eigen::Index t = anchor_of(c, v, setup);
    const std::uint64_t seed = root_seed(c);

    std::string mode = get<std::string>(c, "generate", "mode");
    require(mode == "auto" || mode == "contemporaneous" || mode == "historical", ErrorCode::invalid_argument,
            "generate.mode must be auto, contemporaneous or historical");
    const bool future_known = t + setup.horizon <= v.n_steps();
    if (mode == "auto") mode = future_known ? "contemporaneous" : "historical";
    const auto predicate = get<std::string>(c, "generate", "predicate");
    require(predicate.empty() || mode == "historical", ErrorCode::invalid_argument,
            "a what-if predicate needs generate.mode=historical");

    ConditionSet cond;
    if (mode == "contemporaneous") {
        cond = contemporaneous_condition(data.panel, row, t, setup, derive_seed(seed, "generate/retrieval"));
    } else {
        auto pool = history_pool(v, setup, t, get<Eigen::Index>(c, "generate", "pool_stride"));
        if (!predicate.empty()) pool = scenario_filter(pool, Predicate::parse(predicate));
        report["pool_size"] = pool.size();
        cond = pooled_condition(data.panel, row, t, setup, pool, derive_seed(seed, "generate/retrieval"));
    }
    const Ensemble e = sample(cond, model, sched, derive_seed(seed, "generate/sample"),
                              get<int>(c, "generate", "n_paths"), workers(c));
    write_ensemble(ctx.out, "", e, data.prices.prices()(row, t));

    report["symbol"] = v.symbols()[static_cast<std::size_t>(row)];
    report["anchor"] = t;
    report["mode"] = mode;
    report["neighbours"] = neighbours_json(cond);
    report["mean_path"] = vector_json(e.mean_path());
    report["mean_path_vol"] = mean_path_vol(e);
    if (future_known) {
        const VectorXd real = true_future(v, row, t, setup.horizon);
        report["realized"] = vector_json(real);
        try {
            const StockEvaluation ev = evaluate_window(v, row, t, e.mean_path());
            report["correlation"] = ev.correlation;
            report["market_ranking"] = ev.market_ranking;
        } catch (const Error& err) {
            if (err.code() != ErrorCode::undefined_statistic) throw;
            report["correlation"] = nullptr;
        }
    }
    report["files"] = {"trajectories.csv", "bands.csv"};
}

void cmd_whatif(const Context& ctx, Json& report) {
    const Json& c = ctx.config;
    const RetrievalSetup setup = retrieval_setup(c);
    const LoadedPanel data = load_prepared(c);
    const ReturnPanel& v = data.panel.values;
    const TransformerDenoiser<float> model = load_model(c, setup);
    const NoiseSchedule sched = schedule(c);
    const Eigen::Index row = target_row(c, v);
    const Eigen::Index t = anchor_of(c, v, setup);
    const std::uint64_t seed = root_seed(c);
    std::string text = get<std::string>(c, "generate", "predicate");
    if (text.empty()) text = "vol >= q(0.75)";
    const Predicate predicate = Predicate::parse(text);

    const auto pool = history_pool(v, setup, t, get<Eigen::Index>(c, "generate", "pool_stride"));
    const auto filtered = scenario_filter(pool, predicate);
    const int n_paths = get<int>(c, "generate", "n_paths");
    const std::uint64_t rseed = derive_seed(seed, "generate/retrieval");
    const std::uint64_t sseed = derive_seed(seed, "generate/sample");
    const ConditionSet base_cond = pooled_condition(data.panel, row, t, setup, pool, rseed);
    const ConditionSet what_cond = pooled_condition(data.panel, row, t, setup, filtered, rseed);
    const Ensemble base = sample(base_cond, model, sched, sseed, n_paths, workers(c));
    const Ensemble what = sample(what_cond, model, sched, sseed, n_paths, workers(c));
    const double p0 = data.prices.prices()(row, t);
    write_ensemble(ctx.out, "_base", base, p0);
    write_ensemble(ctx.out, "_whatif", what, p0);

    const double vb = mean_path_vol(base), vw = mean_path_vol(what);
    report["symbol"] = v.symbols()[static_cast<std::size_t>(row)];
    report["anchor"] = t;
    report["predicate"] = predicate.text();
    report["pool_size"] = pool.size();
    report["filtered_pool_size"] = filtered.size();
    report["base"] = {{"neighbours", neighbours_json(base_cond)}, {"mean_path_vol", vb},
                      {"mean_path", vector_json(base.mean_path())}};
    report["whatif"] = {{"neighbours", neighbours_json(what_cond)}, {"mean_path_vol", vw},
                        {"mean_path", vector_json(what.mean_path())}};
    report["vol_ratio"] = vb > 0.0 ? Json(vw / vb) : Json(nullptr);
    report["files"] = {"trajectories_base.csv", "bands_base.csv", "trajectories_whatif.csv", "bands_whatif.csv"};
}

void cmd_cross_market(const Context& ctx, Json& report) {
    const Json& c = ctx.config;
    const RetrievalSetup setup = retrieval_setup(c);
    const LoadedPanel target = load_prepared(c);
    const LoadedPanel source = load_prepared(c, "source_panel");
    const ReturnPanel& v = target.panel.values;
    const TransformerDenoiser<float> model = load_model(c, setup);
    const NoiseSchedule sched = schedule(c);
    const Eigen::Index row = target_row(c, v);
    const Eigen::Index t = anchor_of(c, v, setup);
    const std::uint64_t seed = root_seed(c);
    const auto stride = get<Eigen::Index>(c, "generate", "pool_stride");
    const int n_paths = get<int>(c, "generate", "n_paths");

    PoolOptions po;
    po.history_len = setup.history_len;
    po.horizon = setup.horizon;
    po.stride = stride;
    po.excess_keys = setup.excess_keys;
    const auto foreign = build_candidate_pool(source.panel.values, po);
    const std::uint64_t rseed = derive_seed(seed, "generate/retrieval");
    const std::uint64_t sseed = derive_seed(seed, "generate/sample");
    const ConditionSet cross = pooled_condition(target.panel, row, t, setup, foreign, rseed);
    const Ensemble e = sample(cross, model, sched, sseed, n_paths, workers(c));
    write_ensemble(ctx.out, "", e, target.prices.prices()(row, t));

    report["symbol"] = v.symbols()[static_cast<std::size_t>(row)];
    report["anchor"] = t;
    report["target_market"] = v.market();
    report["source_market"] = source.panel.values.market();
    report["source_pool_size"] = foreign.size();
    report["neighbours"] = neighbours_json(cross);
    report["mean_path"] = vector_json(e.mean_path());
    report["mean_path_vol"] = mean_path_vol(e);
    if (t + setup.horizon <= v.n_steps()) {
        const VectorXd real = true_future(v, row, t, setup.horizon);
        auto ic = [&](const VectorXd& path) -> Json {
            try {
                return pearson(real, path);
            } catch (const Error& err) {
                if (err.code() != ErrorCode::undefined_statistic) throw;
                return nullptr;
            }
        };
        report["realized"] = vector_json(real);
        report["ic_cross_market"] = ic(e.mean_path());
        const auto own = history_pool(v, setup, t, stride);
        const ConditionSet same = pooled_condition(target.panel, row, t, setup, own, rseed);
        report["ic_same_market_history"] = ic(sample(same, model, sched, sseed, n_paths, workers(c)).mean_path());
    }
    report["files"] = {"trajectories.csv", "bands.csv"};
}

void cmd_evaluate(const Context& ctx, Json& report) {
    const Json& c = ctx.config;
    const RetrievalSetup setup = retrieval_setup(c);
    const LoadedPanel data = load_prepared(c);
    const TransformerDenoiser<float> model = load_model(c, setup);
    const NoiseSchedule sched = schedule(c);
    const auto windows = held_out_windows(data.panel.values, eval_anchors(c, data.panel.values, setup),
                                          get<int>(c, "evaluate", "windows"), root_seed(c));
    const GenEvalReport r = evaluate_generator(DiffusionGenerator(model, sched, get<int>(c, "evaluate", "n_paths")),
                                               data.panel, setup, windows, derive_seed(root_seed(c), "evaluate"),
                                               workers(c));
    CsvWriter csv(ctx.out / "per_window.csv", {"symbol", "anchor", "correlation", "market_ranking"});
    for (const auto& s : r.per_stock) {
        csv << s.symbol << static_cast<long long>(s.anchor) << s.correlation << s.market_ranking;
        csv.end_row();
    }
    report["summary"] = gen_eval_json(r);
    report["files"] = {"per_window.csv"};
}

void cmd_ablate(const Context& ctx, Json& report) {
    const Json& c = ctx.config;
    const LoadedPanel data = load_prepared(c);
    AblationConfig a = ablation_config(c, data.panel.values);
    a.n_paths = get<int>(c, "ablate", "n_paths");
    a.linear_samples = get<int>(c, "ablate", "linear_samples");
    a.linear_ridge = get<double>(c, "ablate", "linear_ridge");
    std::vector<SimilarityMeasure> methods;
    for (const auto& m : c.at("ablate").at("methods")) methods.push_back(parse_measure(m.get<std::string>()));
    std::vector<GeneratorKind> models;
    for (const auto& m : c.at("ablate").at("models")) models.push_back(parse_generator(m.get<std::string>()));
    const auto windows = held_out_windows(data.panel.values, eval_anchors(c, data.panel.values, a.setup),
                                          get<int>(c, "ablate", "windows"), root_seed(c));
    const AblationTable table = run_ablation(data.panel, methods, models, a, windows);

    CsvWriter csv(ctx.out / "ablation.csv",
                  {"method", "model", "status", "market_ranking", "correlation", "windows", "skipped"});
    Json cells = Json::array();
    for (const auto& cell : table.cells) {
        const double nan = std::numeric_limits<double>::quiet_NaN();
        csv << std::string(to_string(cell.method)) << std::string(to_string(cell.model)) << cell.status
            << (cell.ok ? cell.market_ranking : nan) << (cell.ok ? cell.correlation : nan) << cell.windows
            << cell.skipped;
        csv.end_row();
        cells.push_back({{"method", to_string(cell.method)},
                         {"model", to_string(cell.model)},
                         {"status", cell.status},
                         {"market_ranking", cell.ok ? Json(cell.market_ranking) : Json(nullptr)},
                         {"correlation", cell.ok ? Json(cell.correlation) : Json(nullptr)},
                         {"windows", cell.windows},
                         {"skipped", cell.skipped}});
    }
    report["cells"] = cells;
    report["files"] = {"ablation.csv"};
}

void cmd_sensitivity(const Context& ctx, Json& report) {
    const Json& c = ctx.config;
    const LoadedPanel data = load_prepared(c);
    const AblationConfig base = ablation_config(c, data.panel.values);
    const auto ks = c.at("sensitivity").at("k").get<std::vector<Eigen::Index>>();
    const auto steps = c.at("sensitivity").at("steps").get<std::vector<int>>();
    require(!ks.empty() && !steps.empty(), ErrorCode::invalid_argument, "sensitivity needs k and steps lists");
    const auto windows = held_out_windows(data.panel.values, eval_anchors(c, data.panel.values, base.setup),
                                          get<int>(c, "sensitivity", "windows"), root_seed(c));
    CsvWriter csv(ctx.out / "sensitivity.csv", {"k", "steps", "status", "market_ranking", "correlation"});
    Json grid = Json::array();
    for (const auto k : ks)
        for (const int h : steps) {
            AblationConfig a = base;
            a.setup.k = k;
            a.diffusion_steps = h;
            a.n_paths = get<int>(c, "sensitivity", "n_paths");
            const AblationCell cell =
                run_ablation(data.panel, {a.setup.measure}, {GeneratorKind::diffusion}, a, windows).cells.front();
            const double nan = std::numeric_limits<double>::quiet_NaN();
            csv << static_cast<long long>(k) << h << cell.status << (cell.ok ? cell.market_ranking : nan)
                << (cell.ok ? cell.correlation : nan);
            csv.end_row();
            grid.push_back({{"k", k},
                            {"steps", h},
                            {"status", cell.status},
                            {"market_ranking", cell.ok ? Json(cell.market_ranking) : Json(nullptr)},
                            {"correlation", cell.ok ? Json(cell.correlation) : Json(nullptr)}});
        }
    report["grid"] = grid;
    report["files"] = {"sensitivity.csv"};
}

void cmd_optimize(const Context& ctx, Json& report) {
    const Json& c = ctx.config;
    const Json& o = c.at("optimize");
    const RetrievalSetup setup = retrieval_setup(c);
    const LoadedPanel data = load_prepared(c);
    const ReturnPanel& v = data.panel.values;
    const TransformerDenoiser<float> model = load_model(c, setup);
    const NoiseSchedule sched = schedule(c);
    const std::uint64_t seed = root_seed(c);
    const unsigned w = workers(c);
    const Eigen::Index split = train_end(c, v);
    require(split >= setup.history_len + setup.horizon && split < v.n_steps(), ErrorCode::precondition,
            "optimize needs history before and validation steps after the training split");

    // Rule-based filter on generated scenarios anchored at the split.
    std::vector<StrategyConfig> strategies;
    for (const auto& s : o.at("strategies")) strategies.push_back(strategy_config(s));
    require(!strategies.empty(), ErrorCode::invalid_argument, "optimize.strategies is empty");
    for (const auto& s : strategies)
        require(s.signal != SignalKind::momentum || s.lookback <= setup.history_len, ErrorCode::invalid_argument,
                "strategy '" + s.name + "': momentum lookback exceeds the scenario history");
    auto pool = history_pool(v, setup, split, o.at("pool_stride").get<Eigen::Index>());
    const auto predicate = o.at("predicate").get<std::string>();
    if (!predicate.empty()) pool = scenario_filter(pool, Predicate::parse(predicate));
    ScenarioSet scenarios;
    for (int i = 0; i < o.at("scenarios").get<int>(); ++i) {
        Scenario sc = generate_scenario(data.panel, split, setup, model, sched,
                                        derive_seed(seed, "optimize/scenario", static_cast<std::uint64_t>(i)), &pool, w);
        sc.label = "scenario" + std::to_string(i);
        sc.predicate = predicate;
        scenarios.add(std::move(sc));
    }
    const OptimizationResult rules = rule_based_filter(strategies, scenarios, thresholds(o.at("thresholds")), w);
    CsvWriter rcsv(ctx.out / "rule_filter.csv", {"strategy", "status", "scenario", "metric", "value", "threshold"});
    Json surviving = Json::array(), rejected = Json::array();
    for (const auto& s : rules.surviving) {
        Json per = Json::array();
        for (const auto& r : s.per_scenario) per.push_back(portfolio_json(r));
        surviving.push_back({{"strategy", s.config.name}, {"per_scenario", per}});
        rcsv << s.config.name << std::string("survived") << std::string() << std::string() << std::string()
             << std::string();
        rcsv.end_row();
    }
    for (const auto& r : rules.rejected) {
        rejected.push_back({{"strategy", r.config.name},
                            {"scenario", r.scenario},
                            {"metric", r.metric},
                            {"value", r.value},
                            {"threshold", r.threshold}});
        rcsv << r.config.name << std::string("rejected") << r.scenario << r.metric << r.value << r.threshold;
        rcsv.end_row();
    }
    report["rule_based"] = {{"scenarios", scenarios.items().size()}, {"surviving", surviving}, {"rejected", rejected}};

    // Model-based search over simulation-augmented training sets.
    std::vector<ForecasterSpec> grid;
    for (const auto& g : o.at("grid")) grid.push_back({g.at("lags").get<Eigen::Index>(), g.at("ridge").get<double>()});
    require(!grid.empty(), ErrorCode::invalid_argument, "optimize.grid is empty");
    Eigen::Index lags = 0;
    for (const auto& g : grid) lags = std::max(lags, g.lags);
    require(lags <= setup.history_len, ErrorCode::invalid_argument, "forecaster lags exceed retrieval.history_len");
    const int n_anchors = o.at("real_anchors").get<int>();
    require(n_anchors >= 1, ErrorCode::invalid_argument, "optimize.real_anchors must be >= 1");
    const Eigen::Index first = setup.history_len, last = split - setup.horizon;
    std::vector<Eigen::Index> anchors;
    for (int i = 0; i < n_anchors; ++i)
        anchors.push_back(first + (last - first) * i / std::max(1, n_anchors - 1) * (n_anchors > 1 ? 1 : 0));
    const auto real = real_windows(v, anchors, lags, setup.horizon);

    auto simulate = [&](const std::vector<CandidateWindow>* from, const std::string& tag) {
        std::vector<ForecastWindow> out;
        for (const Eigen::Index t : anchors)
            for (int j = 0; j < o.at("sims_per_anchor").get<int>(); ++j) {
                const Scenario sc = generate_scenario(
                    data.panel, t, setup, model, sched,
                    derive_seed(seed, "optimize/" + tag, static_cast<std::uint64_t>(t * 1000 + j)), from, w);
                for (auto fw : real_windows(sc.panel, {setup.history_len}, lags, setup.horizon)) {
                    fw.source = tag;
                    out.push_back(std::move(fw));
                }
            }
        return out;
    };
    const auto sim = simulate(nullptr, "sim");
    std::vector<NamedDataset> datasets;
    int top = 0;
    for (const auto& m : o.at("multipliers")) {
        const int mult = m.get<int>();
        top = std::max(top, mult);
        datasets.push_back({std::to_string(mult) + "x", augment_dataset(real, sim, mult, derive_seed(seed, "augment"))});
    }
    const int vol_mult = o.at("vol_multiplier").get<int>();
    if (vol_mult > 0) {
        const auto vol_pool = scenario_filter(history_pool(v, setup, split, o.at("pool_stride").get<Eigen::Index>()),
                                              Predicate::parse("vol >= q(0.75)"));
        const auto vol_sim = simulate(&vol_pool, "vol-sim");
        TrainingSet set = augment_dataset(real, sim, top, derive_seed(seed, "augment"));
        add_simulated(set, vol_sim, vol_mult, derive_seed(seed, "augment/vol"));
        datasets.push_back({std::to_string(top) + "x+" + std::to_string(vol_mult) + "x-vol", std::move(set)});
    }
    StrategyConfig fs;
    fs.name = "forecast";
    fs.horizon = setup.horizon;
    fs.n_long = o.at("n_long").get<Eigen::Index>();
    fs.n_short = o.at("n_short").get<Eigen::Index>();
    const ReturnPanel validation = v.slice_steps(split - lags, v.n_steps() - (split - lags));
    const OptimizationResult search = model_based_optimize(grid, datasets, validation, fs);

    CsvWriter mcsv(ctx.out / "model_search.csv",
                   {"dataset", "lags", "ridge", "status", "sharpe", "annualized_return", "max_drawdown"});
    Json rows = Json::array();
    for (const auto& r : search.table) {
        const double nan = std::numeric_limits<double>::quiet_NaN();
        mcsv << r.dataset << static_cast<long long>(r.lags) << r.ridge << r.status
             << (r.ok && r.validation.sharpe_defined ? r.validation.sharpe : nan)
             << (r.ok ? r.validation.annualized_return : nan) << (r.ok ? r.validation.max_drawdown : nan);
        mcsv.end_row();
        rows.push_back({{"dataset", r.dataset},
                        {"lags", r.lags},
                        {"ridge", r.ridge},
                        {"status", r.status},
                        {"validation", r.ok ? portfolio_json(r.validation) : Json(nullptr)}});
    }
    report["model_based"] = {{"real_windows", real.size()},
                             {"sim_pool", sim.size()},
                             {"validation_steps", validation.n_steps()},
                             {"table", rows},
                             {"best", search.best ? Json(*search.best) : Json(nullptr)}};
    report["files"] = {"rule_filter.csv", "model_search.csv"};
}

}  // namespace

const std::map<std::string, Command>& commands() {
    static const std::map<std::string, Command> table = {
        {"ingest", cmd_ingest},         {"synth-data", cmd_synth},     {"train", cmd_train},
        {"generate", cmd_generate},     {"evaluate", cmd_evaluate},    {"whatif", cmd_whatif},
        {"cross-market", cmd_cross_market}, {"ablate", cmd_ablate},    {"optimize", cmd_optimize},
        {"sensitivity", cmd_sensitivity},
    };
    return table;
}

}  // namespace fwt::cli
