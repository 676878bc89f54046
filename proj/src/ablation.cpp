#include "fwt/ablation.hpp"

#include "fwt/parallel.hpp"

#include <Eigen/Cholesky>

namespace fwt {

VectorXd DiffusionGenerator::generate(const ConditionSet& cond, std::uint64_t seed) const {
    return sample(cond, model_, sched_, seed, n_paths_).mean_path();
}

VectorXd DirectGenerator::generate(const ConditionSet& cond, std::uint64_t) const {
    return cond.denormalize_target(model_.predict(cond, VectorXd::Zero(cond.n_target()), 1));
}

VectorXd condition_features(const ConditionSet& cond) {
    VectorXd f(cond.rows() * cond.cols());
    for (Eigen::Index r = 0; r < cond.rows(); ++r)
        for (Eigen::Index c = 0; c < cond.cols(); ++c)
            f[r * cond.cols() + c] = cond.mask(r, c) ? cond.values(r, c) : 0.0;
    return f;
}

LinearGenerator LinearGenerator::fit(SampleSource& source, Rng& rng, int n_samples, double ridge) {
    require(n_samples >= 2, ErrorCode::invalid_argument, "linear baseline needs at least two samples");
    require(ridge >= 0.0, ErrorCode::invalid_argument, "ridge penalty must be >= 0");
    MatrixXd X, Y;
    for (int i = 0; i < n_samples; ++i) {
        const ConditionSet c = source.draw(rng);
        const VectorXd f = condition_features(c);
        if (i == 0) {
            X.resize(n_samples, f.size() + 1);
            Y.resize(n_samples, c.n_target());
        }
        require(f.size() + 1 == X.cols() && c.n_target() == Y.cols(), ErrorCode::shape_mismatch,
                "training condition sets differ in shape");
        X.row(i).head(f.size()) = f.transpose();
        X(i, f.size()) = 1.0;
        Y.row(i) = c.target_values().transpose();
    }
    MatrixXd gram = X.transpose() * X;
    gram.diagonal().head(X.cols() - 1).array() += ridge;
    Eigen::LDLT<Eigen::MatrixXd> solver(gram);
    require(solver.info() == Eigen::Success, ErrorCode::undefined_statistic, "linear baseline: singular system");
    LinearGenerator g;
    g.weights_ = solver.solve(MatrixXd(X.transpose() * Y));
    require(g.weights_.allFinite(), ErrorCode::non_finite, "linear baseline: non-finite weights");
    return g;
}

VectorXd LinearGenerator::generate(const ConditionSet& cond, std::uint64_t) const {
    const VectorXd f = condition_features(cond);
    require(f.size() + 1 == weights_.rows(), ErrorCode::shape_mismatch, "linear baseline: condition shape mismatch");
    const VectorXd y = weights_.topRows(f.size()).transpose() * f + weights_.row(f.size()).transpose();
    return cond.denormalize_target(y);
}

std::string_view to_string(GeneratorKind k) {
    switch (k) {
        case GeneratorKind::diffusion: return "diffusion";
        case GeneratorKind::transformer: return "transformer";
        case GeneratorKind::linear: return "linear";
        case GeneratorKind::gan: return "gan";
    }
    return "unknown";
}

GeneratorKind parse_generator(std::string_view name) {
    for (auto k : {GeneratorKind::diffusion, GeneratorKind::transformer, GeneratorKind::linear, GeneratorKind::gan})
        if (to_string(k) == name) return k;
    fail(ErrorCode::parse, "unknown generator kind '" + std::string(name) + "'");
}

std::vector<EvalWindow> held_out_windows(const ReturnPanel& panel, AnchorRange anchors, int count, std::uint64_t seed) {
    require(count >= 1, ErrorCode::invalid_argument, "window count must be >= 1");
    require(anchors.size() > 0, ErrorCode::precondition, "no admissible evaluation anchors");
    Rng rng(derive_seed(seed, "eval/windows"));
    std::vector<EvalWindow> out;
    for (int i = 0; i < count; ++i) {
        EvalWindow w;
        w.row = static_cast<Eigen::Index>(uniform_index(rng, static_cast<std::uint64_t>(panel.n_symbols())));
        w.t = anchors.first + static_cast<Eigen::Index>(uniform_index(rng, static_cast<std::uint64_t>(anchors.size())));
        out.push_back(w);
    }
    return out;
}

GenEvalReport evaluate_generator(const PathGenerator& generator, const PreparedPanel& panel,
                                 const RetrievalSetup& setup, const std::vector<EvalWindow>& windows,
                                 std::uint64_t seed, unsigned workers) {
    std::vector<std::optional<StockEvaluation>> results(windows.size());
    parallel_for(
        windows.size(),
        [&](std::size_t i) {
            const EvalWindow& w = windows[i];
            const ConditionSet cond =
                contemporaneous_condition(panel, w.row, w.t, setup, derive_seed(seed, "eval/retrieval", i));
            const VectorXd path = generator.generate(cond, derive_seed(seed, "eval/sample", i));
            try {
                results[i] = evaluate_window(panel.values, w.row, w.t, path);
            } catch (const Error& e) {
                if (e.code() != ErrorCode::undefined_statistic) throw;
            }
        },
        workers);
    std::vector<StockEvaluation> rows;
    for (auto& r : results)
        if (r) rows.push_back(std::move(*r));
    const std::size_t skipped = windows.size() - rows.size();
    return summarize(std::move(rows), static_cast<std::size_t>(panel.values.n_symbols()), skipped);
}

const AblationCell& AblationTable::at(SimilarityMeasure method, GeneratorKind model) const {
    for (const auto& c : cells)
        if (c.method == method && c.model == model) return c;
    fail(ErrorCode::invalid_argument, "ablation table has no such cell");
}

namespace {

AblationCell run_cell(const PreparedPanel& panel, SimilarityMeasure method, GeneratorKind kind,
                      const AblationConfig& config, const std::vector<EvalWindow>& windows) {
    AblationCell cell;
    cell.method = method;
    cell.model = kind;
    if (kind == GeneratorKind::gan) {
        cell.status = "not implemented";
        return cell;
    }

    RetrievalSetup setup = config.setup;
    setup.measure = method;
    const std::string label(to_string(method));
    PanelSampleSource source(panel, setup, AnchorRange::of(0, config.train_end, setup));

    ModelConfig mc = config.model;
    mc.k = static_cast<int>(setup.effective_k());
    mc.history_len = static_cast<int>(setup.history_len);
    mc.horizon = static_cast<int>(setup.horizon);
    mc.seed = derive_seed(config.seed, "ablation/model/" + label);
    TrainConfig tc = config.train;
    tc.seed = derive_seed(config.seed, "ablation/train/" + label);
    const NoiseSchedule sched = make_schedule(config.diffusion_steps, config.beta_min, config.beta_max);
    const std::uint64_t eval_seed = derive_seed(config.seed, "ablation/eval");

    GenEvalReport report;
    if (kind == GeneratorKind::linear) {
        Rng rng(tc.seed);
        const LinearGenerator g = LinearGenerator::fit(source, rng, config.linear_samples, config.linear_ridge);
        report = evaluate_generator(g, panel, setup, windows, eval_seed, tc.workers);
    } else {
        tc.objective = kind == GeneratorKind::diffusion ? Objective::noise : Objective::direct;
        auto session = train<float>(source, mc, tc, sched);
        const TransformerDenoiser<float> model(std::move(session.params));
        if (kind == GeneratorKind::diffusion)
            report = evaluate_generator(DiffusionGenerator(model, sched, config.n_paths), panel, setup, windows,
                                        eval_seed, tc.workers);
        else
            report = evaluate_generator(DirectGenerator(model), panel, setup, windows, eval_seed, tc.workers);
    }
    cell.ok = true;
    cell.status = "ok";
    cell.market_ranking = report.market_ranking;
    cell.correlation = report.correlation;
    cell.windows = report.per_stock.size();
    cell.skipped = report.skipped;
    return cell;
}

}  // namespace

AblationTable run_ablation(const PreparedPanel& panel, const std::vector<SimilarityMeasure>& methods,
                           const std::vector<GeneratorKind>& models, const AblationConfig& config,
                           const std::vector<EvalWindow>& windows) {
    require(!methods.empty() && !models.empty(), ErrorCode::invalid_argument, "ablation needs methods and models");
    require(!windows.empty(), ErrorCode::invalid_argument, "ablation needs evaluation windows");
    for (const auto& w : windows)
        require(w.t >= config.train_end, ErrorCode::precondition, "evaluation windows must start after the training range");
    AblationTable table;
    for (auto method : methods)
        for (auto kind : models) {
            try {
                table.cells.push_back(run_cell(panel, method, kind, config, windows));
            } catch (const Error& e) {
                AblationCell failed;
                failed.method = method;
                failed.model = kind;
                failed.status = std::string("failed: ") + e.what();
                table.cells.push_back(std::move(failed));
            }
        }
    return table;
}

}  // namespace fwt
