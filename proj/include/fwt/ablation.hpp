#pragma once

#include "fwt/evaluation.hpp"
#include "fwt/trainer.hpp"

#include <string>
#include <vector>

namespace fwt {

/// Maps a condition set to one future return path in raw units.
class PathGenerator {
public:
    virtual ~PathGenerator() = default;
    virtual VectorXd generate(const ConditionSet& cond, std::uint64_t seed) const = 0;
};

/// Ensemble-mean path of the diffusion sampler.
class DiffusionGenerator final : public PathGenerator {
public:
    DiffusionGenerator(const NoisePredictor& model, NoiseSchedule sched, int n_paths)
        : model_(model), sched_(std::move(sched)), n_paths_(n_paths) {}
    VectorXd generate(const ConditionSet& cond, std::uint64_t seed) const override;

private:
    const NoisePredictor& model_;
    NoiseSchedule sched_;
    int n_paths_;
};

/// A network trained with Objective::direct: one deterministic forward pass.
class DirectGenerator final : public PathGenerator {
public:
    explicit DirectGenerator(const NoisePredictor& model) : model_(model) {}
    VectorXd generate(const ConditionSet& cond, std::uint64_t seed) const override;

private:
    const NoisePredictor& model_;
};

/// Ridge regression from the flattened observed cells (target cells zeroed)
/// to the normalized target future.
class LinearGenerator final : public PathGenerator {
public:
    /// Fits on `n_samples` draws from `source`; the intercept is not penalized.
    static LinearGenerator fit(SampleSource& source, Rng& rng, int n_samples, double ridge);
    VectorXd generate(const ConditionSet& cond, std::uint64_t seed) const override;

    const MatrixXd& weights() const { return weights_; }

private:
    MatrixXd weights_;  ///< [(features + 1) x horizon], intercept in the last row
};

/// Flattened observed cells of a condition set; target cells read as 0.
VectorXd condition_features(const ConditionSet& cond);

enum class GeneratorKind { diffusion, transformer, linear, gan };

std::string_view to_string(GeneratorKind k);
GeneratorKind parse_generator(std::string_view name);

struct EvalWindow {
    Eigen::Index row = 0;
    Eigen::Index t = 0;
};

/// `count` (row, anchor) pairs drawn uniformly from `anchors`, in draw order.
std::vector<EvalWindow> held_out_windows(const ReturnPanel& panel, AnchorRange anchors, int count, std::uint64_t seed);

/// Scores `generator` on contemporaneous conditions of `windows`. Window i
/// uses retrieval seed derive_seed(seed, "eval/retrieval", i) and generation
/// seed derive_seed(seed, "eval/sample", i). Degenerate windows are skipped.
GenEvalReport evaluate_generator(const PathGenerator& generator, const PreparedPanel& panel,
                                 const RetrievalSetup& setup, const std::vector<EvalWindow>& windows,
                                 std::uint64_t seed, unsigned workers = 1);

struct AblationConfig {
    RetrievalSetup setup;  ///< measure is overridden per row
    ModelConfig model;     ///< k, history_len and horizon follow `setup`
    TrainConfig train;
    int diffusion_steps = 100;
    double beta_min = 1e-4;
    double beta_max = 0.02;
    int n_paths = 4;
    Eigen::Index train_end = 0;  ///< training anchors keep their futures before this step
    int linear_samples = 2000;
    double linear_ridge = 1.0;
    std::uint64_t seed = 0;
};

struct AblationCell {
    SimilarityMeasure method = SimilarityMeasure::excess_return_correlation;
    GeneratorKind model = GeneratorKind::diffusion;
    bool ok = false;
    std::string status;  ///< "ok", "not implemented", or the failure message
    double market_ranking = 0.0;
    double correlation = 0.0;
    std::size_t windows = 0;
    std::size_t skipped = 0;
};

struct AblationTable {
    std::vector<AblationCell> cells;  ///< methods-major, in request order

    const AblationCell& at(SimilarityMeasure method, GeneratorKind model) const;
};

/// Trains one generator per (method, model) cell on anchors before
/// `config.train_end` and evaluates every cell on the same windows.
AblationTable run_ablation(const PreparedPanel& panel, const std::vector<SimilarityMeasure>& methods,
                           const std::vector<GeneratorKind>& models, const AblationConfig& config,
                           const std::vector<EvalWindow>& windows);

}  // namespace fwt
