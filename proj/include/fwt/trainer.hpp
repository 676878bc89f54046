#pragma once

#include "fwt/denoiser.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace fwt {

/// noise: the diffusion objective. direct: the same network regresses the
/// normalized future itself (h fixed at 1, zero noisy input); used as an
/// ablation baseline.
enum class Objective : std::uint8_t { noise = 0, direct = 1 };

struct TrainConfig {
    double learning_rate = 1.5e-4;
    int batch_size = 32;
    int batches = 500;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    std::uint64_t seed = 0;
    unsigned workers = 1;
    Objective objective = Objective::noise;
};

/// Adam moments, step counter and the data-sampling stream.
template <typename Scalar>
struct TrainerState {
    Vector<Scalar> m;
    Vector<Scalar> v;
    std::uint64_t step = 0;
    TrainConfig config;
    Rng rng;

    static TrainerState fresh(Eigen::Index n_params, const TrainConfig& config);
};

template <typename Scalar>
struct TrainingSession {
    DenoiserParams<Scalar> params;
    TrainerState<Scalar> state;
    std::vector<double> losses;
};

/// One Adam update with bias correction.
template <typename Scalar>
void adam_update(Vector<Scalar>& params, const Vector<Scalar>& grad, TrainerState<Scalar>& state);

/// Runs `n_batches` training iterations on the session in place.
template <typename Scalar>
void run_training(TrainingSession<Scalar>& session, SampleSource& source, const NoiseSchedule& sched, int n_batches);

/// Trains for `train.batches` iterations from a fresh init, or from
/// `init_from` (fine-tuning: weights copied, optimizer state reset).
template <typename Scalar>
TrainingSession<Scalar> train(SampleSource& source, const ModelConfig& model, const TrainConfig& train,
                              const NoiseSchedule& sched, const DenoiserParams<Scalar>* init_from = nullptr);

/// Checkpoint file: magic `FWTCKPT1`, version byte, config fingerprint, model
/// config, name/shape directory, little-endian float32 tensors, then the
/// trainer state (Adam moments as float32, hyper-parameters, rng state).
template <typename Scalar>
void save_checkpoint(const TrainingSession<Scalar>& session, const std::filesystem::path& path);

TrainingSession<float> load_checkpoint(const std::filesystem::path& path);

}  // namespace fwt
