#pragma once

#include "fwt/retrieval.hpp"
#include "fwt/rng.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace fwt {

/// Variance schedule over H steps. Vectors are stored 0-based; the accessors
/// take the 1-based diffusion step h.
struct NoiseSchedule {
    int steps = 0;
    VectorXd beta;
    VectorXd alpha;
    VectorXd alpha_bar;
    VectorXd posterior_var;  ///< ((1 - abar_{h-1}) / (1 - abar_h)) * beta_h, abar_0 = 1

    double beta_at(int h) const { return beta[h - 1]; }
    double alpha_at(int h) const { return alpha[h - 1]; }
    double alpha_bar_at(int h) const { return alpha_bar[h - 1]; }
    double posterior_var_at(int h) const { return posterior_var[h - 1]; }
};

enum class ScheduleKind { linear };

NoiseSchedule make_schedule(int steps, double beta_min = 1e-4, double beta_max = 0.02,
                            ScheduleKind kind = ScheduleKind::linear);

/// sqrt(abar_h) * x0 + sqrt(1 - abar_h) * eps.
VectorXd forward_noise(const Eigen::Ref<const VectorXd>& x0, int h, const Eigen::Ref<const VectorXd>& eps,
                       const NoiseSchedule& sched);

/// Mean of the reverse transition: (x_h - beta_h / sqrt(1 - abar_h) * eps_hat) / sqrt(alpha_h).
VectorXd posterior_mean(const Eigen::Ref<const VectorXd>& xh, const Eigen::Ref<const VectorXd>& eps_hat, int h,
                        const NoiseSchedule& sched);

/// One training example: a condition set whose target cells hold x0, the
/// drawn step, the injected noise and the resulting noisy target.
struct DiffusionSample {
    ConditionSet cond;
    int h = 1;
    VectorXd eps;
    VectorXd xh_target;
};

/// The conditional noise predictor eps_theta(x_h^target, h | x_0^cond).
class NoisePredictor {
public:
    virtual ~NoisePredictor() = default;
    /// Predicted noise on the target cells. Must not read target cells of cond.values.
    virtual VectorXd predict(const ConditionSet& cond, const Eigen::Ref<const VectorXd>& noisy_target,
                             int h) const = 0;
};

/// A predictor with trainable parameters and exact loss gradients.
class TrainableDenoiser : public NoisePredictor {
public:
    virtual Eigen::Index parameter_count() const = 0;
    /// Batch mean of the per-sample target-cell mean squared error between
    /// eps and eps_theta; `grad` receives its gradient (resized to
    /// parameter_count()).
    virtual double loss_and_gradient(std::span<const DiffusionSample> batch, VectorXd& grad) const = 0;
};

/// Yields training condition sets with target cells populated.
class SampleSource {
public:
    virtual ~SampleSource() = default;
    virtual ConditionSet draw(Rng& rng) = 0;
    virtual bool empty() const = 0;
};

/// Draws `batch_size` examples as in one training iteration: h uniform on
/// {1..H}, X from the source, eps ~ N(0, I) on the target cells.
std::vector<DiffusionSample> draw_batch(SampleSource& source, const NoiseSchedule& sched, Rng& rng, int batch_size);

struct TrainStepResult {
    double loss = 0.0;
    VectorXd gradient;
};

TrainStepResult train_step(SampleSource& source, const TrainableDenoiser& denoiser, const NoiseSchedule& sched,
                           Rng& rng, int batch_size = 1);

/// Ensemble of generated target trajectories, de-normalized, one path per row.
struct Ensemble {
    MatrixXd paths;  ///< [n_paths x T]

    VectorXd mean_path() const;
    /// Pointwise type-7 quantile across paths.
    VectorXd quantile_path(double p) const;
};

/// Ancestral sampling. Path i uses the stream derive_seed(seed, "sample", i),
/// so the ensemble does not depend on `workers`.
Ensemble sample(const ConditionSet& cond, const NoisePredictor& denoiser, const NoiseSchedule& sched,
                std::uint64_t seed, int n_paths, unsigned workers = 1);

/// Single reverse trajectory in normalized units from an explicit initial x_H.
VectorXd reverse_trajectory(const ConditionSet& cond, const NoisePredictor& denoiser, const NoiseSchedule& sched,
                            VectorXd x, Rng& rng);

}  // namespace fwt
