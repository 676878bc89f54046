#include "fwt/diffusion.hpp"

#include "fwt/parallel.hpp"

#include <algorithm>
#include <cmath>

namespace fwt {

NoiseSchedule make_schedule(int steps, double beta_min, double beta_max, ScheduleKind kind) {
    require(steps >= 1, ErrorCode::invalid_argument, "schedule needs at least one step");
    require(beta_min > 0.0 && beta_min <= beta_max && beta_max < 1.0, ErrorCode::invalid_argument,
            "betas must satisfy 0 < beta_min <= beta_max < 1");
    (void)kind;

    NoiseSchedule s;
    s.steps = steps;
    s.beta.resize(steps);
    for (int h = 0; h < steps; ++h)
        s.beta[h] = steps == 1 ? beta_min : beta_min + (beta_max - beta_min) * h / static_cast<double>(steps - 1);
    s.alpha = (1.0 - s.beta.array()).matrix();
    s.alpha_bar.resize(steps);
    s.posterior_var.resize(steps);
    double prod = 1.0;
    for (int h = 0; h < steps; ++h) {
        const double prev = prod;
        prod *= s.alpha[h];
        s.alpha_bar[h] = prod;
        s.posterior_var[h] = (1.0 - prev) / (1.0 - prod) * s.beta[h];
    }
    return s;
}

namespace {

void check_step(int h, const NoiseSchedule& sched) {
    require(h >= 1 && h <= sched.steps, ErrorCode::precondition,
            "diffusion step " + std::to_string(h) + " outside [1, " + std::to_string(sched.steps) + "]");
}

}  // namespace

VectorXd forward_noise(const Eigen::Ref<const VectorXd>& x0, int h, const Eigen::Ref<const VectorXd>& eps,
                       const NoiseSchedule& sched) {
    check_step(h, sched);
    require(x0.size() == eps.size(), ErrorCode::shape_mismatch, "forward_noise: shape mismatch");
    const double ab = sched.alpha_bar_at(h);
    return std::sqrt(ab) * x0 + std::sqrt(1.0 - ab) * eps;
}

VectorXd posterior_mean(const Eigen::Ref<const VectorXd>& xh, const Eigen::Ref<const VectorXd>& eps_hat, int h,
                        const NoiseSchedule& sched) {
    check_step(h, sched);
    require(xh.size() == eps_hat.size(), ErrorCode::shape_mismatch, "posterior_mean: shape mismatch");
    const double coef = sched.beta_at(h) / std::sqrt(1.0 - sched.alpha_bar_at(h));
    return (xh - coef * eps_hat) / std::sqrt(sched.alpha_at(h));
}

std::vector<DiffusionSample> draw_batch(SampleSource& source, const NoiseSchedule& sched, Rng& rng, int batch_size) {
    require(!source.empty(), ErrorCode::precondition, "training data source is empty");
    require(batch_size >= 1, ErrorCode::invalid_argument, "batch size must be >= 1");
    std::vector<DiffusionSample> batch;
    batch.reserve(static_cast<std::size_t>(batch_size));
    for (int b = 0; b < batch_size; ++b) {
        DiffusionSample s;
        s.h = 1 + static_cast<int>(uniform_index(rng, static_cast<std::uint64_t>(sched.steps)));
        s.cond = source.draw(rng);
        s.eps.resize(s.cond.n_target());
        for (Eigen::Index i = 0; i < s.eps.size(); ++i) s.eps[i] = standard_normal(rng);
        s.xh_target = forward_noise(s.cond.target_values(), s.h, s.eps, sched);
        batch.push_back(std::move(s));
    }
    return batch;
}

TrainStepResult train_step(SampleSource& source, const TrainableDenoiser& denoiser, const NoiseSchedule& sched,
                           Rng& rng, int batch_size) {
    const auto batch = draw_batch(source, sched, rng, batch_size);
    TrainStepResult r;
    r.loss = denoiser.loss_and_gradient(batch, r.gradient);
    require(std::isfinite(r.loss), ErrorCode::non_finite, "non-finite training loss");
    return r;
}

VectorXd Ensemble::mean_path() const { return paths.colwise().mean().transpose(); }

VectorXd Ensemble::quantile_path(double p) const {
    VectorXd out(paths.cols());
    for (Eigen::Index j = 0; j < paths.cols(); ++j) {
        std::vector<double> col(static_cast<std::size_t>(paths.rows()));
        for (Eigen::Index i = 0; i < paths.rows(); ++i) col[static_cast<std::size_t>(i)] = paths(i, j);
        out[j] = quantile(std::move(col), p);
    }
    return out;
}

VectorXd reverse_trajectory(const ConditionSet& cond, const NoisePredictor& denoiser, const NoiseSchedule& sched,
                            VectorXd x, Rng& rng) {
    for (int h = sched.steps; h >= 1; --h) {
        const VectorXd eps_hat = denoiser.predict(cond, x, h);
        require(eps_hat.size() == x.size(), ErrorCode::shape_mismatch, "denoiser output does not match target");
        x = posterior_mean(x, eps_hat, h, sched);
        if (h > 1) {
            const double sd = std::sqrt(sched.posterior_var_at(h));
            for (Eigen::Index i = 0; i < x.size(); ++i) x[i] += sd * standard_normal(rng);
        }
    }
    return x;
}

Ensemble sample(const ConditionSet& cond, const NoisePredictor& denoiser, const NoiseSchedule& sched,
                std::uint64_t seed, int n_paths, unsigned workers) {
    require(n_paths >= 1, ErrorCode::invalid_argument, "n_paths must be >= 1");
    const Eigen::Index horizon = cond.n_target();
    Ensemble e;
    e.paths.resize(n_paths, horizon);
    parallel_for(
        static_cast<std::size_t>(n_paths),
        [&](std::size_t i) {
            Rng rng(derive_seed(seed, "sample", i));
            VectorXd x(horizon);
            for (Eigen::Index j = 0; j < horizon; ++j) x[j] = standard_normal(rng);
            x = reverse_trajectory(cond, denoiser, sched, std::move(x), rng);
            e.paths.row(static_cast<Eigen::Index>(i)) = cond.denormalize_target(x).transpose();
        },
        workers);
    return e;
}

}  // namespace fwt
