#pragma once

#include "fwt/diffusion.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace fwt {

struct ModelConfig {
    int layers = 4;
    int heads = 8;
    int d_model = 64;
    int step_embed_dim = 128;
    int ff_mult = 4;
    int k = 16;
    int history_len = 250;
    int horizon = 20;
    std::uint64_t seed = 0;
    /// Learned per-row encodings; switched off only to test row symmetry.
    bool row_encoding = true;

    int rows() const { return k + 1; }
    int cols() const { return history_len + horizon; }
    int ff_dim() const { return ff_mult * d_model; }
    void validate() const;
    /// Hash of every field that fixes the parameter layout or input shape.
    std::uint64_t fingerprint() const;
};

struct TensorSpec {
    std::string name;
    Eigen::Index rows = 0;
    Eigen::Index cols = 0;
    Eigen::Index offset = 0;
};

struct AttentionSlots {
    Eigen::Index wq, wk, wv, wo, bq, bk, bv, bo;
};

struct BlockSlots {
    Eigen::Index ln1_g, ln1_b, ln2_g, ln2_b, ln3_g, ln3_b;
    AttentionSlots time, row;
    Eigen::Index w1, b1, w2, b2;
};

/// Offsets of every tensor inside the flat parameter vector.
struct ParamLayout {
    Eigen::Index embed_w = 0, embed_b = 0, row_embed = 0, step_w = 0, step_b = 0;
    std::vector<BlockSlots> blocks;
    Eigen::Index final_g = 0, final_b = 0, head_w = 0, head_b = 0;
    Eigen::Index total = 0;
    std::vector<TensorSpec> directory;

    static ParamLayout build(const ModelConfig& config);
    const TensorSpec& find(std::string_view name) const;
};

/// Weights of the conditional denoiser, stored flat; tensors are row-major
/// slices described by `layout.directory`.
template <typename Scalar>
struct DenoiserParams {
    ModelConfig config;
    ParamLayout layout;
    Vector<Scalar> values;

    Eigen::Index parameter_count() const { return values.size(); }

    template <typename Other>
    DenoiserParams<Other> cast() const {
        return DenoiserParams<Other>{config, layout, values.template cast<Other>()};
    }
};

/// Deterministic initialization: projections and embeddings uniform in
/// +/- 1/sqrt(fan_in), layer-norm gains 1, every bias (head included) 0.
template <typename Scalar>
DenoiserParams<Scalar> init_params(const ModelConfig& config);

/// Sinusoidal embedding of a (step or position) index.
template <typename Scalar>
RowVector<Scalar> sinusoidal_embedding(double position, int dim);

/// Factorized-attention denoiser: per-cell embedding of (observed value,
/// noisy target value, observed flag) plus time, row and step encodings,
/// then `layers` pre-norm blocks of time-axis attention, row-axis attention
/// and a SiLU feed-forward, each residual; a linear head reads the target
/// cells.
template <typename Scalar>
class TransformerDenoiser final : public TrainableDenoiser {
public:
    explicit TransformerDenoiser(DenoiserParams<Scalar> params, unsigned workers = 1);

    VectorXd predict(const ConditionSet& cond, const Eigen::Ref<const VectorXd>& noisy_target, int h) const override;
    Eigen::Index parameter_count() const override { return params_.parameter_count(); }
    double loss_and_gradient(std::span<const DiffusionSample> batch, VectorXd& grad) const override;

    /// Loss and gradient in the network's own scalar type.
    Scalar loss_and_gradient_native(std::span<const DiffusionSample> batch, Vector<Scalar>& grad) const;

    const DenoiserParams<Scalar>& params() const { return params_; }
    DenoiserParams<Scalar>& params() { return params_; }
    void set_workers(unsigned workers) { workers_ = workers; }

private:
    DenoiserParams<Scalar> params_;
    unsigned workers_;
};

extern template class TransformerDenoiser<float>;
extern template class TransformerDenoiser<double>;

}  // namespace fwt
