#include "fwt/denoiser.hpp"

#include "fwt/parallel.hpp"

#include <cmath>

namespace fwt {

void ModelConfig::validate() const {
    require(layers >= 1 && heads >= 1 && d_model >= 1 && step_embed_dim >= 2 && ff_mult >= 1,
            ErrorCode::invalid_argument, "model dimensions must be positive");
    require(d_model % heads == 0, ErrorCode::invalid_argument, "d_model must be divisible by heads");
    require(step_embed_dim % 2 == 0, ErrorCode::invalid_argument, "step_embed_dim must be even");
    require(k >= 0 && history_len >= 1 && horizon >= 1, ErrorCode::invalid_argument,
            "k >= 0, history_len >= 1 and horizon >= 1 required");
}

std::uint64_t ModelConfig::fingerprint() const {
    std::uint64_t h = 0xCBF29CE484222325ULL;
    for (std::int64_t v : {std::int64_t{1}, std::int64_t{layers}, std::int64_t{heads}, std::int64_t{d_model},
                           std::int64_t{step_embed_dim}, std::int64_t{ff_mult}, std::int64_t{k},
                           std::int64_t{history_len}, std::int64_t{horizon}}) {
        for (int b = 0; b < 8; ++b) {
            h ^= static_cast<std::uint64_t>(v >> (8 * b)) & 0xFF;
            h *= 0x100000001B3ULL;
        }
    }
    return h;
}

ParamLayout ParamLayout::build(const ModelConfig& c) {
    c.validate();
    ParamLayout L;
    auto add = [&](const std::string& name, Eigen::Index rows, Eigen::Index cols) {
        L.directory.push_back({name, rows, cols, L.total});
        const Eigen::Index off = L.total;
        L.total += rows * cols;
        return off;
    };
    const Eigen::Index d = c.d_model;
    L.embed_w = add("embed.w", 3, d);
    L.embed_b = add("embed.b", 1, d);
    L.row_embed = add("row_embed", c.rows(), d);
    L.step_w = add("step.w", c.step_embed_dim, d);
    L.step_b = add("step.b", 1, d);
    auto attention = [&](const std::string& p) {
        AttentionSlots a{};
        a.wq = add(p + ".wq", d, d);
        a.bq = add(p + ".bq", 1, d);
        a.wk = add(p + ".wk", d, d);
        a.bk = add(p + ".bk", 1, d);
        a.wv = add(p + ".wv", d, d);
        a.bv = add(p + ".bv", 1, d);
        a.wo = add(p + ".wo", d, d);
        a.bo = add(p + ".bo", 1, d);
        return a;
    };
    for (int l = 0; l < c.layers; ++l) {
        const std::string p = "block" + std::to_string(l);
        BlockSlots b{};
        b.ln1_g = add(p + ".ln1.g", 1, d);
        b.ln1_b = add(p + ".ln1.b", 1, d);
        b.time = attention(p + ".time");
        b.ln2_g = add(p + ".ln2.g", 1, d);
        b.ln2_b = add(p + ".ln2.b", 1, d);
        b.row = attention(p + ".row");
        b.ln3_g = add(p + ".ln3.g", 1, d);
        b.ln3_b = add(p + ".ln3.b", 1, d);
        b.w1 = add(p + ".ff.w1", d, c.ff_dim());
        b.b1 = add(p + ".ff.b1", 1, c.ff_dim());
        b.w2 = add(p + ".ff.w2", c.ff_dim(), d);
        b.b2 = add(p + ".ff.b2", 1, d);
        L.blocks.push_back(b);
    }
    L.final_g = add("final_ln.g", 1, d);
    L.final_b = add("final_ln.b", 1, d);
    L.head_w = add("head.w", d, 1);
    L.head_b = add("head.b", 1, 1);
    return L;
}

const TensorSpec& ParamLayout::find(std::string_view name) const {
    for (const auto& t : directory)
        if (t.name == name) return t;
    fail(ErrorCode::invalid_argument, "no tensor named '" + std::string(name) + "'");
}

template <typename Scalar>
DenoiserParams<Scalar> init_params(const ModelConfig& config) {
    DenoiserParams<Scalar> p{config, ParamLayout::build(config), {}};
    p.values = Vector<Scalar>::Zero(p.layout.total);
    Rng rng(derive_seed(config.seed, "denoiser/init"));
    auto ends_with = [](const std::string& s, std::string_view suffix) {
        return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
    };
    for (const auto& t : p.layout.directory) {
        auto block = p.values.segment(t.offset, t.rows * t.cols);
        if (ends_with(t.name, ".g")) {
            block.setOnes();
        } else if (t.rows == 1) {
            block.setZero();  // biases and layer-norm shifts
        } else {
            const double fan_in = t.name == "row_embed" ? static_cast<double>(config.d_model)
                                                        : static_cast<double>(t.rows);
            const double bound = 1.0 / std::sqrt(fan_in);
            for (Eigen::Index i = 0; i < block.size(); ++i)
                block[i] = static_cast<Scalar>((2.0 * uniform01(rng) - 1.0) * bound);
        }
    }
    return p;
}

template <typename Scalar>
RowVector<Scalar> sinusoidal_embedding(double position, int dim) {
    RowVector<Scalar> e(dim);
    const int half = dim / 2;
    for (int i = 0; i < half; ++i) {
        const double freq = std::exp(-std::log(10000.0) * i / static_cast<double>(half));
        e[i] = static_cast<Scalar>(std::sin(position * freq));
        e[i + half] = static_cast<Scalar>(std::cos(position * freq));
    }
    if (dim % 2 == 1) e[dim - 1] = Scalar(0);
    return e;
}

namespace {

template <typename S>
using Mat = Matrix<S>;
template <typename S>
using StridedMap = Eigen::Map<Mat<S>, 0, Eigen::OuterStride<>>;
template <typename S>
using ConstStridedMap = Eigen::Map<const Mat<S>, 0, Eigen::OuterStride<>>;

constexpr double kLayerNormEps = 1e-5;

// Tokens of one attention axis: `groups` groups of `count` tokens; group g
// starts at token g * group_step and its members are `stride` tokens apart.
struct Grouping {
    Eigen::Index groups, count, stride, group_step;
};

template <typename S>
struct LnCache {
    Mat<S> xhat;
    Vector<S> inv_std;
};

template <typename S>
struct AttnCache {
    Mat<S> in, q, k, v, o;
    std::vector<Mat<S>> probs;  // [group * heads + head]
};

template <typename S>
struct BlockCache {
    LnCache<S> ln1, ln2, ln3;
    AttnCache<S> time, row;
    Mat<S> ff_in, ff_pre, ff_act;
};

template <typename S>
struct ForwardCache {
    Mat<S> features;
    std::vector<BlockCache<S>> blocks;
    LnCache<S> final_ln;
    Mat<S> final_out;
    std::vector<Eigen::Index> target_tokens;
};

template <typename S>
class Network {
public:
    Network(const DenoiserParams<S>& p) : p_(p), d_(p.config.d_model), heads_(p.config.heads) {}

    Eigen::Map<const Mat<S>> tensor(Eigen::Index off, Eigen::Index rows, Eigen::Index cols) const {
        return {p_.values.data() + off, rows, cols};
    }
    static Eigen::Map<Mat<S>> grad_tensor(Vector<S>& g, Eigen::Index off, Eigen::Index rows, Eigen::Index cols) {
        return {g.data() + off, rows, cols};
    }

    // Forward pass; returns eps_hat on target cells (row-major mask-zero order).
    Vector<S> forward(const ConditionSet& cond, const Eigen::Ref<const VectorXd>& noisy, int h,
                      ForwardCache<S>* cache) const {
        const auto& cfg = p_.config;
        const Eigen::Index R = cond.rows(), C = cond.cols();
        require(R == cfg.rows() && C == cfg.cols(), ErrorCode::shape_mismatch,
                "denoiser expects a " + std::to_string(cfg.rows()) + "x" + std::to_string(cfg.cols()) +
                    " condition set, got " + std::to_string(R) + "x" + std::to_string(C));
        require(cond.mask.rows() == R && cond.mask.cols() == C, ErrorCode::shape_mismatch, "mask shape mismatch");
        require(h >= 1, ErrorCode::precondition, "diffusion step must be >= 1");
        const Eigen::Index N = R * C;

        ForwardCache<S> local;
        ForwardCache<S>& fc = cache ? *cache : local;
        fc.target_tokens.clear();
        fc.features.resize(N, 3);
        Eigen::Index ti = 0;
        for (Eigen::Index r = 0; r < R; ++r) {
            for (Eigen::Index c = 0; c < C; ++c) {
                const Eigen::Index n = r * C + c;
                if (cond.mask(r, c)) {
                    fc.features(n, 0) = static_cast<S>(cond.values(r, c));
                    fc.features(n, 1) = S(0);
                    fc.features(n, 2) = S(1);
                } else {
                    require(ti < noisy.size(), ErrorCode::shape_mismatch, "noisy target shorter than mask");
                    fc.features(n, 0) = S(0);
                    fc.features(n, 1) = static_cast<S>(noisy[ti++]);
                    fc.features(n, 2) = S(0);
                    fc.target_tokens.push_back(n);
                }
            }
        }
        require(ti == noisy.size(), ErrorCode::shape_mismatch, "noisy target length does not match mask");

        const auto& L = p_.layout;
        Mat<S> x = fc.features * tensor(L.embed_w, 3, d_);
        x.rowwise() += tensor(L.embed_b, 1, d_).row(0);
        const RowVector<S> step = sinusoidal_embedding<S>(h, cfg.step_embed_dim) * tensor(L.step_w, cfg.step_embed_dim, d_) +
                                  tensor(L.step_b, 1, d_).row(0);
        x.rowwise() += step;
        const auto row_table = tensor(L.row_embed, cfg.rows(), d_);
        for (Eigen::Index c = 0; c < C; ++c) {
            const RowVector<S> te = sinusoidal_embedding<S>(static_cast<double>(c), d_);
            for (Eigen::Index r = 0; r < R; ++r) x.row(r * C + c) += te;
        }
        if (cfg.row_encoding)
            for (Eigen::Index r = 0; r < R; ++r) x.middleRows(r * C, C).rowwise() += row_table.row(r);

        const Grouping time_axis{R, C, 1, C};
        const Grouping row_axis{C, R, C, 1};
        fc.blocks.resize(L.blocks.size());
        for (std::size_t l = 0; l < L.blocks.size(); ++l) {
            const BlockSlots& b = L.blocks[l];
            BlockCache<S>& bc = fc.blocks[l];
            x += attention_forward(layer_norm_forward(x, b.ln1_g, b.ln1_b, bc.ln1), b.time, time_axis, bc.time);
            x += attention_forward(layer_norm_forward(x, b.ln2_g, b.ln2_b, bc.ln2), b.row, row_axis, bc.row);
            bc.ff_in = layer_norm_forward(x, b.ln3_g, b.ln3_b, bc.ln3);
            x += feed_forward(b, bc);
        }
        fc.final_out = layer_norm_forward(x, L.final_g, L.final_b, fc.final_ln);

        const auto head_w = tensor(L.head_w, d_, 1);
        const S head_b = p_.values[L.head_b];
        Vector<S> out(static_cast<Eigen::Index>(fc.target_tokens.size()));
        for (std::size_t i = 0; i < fc.target_tokens.size(); ++i)
            out[static_cast<Eigen::Index>(i)] = fc.final_out.row(fc.target_tokens[i]).dot(head_w.col(0)) + head_b;
        return out;
    }

    // Accumulates d(loss)/d(params) into grad given d(loss)/d(eps_hat).
    void backward(const ForwardCache<S>& fc, const Vector<S>& d_out, int h, Vector<S>& grad) const {
        const auto& cfg = p_.config;
        const auto& L = p_.layout;
        const Eigen::Index C = cfg.cols(), R = cfg.rows();
        const Eigen::Index N = R * C;

        Mat<S> dx = Mat<S>::Zero(N, d_);
        const auto head_w = tensor(L.head_w, d_, 1);
        auto g_head_w = grad_tensor(grad, L.head_w, d_, 1);
        for (std::size_t i = 0; i < fc.target_tokens.size(); ++i) {
            const Eigen::Index n = fc.target_tokens[i];
            const S g = d_out[static_cast<Eigen::Index>(i)];
            dx.row(n) = g * head_w.col(0).transpose();
            g_head_w.col(0) += g * fc.final_out.row(n).transpose();
            grad[L.head_b] += g;
        }
        dx = layer_norm_backward(dx, L.final_g, L.final_b, fc.final_ln, grad);

        const Grouping time_axis{R, C, 1, C};
        const Grouping row_axis{C, R, C, 1};
        for (std::size_t li = L.blocks.size(); li-- > 0;) {
            const BlockSlots& b = L.blocks[li];
            const BlockCache<S>& bc = fc.blocks[li];
            dx += layer_norm_backward(feed_forward_backward(b, bc, dx, grad), b.ln3_g, b.ln3_b, bc.ln3, grad);
            dx += layer_norm_backward(attention_backward(dx, b.row, row_axis, bc.row, grad), b.ln2_g, b.ln2_b,
                                      bc.ln2, grad);
            dx += layer_norm_backward(attention_backward(dx, b.time, time_axis, bc.time, grad), b.ln1_g, b.ln1_b,
                                      bc.ln1, grad);
        }

        // Embedding.
        grad_tensor(grad, L.embed_w, 3, d_) += fc.features.transpose() * dx;
        const RowVector<S> col_sum = dx.colwise().sum();
        grad_tensor(grad, L.embed_b, 1, d_).row(0) += col_sum;
        grad_tensor(grad, L.step_b, 1, d_).row(0) += col_sum;
        grad_tensor(grad, L.step_w, cfg.step_embed_dim, d_).noalias() +=
            sinusoidal_embedding<S>(h, cfg.step_embed_dim).transpose() * col_sum;
        if (cfg.row_encoding) {
            auto g_rows = grad_tensor(grad, L.row_embed, cfg.rows(), d_);
            for (Eigen::Index r = 0; r < R; ++r) g_rows.row(r) += dx.middleRows(r * C, C).colwise().sum();
        }
    }

private:
    Mat<S> layer_norm_forward(const Mat<S>& x, Eigen::Index g_off, Eigen::Index b_off, LnCache<S>& cache) const {
        const auto g = tensor(g_off, 1, d_);
        const auto b = tensor(b_off, 1, d_);
        const Eigen::Index N = x.rows();
        cache.xhat.resize(N, d_);
        cache.inv_std.resize(N);
        Mat<S> y(N, d_);
        for (Eigen::Index n = 0; n < N; ++n) {
            const S mean = x.row(n).mean();
            const S var = (x.row(n).array() - mean).square().mean();
            const S inv = S(1) / std::sqrt(var + static_cast<S>(kLayerNormEps));
            cache.inv_std[n] = inv;
            cache.xhat.row(n) = (x.row(n).array() - mean) * inv;
            y.row(n) = cache.xhat.row(n).cwiseProduct(g.row(0)) + b.row(0);
        }
        return y;
    }

    Mat<S> layer_norm_backward(const Mat<S>& dy, Eigen::Index g_off, Eigen::Index b_off, const LnCache<S>& cache,
                               Vector<S>& grad) const {
        const auto g = tensor(g_off, 1, d_);
        auto dg = grad_tensor(grad, g_off, 1, d_);
        auto db = grad_tensor(grad, b_off, 1, d_);
        const Eigen::Index N = dy.rows();
        Mat<S> dx(N, d_);
        const S inv_d = S(1) / static_cast<S>(d_);
        for (Eigen::Index n = 0; n < N; ++n) {
            dg.row(0) += dy.row(n).cwiseProduct(cache.xhat.row(n));
            db.row(0) += dy.row(n);
            const RowVector<S> dxhat = dy.row(n).cwiseProduct(g.row(0));
            const S m1 = dxhat.sum() * inv_d;
            const S m2 = dxhat.dot(cache.xhat.row(n)) * inv_d;
            dx.row(n) = cache.inv_std[n] * (dxhat.array() - m1 - cache.xhat.row(n).array() * m2);
        }
        return dx;
    }

    Mat<S> project(const Mat<S>& in, Eigen::Index w, Eigen::Index b) const {
        Mat<S> out = in * tensor(w, d_, d_);
        out.rowwise() += tensor(b, 1, d_).row(0);
        return out;
    }

    Mat<S> attention_forward(Mat<S> in, const AttentionSlots& a, const Grouping& gr, AttnCache<S>& cache) const {
        cache.q = project(in, a.wq, a.bq);
        cache.k = project(in, a.wk, a.bk);
        cache.v = project(in, a.wv, a.bv);
        cache.in = std::move(in);
        const Eigen::Index N = cache.q.rows();
        const Eigen::Index dh = d_ / heads_;
        const S scale = S(1) / std::sqrt(static_cast<S>(dh));
        cache.o.resize(N, d_);
        cache.probs.resize(static_cast<std::size_t>(gr.groups * heads_));
        const Eigen::OuterStride<> os(gr.stride * d_);
        for (Eigen::Index g = 0; g < gr.groups; ++g) {
            const Eigen::Index off = g * gr.group_step * d_;
            ConstStridedMap<S> Q(cache.q.data() + off, gr.count, d_, os);
            ConstStridedMap<S> K(cache.k.data() + off, gr.count, d_, os);
            ConstStridedMap<S> V(cache.v.data() + off, gr.count, d_, os);
            StridedMap<S> O(cache.o.data() + off, gr.count, d_, os);
            for (Eigen::Index j = 0; j < heads_; ++j) {
                Mat<S>& P = cache.probs[static_cast<std::size_t>(g * heads_ + j)];
                P.noalias() = Q.middleCols(j * dh, dh) * K.middleCols(j * dh, dh).transpose();
                P *= scale;
                for (Eigen::Index r = 0; r < P.rows(); ++r) {
                    const S mx = P.row(r).maxCoeff();
                    P.row(r) = (P.row(r).array() - mx).exp();
                    P.row(r) /= P.row(r).sum();
                }
                O.middleCols(j * dh, dh).noalias() = P * V.middleCols(j * dh, dh);
            }
        }
        Mat<S> out = cache.o * tensor(a.wo, d_, d_);
        out.rowwise() += tensor(a.bo, 1, d_).row(0);
        return out;
    }

    Mat<S> attention_backward(const Mat<S>& d_out, const AttentionSlots& a, const Grouping& gr,
                              const AttnCache<S>& cache, Vector<S>& grad) const {
        const Eigen::Index N = d_out.rows();
        const Eigen::Index dh = d_ / heads_;
        const S scale = S(1) / std::sqrt(static_cast<S>(dh));

        grad_tensor(grad, a.wo, d_, d_).noalias() += cache.o.transpose() * d_out;
        grad_tensor(grad, a.bo, 1, d_).row(0) += d_out.colwise().sum();
        const Mat<S> d_o = d_out * tensor(a.wo, d_, d_).transpose();

        Mat<S> dq(N, d_), dk(N, d_), dv(N, d_);
        const Eigen::OuterStride<> os(gr.stride * d_);
        for (Eigen::Index g = 0; g < gr.groups; ++g) {
            const Eigen::Index off = g * gr.group_step * d_;
            ConstStridedMap<S> Q(cache.q.data() + off, gr.count, d_, os);
            ConstStridedMap<S> K(cache.k.data() + off, gr.count, d_, os);
            ConstStridedMap<S> V(cache.v.data() + off, gr.count, d_, os);
            ConstStridedMap<S> dO(d_o.data() + off, gr.count, d_, os);
            StridedMap<S> dQ(dq.data() + off, gr.count, d_, os);
            StridedMap<S> dK(dk.data() + off, gr.count, d_, os);
            StridedMap<S> dV(dv.data() + off, gr.count, d_, os);
            for (Eigen::Index j = 0; j < heads_; ++j) {
                const Mat<S>& P = cache.probs[static_cast<std::size_t>(g * heads_ + j)];
                const auto dOh = dO.middleCols(j * dh, dh);
                dV.middleCols(j * dh, dh).noalias() = P.transpose() * dOh;
                Mat<S> dP = dOh * V.middleCols(j * dh, dh).transpose();
                const Vector<S> row_dot = (dP.array() * P.array()).rowwise().sum();
                Mat<S> dS = (P.array() * (dP.array().colwise() - row_dot.array())).matrix();
                dS *= scale;
                dQ.middleCols(j * dh, dh).noalias() = dS * K.middleCols(j * dh, dh);
                dK.middleCols(j * dh, dh).noalias() = dS.transpose() * Q.middleCols(j * dh, dh);
            }
        }
        grad_tensor(grad, a.wq, d_, d_).noalias() += cache.in.transpose() * dq;
        grad_tensor(grad, a.wk, d_, d_).noalias() += cache.in.transpose() * dk;
        grad_tensor(grad, a.wv, d_, d_).noalias() += cache.in.transpose() * dv;
        grad_tensor(grad, a.bq, 1, d_).row(0) += dq.colwise().sum();
        grad_tensor(grad, a.bk, 1, d_).row(0) += dk.colwise().sum();
        grad_tensor(grad, a.bv, 1, d_).row(0) += dv.colwise().sum();
        Mat<S> d_in = dq * tensor(a.wq, d_, d_).transpose();
        d_in.noalias() += dk * tensor(a.wk, d_, d_).transpose();
        d_in.noalias() += dv * tensor(a.wv, d_, d_).transpose();
        return d_in;
    }

    static Mat<S> sigmoid(const Mat<S>& z) { return (S(1) + (-z.array()).exp()).inverse().matrix(); }

    Mat<S> feed_forward(const BlockSlots& b, BlockCache<S>& bc) const {
        const Eigen::Index f = p_.config.ff_dim();
        bc.ff_pre = bc.ff_in * tensor(b.w1, d_, f);
        bc.ff_pre.rowwise() += tensor(b.b1, 1, f).row(0);
        bc.ff_act = bc.ff_pre.array() * sigmoid(bc.ff_pre).array();
        Mat<S> out = bc.ff_act * tensor(b.w2, f, d_);
        out.rowwise() += tensor(b.b2, 1, d_).row(0);
        return out;
    }

    Mat<S> feed_forward_backward(const BlockSlots& b, const BlockCache<S>& bc, const Mat<S>& d_out,
                                 Vector<S>& grad) const {
        const Eigen::Index f = p_.config.ff_dim();
        grad_tensor(grad, b.w2, f, d_).noalias() += bc.ff_act.transpose() * d_out;
        grad_tensor(grad, b.b2, 1, d_).row(0) += d_out.colwise().sum();
        Mat<S> d_pre = d_out * tensor(b.w2, f, d_).transpose();
        const Mat<S> sig = sigmoid(bc.ff_pre);
        d_pre.array() *= sig.array() * (S(1) + bc.ff_pre.array() * (S(1) - sig.array()));
        grad_tensor(grad, b.w1, d_, f).noalias() += bc.ff_in.transpose() * d_pre;
        grad_tensor(grad, b.b1, 1, f).row(0) += d_pre.colwise().sum();
        return d_pre * tensor(b.w1, d_, f).transpose();
    }

    const DenoiserParams<S>& p_;
    Eigen::Index d_;
    Eigen::Index heads_;
};

}  // namespace

template <typename Scalar>
TransformerDenoiser<Scalar>::TransformerDenoiser(DenoiserParams<Scalar> params, unsigned workers)
    : params_(std::move(params)), workers_(workers) {
    require(params_.values.size() == params_.layout.total, ErrorCode::shape_mismatch,
            "parameter vector does not match layout");
}

template <typename Scalar>
VectorXd TransformerDenoiser<Scalar>::predict(const ConditionSet& cond, const Eigen::Ref<const VectorXd>& noisy_target,
                                              int h) const {
    Network<Scalar> net(params_);
    return net.forward(cond, noisy_target, h, nullptr).template cast<double>();
}

template <typename Scalar>
Scalar TransformerDenoiser<Scalar>::loss_and_gradient_native(std::span<const DiffusionSample> batch,
                                                             Vector<Scalar>& grad) const {
    require(!batch.empty(), ErrorCode::precondition, "empty batch");
    const auto n = batch.size();
    std::vector<Vector<Scalar>> grads(n);
    std::vector<Scalar> losses(n);
    parallel_for(
        n,
        [&](std::size_t i) {
            const DiffusionSample& s = batch[i];
            Network<Scalar> net(params_);
            ForwardCache<Scalar> cache;
            const Vector<Scalar> out = net.forward(s.cond, s.xh_target, s.h, &cache);
            const Vector<Scalar> diff = out - s.eps.template cast<Scalar>();
            const auto cells = static_cast<Scalar>(diff.size());
            losses[i] = diff.squaredNorm() / cells;
            const Vector<Scalar> d_out = diff * (Scalar(2) / (cells * static_cast<Scalar>(n)));
            grads[i] = Vector<Scalar>::Zero(params_.parameter_count());
            net.backward(cache, d_out, s.h, grads[i]);
        },
        workers_);
    grad = Vector<Scalar>::Zero(params_.parameter_count());
    Scalar loss = 0;
    for (std::size_t i = 0; i < n; ++i) {
        grad += grads[i];
        loss += losses[i];
    }
    loss /= static_cast<Scalar>(n);
    require(std::isfinite(static_cast<double>(loss)), ErrorCode::non_finite, "non-finite denoiser loss");
    return loss;
}

template <typename Scalar>
double TransformerDenoiser<Scalar>::loss_and_gradient(std::span<const DiffusionSample> batch, VectorXd& grad) const {
    Vector<Scalar> g;
    const Scalar loss = loss_and_gradient_native(batch, g);
    grad = g.template cast<double>();
    return static_cast<double>(loss);
}

template DenoiserParams<float> init_params<float>(const ModelConfig&);
template DenoiserParams<double> init_params<double>(const ModelConfig&);
template RowVector<float> sinusoidal_embedding<float>(double, int);
template RowVector<double> sinusoidal_embedding<double>(double, int);
template class TransformerDenoiser<float>;
template class TransformerDenoiser<double>;

}  // namespace fwt
