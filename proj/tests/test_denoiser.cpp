#include "helpers.hpp"

#include "fwt/pipeline.hpp"
#include "fwt/trainer.hpp"

#include <cmath>
#include <limits>
#include <vector>

using namespace fwt;
using fwt::test::check_error;

namespace {

ModelConfig toy_config() {
    ModelConfig m;
    m.layers = 2;
    m.heads = 2;
    m.d_model = 8;
    m.step_embed_dim = 8;
    m.ff_mult = 2;
    m.k = 2;
    m.history_len = 16;
    m.horizon = 4;
    m.seed = 3;
    return m;
}

RetrievalSetup setup_for(const ModelConfig& m) {
    RetrievalSetup s;
    s.history_len = m.history_len;
    s.horizon = m.horizon;
    s.k = m.k;
    return s;
}

PanelSampleSource toy_source(const ModelConfig& m, std::uint64_t seed = 1) {
    const PreparedPanel panel = PreparedPanel::from(to_returns(synth_factor_panel(9, 120, 3, seed, 0.003, 0.01)));
    const RetrievalSetup s = setup_for(m);
    return PanelSampleSource(panel, s, AnchorRange::of(0, 120, s));
}

/// Parameter count from the architecture description alone.
Eigen::Index expected_parameters(const ModelConfig& c) {
    const Eigen::Index d = c.d_model, f = c.ff_mult * c.d_model;
    const Eigen::Index embed = 3 * d + d;                 // (value, noisy target, flag) -> d, plus bias
    const Eigen::Index rows = (c.k + 1) * d;             // learned row table
    const Eigen::Index step = c.step_embed_dim * d + d;  // sinusoid projection
    const Eigen::Index attn = 4 * (d * d + d);           // q, k, v, o with biases
    const Eigen::Index block = 3 * 2 * d + 2 * attn + (d * f + f) + (f * d + d);
    const Eigen::Index head = 2 * d + d + 1;             // final norm and linear head
    return embed + rows + step + c.layers * block + head;
}

}  // namespace

TEST_SUITE("denoiser") {

TEST_CASE("parameter count matches the shape formula") {
    ModelConfig defaults;
    CHECK(init_params<float>(defaults).parameter_count() == expected_parameters(defaults));
    CHECK(init_params<double>(toy_config()).parameter_count() == expected_parameters(toy_config()));
    ModelConfig odd = toy_config();
    odd.layers = 3;
    odd.k = 0;
    odd.ff_mult = 3;
    CHECK(init_params<float>(odd).parameter_count() == expected_parameters(odd));
}

TEST_CASE("initialization is deterministic with zero biases") {
    const auto a = init_params<float>(toy_config());
    const auto b = init_params<float>(toy_config());
    CHECK(a.values == b.values);
    ModelConfig other = toy_config();
    other.seed = 4;
    CHECK(init_params<float>(other).values != a.values);

    const auto& hb = a.layout.find("head.b");
    CHECK(a.values.segment(hb.offset, hb.rows * hb.cols).isZero(0.0f));
    const auto& g = a.layout.find("block0.ln1.g");
    CHECK((a.values.segment(g.offset, g.cols).array() == 1.0f).all());
    const auto& w = a.layout.find("block1.time.wq");
    const float bound = 1.0f / std::sqrt(8.0f);
    CHECK(a.values.segment(w.offset, w.rows * w.cols).cwiseAbs().maxCoeff() <= bound);
}

TEST_CASE("config validation and fingerprint") {
    ModelConfig bad = toy_config();
    bad.heads = 3;
    check_error([&] { bad.validate(); }, ErrorCode::invalid_argument);
    ModelConfig a = toy_config(), b = toy_config();
    b.seed = 99;
    CHECK(a.fingerprint() == b.fingerprint());
    b.horizon = 5;
    CHECK(a.fingerprint() != b.fingerprint());
}

TEST_CASE("forward output covers the target block only") {
    const ModelConfig m = toy_config();
    auto src = toy_source(m);
    Rng rng(1);
    const ConditionSet c = src.draw(rng);
    const TransformerDenoiser<double> net(init_params<double>(m));
    const VectorXd noisy = VectorXd::Random(m.horizon);
    const VectorXd out = net.predict(c, noisy, 5);
    CHECK(out.size() == m.horizon);
    CHECK(out.allFinite());
    CHECK(net.predict(c, noisy, 5) == out);
    check_error([&] { net.predict(c, VectorXd::Zero(3), 5); }, ErrorCode::shape_mismatch);
    check_error([&] { net.predict(c, noisy, 0); }, ErrorCode::precondition);
}

TEST_CASE("forward never reads the target cells of X") {
    const ModelConfig m = toy_config();
    auto src = toy_source(m);
    Rng rng(2);
    const ConditionSet filled = src.draw(rng);
    ConditionSet sentinel = filled;
    sentinel.values.row(0).tail(m.horizon).setConstant(std::numeric_limits<double>::quiet_NaN());
    ConditionSet other = filled;
    other.values.row(0).tail(m.horizon).setConstant(1e6);

    const TransformerDenoiser<double> net(init_params<double>(m));
    const VectorXd noisy = VectorXd::Random(m.horizon);
    const VectorXd ref = net.predict(filled, noisy, 7);
    CHECK(net.predict(sentinel, noisy, 7) == ref);
    CHECK(net.predict(other, noisy, 7) == ref);

    // The same holds for the training loss.
    const NoiseSchedule s = make_schedule(10);
    auto batch = draw_batch(src, s, rng, 3);
    VectorXd g1, g2;
    const double l1 = net.loss_and_gradient(batch, g1);
    for (auto& b : batch) b.cond.values.row(0).tail(m.horizon).setConstant(-42.0);
    const double l2 = net.loss_and_gradient(batch, g2);
    CHECK(l1 == l2);
    CHECK(g1 == g2);
}

TEST_CASE("without row encodings the output ignores neighbour order") {
    ModelConfig m = toy_config();
    m.k = 4;
    m.row_encoding = false;
    const PreparedPanel panel = PreparedPanel::from(to_returns(synth_factor_panel(10, 80, 2, 2, 0.003, 0.01)));
    const RetrievalSetup s = setup_for(m);
    PanelSampleSource src(panel, s, AnchorRange::of(0, 80, s));
    Rng rng(3);
    const ConditionSet c = src.draw(rng);
    ConditionSet p = c;
    const std::vector<Eigen::Index> perm = {0, 3, 1, 4, 2};
    for (Eigen::Index r = 0; r < c.rows(); ++r) {
        p.values.row(r) = c.values.row(perm[static_cast<std::size_t>(r)]);
        p.mask.row(r) = c.mask.row(perm[static_cast<std::size_t>(r)]);
    }
    const TransformerDenoiser<double> net(init_params<double>(m));
    const VectorXd noisy = VectorXd::Random(m.horizon);
    CHECK((net.predict(c, noisy, 4) - net.predict(p, noisy, 4)).cwiseAbs().maxCoeff() < 1e-12);

    m.row_encoding = true;
    const TransformerDenoiser<double> encoded(init_params<double>(m));
    CHECK((encoded.predict(c, noisy, 4) - encoded.predict(p, noisy, 4)).cwiseAbs().maxCoeff() > 1e-9);
}

TEST_CASE("gradients match central differences") {
    const ModelConfig m = toy_config();
    auto src = toy_source(m);
    const NoiseSchedule s = make_schedule(20);
    Rng rng(4);
    const auto batch = draw_batch(src, s, rng, 2);
    auto params = init_params<double>(m);
    // Move off the zero-bias init so every tensor carries signal.
    Rng jitter(5);
    for (Eigen::Index i = 0; i < params.values.size(); ++i) params.values[i] += 0.05 * standard_normal(jitter);
    TransformerDenoiser<double> net(params);

    VectorXd grad;
    net.loss_and_gradient(batch, grad);
    REQUIRE(grad.size() == net.parameter_count());

    Rng pick(6);
    int good = 0;
    const int probes = 100;
    for (int i = 0; i < probes; ++i) {
        const auto j = static_cast<Eigen::Index>(uniform_index(pick, static_cast<std::uint64_t>(grad.size())));
        const double step = 1e-4, base = net.params().values[j];
        VectorXd unused;
        net.params().values[j] = base + step;
        const double up = net.loss_and_gradient(batch, unused);
        net.params().values[j] = base - step;
        const double down = net.loss_and_gradient(batch, unused);
        net.params().values[j] = base;
        const double fd = (up - down) / (2 * step);
        const double rel = std::abs(fd - grad[j]) / std::max({std::abs(fd), std::abs(grad[j]), 1e-8});
        if (rel < 1e-4) ++good;
    }
    CHECK(good >= 99);
}

TEST_CASE("head-bias gradient of a silent head is -2 mean(eps)") {
    const ModelConfig m = toy_config();
    auto src = toy_source(m);
    const NoiseSchedule s = make_schedule(20);
    Rng rng(7);
    const auto batch = draw_batch(src, s, rng, 5);
    auto params = init_params<double>(m);
    const auto& hw = params.layout.find("head.w");
    params.values.segment(hw.offset, hw.rows * hw.cols).setZero();
    const TransformerDenoiser<double> net(params);
    VectorXd grad;
    const double loss = net.loss_and_gradient(batch, grad);

    double mean_eps = 0.0, mean_sq = 0.0;
    for (const auto& b : batch) {
        mean_eps += b.eps.mean();
        mean_sq += b.eps.squaredNorm() / static_cast<double>(b.eps.size());
    }
    mean_eps /= 5.0;
    mean_sq /= 5.0;
    CHECK(loss == doctest::Approx(mean_sq).epsilon(1e-12));
    CHECK(grad[params.layout.find("head.b").offset] == doctest::Approx(-2.0 * mean_eps).epsilon(1e-12));
}

TEST_CASE("duplicating a batch leaves the mean gradient unchanged") {
    const ModelConfig m = toy_config();
    auto src = toy_source(m);
    const NoiseSchedule s = make_schedule(20);
    Rng rng(8);
    const auto batch = draw_batch(src, s, rng, 3);
    std::vector<DiffusionSample> twice = batch;
    twice.insert(twice.end(), batch.begin(), batch.end());
    const TransformerDenoiser<double> net(init_params<double>(m));
    VectorXd g1, g2;
    const double l1 = net.loss_and_gradient(batch, g1);
    const double l2 = net.loss_and_gradient(twice, g2);
    CHECK(l1 == doctest::Approx(l2).epsilon(1e-13));
    CHECK((g1 - g2).cwiseAbs().maxCoeff() < 1e-13);
}

TEST_CASE("parallel and float evaluation agree with the serial double pass") {
    const ModelConfig m = toy_config();
    auto src = toy_source(m);
    const NoiseSchedule s = make_schedule(20);
    Rng rng(9);
    const auto batch = draw_batch(src, s, rng, 6);
    const auto params = init_params<double>(m);
    const TransformerDenoiser<double> serial(params, 1), threaded(params, 3);
    VectorXd g1, g3;
    CHECK(serial.loss_and_gradient(batch, g1) == threaded.loss_and_gradient(batch, g3));
    CHECK(g1 == g3);

    const TransformerDenoiser<float> single(params.cast<float>());
    VectorXd gf;
    CHECK(single.loss_and_gradient(batch, gf) == doctest::Approx(serial.loss_and_gradient(batch, g1)).epsilon(1e-4));
}

}  // TEST_SUITE
