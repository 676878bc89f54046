#include "helpers.hpp"

#include "fwt/pipeline.hpp"
#include "fwt/trainer.hpp"

#include <filesystem>
#include <fstream>
#include <numeric>

using namespace fwt;
using fwt::test::check_error;

namespace {

struct Toy {
    ModelConfig model;
    RetrievalSetup setup;
    NoiseSchedule sched = make_schedule(20, 1e-4, 0.2);
    TrainConfig train;

    Toy() {
        model.layers = 1;
        model.heads = 2;
        model.d_model = 8;
        model.step_embed_dim = 8;
        model.ff_mult = 2;
        model.k = 2;
        model.history_len = 12;
        model.horizon = 4;
        model.seed = 1;
        setup.history_len = 12;
        setup.horizon = 4;
        setup.k = 2;
        train.learning_rate = 3e-3;
        train.batch_size = 8;
        train.batches = 10;
        train.seed = 2;
    }

    PanelSampleSource source(std::uint64_t seed = 3) const {
        const PreparedPanel p = PreparedPanel::from(to_returns(synth_factor_panel(9, 150, 3, seed, 0.001, 0.01)));
        return PanelSampleSource(p, setup, AnchorRange::of(0, 150, setup));
    }
};

double mean_of(const std::vector<double>& v, std::size_t from, std::size_t to) {
    return std::accumulate(v.begin() + static_cast<std::ptrdiff_t>(from), v.begin() + static_cast<std::ptrdiff_t>(to),
                           0.0) /
           static_cast<double>(to - from);
}

}  // namespace

TEST_SUITE("trainer") {

TEST_CASE("adam update matches the textbook rule") {
    Vector<double> p(2), g(2);
    p << 1.0, -1.0;
    g << 0.5, -2.0;
    TrainConfig c;
    c.learning_rate = 0.1;
    auto st = TrainerState<double>::fresh(2, c);
    adam_update(p, g, st);
    // First step: m_hat = g, v_hat = g^2, so the move is lr * g / (|g| + eps).
    CHECK(p[0] == doctest::Approx(1.0 - 0.1 * 0.5 / (0.5 + 1e-8)).epsilon(1e-14));
    CHECK(p[1] == doctest::Approx(-1.0 + 0.1 * 2.0 / (2.0 + 1e-8)).epsilon(1e-14));
    CHECK(st.step == 1);
}

TEST_CASE("training lowers the loss") {
    Toy t;
    t.train.batches = 300;
    auto src = t.source();
    const auto s = train<float>(src, t.model, t.train, t.sched);
    REQUIRE(s.losses.size() == 300);
    CHECK(mean_of(s.losses, 250, 300) < mean_of(s.losses, 0, 50));
}

TEST_CASE("training is reproducible and zero batches is a no-op") {
    Toy t;
    auto src = t.source();
    const auto a = train<float>(src, t.model, t.train, t.sched);
    auto src2 = t.source();
    const auto b = train<float>(src2, t.model, t.train, t.sched);
    CHECK(a.losses == b.losses);
    CHECK(a.params.values == b.params.values);

    t.train.batches = 0;
    const auto z = train<float>(src, t.model, t.train, t.sched);
    CHECK(z.params.values == init_params<float>(t.model).values);
    const auto z2 = train<float>(src, t.model, t.train, t.sched, &a.params);
    CHECK(z2.params.values == a.params.values);
}

TEST_CASE("fine-tuning copies weights and checks the fingerprint") {
    Toy t;
    auto src = t.source();
    const auto base = train<float>(src, t.model, t.train, t.sched);
    const auto tuned = train<float>(src, t.model, t.train, t.sched, &base.params);
    CHECK(tuned.state.step == static_cast<std::uint64_t>(t.train.batches));
    CHECK(tuned.params.values != base.params.values);

    ModelConfig other = t.model;
    other.horizon = 5;
    check_error([&] { train<float>(src, other, t.train, t.sched, &base.params); }, ErrorCode::fingerprint_mismatch);
}

TEST_CASE("checkpoint round trip is byte exact") {
    fwt::test::TempDir dir("ckpt");
    Toy t;
    auto src = t.source();
    const auto s = train<float>(src, t.model, t.train, t.sched);
    save_checkpoint(s, dir / "a.ckpt");
    const auto loaded = load_checkpoint(dir / "a.ckpt");
    CHECK(loaded.params.values == s.params.values);
    CHECK(loaded.state.m == s.state.m);
    CHECK(loaded.state.v == s.state.v);
    CHECK(loaded.state.step == s.state.step);
    CHECK(loaded.state.rng == s.state.rng);
    CHECK(loaded.losses == s.losses);
    CHECK(loaded.params.config.fingerprint() == t.model.fingerprint());
    save_checkpoint(loaded, dir / "b.ckpt");
    CHECK(fwt::test::read_bytes(dir / "a.ckpt") == fwt::test::read_bytes(dir / "b.ckpt"));
}

TEST_CASE("damaged checkpoints are rejected") {
    fwt::test::TempDir dir("ckpt_bad");
    Toy t;
    auto src = t.source();
    save_checkpoint(train<float>(src, t.model, t.train, t.sched), dir / "a.ckpt");
    const std::string bytes = fwt::test::read_bytes(dir / "a.ckpt");
    for (std::size_t keep : {std::size_t{0}, std::size_t{5}, std::size_t{40}, bytes.size() / 2, bytes.size() - 1}) {
        fwt::test::write_text(dir / "t.ckpt", bytes.substr(0, keep));
        check_error([&] { load_checkpoint(dir / "t.ckpt"); }, ErrorCode::corrupt_file);
    }
    std::string flipped = bytes;
    flipped[0] = 'X';
    fwt::test::write_text(dir / "m.ckpt", flipped);
    check_error([&] { load_checkpoint(dir / "m.ckpt"); }, ErrorCode::corrupt_file);
    check_error([&] { load_checkpoint(dir / "absent.ckpt"); }, ErrorCode::io);
}

TEST_CASE("resuming from a checkpoint equals uninterrupted training") {
    fwt::test::TempDir dir("resume");
    Toy t;
    t.train.batches = 20;
    auto src = t.source();
    const auto full = train<float>(src, t.model, t.train, t.sched);

    t.train.batches = 8;
    auto src2 = t.source();
    const auto first = train<float>(src2, t.model, t.train, t.sched);
    save_checkpoint(first, dir / "half.ckpt");
    auto resumed = load_checkpoint(dir / "half.ckpt");
    run_training(resumed, src2, t.sched, 12);

    REQUIRE(resumed.losses.size() == full.losses.size());
    CHECK(std::abs(resumed.losses.back() - full.losses.back()) < 1e-10);
    CHECK(resumed.losses == full.losses);
    CHECK(resumed.params.values == full.params.values);
}

TEST_CASE("direct objective is persisted") {
    fwt::test::TempDir dir("direct");
    Toy t;
    t.train.objective = Objective::direct;
    auto src = t.source();
    const auto s = train<float>(src, t.model, t.train, t.sched);
    save_checkpoint(s, dir / "d.ckpt");
    CHECK(load_checkpoint(dir / "d.ckpt").state.config.objective == Objective::direct);
}

}  // TEST_SUITE
