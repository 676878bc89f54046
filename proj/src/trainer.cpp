#include "fwt/trainer.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

namespace fwt {

template <typename Scalar>
TrainerState<Scalar> TrainerState<Scalar>::fresh(Eigen::Index n_params, const TrainConfig& config) {
    TrainerState s;
    s.m = Vector<Scalar>::Zero(n_params);
    s.v = Vector<Scalar>::Zero(n_params);
    s.step = 0;
    s.config = config;
    s.rng = Rng(derive_seed(config.seed, "train/data"));
    return s;
}

template <typename Scalar>
void adam_update(Vector<Scalar>& params, const Vector<Scalar>& grad, TrainerState<Scalar>& state) {
    require(grad.size() == params.size() && state.m.size() == params.size(), ErrorCode::shape_mismatch,
            "adam: gradient/state shape mismatch");
    const auto& c = state.config;
    ++state.step;
    const auto b1 = static_cast<Scalar>(c.beta1);
    const auto b2 = static_cast<Scalar>(c.beta2);
    state.m = b1 * state.m + (Scalar(1) - b1) * grad;
    state.v = b2 * state.v + (Scalar(1) - b2) * grad.cwiseAbs2();
    const double t = static_cast<double>(state.step);
    const auto c1 = static_cast<Scalar>(1.0 / (1.0 - std::pow(c.beta1, t)));
    const auto c2 = static_cast<Scalar>(1.0 / (1.0 - std::pow(c.beta2, t)));
    const auto lr = static_cast<Scalar>(c.learning_rate);
    const auto eps = static_cast<Scalar>(c.adam_eps);
    params.array() -= lr * (state.m.array() * c1) / ((state.v.array() * c2).sqrt() + eps);
}

template <typename Scalar>
void run_training(TrainingSession<Scalar>& session, SampleSource& source, const NoiseSchedule& sched, int n_batches) {
    require(n_batches >= 0, ErrorCode::invalid_argument, "batch count must be >= 0");
    if (n_batches == 0) return;
    require(!source.empty(), ErrorCode::precondition, "training data source is empty");
    TransformerDenoiser<Scalar> model(std::move(session.params), session.state.config.workers);
    Vector<Scalar> grad;
    try {
        for (int b = 0; b < n_batches; ++b) {
            auto batch = draw_batch(source, sched, session.state.rng, session.state.config.batch_size);
            if (session.state.config.objective == Objective::direct)
                for (auto& s : batch) {
                    s.h = 1;
                    s.eps = s.cond.target_values();
                    s.xh_target.setZero();
                }
            const Scalar loss = model.loss_and_gradient_native(batch, grad);
            require(grad.allFinite(), ErrorCode::non_finite,
                    "non-finite gradient at step " + std::to_string(session.state.step + 1));
            session.losses.push_back(static_cast<double>(loss));
            adam_update(model.params().values, grad, session.state);
        }
    } catch (const Error& e) {
        session.params = std::move(model.params());
        if (e.code() == ErrorCode::non_finite)
            fail(ErrorCode::non_finite, std::string(e.what()) + " (after " + std::to_string(session.state.step) +
                                            " updates; last loss " +
                                            (session.losses.empty() ? "n/a" : std::to_string(session.losses.back())) +
                                            ")");
        throw;
    }
    session.params = std::move(model.params());
}

template <typename Scalar>
TrainingSession<Scalar> train(SampleSource& source, const ModelConfig& model, const TrainConfig& train,
                              const NoiseSchedule& sched, const DenoiserParams<Scalar>* init_from) {
    TrainingSession<Scalar> s;
    if (init_from) {
        require(init_from->config.fingerprint() == model.fingerprint(), ErrorCode::fingerprint_mismatch,
                "checkpoint fingerprint does not match the model configuration");
        s.params = *init_from;
        s.params.config.seed = model.seed;
    } else {
        s.params = init_params<Scalar>(model);
    }
    s.state = TrainerState<Scalar>::fresh(s.params.parameter_count(), train);
    run_training(s, source, sched, train.batches);
    return s;
}

namespace {

constexpr char kMagic[8] = {'F', 'W', 'T', 'C', 'K', 'P', 'T', '1'};
constexpr std::uint8_t kVersion = 1;

class Writer {
public:
    explicit Writer(std::ostream& out) : out_(out) {}
    template <typename T>
    void le(T v) {
        static_assert(std::is_integral_v<T>);
        for (std::size_t i = 0; i < sizeof(T); ++i)
            out_.put(static_cast<char>((static_cast<std::make_unsigned_t<T>>(v) >> (8 * i)) & 0xFF));
    }
    void f32(float v) { le(std::bit_cast<std::uint32_t>(v)); }
    void f64(double v) { le(std::bit_cast<std::uint64_t>(v)); }
    void bytes(const std::string& s) {
        le(static_cast<std::uint32_t>(s.size()));
        out_.write(s.data(), static_cast<std::streamsize>(s.size()));
    }

private:
    std::ostream& out_;
};

class Reader {
public:
    Reader(std::istream& in, std::string path) : in_(in), path_(std::move(path)) {}
    template <typename T>
    T le() {
        std::make_unsigned_t<T> v = 0;
        for (std::size_t i = 0; i < sizeof(T); ++i) {
            const int c = in_.get();
            require(c != std::char_traits<char>::eof(), ErrorCode::corrupt_file, path_ + ": truncated checkpoint");
            v |= static_cast<std::make_unsigned_t<T>>(static_cast<unsigned char>(c)) << (8 * i);
        }
        return static_cast<T>(v);
    }
    float f32() { return std::bit_cast<float>(le<std::uint32_t>()); }
    double f64() { return std::bit_cast<double>(le<std::uint64_t>()); }
    std::string bytes(std::size_t limit = 1u << 20) {
        const auto n = le<std::uint32_t>();
        require(n <= limit, ErrorCode::corrupt_file, path_ + ": implausible field length");
        std::string s(n, '\0');
        in_.read(s.data(), n);
        require(static_cast<std::uint32_t>(in_.gcount()) == n, ErrorCode::corrupt_file, path_ + ": truncated checkpoint");
        return s;
    }

private:
    std::istream& in_;
    std::string path_;
};

}  // namespace

template <typename Scalar>
void save_checkpoint(const TrainingSession<Scalar>& session, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    require(out.good(), ErrorCode::io, "cannot write " + path.string());
    Writer w(out);
    const auto& cfg = session.params.config;
    out.write(kMagic, sizeof kMagic);
    w.le(kVersion);
    w.le(cfg.fingerprint());
    for (int v : {cfg.layers, cfg.heads, cfg.d_model, cfg.step_embed_dim, cfg.ff_mult, cfg.k, cfg.history_len,
                  cfg.horizon})
        w.le(static_cast<std::int32_t>(v));
    w.le(cfg.seed);
    w.le(static_cast<std::uint8_t>(cfg.row_encoding));

    const auto& layout = session.params.layout;
    w.le(static_cast<std::uint32_t>(layout.directory.size()));
    for (const auto& t : layout.directory) {
        w.bytes(t.name);
        w.le(static_cast<std::uint32_t>(t.rows));
        w.le(static_cast<std::uint32_t>(t.cols));
    }
    auto tensor = [&](const Vector<Scalar>& v) {
        for (Eigen::Index i = 0; i < v.size(); ++i) w.f32(static_cast<float>(v[i]));
    };
    tensor(session.params.values);

    const auto& st = session.state;
    const auto& tc = st.config;
    w.le(st.step);
    w.f64(tc.learning_rate);
    w.f64(tc.beta1);
    w.f64(tc.beta2);
    w.f64(tc.adam_eps);
    w.le(static_cast<std::int32_t>(tc.batch_size));
    w.le(static_cast<std::int32_t>(tc.batches));
    w.le(tc.seed);
    w.le(static_cast<std::uint32_t>(tc.workers));
    w.le(static_cast<std::uint8_t>(tc.objective));
    tensor(st.m);
    tensor(st.v);
    std::ostringstream rng_text;
    rng_text << st.rng;
    w.bytes(rng_text.str());
    w.le(static_cast<std::uint64_t>(session.losses.size()));
    for (double l : session.losses) w.f64(l);
    out.write("END1", 4);
    require(out.good(), ErrorCode::io, "write failed for " + path.string());
}

TrainingSession<float> load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    require(in.good(), ErrorCode::io, "cannot read " + path.string());
    const std::string p = path.string();
    Reader r(in, p);

    char magic[8] = {};
    in.read(magic, sizeof magic);
    require(in.gcount() == 8 && std::memcmp(magic, kMagic, 8) == 0, ErrorCode::corrupt_file,
            p + ": not a FWTCKPT1 checkpoint");
    require(r.le<std::uint8_t>() == kVersion, ErrorCode::corrupt_file, p + ": unsupported checkpoint version");
    const auto fingerprint = r.le<std::uint64_t>();

    ModelConfig cfg;
    for (int* f : {&cfg.layers, &cfg.heads, &cfg.d_model, &cfg.step_embed_dim, &cfg.ff_mult, &cfg.k,
                   &cfg.history_len, &cfg.horizon})
        *f = r.le<std::int32_t>();
    cfg.seed = r.le<std::uint64_t>();
    cfg.row_encoding = r.le<std::uint8_t>() != 0;
    try {
        cfg.validate();
    } catch (const Error& e) {
        fail(ErrorCode::corrupt_file, p + ": invalid model config (" + e.what() + ")");
    }
    require(cfg.fingerprint() == fingerprint, ErrorCode::corrupt_file, p + ": fingerprint does not match config");

    TrainingSession<float> s;
    s.params.config = cfg;
    s.params.layout = ParamLayout::build(cfg);
    const auto n_tensors = r.le<std::uint32_t>();
    require(n_tensors == s.params.layout.directory.size(), ErrorCode::corrupt_file, p + ": tensor directory mismatch");
    for (const auto& t : s.params.layout.directory) {
        const std::string name = r.bytes(4096);
        const auto rows = r.le<std::uint32_t>();
        const auto cols = r.le<std::uint32_t>();
        require(name == t.name && rows == t.rows && cols == t.cols, ErrorCode::corrupt_file,
                p + ": unexpected tensor '" + name + "'");
    }
    auto tensor = [&](Vector<float>& v) {
        v.resize(s.params.layout.total);
        for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = r.f32();
    };
    tensor(s.params.values);
    require(s.params.values.allFinite(), ErrorCode::corrupt_file, p + ": non-finite weights");

    auto& st = s.state;
    st.step = r.le<std::uint64_t>();
    st.config.learning_rate = r.f64();
    st.config.beta1 = r.f64();
    st.config.beta2 = r.f64();
    st.config.adam_eps = r.f64();
    st.config.batch_size = r.le<std::int32_t>();
    st.config.batches = r.le<std::int32_t>();
    st.config.seed = r.le<std::uint64_t>();
    st.config.workers = r.le<std::uint32_t>();
    const auto objective = r.le<std::uint8_t>();
    require(objective <= 1, ErrorCode::corrupt_file, p + ": unknown training objective");
    st.config.objective = static_cast<Objective>(objective);
    tensor(st.m);
    tensor(st.v);
    std::istringstream rng_text(r.bytes());
    rng_text >> st.rng;
    require(!rng_text.fail(), ErrorCode::corrupt_file, p + ": bad rng state");
    const auto n_losses = r.le<std::uint64_t>();
    require(n_losses <= (1ULL << 32), ErrorCode::corrupt_file, p + ": implausible loss count");
    s.losses.resize(n_losses);
    for (auto& l : s.losses) l = r.f64();
    char end[4] = {};
    in.read(end, 4);
    require(in.gcount() == 4 && std::memcmp(end, "END1", 4) == 0, ErrorCode::corrupt_file,
            p + ": missing end marker");
    return s;
}

template struct TrainerState<float>;
template struct TrainerState<double>;
template void adam_update<float>(Vector<float>&, const Vector<float>&, TrainerState<float>&);
template void adam_update<double>(Vector<double>&, const Vector<double>&, TrainerState<double>&);
template void run_training<float>(TrainingSession<float>&, SampleSource&, const NoiseSchedule&, int);
template void run_training<double>(TrainingSession<double>&, SampleSource&, const NoiseSchedule&, int);
template TrainingSession<float> train<float>(SampleSource&, const ModelConfig&, const TrainConfig&,
                                             const NoiseSchedule&, const DenoiserParams<float>*);
template TrainingSession<double> train<double>(SampleSource&, const ModelConfig&, const TrainConfig&,
                                               const NoiseSchedule&, const DenoiserParams<double>*);
template void save_checkpoint<float>(const TrainingSession<float>&, const std::filesystem::path&);
template void save_checkpoint<double>(const TrainingSession<double>&, const std::filesystem::path&);

}  // namespace fwt
