#include "lightcone/pvae.hpp"

#include "lightcone/error.hpp"
#include "lightcone/hyperbolic_nodes.hpp"
#include "lightcone/synth_data.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>

namespace lightcone::model {

namespace {

constexpr std::uint64_t kInitStream = 0x696e6974;
constexpr std::uint64_t kShuffleStream = 0x73687566;
constexpr std::uint64_t kNoiseStream = 0x6e6f6973;

enum Param : std::size_t { EncW1, EncB1, EncHead, EncHeadB, DecPRaw, DecA, DecW2, DecB2 };

ad::Tensor normal_tensor(std::size_t rows, std::size_t cols, double std, RandomState& rng) {
    ad::Tensor t(rows, cols);
    for (double& v : t.data()) v = std * rng.normal();
    return t;
}

double xavier(std::size_t fan_in, std::size_t fan_out) {
    return std::sqrt(2.0 / static_cast<double>(fan_in + fan_out));
}

geom::PoincarePoint row_point(const ad::Tensor& t, std::size_t r, double c) {
    geom::Vector v(static_cast<Eigen::Index>(t.cols()));
    for (std::size_t j = 0; j < t.cols(); ++j) v[static_cast<Eigen::Index>(j)] = t(r, j);
    return geom::PoincarePoint(std::move(v), c);
}

ad::Tensor points_tensor(std::span<const geom::PoincarePoint> zs, std::size_t n) {
    ad::Tensor t(zs.size(), n);
    for (std::size_t r = 0; r < zs.size(); ++r) {
        if (zs[r].dim() != n) throw DimensionMismatch("latent dimension mismatch");
        for (std::size_t j = 0; j < n; ++j) t(r, j) = zs[r].coords()[static_cast<Eigen::Index>(j)];
    }
    return t;
}

ad::Tensor frames_tensor(std::span<const Frame> images, std::size_t side) {
    ad::Tensor t(images.size(), side * side);
    for (std::size_t r = 0; r < images.size(); ++r) {
        if (images[r].side != side) throw DimensionMismatch("frame side does not match the model");
        std::copy(images[r].pixels.begin(), images[r].pixels.end(), t.data().begin() + r * side * side);
    }
    return t;
}

std::vector<ad::Var> constants(ad::Tape& tape, const std::vector<ad::NamedTensor>& params) {
    std::vector<ad::Var> vars;
    vars.reserve(params.size());
    for (const auto& p : params) vars.push_back(tape.constant(p.value));
    return vars;
}

struct EncoderOut {
    ad::Var mean;
    ad::Var scale;
};

EncoderOut encoder(const ad::Var& x, std::span<const ad::Var> p, const PVaeConfig& cfg) {
    const std::size_t n = cfg.latent_n;
    const ad::Var h = ad::tanh(ad::matmul(x, p[EncW1]) + p[EncB1]);
    const ad::Var o = ad::matmul(h, p[EncHead]) + p[EncHeadB];
    const ad::Var mean = ad::expmap0(ad::slice_cols(o, 0, n), cfg.c);
    const ad::Var scale = ad::softplus(ad::slice_cols(o, n, 2 * n)) + kScaleFloor;
    return {mean, scale};
}

ad::Var gyro(const ad::Var& z, std::span<const ad::Var> p, const PVaeConfig& cfg) {
    return ad::gyroplane(z, ad::expmap0(p[DecPRaw], cfg.c), p[DecA], cfg.c);
}

ad::Var decoder(const ad::Var& z, std::span<const ad::Var> p, const PVaeConfig& cfg) {
    return ad::matmul(ad::tanh(gyro(z, p, cfg)), p[DecW2]) + p[DecB2];
}

std::string csv_row(const TrainLogRow& r) {
    return std::to_string(r.step) + "," + format_double(r.elbo) + "," + format_double(r.recon) + "," +
           format_double(r.kl) + "," + std::to_string(static_cast<std::int64_t>(r.wall_ms)) + "\n";
}

std::vector<std::size_t> epoch_order(std::size_t count, std::uint64_t seed, std::uint64_t epoch, bool shuffle) {
    std::vector<std::size_t> order(count);
    std::iota(order.begin(), order.end(), std::size_t{0});
    if (!shuffle) return order;
    RandomState rng = RandomState(seed).split(kShuffleStream).split(epoch);
    for (std::size_t i = count; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
    return order;
}

io::Checkpoint make_checkpoint(const PVae& model, const ad::AdamState* adam, std::uint64_t step) {
    io::Checkpoint ck;
    ck.seed = model.config().seed;
    ck.step = step;
    KeyValues meta = model.config().to_key_values();
    meta.set("adam_step", std::to_string(adam ? adam->step : 0));
    ck.metadata = meta.to_string();
    ck.tensors = model.params();
    if (adam && !adam->m.empty()) {
        for (std::size_t i = 0; i < adam->m.size(); ++i) {
            ck.tensors.push_back({std::string("adam_m/") + kParamNames[i], adam->m[i]});
            ck.tensors.push_back({std::string("adam_v/") + kParamNames[i], adam->v[i]});
        }
    }
    return ck;
}

TrainResult run(PVae& model, ad::AdamState& adam, std::uint64_t start, const FrameMatrix& frames,
                const TrainOptions& options) {
    const PVaeConfig& cfg = model.config();
    if (frames.count == 0) throw ConfigError("train: no frames");
    if (frames.side != cfg.image_side) throw DimensionMismatch("train: frame side does not match the model");
    const std::size_t batch = std::min(cfg.batch_size, frames.count);
    const std::uint64_t per_epoch = frames.count / batch;
    const std::uint64_t total = options.max_steps ? *options.max_steps : cfg.epochs * per_epoch;

    std::ofstream log;
    if (!options.log_path.empty()) {
        const bool append = start > 0 && std::filesystem::exists(options.log_path);
        log.open(options.log_path, append ? std::ios::app : std::ios::trunc);
        if (!log) throw Error("cannot open training log " + options.log_path.string());
        if (!append) log << "step,elbo,recon,kl,wall_ms\n";
    }
    if (!options.checkpoint_dir.empty()) std::filesystem::create_directories(options.checkpoint_dir);

    const ad::AdamConfig adam_cfg{cfg.lr};
    const RandomState noise_root = RandomState(cfg.seed).split(kNoiseStream);
    const auto t0 = std::chrono::steady_clock::now();
    TrainResult result;
    std::vector<std::size_t> order;
    std::uint64_t order_epoch = ~std::uint64_t{0};
    std::vector<ad::Tensor> grads(model.params().size());
    std::vector<ad::Tensor> values(model.params().size());

    for (std::uint64_t step = start; step < total; ++step) {
        const std::uint64_t epoch = step / per_epoch;
        if (epoch != order_epoch) {
            order = epoch_order(frames.count, cfg.seed, epoch, options.shuffle);
            order_epoch = epoch;
        }
        const std::size_t pos = static_cast<std::size_t>(step % per_epoch) * batch;
        const ad::Tensor images = frames.batch(std::span(order).subspan(pos, batch));
        RandomState noise_rng = noise_root.split(step);
        const auto noise = draw_noise(batch, cfg.latent_n, cfg.kl_samples, noise_rng);

        TrainLogRow row;
        row.step = step + 1;
        try {
            ad::Tape tape;
            std::vector<ad::Var> vars;
            for (const auto& p : model.params()) vars.push_back(tape.parameter(p.value));
            const ElboGraph g = build_elbo(tape, vars, images, noise, cfg);
            const double loss = g.loss.value().item();
            if (!std::isfinite(loss)) throw NumericalFailure("non-finite loss");
            tape.backward(g.loss);
            for (std::size_t i = 0; i < vars.size(); ++i) {
                grads[i] = vars[i].grad();
                if (!grads[i].all_finite()) throw NumericalFailure("non-finite gradient for " + model.params()[i].name);
            }
            const auto& kl = g.kl.value().data();
            const auto& rec = g.recon.value().data();
            row.recon = std::accumulate(rec.begin(), rec.end(), 0.0) / static_cast<double>(batch);
            row.kl = std::accumulate(kl.begin(), kl.end(), 0.0) / static_cast<double>(batch);
            double ss = 0.0;
            for (double k : kl) ss += (k - row.kl) * (k - row.kl);
            row.kl_stderr = batch > 1 ? std::sqrt(ss / static_cast<double>(batch - 1) / static_cast<double>(batch)) : 0.0;
            row.elbo = row.recon - row.kl;
        } catch (const NumericalFailure& e) {
            throw NumericalFailure("training diverged at step " + std::to_string(step + 1) + ": " + e.what());
        }
        for (std::size_t i = 0; i < values.size(); ++i) values[i] = std::move(model.params()[i].value);
        ad::adam_step(values, grads, adam, adam_cfg);
        for (std::size_t i = 0; i < values.size(); ++i) model.params()[i].value = std::move(values[i]);

        row.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
        result.log.push_back(row);
        if (log) log << csv_row(row);
        if (options.on_step) options.on_step(row);
        if (!options.checkpoint_dir.empty() && options.checkpoint_every > 0 && (step + 1) % options.checkpoint_every == 0) {
            io::save_checkpoint(options.checkpoint_dir / ("step_" + std::to_string(step + 1) + ".lcck"),
                                make_checkpoint(model, &adam, step + 1));
        }
    }
    result.steps = std::max(total, start);
    if (!options.checkpoint_dir.empty()) {
        io::save_checkpoint(options.checkpoint_dir / "final.lcck", make_checkpoint(model, &adam, result.steps));
    }
    return result;
}

}  // namespace

void PVaeConfig::validate() const {
    if (image_side == 0) throw ConfigError("image_side must be positive");
    if (latent_n == 0) throw ConfigError("latent_n must be at least 1");
    if (hidden == 0) throw ConfigError("hidden must be positive");
    if (!(c > 0.0) || !std::isfinite(c)) throw ConfigError("curvature c must be positive");
    if (!(lr > 0.0) || !std::isfinite(lr)) throw ConfigError("lr must be positive");
    if (batch_size == 0) throw ConfigError("batch_size must be positive");
    if (kl_samples == 0) throw ConfigError("kl_samples must be positive");
}

KeyValues PVaeConfig::to_key_values() const {
    KeyValues kv;
    kv.set("image_side", std::to_string(image_side));
    kv.set("latent_n", std::to_string(latent_n));
    kv.set("hidden", std::to_string(hidden));
    kv.set("c", format_double(c));
    kv.set("lr", format_double(lr));
    kv.set("epochs", std::to_string(epochs));
    kv.set("batch_size", std::to_string(batch_size));
    kv.set("seed", std::to_string(seed));
    kv.set("kl_samples", std::to_string(kl_samples));
    return kv;
}

PVaeConfig PVaeConfig::from_key_values(const KeyValues& kv) {
    PVaeConfig c;
    auto count = [&](const char* key, std::size_t fallback) {
        const auto v = kv.get_int(key, static_cast<std::int64_t>(fallback));
        if (v < 0) throw ConfigError(std::string(key) + " must not be negative");
        return static_cast<std::size_t>(v);
    };
    c.image_side = count("image_side", c.image_side);
    c.latent_n = count("latent_n", c.latent_n);
    c.hidden = count("hidden", c.hidden);
    c.c = kv.get_double("c", c.c);
    c.lr = kv.get_double("lr", c.lr);
    c.epochs = count("epochs", c.epochs);
    c.batch_size = count("batch_size", c.batch_size);
    c.seed = kv.get_u64("seed", c.seed);
    c.kl_samples = count("kl_samples", c.kl_samples);
    c.validate();
    return c;
}

PVae::PVae(PVaeConfig config, bool zero_encoder) : config_(config) {
    config_.validate();
    const std::size_t d = config_.pixels(), h = config_.hidden, n = config_.latent_n;
    RandomState rng = RandomState(config_.seed).split(kInitStream);
    params_.reserve(kParamNames.size());
    auto add = [&](Param which, ad::Tensor t) { params_.push_back({kParamNames[which], std::move(t)}); };
    add(EncW1, normal_tensor(d, h, xavier(d, h), rng));
    add(EncB1, ad::Tensor(1, h));
    add(EncHead, normal_tensor(h, 2 * n, xavier(h, 2 * n), rng));
    add(EncHeadB, ad::Tensor(1, 2 * n));
    add(DecPRaw, normal_tensor(h, n, 0.25, rng));
    add(DecA, normal_tensor(h, n, 1.0 / std::sqrt(static_cast<double>(n)), rng));
    add(DecW2, normal_tensor(h, d, xavier(h, d), rng));
    add(DecB2, ad::Tensor(1, d));
    if (zero_encoder) {
        for (Param p : {EncW1, EncB1, EncHead, EncHeadB}) params_[p].value = ad::Tensor::zeros_like(params_[p].value);
    }
}

ad::Tensor& PVae::param(std::string_view name) {
    for (auto& p : params_) {
        if (p.name == name) return p.value;
    }
    throw std::out_of_range("no parameter named " + std::string(name));
}

const ad::Tensor& PVae::param(std::string_view name) const {
    return const_cast<PVae*>(this)->param(name);
}

WrappedNormal PVae::encode(const Frame& image) const {
    ad::Tape tape;
    const auto p = constants(tape, params_);
    const auto out = encoder(tape.constant(frames_tensor(std::span(&image, 1), config_.image_side)), p, config_);
    geom::Vector scale(static_cast<Eigen::Index>(config_.latent_n));
    for (std::size_t j = 0; j < config_.latent_n; ++j) scale[static_cast<Eigen::Index>(j)] = out.scale.value()(0, j);
    return WrappedNormal(row_point(out.mean.value(), 0, config_.c), std::move(scale));
}

std::vector<geom::PoincarePoint> PVae::encode_means(std::span<const Frame> images) const {
    // One frame per pass: batched GEMM rounding depends on the row position,
    // and identical frames must get identical codes.
    std::vector<geom::PoincarePoint> out;
    out.reserve(images.size());
    for (const Frame& f : images) out.push_back(encode(f).mean());
    return out;
}

ad::Tensor PVae::gyroplane_offsets() const {
    ad::Tape tape;
    return ad::expmap0(tape.constant(params_[DecPRaw].value), config_.c).value();
}

geom::Vector PVae::gyroplane_layer(const geom::PoincarePoint& z) const {
    ad::Tape tape;
    const auto p = constants(tape, params_);
    const ad::Tensor out = gyro(tape.constant(points_tensor(std::span(&z, 1), config_.latent_n)), p, config_).value();
    return Eigen::Map<const geom::Vector>(out.data().data(), static_cast<Eigen::Index>(out.size()));
}

geom::Vector PVae::decode_logits(const geom::PoincarePoint& z) const {
    ad::Tape tape;
    const auto p = constants(tape, params_);
    const ad::Tensor out = decoder(tape.constant(points_tensor(std::span(&z, 1), config_.latent_n)), p, config_).value();
    return Eigen::Map<const geom::Vector>(out.data().data(), static_cast<Eigen::Index>(out.size()));
}

Frame PVae::decode(const geom::PoincarePoint& z) const { return decode(std::span(&z, 1)).front(); }

std::vector<Frame> PVae::decode(std::span<const geom::PoincarePoint> zs) const {
    std::vector<Frame> out;
    if (zs.empty()) return out;
    ad::Tape tape;
    const auto p = constants(tape, params_);
    const ad::Tensor probs =
        ad::sigmoid(decoder(tape.constant(points_tensor(zs, config_.latent_n)), p, config_)).value();
    const std::size_t d = config_.pixels();
    for (std::size_t r = 0; r < zs.size(); ++r) {
        std::vector<double> px(probs.data().begin() + r * d, probs.data().begin() + (r + 1) * d);
        out.emplace_back(config_.image_side, std::move(px));
    }
    return out;
}

std::vector<ad::Tensor> draw_noise(std::size_t batch, std::size_t latent_n, std::size_t draws, RandomState& rng) {
    std::vector<ad::Tensor> noise;
    noise.reserve(draws);
    for (std::size_t k = 0; k < draws; ++k) noise.push_back(normal_tensor(batch, latent_n, 1.0, rng));
    return noise;
}

ElboGraph build_elbo(ad::Tape& tape, std::span<const ad::Var> params, const ad::Tensor& images,
                     std::span<const ad::Tensor> noise, const PVaeConfig& config) {
    if (params.size() != kParamNames.size()) throw std::invalid_argument("build_elbo: wrong parameter count");
    if (noise.empty()) throw std::invalid_argument("build_elbo: need at least one noise block");
    if (images.cols() != config.pixels()) throw DimensionMismatch("build_elbo: image width mismatch");
    const double c = config.c;
    const std::size_t n = config.latent_n;
    const ad::Var x = tape.constant(images);
    const EncoderOut q = encoder(x, params, config);
    const ad::Var prior_mean = tape.constant(ad::Tensor(1, n, 0.0));
    const ad::Var prior_scale = tape.constant(ad::Tensor(1, n, 1.0));

    ad::Var recon, kl_sum;
    for (std::size_t k = 0; k < noise.size(); ++k) {
        if (noise[k].rows() != images.rows() || noise[k].cols() != n) {
            throw DimensionMismatch("build_elbo: noise block shape mismatch");
        }
        const ad::Var z = ad::expmap(q.mean, q.scale * tape.constant(noise[k]), c);
        const ad::Var kl_k = ad::wrapped_normal_log_density(z, q.mean, q.scale, c) -
                             ad::wrapped_normal_log_density(z, prior_mean, prior_scale, c);
        kl_sum = k == 0 ? kl_k : kl_sum + kl_k;
        if (k == 0) {
            const ad::Var logits = decoder(z, params, config);
            recon = ad::row_sum(x * logits - ad::softplus(logits));
        }
    }
    const ad::Var kl = noise.size() == 1 ? kl_sum : kl_sum * (1.0 / static_cast<double>(noise.size()));
    return {ad::mean(kl - recon), recon, kl};
}

ElboParts elbo(const PVae& model, std::span<const Frame> images, RandomState& rng, std::size_t kl_samples) {
    if (images.empty()) throw std::invalid_argument("elbo: no images");
    if (kl_samples == 0) throw std::invalid_argument("elbo: kl_samples must be positive");
    const PVaeConfig& cfg = model.config();
    ad::Tape tape;
    const auto p = constants(tape, model.params());
    const auto noise = draw_noise(images.size(), cfg.latent_n, kl_samples, rng);
    const ElboGraph g = build_elbo(tape, p, frames_tensor(images, cfg.image_side), noise, cfg);
    const double b = static_cast<double>(images.size());
    ElboParts out;
    const auto& rec = g.recon.value().data();
    const auto& kl = g.kl.value().data();
    out.recon = std::accumulate(rec.begin(), rec.end(), 0.0) / b;
    out.kl = std::accumulate(kl.begin(), kl.end(), 0.0) / b;
    out.elbo = out.recon - out.kl;
    if (images.size() > 1) {
        double ss = 0.0;
        for (double k : kl) ss += (k - out.kl) * (k - out.kl);
        out.kl_stderr = std::sqrt(ss / (b - 1.0) / b);
    }
    return out;
}

FrameMatrix FrameMatrix::from_dataset(const data::Dataset& ds) {
    FrameMatrix m;
    m.side = ds.image_side;
    m.count = ds.frame_count();
    m.pixels.reserve(m.count * m.side * m.side);
    for (const auto& seq : ds.sequences) {
        for (const auto& f : seq.frames) {
            for (double v : f.pixels) m.pixels.push_back(quantize(v));
        }
    }
    return m;
}

FrameMatrix FrameMatrix::from_frames(std::span<const Frame> frames) {
    FrameMatrix m;
    if (frames.empty()) return m;
    m.side = frames.front().side;
    m.count = frames.size();
    for (const auto& f : frames) {
        if (f.side != m.side) throw DimensionMismatch("FrameMatrix: mixed frame sizes");
        for (double v : f.pixels) m.pixels.push_back(quantize(v));
    }
    return m;
}

ad::Tensor FrameMatrix::batch(std::span<const std::size_t> rows) const {
    const std::size_t d = side * side;
    ad::Tensor t(rows.size(), d);
    for (std::size_t r = 0; r < rows.size(); ++r) {
        if (rows[r] >= count) throw std::out_of_range("FrameMatrix: row out of range");
        const std::uint8_t* src = pixels.data() + rows[r] * d;
        for (std::size_t j = 0; j < d; ++j) t(r, j) = dequantize(src[j]);
    }
    return t;
}

std::pair<double, double> smoothed_loss_ends(std::span<const TrainLogRow> log) {
    if (log.empty()) throw std::invalid_argument("smoothed_loss_ends: empty log");
    const std::size_t w = std::min(kSmoothingWindow, log.size());
    double first = 0.0, last = 0.0;
    for (std::size_t i = 0; i < w; ++i) {
        first -= log[i].elbo;
        last -= log[log.size() - w + i].elbo;
    }
    return {first / static_cast<double>(w), last / static_cast<double>(w)};
}

TrainResult train(PVae& model, const FrameMatrix& frames, const TrainOptions& options) {
    ad::AdamState adam;
    return run(model, adam, 0, frames, options);
}

TrainResult resume(PVae& model, const io::Checkpoint& checkpoint, const FrameMatrix& frames,
                   const TrainOptions& options) {
    model = from_checkpoint(checkpoint);
    ad::AdamState adam;
    const KeyValues meta = KeyValues::parse(checkpoint.metadata, "checkpoint metadata");
    adam.step = meta.get_u64("adam_step", 0);
    if (adam.step > 0) {
        for (const char* name : kParamNames) {
            adam.m.push_back(checkpoint.tensor(std::string("adam_m/") + name));
            adam.v.push_back(checkpoint.tensor(std::string("adam_v/") + name));
        }
    }
    return run(model, adam, checkpoint.step, frames, options);
}

io::Checkpoint to_checkpoint(const PVae& model, std::uint64_t step) { return make_checkpoint(model, nullptr, step); }

PVae from_checkpoint(const io::Checkpoint& checkpoint) {
    KeyValues meta = KeyValues::parse(checkpoint.metadata, "checkpoint metadata");
    PVaeConfig cfg = PVaeConfig::from_key_values(meta);
    PVae model(cfg);
    for (auto& p : model.params()) {
        const ad::Tensor& t = checkpoint.tensor(p.name);
        if (!t.same_shape(p.value)) throw FormatError("checkpoint tensor " + p.name + " has the wrong shape");
        p.value = t;
    }
    return model;
}

void save_model(const PVae& model, const std::filesystem::path& path) {
    io::save_checkpoint(path, to_checkpoint(model));
}

PVae load_model(const std::filesystem::path& path) { return from_checkpoint(io::load_checkpoint(path)); }

std::vector<cones::EmbeddedFrameEvent> embed_sequence(const PVae& model, std::span<const Frame> frames,
                                                      const cones::EventEmbedding& embedding) {
    const auto means = model.encode_means(frames);
    std::vector<cones::EmbeddedFrameEvent> out;
    out.reserve(means.size());
    for (std::size_t i = 0; i < means.size(); ++i) out.push_back(embedding.frame(means[i], static_cast<int>(i)));
    return out;
}

}  // namespace lightcone::model
