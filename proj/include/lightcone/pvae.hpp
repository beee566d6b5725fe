#pragma once

// Variational autoencoder with a Poincare-ball latent space.
//
// Encoder: x -> tanh(x W1 + b1) -> [u | s] ; mean = expmap0(u), scale = softplus(s) + 1e-5.
// Decoder: z -> tanh(gyroplane(z)) -> logits; pixels are Bernoulli(sigmoid(logits)).

#include "lightcone/autodiff.hpp"
#include "lightcone/binary_io.hpp"
#include "lightcone/image.hpp"
#include "lightcone/keyvalue.hpp"
#include "lightcone/light_cones.hpp"
#include "lightcone/rng.hpp"
#include "lightcone/wrapped_normal.hpp"

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace lightcone::data {
struct Dataset;
struct Sequence;
}  // namespace lightcone::data

namespace lightcone::model {

struct PVaeConfig {
    std::size_t image_side = 32;
    std::size_t latent_n = 8;
    std::size_t hidden = 600;
    double c = 1.0;
    double lr = 5e-4;
    std::size_t epochs = 20;
    std::size_t batch_size = 64;
    std::uint64_t seed = 1;
    /// Monte Carlo draws for the KL term while training.
    std::size_t kl_samples = 1;

    std::size_t pixels() const { return image_side * image_side; }
    void validate() const;

    KeyValues to_key_values() const;
    static PVaeConfig from_key_values(const KeyValues& kv);
};

inline constexpr double kScaleFloor = 1e-5;

/// Parameter tensors, in the fixed order used by the tape and checkpoints.
inline constexpr std::array<const char*, 8> kParamNames = {
    "enc_w1", "enc_b1", "enc_head", "enc_head_b", "dec_p_raw", "dec_a", "dec_w2", "dec_b2"};

class PVae {
public:
    /// Random initialisation from config.seed; `zero_encoder` zeroes every
    /// encoder weight (mean at the origin, scale softplus(0) + floor).
    explicit PVae(PVaeConfig config, bool zero_encoder = false);

    const PVaeConfig& config() const { return config_; }
    std::vector<ad::NamedTensor>& params() { return params_; }
    const std::vector<ad::NamedTensor>& params() const { return params_; }
    ad::Tensor& param(std::string_view name);
    const ad::Tensor& param(std::string_view name) const;

    WrappedNormal encode(const Frame& image) const;
    /// Posterior means of many frames in one pass.
    std::vector<geom::PoincarePoint> encode_means(std::span<const Frame> images) const;

    /// Gyroplane offsets on the ball, one row per hidden unit.
    ad::Tensor gyroplane_offsets() const;
    /// First decoder layer response (hidden values before the activation).
    geom::Vector gyroplane_layer(const geom::PoincarePoint& z) const;
    /// image_side^2 pixel logits.
    geom::Vector decode_logits(const geom::PoincarePoint& z) const;
    Frame decode(const geom::PoincarePoint& z) const;
    std::vector<Frame> decode(std::span<const geom::PoincarePoint> zs) const;

private:
    PVaeConfig config_;
    std::vector<ad::NamedTensor> params_;
};

/// Differentiable pieces of one ELBO evaluation.
struct ElboGraph {
    /// Mean negative ELBO per image (1 x 1).
    ad::Var loss;
    /// Per-image reconstruction log-likelihood (B x 1), first latent draw.
    ad::Var recon;
    /// Per-image KL estimate averaged over draws (B x 1).
    ad::Var kl;
};

/// Builds the ELBO for a batch. `images` is B x pixels; `noise` holds one
/// B x latent_n standard-normal block per KL draw.
ElboGraph build_elbo(ad::Tape& tape, std::span<const ad::Var> params, const ad::Tensor& images,
                     std::span<const ad::Tensor> noise, const PVaeConfig& config);

/// Standard-normal noise blocks for build_elbo.
std::vector<ad::Tensor> draw_noise(std::size_t batch, std::size_t latent_n, std::size_t draws, RandomState& rng);

struct ElboParts {
    /// Means per image.
    double elbo = 0.0;
    double recon = 0.0;
    double kl = 0.0;
    /// Standard error of the KL mean across images and draws.
    double kl_stderr = 0.0;
};

ElboParts elbo(const PVae& model, std::span<const Frame> images, RandomState& rng, std::size_t kl_samples);

/// Frames stored 8-bit for training, row-major, one frame per row.
struct FrameMatrix {
    std::size_t side = 0;
    std::size_t count = 0;
    std::vector<std::uint8_t> pixels;

    static FrameMatrix from_dataset(const data::Dataset& ds);
    static FrameMatrix from_frames(std::span<const Frame> frames);
    /// Dequantized rows as a batch tensor.
    ad::Tensor batch(std::span<const std::size_t> rows) const;
};

struct TrainLogRow {
    std::uint64_t step = 0;
    double elbo = 0.0;
    double recon = 0.0;
    double kl = 0.0;
    double kl_stderr = 0.0;
    double wall_ms = 0.0;
};

struct TrainOptions {
    /// Overrides config.epochs when set: stop after this many optimizer steps in total.
    std::optional<std::uint64_t> max_steps;
    /// Checkpoint every this many steps (0: only the final one).
    std::uint64_t checkpoint_every = 0;
    /// Where step checkpoints and final.lcck go; nothing is written when empty.
    std::filesystem::path checkpoint_dir;
    /// CSV log "step,elbo,recon,kl,wall_ms"; appended to when resuming.
    std::filesystem::path log_path;
    /// Sample rows in order instead of shuffling (overfit checks).
    bool shuffle = true;
    std::function<void(const TrainLogRow&)> on_step;
};

struct TrainResult {
    std::vector<TrainLogRow> log;
    std::uint64_t steps = 0;
};

inline constexpr std::size_t kSmoothingWindow = 50;

/// Mean of -elbo over the first and last kSmoothingWindow logged steps.
std::pair<double, double> smoothed_loss_ends(std::span<const TrainLogRow> log);

/// Adam on every parameter. Throws NumericalFailure (with the step) if the
/// loss stops being finite.
TrainResult train(PVae& model, const FrameMatrix& frames, const TrainOptions& options = {});

/// Continue a run from a checkpoint written by train(); the model and
/// optimizer state are restored and the remaining steps replay exactly.
TrainResult resume(PVae& model, const io::Checkpoint& checkpoint, const FrameMatrix& frames,
                   const TrainOptions& options = {});

io::Checkpoint to_checkpoint(const PVae& model, std::uint64_t step = 0);
PVae from_checkpoint(const io::Checkpoint& checkpoint);
void save_model(const PVae& model, const std::filesystem::path& path);
PVae load_model(const std::filesystem::path& path);

/// Posterior means placed in space-time, frame i at time i * embedding.dt.
std::vector<cones::EmbeddedFrameEvent> embed_sequence(const PVae& model, std::span<const Frame> frames,
                                                      const cones::EventEmbedding& embedding = {});

}  // namespace lightcone::model
