#pragma once

// Procedural moving-sprite sequences: one anti-aliased glyph per sequence
// (disc, ring or cross), translated by a near-constant subpixel velocity and
// bouncing off the frame borders.

#include "lightcone/image.hpp"
#include "lightcone/rng.hpp"

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace lightcone::data {

struct Sequence {
    std::vector<Frame> frames;
    /// -1 when unknown (datasets loaded from disk do not store it).
    int sprite_id = -1;
    /// Actual (dx, dy) displacement between consecutive frames, in pixels.
    std::vector<std::array<double, 2>> trajectory;
};

struct Dataset {
    std::size_t image_side = 32;
    std::vector<Sequence> sequences;

    std::size_t frames_per_sequence() const { return sequences.empty() ? 0 : sequences.front().frames.size(); }
    std::size_t frame_count() const { return sequences.size() * frames_per_sequence(); }
};

struct GeneratorConfig {
    std::size_t n_sequences = 2000;
    std::size_t frames_per_seq = 30;
    std::size_t image_side = 32;
    /// Glyph size range in pixels at image_side 32; scaled proportionally.
    double sprite_min_px = 18.0;
    double sprite_max_px = 25.0;
    /// Pixels per frame.
    double v_max = 2.0;
    /// Per-step velocity jitter radius as a fraction of v_max.
    double jitter = 0.1;
    std::uint64_t seed = 7;

    /// 10,000 sequences of 30 frames.
    static GeneratorConfig full_scale();
};

enum class GlyphKind { Disc, Ring, Cross };

/// Anti-aliased glyph pattern for a sprite id, square, side ceil(size) + 2.
Frame render_glyph(int sprite_id, double size_px);
GlyphKind glyph_kind(int sprite_id);

/// Deterministic per seed. Throws ConfigError if a glyph cannot fit the frame.
Dataset generate(const GeneratorConfig& config);

inline constexpr std::uint16_t kDatasetVersion = 1;
/// Magic, version, reserved, three u32 counts.
inline constexpr std::size_t kDatasetHeaderBytes = 20;

/// "LCDS" container: header then every frame as 8-bit rows.
std::vector<std::uint8_t> encode_dataset(const Dataset& ds);
Dataset decode_dataset(std::span<const std::uint8_t> bytes);
void save(const Dataset& ds, const std::filesystem::path& path);
Dataset load(const std::filesystem::path& path);

struct FrameRef {
    std::size_t sequence = 0;
    std::size_t frame = 0;
};

/// Counter-example pair: frames that are not consecutive states of one motion.
struct NegativePair {
    FrameRef a;
    FrameRef b;
    /// |frame index difference|.
    std::size_t gap = 0;
};

inline constexpr std::size_t kMinSameSequenceGap = 10;

/// n pairs drawn either from different sequences or from one sequence at least
/// kMinSameSequenceGap frames apart. Throws ConfigError if no such pair exists.
std::vector<NegativePair> negatives(const Dataset& ds, RandomState& rng, std::size_t n);

}  // namespace lightcone::data
