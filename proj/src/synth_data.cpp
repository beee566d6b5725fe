#include "lightcone/synth_data.hpp"

#include "lightcone/binary_io.hpp"
#include "lightcone/error.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace lightcone::data {

namespace {

constexpr std::string_view kMagic = "LCDS";
constexpr std::uint64_t kGlyphStream = 0x67'6c'79'70'68ULL;
constexpr int kSupersample = 4;

struct GlyphShape {
    GlyphKind kind;
    double ring_fraction;  // inner radius / outer radius
    double arm_fraction;   // cross arm width / size
    double angle;
};

GlyphShape glyph_shape(int sprite_id) {
    RandomState rng(derive_seed(kGlyphStream, static_cast<std::uint64_t>(sprite_id)));
    GlyphShape s{glyph_kind(sprite_id), rng.uniform(0.45, 0.7), rng.uniform(0.2, 0.35),
                 rng.uniform(0.0, std::numbers::pi / 2)};
    return s;
}

// Indicator of the glyph at offset (x, y) from its centre.
bool inside(const GlyphShape& s, double x, double y, double size) {
    const double r = 0.5 * size;
    switch (s.kind) {
        case GlyphKind::Disc: return x * x + y * y <= r * r;
        case GlyphKind::Ring: {
            const double d2 = x * x + y * y;
            const double inner = s.ring_fraction * r;
            return d2 <= r * r && d2 >= inner * inner;
        }
        case GlyphKind::Cross: {
            const double c = std::cos(s.angle), sn = std::sin(s.angle);
            const double u = c * x + sn * y, v = -sn * x + c * y;
            const double half = 0.5 * s.arm_fraction * size;
            const bool in_a = std::abs(u) <= r && std::abs(v) <= half;
            const bool in_b = std::abs(v) <= r && std::abs(u) <= half;
            return (in_a || in_b) && x * x + y * y <= r * r;
        }
    }
    return false;
}

std::size_t glyph_side(double size_px) { return static_cast<std::size_t>(std::ceil(size_px)) + 2; }

// Adds `glyph` with its top-left corner at subpixel (x, y), bilinear splat.
void splat(Frame& frame, const Frame& glyph, double x, double y) {
    const double fx = std::floor(x), fy = std::floor(y);
    const double ax = x - fx, ay = y - fy;
    const auto ox = static_cast<std::size_t>(fx), oy = static_cast<std::size_t>(fy);
    const double w00 = (1 - ax) * (1 - ay), w01 = ax * (1 - ay), w10 = (1 - ax) * ay, w11 = ax * ay;
    for (std::size_t r = 0; r < glyph.side; ++r) {
        for (std::size_t c = 0; c < glyph.side; ++c) {
            const double v = glyph.at(r, c);
            if (v == 0.0) continue;
            frame.at(oy + r, ox + c) += w00 * v;
            frame.at(oy + r, ox + c + 1) += w01 * v;
            frame.at(oy + r + 1, ox + c) += w10 * v;
            frame.at(oy + r + 1, ox + c + 1) += w11 * v;
        }
    }
    for (double& p : frame.pixels) p = std::clamp(p, 0.0, 1.0);
}

// Reflect p into [0, hi].
double bounce(double p, double hi) {
    if (hi <= 0.0) return 0.0;
    const double period = 2.0 * hi;
    double m = std::fmod(p, period);
    if (m < 0.0) m += period;
    return m <= hi ? m : period - m;
}

}  // namespace

GeneratorConfig GeneratorConfig::full_scale() {
    GeneratorConfig c;
    c.n_sequences = 10000;
    return c;
}

GlyphKind glyph_kind(int sprite_id) { return static_cast<GlyphKind>(((sprite_id % 3) + 3) % 3); }

Frame render_glyph(int sprite_id, double size_px) {
    const GlyphShape shape = glyph_shape(sprite_id);
    const std::size_t side = glyph_side(size_px);
    const double centre = 0.5 * static_cast<double>(side);
    Frame g(side);
    const double step = 1.0 / kSupersample;
    for (std::size_t r = 0; r < side; ++r) {
        for (std::size_t c = 0; c < side; ++c) {
            int hits = 0;
            for (int i = 0; i < kSupersample; ++i) {
                for (int j = 0; j < kSupersample; ++j) {
                    const double y = static_cast<double>(r) + (i + 0.5) * step - centre;
                    const double x = static_cast<double>(c) + (j + 0.5) * step - centre;
                    hits += inside(shape, x, y, size_px) ? 1 : 0;
                }
            }
            g.at(r, c) = static_cast<double>(hits) / (kSupersample * kSupersample);
        }
    }
    return g;
}

Dataset generate(const GeneratorConfig& config) {
    if (config.image_side == 0 || config.frames_per_seq == 0) throw ConfigError("generate: empty frame geometry");
    if (!(config.sprite_min_px > 0) || config.sprite_max_px < config.sprite_min_px) {
        throw ConfigError("generate: invalid sprite size range");
    }
    if (config.v_max < 0.0 || config.jitter < 0.0) throw ConfigError("generate: negative velocity bound");
    const double scale = static_cast<double>(config.image_side) / 32.0;
    const double min_px = config.sprite_min_px * scale, max_px = config.sprite_max_px * scale;
    if (glyph_side(max_px) + 1 > config.image_side) {
        throw ConfigError("generate: sprite of " + std::to_string(max_px) + " px does not fit a " +
                          std::to_string(config.image_side) + " px frame");
    }

    Dataset ds;
    ds.image_side = config.image_side;
    ds.sequences.resize(config.n_sequences);
    const RandomState root(config.seed);
    for (std::size_t s = 0; s < config.n_sequences; ++s) {
        RandomState rng = root.split(s);
        Sequence& seq = ds.sequences[s];
        seq.sprite_id = static_cast<int>(rng.below(1u << 20));
        const Frame glyph = render_glyph(seq.sprite_id, rng.uniform(min_px, max_px));
        const double hi = static_cast<double>(config.image_side - glyph.side - 1);

        double x = rng.uniform(0.0, hi), y = rng.uniform(0.0, hi);
        const double angle = rng.uniform(0.0, 2.0 * std::numbers::pi);
        const double speed = rng.uniform(0.5, 0.9) * config.v_max;
        const double vx = speed * std::cos(angle), vy = speed * std::sin(angle);
        const double jitter = config.jitter * config.v_max;

        seq.frames.reserve(config.frames_per_seq);
        for (std::size_t f = 0; f < config.frames_per_seq; ++f) {
            Frame frame(config.image_side);
            splat(frame, glyph, x, y);
            seq.frames.push_back(std::move(frame));
            if (f + 1 == config.frames_per_seq) break;
            // Jitter drawn uniformly from a disc so |v| <= v_max.
            const double ja = rng.uniform(0.0, 2.0 * std::numbers::pi);
            const double jr = jitter * std::sqrt(rng.uniform());
            const double nx = bounce(x + vx + jr * std::cos(ja), hi);
            const double ny = bounce(y + vy + jr * std::sin(ja), hi);
            seq.trajectory.push_back({nx - x, ny - y});
            x = nx;
            y = ny;
        }
    }
    return ds;
}

std::vector<std::uint8_t> encode_dataset(const Dataset& ds) {
    const std::size_t per = ds.frames_per_sequence();
    io::BinaryWriter w;
    w.raw(kMagic);
    w.u16(kDatasetVersion);
    w.u16(0);
    w.u32(static_cast<std::uint32_t>(ds.sequences.size()));
    w.u32(static_cast<std::uint32_t>(per));
    w.u32(static_cast<std::uint32_t>(ds.image_side));
    std::vector<std::uint8_t> row(ds.image_side * ds.image_side);
    for (const auto& seq : ds.sequences) {
        if (seq.frames.size() != per) throw FormatError("encode_dataset: ragged sequence lengths");
        for (const auto& f : seq.frames) {
            if (f.side != ds.image_side) throw FormatError("encode_dataset: frame side mismatch");
            std::transform(f.pixels.begin(), f.pixels.end(), row.begin(), quantize);
            w.bytes(row);
        }
    }
    return w.buffer();
}

Dataset decode_dataset(std::span<const std::uint8_t> bytes) {
    io::BinaryReader r(bytes);
    if (r.remaining() < 4 || r.raw(4) != kMagic) throw FormatError("not a dataset file (bad magic)");
    const auto version = r.u16();
    if (version != kDatasetVersion) throw FormatError("unsupported dataset version " + std::to_string(version));
    r.u16();
    const std::size_t n = r.u32(), per = r.u32(), side = r.u32();
    const std::size_t px = side * side;
    if (r.remaining() != n * per * px) {
        throw FormatError("dataset payload is " + std::to_string(r.remaining()) + " bytes, expected " +
                          std::to_string(n * per * px) + " (truncated or corrupt)");
    }
    Dataset ds;
    ds.image_side = side;
    ds.sequences.resize(n);
    for (auto& seq : ds.sequences) {
        seq.frames.reserve(per);
        for (std::size_t f = 0; f < per; ++f) {
            const auto raw = r.bytes(px);
            Frame frame(side);
            for (std::size_t i = 0; i < px; ++i) frame.pixels[i] = dequantize(raw[i]);
            seq.frames.push_back(std::move(frame));
        }
    }
    return ds;
}

void save(const Dataset& ds, const std::filesystem::path& path) { io::write_file(path, encode_dataset(ds)); }

Dataset load(const std::filesystem::path& path) { return decode_dataset(io::read_file(path)); }

std::vector<NegativePair> negatives(const Dataset& ds, RandomState& rng, std::size_t n) {
    std::vector<NegativePair> out;
    if (n == 0) return out;
    const std::size_t seqs = ds.sequences.size(), per = ds.frames_per_sequence();
    if (per == 0 || (seqs < 2 && per <= kMinSameSequenceGap)) {
        throw ConfigError("negatives: dataset too small for counter-example pairs");
    }
    out.reserve(n);
    while (out.size() < n) {
        NegativePair p;
        p.a = {rng.below(seqs), rng.below(per)};
        p.b = {rng.below(seqs), rng.below(per)};
        p.gap = p.a.frame > p.b.frame ? p.a.frame - p.b.frame : p.b.frame - p.a.frame;
        if (p.a.sequence == p.b.sequence && p.gap < kMinSameSequenceGap) continue;
        out.push_back(p);
    }
    return out;
}

}  // namespace lightcone::data
