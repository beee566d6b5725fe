#include "lightcone/pipeline.hpp"

#include "lightcone/binary_io.hpp"
#include "lightcone/error.hpp"
#include "lightcone/pvae.hpp"
#include "lightcone/rng.hpp"
#include "lightcone/synth_data.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

namespace lightcone::pipeline {

namespace fs = std::filesystem;

namespace {

constexpr std::uint64_t kEvalStream = 0x6576616c;
constexpr std::uint64_t kExperimentStream = 0x65787031;
constexpr std::uint64_t kApertureStream = 0x61706572;
constexpr std::uint64_t kProbeStream = 0x70726f62;
constexpr std::uint64_t kPredictStream = 0x70726564;

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point t0) {
    return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

std::size_t get_count(const KeyValues& kv, std::string_view key, std::size_t fallback) {
    const auto v = kv.get_int(key, static_cast<std::int64_t>(fallback));
    if (v < 0) throw ConfigError("'" + std::string(key) + "' must not be negative");
    return static_cast<std::size_t>(v);
}

std::size_t get_positive(const KeyValues& kv, std::string_view key, std::size_t fallback) {
    const std::size_t v = get_count(kv, key, fallback);
    if (v == 0) throw ConfigError("'" + std::string(key) + "' must be positive");
    return v;
}

double get_positive_double(const KeyValues& kv, std::string_view key, double fallback) {
    const double v = kv.get_double(key, fallback);
    if (!(v > 0.0)) throw ConfigError("'" + std::string(key) + "' must be positive");
    return v;
}

void check_keys(const RunConfig& cfg, std::set<std::string> known) {
    known.insert({"seed", "out"});
    cfg.values.require_known(known);
}

fs::path existing_file(const RunConfig& cfg, std::string_view key) {
    if (!cfg.values.has(key)) throw ConfigError("missing required key '" + std::string(key) + "'");
    const fs::path p = cfg.path(key);
    if (!fs::is_regular_file(p)) throw ConfigError(std::string(key) + " not found: " + p.string());
    return p;
}

fs::path prepare_out(const RunConfig& cfg) {
    const fs::path out = cfg.out_dir();
    std::error_code ec;
    fs::create_directories(out, ec);
    if (ec || !fs::is_directory(out)) throw ConfigError("cannot create output directory " + out.string());
    return out;
}

cones::EventEmbedding embedding_from(const KeyValues& kv) {
    return cones::EventEmbedding{get_positive_double(kv, "dt", 1.0), get_positive_double(kv, "rho", 1.0)};
}

std::string csv_join(const std::vector<std::string>& cells) {
    std::string s;
    for (std::size_t i = 0; i < cells.size(); ++i) {
        if (i) s += ',';
        s += cells[i];
    }
    return s + '\n';
}

void append_vector(std::vector<std::string>& cells, const geom::Vector& v) {
    for (Eigen::Index i = 0; i < v.size(); ++i) cells.push_back(format_double(v[i]));
}

std::vector<std::string> vector_header(const std::string& prefix, std::size_t n) {
    std::vector<std::string> h;
    for (std::size_t i = 0; i < n; ++i) h.push_back(prefix + std::to_string(i));
    return h;
}

void write_manifest(const fs::path& dir, const std::string& command, const RunConfig& cfg, const Outcome& outcome,
                    double wall_ms) {
    std::ostringstream m;
    m << "command=" << command << '\n';
    m << "version=" << LIGHTCONE_VERSION << '\n';
    m << "rng=" << RandomState::kAlgorithm << '\n';
    m << "seed=" << cfg.seed() << '\n';
    m << "full_scale=" << (cfg.full_scale ? "true" : "false") << '\n';
    for (const auto& [k, v] : cfg.values.entries()) m << "config." << k << '=' << v << '\n';
    for (const auto& [k, v] : outcome.summary.entries()) m << "result." << k << '=' << v << '\n';
    for (std::size_t i = 0; i < outcome.files.size(); ++i) {
        m << "file." << i << '=' << outcome.files[i].filename().string() << '\n';
    }
    m << "wall_ms=" << static_cast<std::int64_t>(wall_ms) << '\n';
    io::write_text(dir / "manifest.txt", m.str());
}

struct Loaded {
    model::PVae model;
    data::Dataset dataset;
};

const data::Sequence& pick_sequence(const data::Dataset& ds, std::size_t index) {
    if (index >= ds.sequences.size()) {
        throw ConfigError("sequence " + std::to_string(index) + " out of range (dataset has " +
                          std::to_string(ds.sequences.size()) + ")");
    }
    return ds.sequences[index];
}

struct ApertureResult {
    double slope = 0.0;
    double lower = 0.0;
    std::size_t positives = 0;
    std::size_t negatives = 0;
};

ApertureResult run_aperture(const model::PVae& m, const data::Dataset& ds, const KeyValues& kv,
                            const cones::EventEmbedding& emb, std::uint64_t seed) {
    const std::size_t n_seq = std::min(get_positive(kv, "aperture_sequences", 200), ds.sequences.size());
    const std::size_t n_neg = get_count(kv, "aperture_negatives", 2000);
    const double margin = get_positive_double(kv, "margin", 1.1);
    if (ds.frames_per_sequence() < 2) throw ConfigError("aperture: sequences need at least 2 frames");

    data::Dataset subset;
    subset.image_side = ds.image_side;
    subset.sequences.assign(ds.sequences.begin(), ds.sequences.begin() + static_cast<std::ptrdiff_t>(n_seq));

    std::vector<std::vector<cones::EmbeddedFrameEvent>> positives;
    positives.reserve(n_seq);
    for (const auto& s : subset.sequences) positives.push_back(model::embed_sequence(m, s.frames, emb));

    RandomState rng = RandomState(seed).split(kApertureStream);
    std::vector<std::pair<cones::EmbeddedFrameEvent, cones::EmbeddedFrameEvent>> negatives;
    if (n_neg > 0) {
        for (const auto& p : data::negatives(subset, rng, n_neg)) {
            negatives.emplace_back(positives[p.a.sequence][p.a.frame], positives[p.b.sequence][p.b.frame]);
        }
    }
    ApertureResult r;
    r.slope = cones::estimate_aperture(positives, negatives, margin);
    for (const auto& seq : positives) {
        for (std::size_t i = 1; i < seq.size(); ++i) {
            const geom::Event d = seq[i].event - seq[i - 1].event;
            r.lower = std::max(r.lower, d.x.norm() / d.t);
        }
    }
    r.positives = n_seq;
    r.negatives = negatives.size();
    return r;
}

/// "slope" is a positive number or "estimate" (contrastive estimate from the dataset).
double resolve_slope(const RunConfig& cfg, const model::PVae& m, const data::Dataset& ds,
                     const cones::EventEmbedding& emb, KeyValues& summary) {
    const std::string s = cfg.values.get_string("slope", "1");
    double slope;
    if (s == "estimate") {
        slope = run_aperture(m, ds, cfg.values, emb, cfg.seed()).slope;
    } else {
        slope = get_positive_double(cfg.values, "slope", 1.0);
    }
    summary.set("slope", format_double(slope));
    return slope;
}

const std::set<std::string> kApertureKeys = {"aperture_sequences", "aperture_negatives", "margin"};

std::set<std::string> with(std::set<std::string> a, const std::set<std::string>& b) {
    a.insert(b.begin(), b.end());
    return a;
}

}  // namespace

double ssim(const Frame& x, const Frame& y) {
    if (x.side != y.side) throw DimensionMismatch("ssim: frame sizes differ");
    if (x.side == 0) throw std::invalid_argument("ssim: empty frame");
    // Canonical argument order: FMA contraction would otherwise break exact symmetry.
    const bool swap = std::lexicographical_compare(y.pixels.begin(), y.pixels.end(), x.pixels.begin(), x.pixels.end());
    const Frame& a = swap ? y : x;
    const Frame& b = swap ? x : y;
    constexpr double kC1 = 0.01 * 0.01, kC2 = 0.03 * 0.03;
    const std::size_t win = std::min<std::size_t>(8, a.side);
    const std::size_t stride = 4;
    double total = 0.0;
    std::size_t windows = 0;
    for (std::size_t r0 = 0; r0 + win <= a.side; r0 += stride) {
        for (std::size_t c0 = 0; c0 + win <= a.side; c0 += stride) {
            const double n = static_cast<double>(win * win);
            double ma = 0.0, mb = 0.0;
            for (std::size_t r = r0; r < r0 + win; ++r) {
                for (std::size_t c = c0; c < c0 + win; ++c) {
                    ma += a.at(r, c);
                    mb += b.at(r, c);
                }
            }
            ma /= n;
            mb /= n;
            double va = 0.0, vb = 0.0, cov = 0.0;
            for (std::size_t r = r0; r < r0 + win; ++r) {
                for (std::size_t c = c0; c < c0 + win; ++c) {
                    const double da = a.at(r, c) - ma, db = b.at(r, c) - mb;
                    va += da * da;
                    vb += db * db;
                    cov += da * db;
                }
            }
            va /= n;
            vb /= n;
            cov /= n;
            total += ((2.0 * (ma * mb) + kC1) * (2.0 * cov + kC2)) / ((ma * ma + mb * mb + kC1) * (va + vb + kC2));
            ++windows;
            if (win == a.side) break;
        }
        if (win == a.side) break;
    }
    return total / static_cast<double>(windows);
}

std::size_t choose(std::span<const Frame> decoded, const Frame& reference) {
    if (decoded.empty()) throw std::invalid_argument("choose: no samples");
    std::size_t best = 0;
    double best_score = ssim(decoded[0], reference);
    for (std::size_t i = 1; i < decoded.size(); ++i) {
        const double s = ssim(decoded[i], reference);
        if (s > best_score) {
            best = i;
            best_score = s;
        }
    }
    return best;
}

fs::path RunConfig::path(std::string_view key) const {
    const auto v = values.get(key);
    if (!v || v->empty()) throw ConfigError("missing required key '" + std::string(key) + "'");
    const fs::path p(*v);
    return p.is_absolute() ? p : base_dir / p;
}

fs::path RunConfig::out_dir() const { return values.has("out") ? path("out") : base_dir / "out"; }

RunConfig load_run_config(const fs::path& config_path, std::optional<std::uint64_t> seed,
                          std::optional<fs::path> out, bool full_scale) {
    std::ifstream in(config_path, std::ios::binary);
    if (!in) throw ConfigError("cannot read config file " + config_path.string());
    std::ostringstream text;
    text << in.rdbuf();
    RunConfig cfg;
    cfg.values = KeyValues::parse(text.str(), config_path.string());
    cfg.base_dir = config_path.has_parent_path() ? config_path.parent_path() : fs::path(".");
    if (seed) cfg.values.set("seed", std::to_string(*seed));
    if (out) cfg.values.set("out", fs::absolute(*out).string());
    cfg.full_scale = full_scale;
    return cfg;
}

Outcome cmd_gen_data(const RunConfig& cfg) {
    check_keys(cfg, {"n_sequences", "frames_per_seq", "image_side", "v_max", "jitter", "sprite_min_px",
                     "sprite_max_px"});
    const auto& kv = cfg.values;
    data::GeneratorConfig g = cfg.full_scale ? data::GeneratorConfig::full_scale() : data::GeneratorConfig{};
    g.n_sequences = get_positive(kv, "n_sequences", g.n_sequences);
    if (cfg.full_scale) g.n_sequences = data::GeneratorConfig::full_scale().n_sequences;
    g.frames_per_seq = get_positive(kv, "frames_per_seq", g.frames_per_seq);
    g.image_side = get_positive(kv, "image_side", g.image_side);
    g.v_max = kv.get_double("v_max", g.v_max);
    g.jitter = kv.get_double("jitter", g.jitter);
    g.sprite_min_px = kv.get_double("sprite_min_px", g.sprite_min_px);
    g.sprite_max_px = kv.get_double("sprite_max_px", g.sprite_max_px);
    g.seed = cfg.values.get_u64("seed", g.seed);
    const fs::path out = prepare_out(cfg);

    const data::Dataset ds = data::generate(g);
    Outcome o;
    o.out_dir = out;
    o.files.push_back(out / "dataset.lcds");
    data::save(ds, o.files.back());
    std::vector<std::vector<Frame>> rows;
    for (std::size_t s = 0; s < std::min<std::size_t>(4, ds.sequences.size()); ++s) rows.push_back(ds.sequences[s].frames);
    o.files.push_back(out / "preview.pgm");
    write_pgm_grid(o.files.back(), rows, ds.image_side);
    o.summary.set("n_sequences", std::to_string(g.n_sequences));
    o.summary.set("frames", std::to_string(ds.frame_count()));
    o.summary.set("bytes", std::to_string(fs::file_size(out / "dataset.lcds")));
    return o;
}

Outcome cmd_train(const RunConfig& cfg) {
    check_keys(cfg, {"dataset", "latent_n", "hidden", "c", "lr", "epochs", "batch_size", "kl_samples",
                     "checkpoint_every", "resume", "max_steps", "eval_frames"});
    const auto& kv = cfg.values;
    const fs::path dataset_path = existing_file(cfg, "dataset");
    std::optional<fs::path> resume_path;
    if (kv.has("resume")) resume_path = existing_file(cfg, "resume");
    const fs::path out = prepare_out(cfg);

    model::PVaeConfig mc = model::PVaeConfig::from_key_values(kv);
    model::TrainOptions opt;
    opt.checkpoint_dir = out / "checkpoints";
    opt.checkpoint_every = kv.get_u64("checkpoint_every", 0);
    opt.log_path = out / "train_log.csv";
    if (kv.has("max_steps")) opt.max_steps = kv.get_u64("max_steps", 0);

    model::FrameMatrix frames;
    {
        const data::Dataset ds = data::load(dataset_path);
        mc.image_side = ds.image_side;
        frames = model::FrameMatrix::from_dataset(ds);
    }

    model::PVae m(mc);
    model::TrainResult result;
    if (resume_path) {
        result = model::resume(m, io::load_checkpoint(*resume_path), frames, opt);
    } else {
        result = model::train(m, frames, opt);
    }

    Outcome o;
    o.out_dir = out;
    o.files = {out / "model.lcck", opt.log_path, opt.checkpoint_dir / "final.lcck"};
    model::save_model(m, o.files.front());
    const KeyValues effective = m.config().to_key_values();
    for (const auto& [key, value] : effective.entries()) o.summary.set("model." + key, value);
    o.summary.set("steps", std::to_string(result.steps));
    o.summary.set("logged_steps", std::to_string(result.log.size()));
    if (!result.log.empty()) {
        const auto [first, last] = model::smoothed_loss_ends(result.log);
        o.summary.set("smoothed_loss_initial", format_double(first));
        o.summary.set("smoothed_loss_final", format_double(last));
        double worst = 0.0;
        for (const auto& r : result.log) worst = std::min(worst, r.kl + 3.0 * r.kl_stderr);
        o.summary.set("kl_min_plus_3se", format_double(worst));
    }
    const std::size_t n_eval = std::min(get_count(kv, "eval_frames", 256), frames.count);
    if (n_eval > 0) {
        std::vector<std::size_t> rows(n_eval);
        for (std::size_t i = 0; i < n_eval; ++i) rows[i] = i;
        const ad::Tensor t = frames.batch(rows);
        std::vector<Frame> eval;
        for (std::size_t i = 0; i < n_eval; ++i) {
            std::vector<double> px(t.data().begin() + i * t.cols(), t.data().begin() + (i + 1) * t.cols());
            eval.emplace_back(mc.image_side, std::move(px));
        }
        RandomState rng = RandomState(mc.seed).split(kEvalStream);
        const model::ElboParts e = model::elbo(m, eval, rng, 64);
        o.summary.set("eval_elbo", format_double(e.elbo));
        o.summary.set("eval_recon", format_double(e.recon));
        o.summary.set("eval_kl", format_double(e.kl));
        o.summary.set("eval_kl_stderr", format_double(e.kl_stderr));
    }
    return o;
}

Outcome cmd_experiment1(const RunConfig& cfg) {
    check_keys(cfg, with({"checkpoint", "dataset", "sequence", "frame", "times", "samples", "slope", "rho", "dt",
                          "grid_cols"},
                         kApertureKeys));
    const auto& kv = cfg.values;
    const fs::path ckpt = existing_file(cfg, "checkpoint");
    const fs::path dataset_path = existing_file(cfg, "dataset");
    const fs::path out = prepare_out(cfg);
    const std::size_t samples = get_positive(kv, "samples", cfg.full_scale ? 100000 : 10000);
    const std::size_t grid_cols = get_positive(kv, "grid_cols", 8);
    std::vector<double> times;
    {
        std::stringstream ss(kv.get_string("times", "2,10,20"));
        for (std::string item; std::getline(ss, item, ',');) {
            KeyValues one;
            one.set("t", item);
            times.push_back(get_positive_double(one, "t", 1.0));
        }
        if (times.empty()) throw ConfigError("'times' is empty");
    }

    const model::PVae m = model::load_model(ckpt);
    const data::Dataset ds = data::load(dataset_path);
    const auto& seq = pick_sequence(ds, get_count(kv, "sequence", 0));
    const std::size_t frame_index = get_count(kv, "frame", 0);
    if (frame_index >= seq.frames.size()) throw ConfigError("frame out of range");
    const Frame& reference = seq.frames[frame_index];
    const cones::EventEmbedding emb = embedding_from(kv);

    Outcome o;
    o.out_dir = out;
    const double slope = resolve_slope(cfg, m, ds, emb, o.summary);
    const geom::PoincarePoint apex_latent = m.encode(reference).mean();
    const cones::LightCone cone(emb.at(apex_latent, 0.0), slope);
    const WrappedNormal proposal = WrappedNormal::standard(m.config().latent_n, m.config().c);
    const cones::EventMap embed = [&](const geom::PoincarePoint& z, double t) { return emb.at(z, t); };

    std::string csv = "t,samples,accepted,acceptance_rate\n";
    std::vector<std::vector<Frame>> grid;
    for (double t : times) {
        // Every t sees the same proposal draws, so the accepted sets are nested.
        RandomState rng = RandomState(cfg.seed()).split(kExperimentStream);
        cones::SamplingOptions sopt;
        sopt.max_trials = samples;
        std::vector<geom::PoincarePoint> accepted;
        std::size_t n_acc = 0;
        try {
            const auto s = cones::sample_in_section(std::span(&cone, 1), t, proposal, embed, rng, sopt);
            n_acc = s.accepted();
            accepted.assign(s.latents.begin(), s.latents.begin() + static_cast<std::ptrdiff_t>(std::min(grid_cols, n_acc)));
        } catch (const ZeroAccepted&) {
            n_acc = 0;
        }
        const double rate = static_cast<double>(n_acc) / static_cast<double>(samples);
        csv += csv_join({format_double(t), std::to_string(samples), std::to_string(n_acc), format_double(rate)});
        o.summary.set("acceptance_t" + format_double(t), format_double(rate));
        grid.push_back(m.decode(accepted));
    }
    {
        RandomState rng = RandomState(cfg.seed()).split(kExperimentStream);
        std::vector<geom::PoincarePoint> free;
        for (std::size_t i = 0; i < grid_cols; ++i) free.push_back(sample(proposal, rng));
        grid.push_back(m.decode(free));
        csv += csv_join({"unconstrained", std::to_string(samples), std::to_string(samples), "1"});
    }
    o.files = {out / "acceptance.csv", out / "samples_grid.pgm", out / "reference.pgm"};
    io::write_text(o.files[0], csv);
    write_pgm_grid(o.files[1], grid, m.config().image_side);
    write_pgm(o.files[2], reference);
    return o;
}

Outcome cmd_predict(const RunConfig& cfg) {
    check_keys(cfg, with({"checkpoint", "dataset", "sequence", "prefix", "T", "k", "trials", "candidates",
                          "branches", "proposal_sigma", "slope", "rho", "dt", "static"},
                         kApertureKeys));
    const auto& kv = cfg.values;
    const fs::path ckpt = existing_file(cfg, "checkpoint");
    const fs::path dataset_path = existing_file(cfg, "dataset");
    const fs::path out = prepare_out(cfg);
    const std::size_t prefix = get_positive(kv, "prefix", 2);
    const std::size_t T = get_positive(kv, "T", 3);
    const std::size_t k = get_positive(kv, "k", 2);
    const std::size_t trials = get_positive(kv, "trials", 5000);
    const std::size_t candidates = get_positive(kv, "candidates", 256);
    const std::size_t branches = get_positive(kv, "branches", 3);
    const double sigma = get_positive_double(kv, "proposal_sigma", 0.5);
    const bool is_static = kv.get_bool("static", false);
    if (T < prefix) throw ConfigError("T must be at least the prefix length");
    const auto started = Clock::now();

    const model::PVae m = model::load_model(ckpt);
    const data::Dataset ds = data::load(dataset_path);
    const auto& seq = pick_sequence(ds, get_count(kv, "sequence", 0));
    if (prefix > seq.frames.size()) throw ConfigError("prefix longer than the sequence");
    std::vector<Frame> observed;
    for (std::size_t i = 0; i < prefix; ++i) observed.push_back(is_static ? seq.frames[0] : seq.frames[i]);
    const Frame& reference = observed.front();
    const cones::EventEmbedding emb = embedding_from(kv);
    const std::size_t n = m.config().latent_n;

    Outcome o;
    o.out_dir = out;
    const double slope = resolve_slope(cfg, m, ds, emb, o.summary);
    const auto prefix_events = model::embed_sequence(m, observed, emb);
    std::vector<cones::LightCone> prefix_cones;
    for (const auto& e : prefix_events) prefix_cones.emplace_back(e.event, slope);

    std::vector<std::size_t> steps;
    for (std::size_t tau = prefix - 1 + k; tau < T; tau += k) steps.push_back(tau);
    steps.push_back(T);

    auto header = [&](std::vector<std::string> h, const std::string& prefix_name, bool with_x) {
        auto z = vector_header(prefix_name, n);
        h.insert(h.end(), z.begin(), z.end());
        if (with_x) {
            auto x = vector_header("x", n);
            h.insert(h.end(), x.begin(), x.end());
        }
        return csv_join(h);
    };
    std::string report = "branch,time,cones,attempted,accepted,acceptance_rate,chosen,chosen_ssim\n";
    std::string cones_csv = header({"branch", "cone", "t", "slope"}, "x", false);
    std::string samples_csv = header({"branch", "time", "index", "chosen"}, "z", true);
    std::vector<std::vector<Frame>> grid;
    std::optional<ZeroAccepted> failure;

    auto flush = [&] {
        o.files = {out / "report.csv", out / "cones.csv", out / "samples.csv"};
        io::write_text(o.files[0], report);
        io::write_text(o.files[1], cones_csv);
        io::write_text(o.files[2], samples_csv);
        o.files.push_back(out / "rollout_grid.pgm");
        write_pgm_grid(o.files.back(), grid, m.config().image_side);
    };

    auto add_cone_row = [&](std::size_t b, std::size_t idx, const cones::LightCone& c) {
        std::vector<std::string> row{std::to_string(b), std::to_string(idx), format_double(c.apex.t), format_double(c.slope)};
        append_vector(row, c.apex.x);
        cones_csv += csv_join(row);
    };

    const RandomState root = RandomState(cfg.seed()).split(kPredictStream);
    for (std::size_t b = 0; b < branches && !failure; ++b) {
        RandomState rng = root.split(b);
        std::vector<cones::LightCone> cset = prefix_cones;
        for (std::size_t i = 0; i < cset.size(); ++i) add_cone_row(b, i, cset[i]);
        geom::PoincarePoint latest = prefix_events.back().latent;
        std::vector<Frame> row = observed;
        for (std::size_t tau : steps) {
            const double t = static_cast<double>(tau) * emb.dt;
            const auto t0 = Clock::now();
            if (cones::section_feasibility(cset, t) == cones::Feasibility::Empty) {
                const auto earliest = cones::earliest_feasible_time(cset, t + 1e3 * emb.dt, 1e-6);
                std::string msg = "empty cone intersection at t=" + format_double(t);
                msg += earliest ? "; earliest feasible time " + format_double(*earliest) : "; no feasible time found";
                o.summary.set("earliest_feasible_time", earliest ? format_double(*earliest) : "none");
                failure.emplace(msg, 0);
                break;
            }
            cones::SectionSamples s;
            try {
                cones::SamplingOptions sopt;
                sopt.max_trials = trials;
                sopt.max_accept = candidates;
                s = cones::sample_in_section(cset, t, WrappedNormal(latest, sigma),
                                             [&](const geom::PoincarePoint& z, double tt) { return emb.at(z, tt); },
                                             rng, sopt);
            } catch (const ZeroAccepted& e) {
                const auto earliest = cones::earliest_feasible_time(cset, t + 1e3 * emb.dt, 1e-6);
                o.summary.set("earliest_feasible_time", earliest ? format_double(*earliest) : "none");
                failure.emplace(std::string(e.what()) + " at t=" + format_double(t), e.attempted());
                break;
            }
            const auto decoded = m.decode(s.latents);
            const std::size_t idx = choose(decoded, reference);
            const double score = ssim(decoded[idx], reference);
            const double cone_ms = ms_since(t0);
            report += csv_join({std::to_string(b), std::to_string(tau), std::to_string(cset.size()),
                                std::to_string(s.attempted), std::to_string(s.accepted()),
                                format_double(s.acceptance_rate), std::to_string(idx), format_double(score)});
            // Wall time is reported in the manifest only, so CSVs stay reproducible.
            o.summary.set("cone_ms.b" + std::to_string(b) + ".t" + std::to_string(tau), format_double(std::round(cone_ms)));
            for (std::size_t i = 0; i < s.accepted(); ++i) {
                std::vector<std::string> r{std::to_string(b), std::to_string(tau), std::to_string(i), i == idx ? "1" : "0"};
                append_vector(r, s.latents[i].coords());
                append_vector(r, s.events[i].x);
                samples_csv += csv_join(r);
            }
            row.push_back(decoded[idx]);
            if (tau < T) {
                cset.emplace_back(s.events[idx], slope);
                add_cone_row(b, cset.size() - 1, cset.back());
                latest = s.latents[idx];
            } else {
                o.summary.set("final_ssim.b" + std::to_string(b), format_double(score));
                o.summary.set("final_cones", std::to_string(cset.size()));
                const fs::path p = out / ("prediction_b" + std::to_string(b) + ".pgm");
                write_pgm(p, decoded[idx]);
                o.files.push_back(p);
            }
        }
        grid.push_back(std::move(row));
    }
    const auto predictions = o.files;
    flush();
    o.files.insert(o.files.end(), predictions.begin(), predictions.end());
    if (failure) {
        o.summary.set("status", "empty_intersection");
        write_manifest(out, "predict", cfg, o, ms_since(started));
        throw *failure;
    }
    return o;
}

Outcome cmd_probe(const RunConfig& cfg) {
    check_keys(cfg, {"checkpoint", "dataset", "sequence", "frame", "direction", "horizon", "k", "trials",
                     "proposal_sigma", "slope", "rho", "dt"});
    const auto& kv = cfg.values;
    const fs::path ckpt = existing_file(cfg, "checkpoint");
    const fs::path dataset_path = existing_file(cfg, "dataset");
    const fs::path out = prepare_out(cfg);
    const std::string direction = kv.get_string("direction", "future");
    if (direction != "future" && direction != "past") throw ConfigError("direction must be future or past");
    const double horizon = kv.get_double("horizon", 2.0);
    if (horizon < 0.0) throw ConfigError("horizon must not be negative");
    const std::size_t k = get_positive(kv, "k", 8);

    const model::PVae m = model::load_model(ckpt);
    const data::Dataset ds = data::load(dataset_path);
    const auto& seq = pick_sequence(ds, get_count(kv, "sequence", 0));
    const std::size_t frame_index = get_count(kv, "frame", 0);
    if (frame_index >= seq.frames.size()) throw ConfigError("frame out of range");
    const cones::EventEmbedding emb = embedding_from(kv);

    cones::ProbeOptions popt;
    popt.slope = get_positive_double(kv, "slope", 1.0);
    popt.max_trials = get_positive(kv, "trials", 100000);
    popt.embedding = emb;
    const geom::PoincarePoint z = m.encode(seq.frames[frame_index]).mean();
    const cones::EmbeddedFrameEvent state = emb.frame(z, static_cast<int>(frame_index));
    // At horizon 0 the section is the apex itself, so the proposal collapses to it.
    const double sigma = horizon > 0.0 ? get_positive_double(kv, "proposal_sigma", 0.5) : 1e-12;
    const WrappedNormal proposal(z, sigma);
    RandomState rng = RandomState(cfg.seed()).split(kProbeStream);
    const auto s = direction == "future" ? cones::probe_futures(state, horizon, proposal, rng, k, popt)
                                         : cones::probe_pasts(state, horizon, proposal, rng, k, popt);

    const cones::LightCone cone(state.event, popt.slope,
                                direction == "future" ? cones::Orientation::Future : cones::Orientation::Past);
    const std::size_t n = m.config().latent_n;
    std::vector<std::string> h{"index", "t", "in_cone"};
    for (const auto& c : vector_header("z", n)) h.push_back(c);
    for (const auto& c : vector_header("x", n)) h.push_back(c);
    std::string csv = csv_join(h);
    for (std::size_t i = 0; i < s.accepted(); ++i) {
        std::vector<std::string> r{std::to_string(i), format_double(s.events[i].t),
                                   cones::contains(cone, s.events[i]) ? "1" : "0"};
        append_vector(r, s.latents[i].coords());
        append_vector(r, s.events[i].x);
        csv += csv_join(r);
    }
    std::vector<Frame> row{m.decode(z)};
    for (const auto& f : m.decode(s.latents)) row.push_back(f);

    Outcome o;
    o.out_dir = out;
    o.files = {out / "probe.csv", out / "gallery.pgm"};
    io::write_text(o.files[0], csv);
    write_pgm_grid(o.files[1], {row}, m.config().image_side);
    o.summary.set("direction", direction);
    o.summary.set("horizon", format_double(horizon));
    o.summary.set("plane_t", format_double(s.events.empty() ? state.event.t : s.events.front().t));
    o.summary.set("accepted", std::to_string(s.accepted()));
    o.summary.set("attempted", std::to_string(s.attempted));
    return o;
}

Outcome cmd_aperture(const RunConfig& cfg) {
    check_keys(cfg, with({"checkpoint", "dataset", "rho", "dt"}, kApertureKeys));
    const fs::path ckpt = existing_file(cfg, "checkpoint");
    const fs::path dataset_path = existing_file(cfg, "dataset");
    const fs::path out = prepare_out(cfg);
    const model::PVae m = model::load_model(ckpt);
    const data::Dataset ds = data::load(dataset_path);
    const ApertureResult r = run_aperture(m, ds, cfg.values, embedding_from(cfg.values), cfg.seed());

    Outcome o;
    o.out_dir = out;
    o.files = {out / "aperture.txt"};
    io::write_text(o.files[0], "slope=" + format_double(r.slope) + "\n");
    o.summary.set("slope", format_double(r.slope));
    o.summary.set("lower_bound", format_double(r.lower));
    o.summary.set("positive_sequences", std::to_string(r.positives));
    o.summary.set("negative_pairs", std::to_string(r.negatives));
    return o;
}

const std::vector<std::string>& command_names() {
    static const std::vector<std::string> names{"train", "gen-data", "experiment1", "predict", "probe", "aperture"};
    return names;
}

int run_command(const std::string& name, const RunConfig& cfg, std::ostream& out, std::ostream& err) {
    using Fn = Outcome (*)(const RunConfig&);
    Fn fn = nullptr;
    if (name == "gen-data") fn = cmd_gen_data;
    if (name == "train") fn = cmd_train;
    if (name == "experiment1") fn = cmd_experiment1;
    if (name == "predict") fn = cmd_predict;
    if (name == "probe") fn = cmd_probe;
    if (name == "aperture") fn = cmd_aperture;
    if (!fn) {
        err << "error: unknown command '" << name << "'\n";
        return kExitConfig;
    }
    const auto t0 = Clock::now();
    auto finish = [&](const Outcome& o) {
        // A failed run still gets a manifest when its output directory exists.
        if (!o.out_dir.empty() && fs::is_directory(o.out_dir)) write_manifest(o.out_dir, name, cfg, o, ms_since(t0));
    };
    try {
        const Outcome o = fn(cfg);
        finish(o);
        for (const auto& [k, v] : o.summary.entries()) out << k << '=' << v << '\n';
        out << "wrote " << o.out_dir.string() << '\n';
        return kExitOk;
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const NumericalFailure& e) {
        err << "numerical failure: " << e.what() << '\n';
        return kExitNumerical;
    } catch (const ZeroAccepted& e) {
        err << "empty intersection: " << e.what() << '\n';
        return kExitEmptyIntersection;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kExitFailure;
    }
}

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> cells;
    std::stringstream ss(line);
    for (std::string c; std::getline(ss, c, ',');) cells.push_back(c);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    return cells;
}

}  // namespace lightcone::pipeline
