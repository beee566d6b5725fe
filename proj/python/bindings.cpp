#include "lightcone/error.hpp"
#include "lightcone/geometry.hpp"
#include "lightcone/image.hpp"
#include "lightcone/light_cones.hpp"
#include "lightcone/pipeline.hpp"
#include "lightcone/pvae.hpp"
#include "lightcone/synth_data.hpp"
#include "lightcone/wrapped_normal.hpp"

#include <pybind11/eigen.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <sstream>

namespace py = pybind11;
using namespace lightcone;
using geom::PoincarePoint;
using geom::Vector;

namespace {

using Images = py::array_t<double, py::array::c_style | py::array::forcecast>;

std::vector<Frame> frames_from_array(const Images& a) {
    if (a.ndim() != 3 || a.shape(1) != a.shape(2)) throw DimensionMismatch("expected an (N, side, side) array");
    const auto side = static_cast<std::size_t>(a.shape(1));
    const double* p = a.data();
    std::vector<Frame> out;
    for (py::ssize_t i = 0; i < a.shape(0); ++i, p += side * side) {
        out.emplace_back(side, std::vector<double>(p, p + side * side));
    }
    return out;
}

py::array_t<double> frames_to_array(const std::vector<Frame>& frames, std::size_t side) {
    py::array_t<double> a({frames.size(), side, side});
    double* p = a.mutable_data();
    for (const Frame& f : frames) p = std::copy(f.pixels.begin(), f.pixels.end(), p);
    return a;
}

Frame frame_from_array(const Images& a) {
    if (a.ndim() != 2 || a.shape(0) != a.shape(1)) throw DimensionMismatch("expected a square (side, side) array");
    const auto side = static_cast<std::size_t>(a.shape(0));
    return Frame(side, std::vector<double>(a.data(), a.data() + side * side));
}

Eigen::MatrixXd points_to_matrix(const std::vector<PoincarePoint>& pts, std::size_t n) {
    Eigen::MatrixXd m(pts.size(), n);
    for (std::size_t i = 0; i < pts.size(); ++i) m.row(static_cast<Eigen::Index>(i)) = pts[i].coords().transpose();
    return m;
}

std::vector<PoincarePoint> matrix_to_points(const Eigen::MatrixXd& m, double c) {
    std::vector<PoincarePoint> pts;
    for (Eigen::Index i = 0; i < m.rows(); ++i) pts.emplace_back(m.row(i).transpose(), c);
    return pts;
}

cones::Orientation parse_orientation(const std::string& s) {
    if (s == "future") return cones::Orientation::Future;
    if (s == "past") return cones::Orientation::Past;
    throw std::invalid_argument("orientation must be 'future' or 'past'");
}

}  // namespace

PYBIND11_MODULE(_lightcone, m) {
    m.doc() = "Hyperbolic latent light cones: geometry, wrapped normals, cone sampling and the P-VAE pipeline.";
    m.attr("__version__") = LIGHTCONE_VERSION;

    auto base = py::register_exception<Error>(m, "Error");
    py::register_exception<DimensionMismatch>(m, "DimensionMismatch", base.ptr());
    py::register_exception<NonTimelikeSegment>(m, "NonTimelikeSegment", base.ptr());
    py::register_exception<ZeroAccepted>(m, "ZeroAccepted", base.ptr());
    py::register_exception<FormatError>(m, "FormatError", base.ptr());
    py::register_exception<ConfigError>(m, "ConfigError", base.ptr());
    py::register_exception<NumericalFailure>(m, "NumericalFailure", base.ptr());

    // Geometry. Ball points travel as plain coordinate vectors plus the curvature.
    m.def("interval_classify",
          [](double t0, const Vector& x0, double t1, const Vector& x1) {
              return std::string(geom::to_string(geom::interval_classify({t0, x0}, {t1, x1})));
          },
          py::arg("t0"), py::arg("x0"), py::arg("t1"), py::arg("x1"));
    m.def("poincare_distance",
          [](const Vector& x, const Vector& y, double c) {
              return geom::poincare_distance(PoincarePoint(x, c), PoincarePoint(y, c));
          },
          py::arg("x"), py::arg("y"), py::arg("c") = 1.0);
    m.def("mobius_add", &geom::mobius_add, py::arg("x"), py::arg("y"), py::arg("c") = 1.0);
    m.def("exp_map",
          [](const Vector& base, const Vector& u, double c) {
              return Vector(geom::exp_map(PoincarePoint(base, c), u).coords());
          },
          py::arg("base"), py::arg("u"), py::arg("c") = 1.0,
          "Unit-speed exponential map: the distance from base to the result is |u|.");
    m.def("log_map",
          [](const Vector& base, const Vector& target, double c) {
              return geom::log_map(PoincarePoint(base, c), PoincarePoint(target, c));
          },
          py::arg("base"), py::arg("target"), py::arg("c") = 1.0);
    m.def("to_lorentz", [](const Vector& x, double c) { return Vector(geom::to_lorentz(PoincarePoint(x, c)).coords()); },
          py::arg("x"), py::arg("c") = 1.0);
    m.def("to_poincare",
          [](const Vector& w, double c) { return Vector(geom::to_poincare(geom::LorentzPoint(w), c).coords()); },
          py::arg("w"), py::arg("c") = 1.0);

    // Wrapped normal.
    m.def("wn_sample",
          [](const Vector& mean, const Vector& scale, double c, std::size_t count, std::uint64_t seed) {
              const WrappedNormal d(PoincarePoint(mean, c), scale);
              RandomState rng(seed);
              std::vector<PoincarePoint> pts;
              for (std::size_t i = 0; i < count; ++i) pts.push_back(sample(d, rng));
              return points_to_matrix(pts, d.dim());
          },
          py::arg("mean"), py::arg("scale"), py::arg("c") = 1.0, py::arg("count") = 1, py::arg("seed") = 0);
    m.def("wn_log_density",
          [](const Vector& mean, const Vector& scale, double c, const Vector& z) {
              return log_density(WrappedNormal(PoincarePoint(mean, c), scale), PoincarePoint(z, c));
          },
          py::arg("mean"), py::arg("scale"), py::arg("c"), py::arg("z"));
    m.def("wn_kl",
          [](const Vector& qm, const Vector& qs, const Vector& pm, const Vector& ps, double c, std::size_t n,
             std::uint64_t seed) {
              RandomState rng(seed);
              const auto k = kl_monte_carlo_stats(WrappedNormal(PoincarePoint(qm, c), qs),
                                                  WrappedNormal(PoincarePoint(pm, c), ps), n, rng);
              return py::make_tuple(k.value, k.standard_error);
          },
          py::arg("q_mean"), py::arg("q_scale"), py::arg("p_mean"), py::arg("p_scale"), py::arg("c") = 1.0,
          py::arg("samples") = 1000, py::arg("seed") = 0, "Monte Carlo KL(q || p); returns (value, standard_error).");

    // Light cones.
    py::class_<cones::LightCone>(m, "LightCone")
        .def(py::init([](double t, const Vector& x, double slope, const std::string& orientation) {
                 return cones::LightCone({t, x}, slope, parse_orientation(orientation));
             }),
             py::arg("t"), py::arg("x"), py::arg("slope") = 1.0, py::arg("orientation") = "future")
        .def_property_readonly("t", [](const cones::LightCone& c) { return c.apex.t; })
        .def_property_readonly("x", [](const cones::LightCone& c) { return c.apex.x; })
        .def_readonly("slope", &cones::LightCone::slope)
        .def_property_readonly("orientation", [](const cones::LightCone& c) {
            return c.orientation == cones::Orientation::Future ? "future" : "past";
        })
        .def("contains", [](const cones::LightCone& c, double t, const Vector& x) { return cones::contains(c, {t, x}); },
             py::arg("t"), py::arg("x"))
        .def("classify",
             [](const cones::LightCone& c, double t, const Vector& x) {
                 return std::string(cones::to_string(cones::boundary_classify(c, {t, x})));
             },
             py::arg("t"), py::arg("x"))
        .def("section_radius", [](const cones::LightCone& c, double t) { return cones::section_radius({c, t}); },
             py::arg("t"));

    m.def("intersection_contains",
          [](const std::vector<cones::LightCone>& cs, double t, const Vector& x) {
              return cones::intersection_contains(cs, {t, x});
          },
          py::arg("cones"), py::arg("t"), py::arg("x"));
    m.def("section_feasibility",
          [](const std::vector<cones::LightCone>& cs, double t) {
              switch (cones::section_feasibility(cs, t)) {
                  case cones::Feasibility::Empty: return "empty";
                  case cones::Feasibility::NonEmpty: return "nonempty";
                  default: return "unknown";
              }
          },
          py::arg("cones"), py::arg("t"));
    m.def("earliest_feasible_time",
          [](const std::vector<cones::LightCone>& cs, double t_max, double resolution) {
              return cones::earliest_feasible_time(cs, t_max, resolution);
          },
          py::arg("cones"), py::arg("t_max"),
          py::arg("resolution") = 1e-6);
    m.def("embed_latent",
          [](const Vector& z, double c, double rho) {
              return cones::EventEmbedding{1.0, rho}.spatial(PoincarePoint(z, c));
          },
          py::arg("z"), py::arg("c") = 1.0, py::arg("rho") = 1.0, "Spatial event coordinates of a latent code.");
    m.def("sample_in_section",
          [](const std::vector<cones::LightCone>& cs, double t, const Vector& mean, const Vector& scale, double c,
             std::uint64_t seed, std::size_t max_trials, std::size_t max_accept, double rho) {
              const cones::EventEmbedding emb{1.0, rho};
              RandomState rng(seed);
              cones::SamplingOptions opt;
              opt.max_trials = max_trials;
              if (max_accept > 0) opt.max_accept = max_accept;
              const auto s = cones::sample_in_section(
                  cs, t, WrappedNormal(PoincarePoint(mean, c), scale),
                  [&](const PoincarePoint& z, double tt) { return emb.at(z, tt); }, rng, opt);
              Eigen::MatrixXd events(s.events.size(), cs.front().apex.dim());
              for (std::size_t i = 0; i < s.events.size(); ++i) {
                  events.row(static_cast<Eigen::Index>(i)) = s.events[i].x.transpose();
              }
              py::dict d;
              d["latents"] = points_to_matrix(s.latents, static_cast<std::size_t>(mean.size()));
              d["events"] = events;
              d["attempted"] = s.attempted;
              d["acceptance_rate"] = s.acceptance_rate;
              return d;
          },
          py::arg("cones"), py::arg("t"), py::arg("mean"), py::arg("scale"), py::arg("c") = 1.0, py::arg("seed") = 0,
          py::arg("max_trials") = 100000, py::arg("max_accept") = 0, py::arg("rho") = 1.0);

    // Data.
    m.def("generate_dataset",
          [](std::size_t n_sequences, std::size_t frames_per_seq, std::size_t image_side, double v_max, double jitter,
             std::uint64_t seed) {
              data::GeneratorConfig g;
              g.n_sequences = n_sequences;
              g.frames_per_seq = frames_per_seq;
              g.image_side = image_side;
              g.v_max = v_max;
              g.jitter = jitter;
              g.seed = seed;
              const data::Dataset ds = data::generate(g);
              py::array_t<double> a({ds.sequences.size(), ds.frames_per_sequence(), ds.image_side, ds.image_side});
              double* p = a.mutable_data();
              for (const auto& s : ds.sequences) {
                  for (const Frame& f : s.frames) p = std::copy(f.pixels.begin(), f.pixels.end(), p);
              }
              return a;
          },
          py::arg("n_sequences") = 2000, py::arg("frames_per_seq") = 30, py::arg("image_side") = 32,
          py::arg("v_max") = 2.0, py::arg("jitter") = 0.1, py::arg("seed") = 7,
          "Array of shape (sequences, frames, side, side) with values in [0, 1].");
    m.def("load_dataset",
          [](const std::filesystem::path& path) {
              const data::Dataset ds = data::load(path);
              py::array_t<double> a({ds.sequences.size(), ds.frames_per_sequence(), ds.image_side, ds.image_side});
              double* p = a.mutable_data();
              for (const auto& s : ds.sequences) {
                  for (const Frame& f : s.frames) p = std::copy(f.pixels.begin(), f.pixels.end(), p);
              }
              return a;
          },
          py::arg("path"));

    // Model.
    py::class_<model::PVae>(m, "PVae")
        .def_static("load", &model::load_model, py::arg("path"))
        .def_property_readonly("latent_n", [](const model::PVae& v) { return v.config().latent_n; })
        .def_property_readonly("image_side", [](const model::PVae& v) { return v.config().image_side; })
        .def_property_readonly("c", [](const model::PVae& v) { return v.config().c; })
        .def("encode",
             [](const model::PVae& v, const Images& images) {
                 return points_to_matrix(v.encode_means(frames_from_array(images)), v.config().latent_n);
             },
             py::arg("images"), "Posterior means, one row per (side, side) image.")
        .def("encode_scale",
             [](const model::PVae& v, const Images& image) { return Vector(v.encode(frame_from_array(image)).scale()); },
             py::arg("image"))
        .def("decode",
             [](const model::PVae& v, const Eigen::MatrixXd& z) {
                 return frames_to_array(v.decode(matrix_to_points(z, v.config().c)), v.config().image_side);
             },
             py::arg("latents"));

    // Pipeline.
    m.def("ssim", [](const Images& a, const Images& b) { return pipeline::ssim(frame_from_array(a), frame_from_array(b)); },
          py::arg("a"), py::arg("b"));
    m.def("choose",
          [](const Images& decoded, const Images& reference) {
              return pipeline::choose(frames_from_array(decoded), frame_from_array(reference));
          },
          py::arg("decoded"), py::arg("reference"));
    m.def("command_names", &pipeline::command_names);
    m.def("run_command",
          [](const std::string& name, const std::filesystem::path& config, std::optional<std::uint64_t> seed,
             std::optional<std::filesystem::path> out) {
              std::ostringstream o, e;
              int code;
              try {
                  code = pipeline::run_command(name, pipeline::load_run_config(config, seed, out), o, e);
              } catch (const ConfigError& err) {
                  e << "config error: " << err.what() << '\n';
                  code = pipeline::kExitConfig;
              }
              return py::make_tuple(code, o.str(), e.str());
          },
          py::arg("command"), py::arg("config"), py::arg("seed") = py::none(), py::arg("out") = py::none(),
          "Runs one CLI command; returns (exit_code, stdout, stderr).");
}
