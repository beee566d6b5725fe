#include "lightcone/light_cones.hpp"

#include "lightcone/error.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace lightcone::cones {

using geom::Vector;

LightCone::LightCone(Event apex_, double slope_, Orientation orientation_)
    : apex(std::move(apex_)), slope(slope_), orientation(orientation_) {
    if (!(slope > 0.0) || !std::isfinite(slope)) {
        throw std::invalid_argument("LightCone: slope must be positive and finite");
    }
}

ConicSection::ConicSection(LightCone cone_, double t_) : cone(std::move(cone_)), t(t_) {
    const bool ok = cone.orientation == Orientation::Future ? t >= cone.apex.t : t <= cone.apex.t;
    if (!ok) throw std::invalid_argument("ConicSection: plane lies on the wrong side of the apex");
}

Vector EventEmbedding::spatial(const PoincarePoint& z) const {
    return rho * geom::to_lorentz(z).spatial();
}

EmbeddedFrameEvent EventEmbedding::frame(const PoincarePoint& z, int frame_index) const {
    return EmbeddedFrameEvent{frame_index, at(z, frame_index * dt), z};
}

namespace {

// Elapsed time from the apex in the cone's own direction, and the spatial offset.
std::pair<double, double> cone_coordinates(const LightCone& cone, const Event& e) {
    const Event d = e - cone.apex;
    const double elapsed = cone.orientation == Orientation::Future ? d.t : -d.t;
    return {elapsed, d.x.norm()};
}

double resolve_tol(const LightCone& cone, const Event& e, std::optional<double> tol) {
    if (tol) return *tol;
    return geom::default_tolerance(e - cone.apex);
}

}  // namespace

bool contains(const LightCone& cone, const Event& e, std::optional<double> tol) {
    const double eps = resolve_tol(cone, e, tol);
    const auto [elapsed, dist] = cone_coordinates(cone, e);
    return elapsed >= -eps && dist <= cone.slope * elapsed + eps;
}

const char* to_string(Region r) {
    switch (r) {
        case Region::Interior: return "interior";
        case Region::Boundary: return "boundary";
        case Region::Exterior: return "exterior";
    }
    return "?";
}

Region boundary_classify(const LightCone& cone, const Event& e, std::optional<double> tol) {
    const double eps = resolve_tol(cone, e, tol);
    const auto [elapsed, dist] = cone_coordinates(cone, e);
    if (elapsed < -eps) return Region::Exterior;
    const double gap = dist - cone.slope * elapsed;
    if (std::abs(gap) <= eps) return Region::Boundary;
    return gap < 0.0 ? Region::Interior : Region::Exterior;
}

double section_radius(const ConicSection& s) { return s.cone.slope * std::abs(s.t - s.cone.apex.t); }

bool intersection_contains(std::span<const LightCone> cones, const Event& e,
                           std::optional<double> tol) {
    if (cones.empty()) throw std::invalid_argument("intersection_contains: empty cone list");
    return std::all_of(cones.begin(), cones.end(),
                       [&](const LightCone& c) { return contains(c, e, tol); });
}

Feasibility section_feasibility(std::span<const LightCone> cones, double t) {
    if (cones.empty()) throw std::invalid_argument("section_feasibility: empty cone list");
    for (const auto& c : cones) {
        if (c.orientation != Orientation::Future) {
            throw std::invalid_argument("section_feasibility: cone is not future oriented");
        }
        if (c.apex.t > t) return Feasibility::Empty;
    }
    const std::size_t n = cones.size();
    std::vector<double> radius(n);
    for (std::size_t i = 0; i < n; ++i) radius[i] = cones[i].slope * (t - cones[i].apex.t);

    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            if ((cones[i].apex.x - cones[j].apex.x).norm() > radius[i] + radius[j]) {
                return Feasibility::Empty;
            }
        }
    }
    if (n <= 2) return Feasibility::NonEmpty;

    // Cyclic projection onto the section balls, started from the smallest ball.
    const auto smallest = std::min_element(radius.begin(), radius.end()) - radius.begin();
    Vector p = cones[static_cast<std::size_t>(smallest)].apex.x;
    auto inside_all = [&](const Vector& q) {
        for (std::size_t i = 0; i < n; ++i) {
            const double slack = 1e-12 * (1.0 + radius[i]);
            if ((q - cones[i].apex.x).norm() > radius[i] + slack) return false;
        }
        return true;
    };
    for (int sweep = 0; sweep < 2000; ++sweep) {
        if (inside_all(p)) return Feasibility::NonEmpty;
        for (std::size_t i = 0; i < n; ++i) {
            const Vector d = p - cones[i].apex.x;
            const double len = d.norm();
            if (len > radius[i]) p = cones[i].apex.x + (radius[i] / len) * d;
        }
    }
    return inside_all(p) ? Feasibility::NonEmpty : Feasibility::Unknown;
}

bool section_intersection_nonempty(std::span<const LightCone> cones, double t) {
    return section_feasibility(cones, t) != Feasibility::Empty;
}

std::optional<double> earliest_feasible_time(std::span<const LightCone> cones, double t_max,
                                             double resolution) {
    if (cones.empty()) throw std::invalid_argument("earliest_feasible_time: empty cone list");
    double lo = cones.front().apex.t;
    for (const auto& c : cones) lo = std::max(lo, c.apex.t);
    if (section_intersection_nonempty(cones, lo)) return lo;
    if (t_max < lo || !section_intersection_nonempty(cones, t_max)) return std::nullopt;
    double hi = t_max;
    while (hi - lo > resolution) {
        const double mid = 0.5 * (lo + hi);
        (section_intersection_nonempty(cones, mid) ? hi : lo) = mid;
    }
    return hi;
}

SectionSamples sample_in_section(std::span<const LightCone> cones, double t,
                                 const WrappedNormal& proposal, const EventMap& embed,
                                 RandomState& rng, const SamplingOptions& options) {
    if (cones.empty()) throw std::invalid_argument("sample_in_section: empty cone list");
    if (options.max_trials == 0) throw std::invalid_argument("sample_in_section: max_trials must be >= 1");
    SectionSamples out;
    while (out.attempted < options.max_trials && out.accepted() < options.max_accept) {
        PoincarePoint z = sample(proposal, rng);
        Event e = embed(z, t);
        ++out.attempted;
        if (intersection_contains(cones, e, options.tol)) {
            out.events.push_back(std::move(e));
            out.latents.push_back(std::move(z));
        }
    }
    out.acceptance_rate = static_cast<double>(out.accepted()) / static_cast<double>(out.attempted);
    if (out.events.empty()) {
        throw ZeroAccepted("sample_in_section: no sample accepted at t=" + std::to_string(t) +
                               " after " + std::to_string(out.attempted) + " trials",
                           out.attempted);
    }
    return out;
}

double estimate_aperture(std::span<const std::vector<EmbeddedFrameEvent>> positives,
                         std::span<const std::pair<EmbeddedFrameEvent, EmbeddedFrameEvent>> negatives,
                         double margin) {
    if (positives.empty()) throw std::invalid_argument("estimate_aperture: no positive sequences");
    double lower = 0.0;
    for (const auto& seq : positives) {
        if (seq.size() < 2) throw std::invalid_argument("estimate_aperture: sequence shorter than 2");
        for (std::size_t i = 1; i < seq.size(); ++i) {
            const Event d = seq[i].event - seq[i - 1].event;
            if (!(d.t > 0.0)) throw std::invalid_argument("estimate_aperture: non-increasing timestamps");
            lower = std::max(lower, d.x.norm() / d.t);
        }
    }
    double upper = std::numeric_limits<double>::infinity();
    for (const auto& [a, b] : negatives) {
        const Event d = b.event - a.event;
        const double dt = std::abs(d.t);
        if (dt == 0.0) continue;
        const double speed = d.x.norm() / dt;
        if (speed > lower) upper = std::min(upper, speed);
    }
    double slope;
    if (std::isinf(upper)) {
        slope = 1.05 * lower;
    } else {
        slope = 0.5 * (lower + std::min(upper, margin * lower));
    }
    return std::max(slope, kMinSlope);
}

namespace {

SectionSamples probe(const EmbeddedFrameEvent& state, double horizon, Orientation orientation,
                     const WrappedNormal& proposal, RandomState& rng, std::size_t k,
                     const ProbeOptions& options) {
    if (horizon < 0.0) throw std::invalid_argument("probe: horizon must be non-negative");
    if (k == 0) throw std::invalid_argument("probe: k must be >= 1");
    const LightCone cone(state.event, options.slope, orientation);
    const double t = orientation == Orientation::Future ? state.event.t + horizon
                                                        : state.event.t - horizon;
    const EventEmbedding& embedding = options.embedding;
    SamplingOptions sopt;
    sopt.max_trials = options.max_trials;
    sopt.max_accept = k;
    return sample_in_section(std::span(&cone, 1), t, proposal,
                             [&](const PoincarePoint& z, double time) { return embedding.at(z, time); },
                             rng, sopt);
}

}  // namespace

SectionSamples probe_futures(const EmbeddedFrameEvent& state, double horizon,
                             const WrappedNormal& proposal, RandomState& rng, std::size_t k,
                             const ProbeOptions& options) {
    return probe(state, horizon, Orientation::Future, proposal, rng, k, options);
}

SectionSamples probe_pasts(const EmbeddedFrameEvent& state, double horizon,
                           const WrappedNormal& proposal, RandomState& rng, std::size_t k,
                           const ProbeOptions& options) {
    return probe(state, horizon, Orientation::Past, proposal, rng, k, options);
}

}  // namespace lightcone::cones
