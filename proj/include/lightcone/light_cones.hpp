#pragma once

// Light cones in flat (1 + n)-dimensional space-time: causal membership,
// conic sections, intersections of several cones, and rejection sampling of
// latent codes that land inside an intersection.

#include "lightcone/geometry.hpp"
#include "lightcone/rng.hpp"
#include "lightcone/wrapped_normal.hpp"

#include <cstddef>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <utility>
#include <vector>

namespace lightcone::cones {

using geom::Event;
using geom::PoincarePoint;

enum class Orientation { Future, Past };

struct LightCone {
    Event apex;
    /// Maximum spatial speed (space units per time unit). 1 is the 45 degree cone.
    double slope = 1.0;
    Orientation orientation = Orientation::Future;

    LightCone(Event apex, double slope = 1.0, Orientation orientation = Orientation::Future);
};

/// The cone cut by the plane of constant time t.
struct ConicSection {
    LightCone cone;
    double t;

    ConicSection(LightCone cone, double t);
};

/// A frame placed in space-time: its index fixes the time, its latent code the position.
struct EmbeddedFrameEvent {
    int frame_index = 0;
    Event event;
    PoincarePoint latent;
};

/// Maps latent ball codes to events. Time is frame_index * dt; the spatial part
/// is rho times the spatial block of the hyperboloid image of the code (the time
/// block of the hyperboloid is discarded because it is a function of the norm).
struct EventEmbedding {
    double dt = 1.0;
    double rho = 1.0;

    geom::Vector spatial(const PoincarePoint& z) const;
    Event at(const PoincarePoint& z, double t) const { return Event(t, spatial(z)); }
    EmbeddedFrameEvent frame(const PoincarePoint& z, int frame_index) const;
};

/// Membership in the closed cone. `tol` defaults to geom::default_tolerance of
/// the separation from the apex.
bool contains(const LightCone& cone, const Event& e, std::optional<double> tol = std::nullopt);

enum class Region { Interior, Boundary, Exterior };

const char* to_string(Region r);

/// Boundary iff | |dx| - slope |dt| | <= tol with the correct time ordering.
/// Interior or Boundary exactly when contains() is true.
Region boundary_classify(const LightCone& cone, const Event& e,
                         std::optional<double> tol = std::nullopt);

double section_radius(const ConicSection& s);

/// True iff e lies in every cone. Throws std::invalid_argument on an empty list.
bool intersection_contains(std::span<const LightCone> cones, const Event& e,
                           std::optional<double> tol = std::nullopt);

enum class Feasibility { Empty, NonEmpty, Unknown };

/// Does the intersection of the future cones' sections at time t contain a
/// point? Exact for one or two cones. For more, pairwise-disjoint sections prove
/// emptiness, and cyclic projection onto the section balls searches for a
/// witness; if neither settles it the answer is Unknown.
Feasibility section_feasibility(std::span<const LightCone> cones, double t);

/// section_feasibility() != Empty, so Unknown means "attempt sampling".
/// Throws std::invalid_argument if a cone is not future oriented.
bool section_intersection_nonempty(std::span<const LightCone> cones, double t);

/// Smallest t (within `resolution`) at which the sections may intersect.
/// nullopt when still empty at `t_max`.
std::optional<double> earliest_feasible_time(std::span<const LightCone> cones, double t_max,
                                             double resolution = 1e-6);

using EventMap = std::function<Event(const PoincarePoint&, double)>;

struct SamplingOptions {
    std::size_t max_trials = 100000;
    /// Stop early once this many samples were accepted.
    std::size_t max_accept = std::numeric_limits<std::size_t>::max();
    std::optional<double> tol;
};

struct SectionSamples {
    std::vector<Event> events;
    std::vector<PoincarePoint> latents;
    std::size_t attempted = 0;
    double acceptance_rate = 0.0;

    std::size_t accepted() const { return events.size(); }
};

/// Rejection sampler: draw a latent from `proposal`, place it on the t-plane
/// with `embed`, keep it iff it is inside every cone. Throws ZeroAccepted when
/// nothing is accepted within the trial budget.
SectionSamples sample_in_section(std::span<const LightCone> cones, double t,
                                 const WrappedNormal& proposal, const EventMap& embed,
                                 RandomState& rng, const SamplingOptions& options = {});

inline constexpr double kMinSlope = 1e-6;

/// Contrastive aperture estimate. Positive sequences give a lower bound (the
/// fastest observed consecutive motion); negative pairs faster than that give
/// an upper bound. Returns the midpoint of [L, min(U, margin L)], or 1.05 L
/// when no negative is informative. Never returns less than kMinSlope.
double estimate_aperture(std::span<const std::vector<EmbeddedFrameEvent>> positives,
                         std::span<const std::pair<EmbeddedFrameEvent, EmbeddedFrameEvent>> negatives,
                         double margin = 1.1);

struct ProbeOptions {
    double slope = 1.0;
    std::size_t max_trials = 100000;
    EventEmbedding embedding{};
};

/// Up to k events in the future cone of `state`, on the plane state.t + horizon.
SectionSamples probe_futures(const EmbeddedFrameEvent& state, double horizon,
                             const WrappedNormal& proposal, RandomState& rng, std::size_t k,
                             const ProbeOptions& options = {});

/// Mirror of probe_futures on the past cone, plane state.t - horizon.
SectionSamples probe_pasts(const EmbeddedFrameEvent& state, double horizon,
                           const WrappedNormal& proposal, RandomState& rng, std::size_t k,
                           const ProbeOptions& options = {});

}  // namespace lightcone::cones
