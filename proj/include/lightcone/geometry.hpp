#pragma once

// Flat Minkowski space-time and the Poincare ball / hyperboloid models of
// hyperbolic space. Everything here is a pure function of its arguments.

#include <Eigen/Dense>

#include <cstddef>
#include <optional>
#include <span>

namespace lightcone::geom {

using Vector = Eigen::VectorXd;

/// A space-time point: one time coordinate and n spatial coordinates.
struct Event {
    double t = 0.0;
    Vector x;

    Event() = default;
    Event(double time, Vector space);

    std::size_t dim() const { return static_cast<std::size_t>(x.size()); }
};

Event operator+(const Event& a, const Event& b);
Event operator-(const Event& a, const Event& b);
Event operator*(double s, const Event& e);

enum class IntervalClass { Timelike, Spacelike, Lightlike };

const char* to_string(IntervalClass c);

/// Relative null-separation tolerance 1e-9 * (1 + |delta|^2), where |delta| is
/// the Euclidean length of the separation (time and space together).
double default_tolerance(const Event& delta);

/// -a.t*b.t + <a.x, b.x>.
double minkowski_inner(const Event& a, const Event& b);

/// Same form on packed coordinates (index 0 is time).
double minkowski_inner(const Vector& a, const Vector& b);

/// Sign class of the separation y - x. `tol` defaults to default_tolerance(y - x).
IntervalClass interval_classify(const Event& x, const Event& y,
                                std::optional<double> tol = std::nullopt);

/// Proper time along a piecewise-straight path. Throws NonTimelikeSegment when a
/// segment is spacelike by more than the tolerance, std::invalid_argument when
/// the path has fewer than two events or time does not strictly increase.
double proper_time(std::span<const Event> path, std::optional<double> tol = std::nullopt);

/// Point strictly inside the ball of radius 1/sqrt(c).
class PoincarePoint {
public:
    /// Throws std::invalid_argument unless c > 0, coordinates finite and c|v|^2 < 1.
    PoincarePoint(Vector v, double c);

    static PoincarePoint origin(std::size_t n, double c);

    /// Like the constructor but pulls points on or outside the boundary back to
    /// c|v|^2 = 1 - kBoundaryMargin and marks them saturated.
    static PoincarePoint clamped(Vector v, double c);

    static constexpr double kBoundaryMargin = 1e-12;

    const Vector& coords() const { return v_; }
    double curvature() const { return c_; }
    std::size_t dim() const { return static_cast<std::size_t>(v_.size()); }
    bool saturated() const { return saturated_; }

private:
    PoincarePoint(Vector v, double c, bool saturated);

    Vector v_;
    double c_;
    bool saturated_ = false;
};

/// Point on the upper sheet of the unit hyperboloid <w,w> = -1, index 0 time-like.
class LorentzPoint {
public:
    explicit LorentzPoint(Vector w);

    const Vector& coords() const { return w_; }
    double time() const { return w_[0]; }
    Vector spatial() const { return w_.tail(w_.size() - 1); }
    std::size_t dim() const { return static_cast<std::size_t>(w_.size()) - 1; }

private:
    Vector w_;
};

/// Square root of the metric scaling, 2 / (1 - c|v|^2).
double conformal_factor(const PoincarePoint& p);

double poincare_distance(const PoincarePoint& x, const PoincarePoint& y);

/// Mobius addition on the ball of curvature c (raw coordinates).
Vector mobius_add(const Vector& x, const Vector& y, double c);

/// Poincare ball -> hyperboloid. Coordinates are rescaled by sqrt(c) first, so
/// the result always lives on the unit hyperboloid.
LorentzPoint to_lorentz(const PoincarePoint& p);

/// Hyperboloid -> Poincare ball of curvature c (inverse of to_lorentz).
PoincarePoint to_poincare(const LorentzPoint& w, double c = 1.0);

/// Exponential map with unit-speed tangent coordinates: the geodesic distance
/// from `base` to the result equals |u|. Equivalently the textbook map applied
/// to u / lambda(base). Saturates (see PoincarePoint::clamped) instead of
/// leaving the ball.
PoincarePoint exp_map(const PoincarePoint& base, const Vector& u);

/// Inverse of exp_map; |log_map(b, t)| == poincare_distance(b, t).
Vector log_map(const PoincarePoint& base, const PoincarePoint& target);

/// arccosh(-<a,b>) on the unit hyperboloid.
double lorentz_distance(const LorentzPoint& a, const LorentzPoint& b);

/// acosh(1 + e) evaluated without cancellation for small e >= 0.
double acosh1p(double e);

}  // namespace lightcone::geom
