#include "lightcone/geometry.hpp"

#include "lightcone/error.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace lightcone::geom {

namespace {

void require_same_dim(std::size_t a, std::size_t b, const char* what) {
    if (a != b) {
        throw DimensionMismatch(std::string(what) + ": dimension " + std::to_string(a) +
                                " vs " + std::to_string(b));
    }
}

void require_same_curvature(double a, double b) {
    if (a != b) {
        throw std::invalid_argument("curvature mismatch: " + std::to_string(a) + " vs " +
                                    std::to_string(b));
    }
}

// exp at the origin of the unit ball with unit-speed tangent coordinates.
Vector unit_expmap0(const Vector& u) {
    const double r = u.norm();
    if (r == 0.0) return Vector::Zero(u.size());
    return (std::tanh(0.5 * r) / r) * u;
}

}  // namespace

Event::Event(double time, Vector space) : t(time), x(std::move(space)) {
    if (!std::isfinite(t) || !x.allFinite()) {
        throw std::invalid_argument("Event coordinates must be finite");
    }
}

Event operator+(const Event& a, const Event& b) {
    require_same_dim(a.dim(), b.dim(), "Event +");
    return Event(a.t + b.t, a.x + b.x);
}

Event operator-(const Event& a, const Event& b) {
    require_same_dim(a.dim(), b.dim(), "Event -");
    return Event(a.t - b.t, a.x - b.x);
}

Event operator*(double s, const Event& e) { return Event(s * e.t, s * e.x); }

const char* to_string(IntervalClass c) {
    switch (c) {
        case IntervalClass::Timelike: return "timelike";
        case IntervalClass::Spacelike: return "spacelike";
        case IntervalClass::Lightlike: return "lightlike";
    }
    return "?";
}

double default_tolerance(const Event& delta) {
    return 1e-9 * (1.0 + delta.t * delta.t + delta.x.squaredNorm());
}

double minkowski_inner(const Event& a, const Event& b) {
    require_same_dim(a.dim(), b.dim(), "minkowski_inner");
    return -a.t * b.t + a.x.dot(b.x);
}

double minkowski_inner(const Vector& a, const Vector& b) {
    require_same_dim(static_cast<std::size_t>(a.size()), static_cast<std::size_t>(b.size()),
                     "minkowski_inner");
    if (a.size() == 0) throw DimensionMismatch("minkowski_inner: empty vector");
    return -a[0] * b[0] + a.tail(a.size() - 1).dot(b.tail(b.size() - 1));
}

IntervalClass interval_classify(const Event& x, const Event& y, std::optional<double> tol) {
    const Event d = y - x;
    const double q = minkowski_inner(d, d);
    const double eps = tol.value_or(default_tolerance(d));
    if (eps < 0.0) throw std::invalid_argument("interval_classify: negative tolerance");
    if (std::abs(q) <= eps) return IntervalClass::Lightlike;
    return q < 0.0 ? IntervalClass::Timelike : IntervalClass::Spacelike;
}

double proper_time(std::span<const Event> path, std::optional<double> tol) {
    if (path.size() < 2) throw std::invalid_argument("proper_time: need at least two events");
    double tau = 0.0;
    for (std::size_t i = 1; i < path.size(); ++i) {
        const Event d = path[i] - path[i - 1];
        if (!(d.t > 0.0)) {
            throw std::invalid_argument("proper_time: segment " + std::to_string(i - 1) +
                                        " is not strictly time-ordered");
        }
        const double q = minkowski_inner(d, d);
        const double eps = tol.value_or(default_tolerance(d));
        if (q > eps) {
            throw NonTimelikeSegment("proper_time: segment " + std::to_string(i - 1) +
                                     " is spacelike (interval " + std::to_string(q) + ")");
        }
        tau += std::sqrt(std::max(0.0, -q));
    }
    return tau;
}

PoincarePoint::PoincarePoint(Vector v, double c, bool saturated)
    : v_(std::move(v)), c_(c), saturated_(saturated) {}

PoincarePoint::PoincarePoint(Vector v, double c) : v_(std::move(v)), c_(c) {
    if (!(c_ > 0.0) || !std::isfinite(c_)) {
        throw std::invalid_argument("PoincarePoint: curvature must be positive and finite");
    }
    if (v_.size() == 0) throw std::invalid_argument("PoincarePoint: empty coordinate vector");
    if (!v_.allFinite()) throw std::invalid_argument("PoincarePoint: non-finite coordinates");
    if (!(c_ * v_.squaredNorm() < 1.0)) {
        throw std::invalid_argument("PoincarePoint: point lies outside the open ball");
    }
}

PoincarePoint PoincarePoint::origin(std::size_t n, double c) {
    return PoincarePoint(Vector::Zero(static_cast<Eigen::Index>(n)), c);
}

PoincarePoint PoincarePoint::clamped(Vector v, double c) {
    if (!(c > 0.0) || !std::isfinite(c)) {
        throw std::invalid_argument("PoincarePoint: curvature must be positive and finite");
    }
    if (!v.allFinite()) throw std::invalid_argument("PoincarePoint: non-finite coordinates");
    const double limit = 1.0 - kBoundaryMargin;
    const double r2 = c * v.squaredNorm();
    if (r2 <= limit) return PoincarePoint(std::move(v), c, false);
    v *= std::sqrt(limit / r2);
    return PoincarePoint(std::move(v), c, true);
}

LorentzPoint::LorentzPoint(Vector w) : w_(std::move(w)) {
    if (w_.size() < 2) throw std::invalid_argument("LorentzPoint: need at least 1+1 coordinates");
    if (!w_.allFinite()) throw std::invalid_argument("LorentzPoint: non-finite coordinates");
    if (!(w_[0] > 0.0)) throw std::invalid_argument("LorentzPoint: not on the upper sheet");
    const double q = minkowski_inner(w_, w_);
    if (std::abs(q + 1.0) > 1e-9 * std::max(1.0, w_[0] * w_[0])) {
        throw std::invalid_argument("LorentzPoint: <w,w> = " + std::to_string(q) + ", expected -1");
    }
}

double conformal_factor(const PoincarePoint& p) {
    return 2.0 / (1.0 - p.curvature() * p.coords().squaredNorm());
}

double acosh1p(double e) { return std::log1p(e + std::sqrt(e * (e + 2.0))); }

double poincare_distance(const PoincarePoint& x, const PoincarePoint& y) {
    require_same_curvature(x.curvature(), y.curvature());
    require_same_dim(x.dim(), y.dim(), "poincare_distance");
    const double c = x.curvature();
    const double num = 2.0 * c * (x.coords() - y.coords()).squaredNorm();
    const double den = (1.0 - c * x.coords().squaredNorm()) * (1.0 - c * y.coords().squaredNorm());
    return acosh1p(num / den) / std::sqrt(c);
}

Vector mobius_add(const Vector& x, const Vector& y, double c) {
    require_same_dim(static_cast<std::size_t>(x.size()), static_cast<std::size_t>(y.size()),
                     "mobius_add");
    const double xy = x.dot(y);
    const double x2 = x.squaredNorm();
    const double y2 = y.squaredNorm();
    const double den = 1.0 + 2.0 * c * xy + c * c * x2 * y2;
    return ((1.0 + 2.0 * c * xy + c * y2) * x + (1.0 - c * x2) * y) / den;
}

LorentzPoint to_lorentz(const PoincarePoint& p) {
    const Vector x = std::sqrt(p.curvature()) * p.coords();
    const double r2 = x.squaredNorm();
    const double den = 1.0 - r2;
    Vector w(x.size() + 1);
    w[0] = (1.0 + r2) / den;
    w.tail(x.size()) = (2.0 / den) * x;
    return LorentzPoint(std::move(w));
}

PoincarePoint to_poincare(const LorentzPoint& w, double c) {
    Vector x = w.spatial() / (1.0 + w.time());
    return PoincarePoint::clamped(x / std::sqrt(c), c);
}

PoincarePoint exp_map(const PoincarePoint& base, const Vector& u) {
    require_same_dim(base.dim(), static_cast<std::size_t>(u.size()), "exp_map");
    if (!u.allFinite()) throw std::invalid_argument("exp_map: non-finite tangent vector");
    const double c = base.curvature();
    const double sc = std::sqrt(c);
    const Vector x = sc * base.coords();
    const Vector y = mobius_add(x, unit_expmap0(sc * u), 1.0);
    return PoincarePoint::clamped(y / sc, c);
}

Vector log_map(const PoincarePoint& base, const PoincarePoint& target) {
    require_same_curvature(base.curvature(), target.curvature());
    require_same_dim(base.dim(), target.dim(), "log_map");
    if (base.coords() == target.coords()) return Vector::Zero(base.coords().size());
    const double sc = std::sqrt(base.curvature());
    const Vector w = mobius_add(-sc * base.coords(), sc * target.coords(), 1.0);
    const double r = w.norm();
    if (r == 0.0) return Vector::Zero(w.size());
    return (2.0 * std::atanh(std::min(r, 1.0 - 1e-16)) / (r * sc)) * w;
}

double lorentz_distance(const LorentzPoint& a, const LorentzPoint& b) {
    require_same_dim(a.dim(), b.dim(), "lorentz_distance");
    const double arg = -minkowski_inner(a.coords(), b.coords());
    return std::acosh(std::max(1.0, arg));
}

}  // namespace lightcone::geom
