#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "lightcone/error.hpp"
#include "lightcone/geometry.hpp"
#include "lightcone/rng.hpp"

#include <cmath>
#include <vector>

using namespace lightcone;
using namespace lightcone::geom;

namespace {

Vector vec(std::initializer_list<double> xs) {
    Vector v(static_cast<Eigen::Index>(xs.size()));
    Eigen::Index i = 0;
    for (double x : xs) v[i++] = x;
    return v;
}

Vector random_vector(RandomState& rng, int n, double scale = 1.0) {
    Vector v(n);
    for (int i = 0; i < n; ++i) v[i] = scale * rng.uniform(-1.0, 1.0);
    return v;
}

// Uniform-ish point with norm below radius / sqrt(c).
PoincarePoint random_ball_point(RandomState& rng, int n, double c, double radius) {
    Vector v = rng.normal() * Vector::Zero(n);
    for (int i = 0; i < n; ++i) v[i] = rng.normal();
    v *= radius * std::pow(rng.uniform(), 1.0 / n) / (v.norm() * std::sqrt(c));
    return PoincarePoint(v, c);
}

Event random_event(RandomState& rng, int n) { return Event(rng.uniform(-3, 3), random_vector(rng, n, 3)); }

}  // namespace

TEST_CASE("minkowski_inner examples") {
    CHECK(minkowski_inner(Event(1, vec({0})), Event(1, vec({0}))) == -1.0);
    CHECK(minkowski_inner(Event(0, vec({1})), Event(0, vec({1}))) == 1.0);
    CHECK(minkowski_inner(Event(2, vec({1, 0})), Event(1, vec({3, 0}))) == 1.0);
    CHECK_THROWS_AS(minkowski_inner(Event(0, vec({1})), Event(0, vec({1, 2}))), DimensionMismatch);
}

TEST_CASE("minkowski_inner is bilinear and symmetric") {
    RandomState rng(11);
    for (int k = 0; k < 1000; ++k) {
        const Event a = random_event(rng, 4), b = random_event(rng, 4), d = random_event(rng, 4);
        const double alpha = rng.uniform(-2, 2);
        CHECK(std::abs(minkowski_inner(alpha * a + b, d) -
                       (alpha * minkowski_inner(a, d) + minkowski_inner(b, d))) < 1e-12 * 100);
        CHECK(minkowski_inner(a, b) == minkowski_inner(b, a));
    }
}

TEST_CASE("interval_classify examples") {
    const Event o(0, vec({0}));
    CHECK(interval_classify(o, Event(2, vec({1}))) == IntervalClass::Timelike);
    CHECK(interval_classify(o, Event(1, vec({2}))) == IntervalClass::Spacelike);
    CHECK(interval_classify(o, Event(1, vec({1}))) == IntervalClass::Lightlike);
    CHECK_THROWS_AS(interval_classify(o, Event(1, vec({1, 1}))), DimensionMismatch);
}

TEST_CASE("interval_classify symmetry and translation invariance") {
    RandomState rng(12);
    for (int k = 0; k < 2000; ++k) {
        const Event x = random_event(rng, 3), y = random_event(rng, 3), s = random_event(rng, 3);
        const auto cls = interval_classify(x, y);
        CHECK(cls == interval_classify(y, x));
        CHECK(cls == interval_classify(x + s, y + s));
    }
}

TEST_CASE("proper_time") {
    std::vector<Event> still{Event(0, vec({0})), Event(2, vec({0}))};
    CHECK(proper_time(still) == doctest::Approx(2.0).epsilon(1e-15));
    std::vector<Event> moving{Event(0, vec({0})), Event(2, vec({1}))};
    CHECK(proper_time(moving) == doctest::Approx(std::sqrt(3.0)).epsilon(1e-15));
    std::vector<Event> spacelike{Event(0, vec({0})), Event(1, vec({2}))};
    CHECK_THROWS_AS(proper_time(spacelike), NonTimelikeSegment);
    std::vector<Event> backwards{Event(1, vec({0})), Event(0, vec({0}))};
    CHECK_THROWS_AS(proper_time(backwards), std::invalid_argument);
    CHECK_THROWS_AS(proper_time(std::span(still.data(), 1)), std::invalid_argument);
}

TEST_CASE("proper_time of a light-speed leg is zero") {
    std::vector<Event> null_path{Event(0, vec({0, 0})), Event(5, vec({3, 4}))};
    CHECK(proper_time(null_path) == 0.0);
}

TEST_CASE("conformal_factor") {
    CHECK(conformal_factor(PoincarePoint(vec({0}), 1.0)) == 2.0);
    CHECK(conformal_factor(PoincarePoint(vec({0.5}), 1.0)) == doctest::Approx(8.0 / 3.0).epsilon(1e-15));
    CHECK(conformal_factor(PoincarePoint(vec({0.5}), 1e-4)) ==
          doctest::Approx(2.000050001250031).epsilon(1e-14));
}

TEST_CASE("PoincarePoint validation and clamping") {
    CHECK_THROWS_AS(PoincarePoint(vec({1.0}), 1.0), std::invalid_argument);
    CHECK_THROWS_AS(PoincarePoint(vec({0.1}), 0.0), std::invalid_argument);
    CHECK_THROWS_AS(PoincarePoint(vec({0.8, 0.8}), 1.0), std::invalid_argument);
    CHECK_NOTHROW(PoincarePoint(vec({0.6, 0.6}), 1.0));
    const auto p = PoincarePoint::clamped(vec({3.0, 4.0}), 1.0);
    CHECK(p.saturated());
    CHECK(p.coords().squaredNorm() <= 1.0 - PoincarePoint::kBoundaryMargin);
    CHECK_FALSE(PoincarePoint::clamped(vec({0.3}), 1.0).saturated());
}

TEST_CASE("poincare_distance examples") {
    const PoincarePoint a(vec({0.3, 0.0}), 1.0), b(vec({0.0, 0.4}), 1.0);
    CHECK(poincare_distance(a, a) == 0.0);
    CHECK(poincare_distance(PoincarePoint(vec({0}), 1.0), PoincarePoint(vec({0.5}), 1.0)) ==
          doctest::Approx(1.0986122886681097).epsilon(1e-15));
    // Oracle: 40-digit evaluation of the same closed form.
    CHECK(poincare_distance(a, b) == doctest::Approx(1.0891371665366823).epsilon(1e-15));
    CHECK_THROWS_AS(poincare_distance(a, PoincarePoint(vec({0.3, 0.0}), 2.0)), std::invalid_argument);
}

TEST_CASE("poincare_distance is a metric on random triples") {
    RandomState rng(13);
    for (int k = 0; k < 3000; ++k) {
        const double c = rng.uniform(0.1, 3.0);
        const auto x = random_ball_point(rng, 5, c, 0.97);
        const auto y = random_ball_point(rng, 5, c, 0.97);
        const auto z = random_ball_point(rng, 5, c, 0.97);
        const double dxy = poincare_distance(x, y);
        CHECK(dxy >= 0.0);
        CHECK(dxy == poincare_distance(y, x));
        CHECK(poincare_distance(x, z) <= dxy + poincare_distance(y, z) + 1e-9);
    }
}

TEST_CASE("to_lorentz / to_poincare examples") {
    const auto apex = to_lorentz(PoincarePoint::origin(3, 1.0));
    CHECK(apex.coords() == vec({1, 0, 0, 0}));
    const auto w = to_lorentz(PoincarePoint(vec({0.5}), 1.0));
    CHECK(w.coords()[0] == doctest::Approx(5.0 / 3.0).epsilon(1e-15));
    CHECK(w.coords()[1] == doctest::Approx(4.0 / 3.0).epsilon(1e-15));
    CHECK(minkowski_inner(w.coords(), w.coords()) == doctest::Approx(-1.0).epsilon(1e-14));
    CHECK(to_poincare(LorentzPoint(vec({1, 0, 0}))).coords().norm() == 0.0);
    CHECK(to_poincare(LorentzPoint(vec({5.0 / 3.0, 4.0 / 3.0}))).coords()[0] ==
          doctest::Approx(0.5).epsilon(1e-15));
    CHECK_THROWS_AS(LorentzPoint(vec({1, 1})), std::invalid_argument);
    CHECK_THROWS_AS(LorentzPoint(vec({-1, 0})), std::invalid_argument);
}

TEST_CASE("diffeomorphism round trip and hyperboloid constraint") {
    RandomState rng(14);
    for (int k = 0; k < 10000; ++k) {
        const double c = k % 2 ? 1.0 : rng.uniform(0.2, 4.0);
        const auto x = random_ball_point(rng, 8, c, 0.95);
        const auto w = to_lorentz(x);
        CHECK(std::abs(minkowski_inner(w.coords(), w.coords()) + 1.0) <= 1e-9);
        CHECK(w.time() >= 1.0);
        CHECK((to_poincare(w, c).coords() - x.coords()).lpNorm<Eigen::Infinity>() < 1e-9);
    }
}

TEST_CASE("lorentz_distance agrees with poincare_distance") {
    const auto a = to_lorentz(PoincarePoint(vec({0}), 1.0));
    const auto b = to_lorentz(PoincarePoint(vec({0.5}), 1.0));
    CHECK(lorentz_distance(a, a) == 0.0);
    CHECK(lorentz_distance(a, b) == doctest::Approx(1.0986122886681097).epsilon(1e-12));
    RandomState rng(15);
    for (int k = 0; k < 10000; ++k) {
        const auto x = random_ball_point(rng, 8, 1.0, 0.95);
        const auto y = random_ball_point(rng, 8, 1.0, 0.95);
        const auto wx = to_lorentz(x), wy = to_lorentz(y);
        CHECK(std::abs(lorentz_distance(wx, wy) - poincare_distance(x, y)) < 1e-7);
        CHECK(lorentz_distance(wx, wy) == lorentz_distance(wy, wx));
    }
}

TEST_CASE("exp_map / log_map examples") {
    const auto o = PoincarePoint::origin(1, 1.0);
    const auto p = PoincarePoint(vec({0.2, -0.4}), 1.0);
    CHECK(exp_map(p, Vector::Zero(2)).coords() == p.coords());
    const auto y = exp_map(o, vec({0.6}));
    CHECK(y.coords()[0] == doctest::Approx(0.29131261245159090).epsilon(1e-15));
    CHECK(poincare_distance(o, y) == doctest::Approx(0.6).epsilon(1e-14));
    CHECK(log_map(p, p).norm() == 0.0);
    CHECK(log_map(o, PoincarePoint(vec({std::tanh(0.3)}), 1.0))[0] == doctest::Approx(0.6).epsilon(1e-14));
}

TEST_CASE("exp_map saturates instead of leaving the ball") {
    const auto o = PoincarePoint::origin(2, 1.0);
    const auto far = exp_map(o, vec({200.0, 0.0}));
    CHECK(far.saturated());
    CHECK(far.coords().squaredNorm() < 1.0);
}

TEST_CASE("exp/log inverse pair and unit speed") {
    RandomState rng(16);
    for (int k = 0; k < 5000; ++k) {
        const double c = rng.uniform(0.2, 3.0);
        const auto base = random_ball_point(rng, 6, c, 0.9);
        Vector u = random_vector(rng, 6);
        u *= rng.uniform() * 0.9 / (std::sqrt(c) * u.norm());
        const auto y = exp_map(base, u);
        CHECK((log_map(base, y) - u).lpNorm<Eigen::Infinity>() < 1e-8);
        CHECK(std::abs(poincare_distance(base, y) - u.norm()) < 1e-6);
        // log norm equals distance for an unrelated target too
        const auto t = random_ball_point(rng, 6, c, 0.95);
        CHECK(std::abs(log_map(base, t).norm() - poincare_distance(base, t)) < 1e-6);
        CHECK((exp_map(base, log_map(base, t)).coords() - t.coords()).lpNorm<Eigen::Infinity>() < 1e-8);
    }
}

TEST_CASE("geodesics have constant speed") {
    RandomState rng(17);
    for (int k = 0; k < 200; ++k) {
        const auto base = random_ball_point(rng, 4, 1.0, 0.8);
        Vector u = random_vector(rng, 4);
        u *= 2.0 / u.norm();
        const int steps = 10;
        std::vector<PoincarePoint> pts;
        for (int i = 0; i <= steps; ++i) pts.push_back(exp_map(base, (double(i) / steps) * u));
        for (int i = 0; i < steps; ++i) {
            CHECK(std::abs(poincare_distance(pts[i], pts[i + 1]) - 0.2) < 1e-6);
        }
    }
}
