#include "lightcone/wrapped_normal.hpp"

#include "lightcone/error.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace lightcone {

using geom::PoincarePoint;
using geom::Vector;

WrappedNormal::WrappedNormal(PoincarePoint mean, Vector scale)
    : mean_(std::move(mean)), scale_(std::move(scale)) {
    if (static_cast<std::size_t>(scale_.size()) != mean_.dim()) {
        throw DimensionMismatch("WrappedNormal: scale length differs from mean dimension");
    }
    if (!scale_.allFinite() || (scale_.array() <= 0.0).any()) {
        throw std::invalid_argument("WrappedNormal: scale entries must be finite and positive");
    }
}

WrappedNormal::WrappedNormal(PoincarePoint mean, double scale)
    : WrappedNormal(mean, Vector::Constant(static_cast<Eigen::Index>(mean.dim()), scale)) {}

WrappedNormal WrappedNormal::standard(std::size_t n, double c) {
    return WrappedNormal(PoincarePoint::origin(n, c), 1.0);
}

PoincarePoint sample(const WrappedNormal& d, RandomState& rng) {
    Vector e(d.scale().size());
    for (Eigen::Index i = 0; i < e.size(); ++i) e[i] = d.scale()[i] * rng.normal();
    return geom::exp_map(d.mean(), e);
}

double log_x_over_sinh(double x) {
    const double a = std::abs(x);
    if (a < 1e-4) return -a * a / 6.0;
    if (a > 20.0) return std::log(a) - a + std::numbers::ln2 - std::log1p(-std::exp(-2.0 * a));
    return std::log(a / std::sinh(a));
}

double log_density(const WrappedNormal& d, const PoincarePoint& z) {
    const Vector v = geom::log_map(d.mean(), z);
    const auto n = static_cast<double>(d.dim());
    const double quad = (v.array() / d.scale().array()).square().sum();
    const double log_norm = -0.5 * n * std::log(2.0 * std::numbers::pi) -
                            d.scale().array().log().sum();
    const double r = std::sqrt(d.curvature()) * v.norm();
    return log_norm - 0.5 * quad + (n - 1.0) * log_x_over_sinh(r);
}

KlEstimate kl_monte_carlo_stats(const WrappedNormal& q, const WrappedNormal& p, std::size_t n,
                                RandomState& rng) {
    if (n == 0) throw std::invalid_argument("kl_monte_carlo: need at least one sample");
    if (q.dim() != p.dim()) throw DimensionMismatch("kl_monte_carlo: dimension mismatch");
    double sum = 0.0;
    double sum_sq = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const PoincarePoint z = sample(q, rng);
        const double term = log_density(q, z) - log_density(p, z);
        sum += term;
        sum_sq += term * term;
    }
    KlEstimate out;
    out.samples = n;
    out.value = sum / static_cast<double>(n);
    if (n > 1) {
        const double var = std::max(0.0, (sum_sq - sum * out.value) / static_cast<double>(n - 1));
        out.standard_error = std::sqrt(var / static_cast<double>(n));
    }
    return out;
}

}  // namespace lightcone
