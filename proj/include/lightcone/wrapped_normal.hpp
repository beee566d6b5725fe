#pragma once

#include "lightcone/geometry.hpp"
#include "lightcone/rng.hpp"

#include <cstddef>

namespace lightcone {

/// Normal distribution on the Poincare ball obtained by pushing a diagonal
/// tangent-space Gaussian at `mean` through the exponential map.
///
/// `scale` is expressed in unit-speed tangent coordinates (see geom::exp_map),
/// i.e. a draw is exp_map(mean, e) with e ~ N(0, diag(scale^2)). In textbook
/// terms that is exp_mean(e / lambda(mean)).
class WrappedNormal {
public:
    WrappedNormal(geom::PoincarePoint mean, geom::Vector scale);

    /// Isotropic helper.
    WrappedNormal(geom::PoincarePoint mean, double scale);

    /// Standard prior: origin, unit scale.
    static WrappedNormal standard(std::size_t n, double c);

    const geom::PoincarePoint& mean() const { return mean_; }
    const geom::Vector& scale() const { return scale_; }
    double curvature() const { return mean_.curvature(); }
    std::size_t dim() const { return mean_.dim(); }

private:
    geom::PoincarePoint mean_;
    geom::Vector scale_;
};

/// Draw one point. Consumes dim() normals from `rng`.
geom::PoincarePoint sample(const WrappedNormal& d, RandomState& rng);

/// Log of the density with respect to the Riemannian volume of the ball:
/// log N(log_map(mean, z) | 0, diag(scale^2)) + (n-1) log(sqrt(c) r / sinh(sqrt(c) r)),
/// r = poincare_distance(mean, z).
double log_density(const WrappedNormal& d, const geom::PoincarePoint& z);

/// log(x / sinh x), continuous at 0.
double log_x_over_sinh(double x);

struct KlEstimate {
    double value = 0.0;
    double standard_error = 0.0;
    std::size_t samples = 0;
};

/// Monte Carlo KL(q || p) with draws from q.
KlEstimate kl_monte_carlo_stats(const WrappedNormal& q, const WrappedNormal& p, std::size_t n,
                                RandomState& rng);

inline double kl_monte_carlo(const WrappedNormal& q, const WrappedNormal& p, std::size_t n,
                             RandomState& rng) {
    return kl_monte_carlo_stats(q, p, n, rng).value;
}

}  // namespace lightcone
