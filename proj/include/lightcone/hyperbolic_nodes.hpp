#pragma once

// Poincare-ball operations as differentiable tape composites. Every function
// works row-wise on a batch: an (r x n) Var holds r points of the n-ball.
// Tangent vectors use the same unit-speed convention as geom::exp_map.

#include "lightcone/autodiff.hpp"

namespace lightcone::ad {

/// Row-wise Mobius addition x (+)_c y; either operand may be a single row.
Var mobius_add(const Var& x, const Var& y, double c);

/// exp_map at the origin.
Var expmap0(const Var& u, double c);

/// exp_map(base, u) = base (+) expmap0(u).
Var expmap(const Var& base, const Var& u, double c);

/// Inverse of expmap.
Var logmap(const Var& base, const Var& z, double c);

/// Geodesic distance, (r x 1).
Var poincare_distance(const Var& x, const Var& y, double c);

/// Wrapped normal log-density of each row of z, (r x 1). `mean` and `scale`
/// are (r x n) or single rows.
Var wrapped_normal_log_density(const Var& z, const Var& mean, const Var& scale, double c);

/// Gyroplane layer: for each row z and hidden unit k, the signed hyperbolic
/// distance from z to the geodesic hyperplane through offsets[k] with normal
/// normals[k], scaled by the hyperplane's normal norm:
///   (lambda_p |a| / sqrt c) asinh(2 sqrt c <(-p)(+)z, a> / ((1 - c|(-p)(+)z|^2) |a|)).
/// z is (r x n), offsets and normals are (h x n); result is (r x h).
Var gyroplane(const Var& z, const Var& offsets, const Var& normals, double c);

}  // namespace lightcone::ad
