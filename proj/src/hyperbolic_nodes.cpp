#include "lightcone/hyperbolic_nodes.hpp"

#include <cmath>
#include <numbers>

namespace lightcone::ad {

Var mobius_add(const Var& x, const Var& y, double c) {
    const Var xy = row_sum(x * y);
    const Var x2 = row_sum(square(x));
    const Var y2 = row_sum(square(y));
    const Var a = 1.0 + 2.0 * c * xy + c * y2;
    const Var b = 1.0 - c * x2;
    const Var d = 1.0 + 2.0 * c * xy + (c * c) * (x2 * y2);
    return (a * x + b * y) / d;
}

Var expmap0(const Var& u, double c) {
    const double sc = std::sqrt(c);
    const Var r = row_norm(u);
    // tanh(sqrt(c) r / 2) / (sqrt(c) r) = tanh_over_x(sqrt(c) r / 2) / 2
    return 0.5 * tanh_over_x((0.5 * sc) * r) * u;
}

Var expmap(const Var& base, const Var& u, double c) { return mobius_add(base, expmap0(u, c), c); }

Var logmap(const Var& base, const Var& z, double c) {
    const double sc = std::sqrt(c);
    const Var w = mobius_add(-base, z, c);
    // (2 / sqrt c) artanh(sqrt(c) r) / r = 2 artanh_over_x(sqrt(c) r)
    return 2.0 * artanh_over_x(sc * row_norm(w)) * w;
}

Var poincare_distance(const Var& x, const Var& y, double c) {
    const Var num = (2.0 * c) * row_sum(square(x - y));
    const Var den = (1.0 - c * row_sum(square(x))) * (1.0 - c * row_sum(square(y)));
    return (1.0 / std::sqrt(c)) * acosh(1.0 + num / den);
}

Var wrapped_normal_log_density(const Var& z, const Var& mean, const Var& scale, double c) {
    const auto n = static_cast<double>(z.cols());
    const Var v = logmap(mean, z, c);
    const Var quad = row_sum(square(v / scale));
    const Var log_det = row_sum(log(scale));
    const Var r = std::sqrt(c) * row_norm(v);
    const double log_norm = -0.5 * n * std::log(2.0 * std::numbers::pi);
    return (log_norm - log_det) - 0.5 * quad + (n - 1.0) * log_x_over_sinh(r);
}

Var gyroplane(const Var& z, const Var& offsets, const Var& normals, double c) {
    const double sc = std::sqrt(c);
    // Expand <(-p)(+)z, a> and |(-p)(+)z|^2 through inner products so every
    // (row, unit) pair is a 2-D broadcast instead of a 3-D tensor.
    const Var pt = transpose(offsets);                 // n x h
    const Var xy = -matmul(z, pt);                     // <-p, z>     r x h
    const Var y2 = row_sum(square(z));                 // |z|^2       r x 1
    const Var x2 = transpose(row_sum(square(offsets)));  // |p|^2     1 x h
    const Var xa = -transpose(row_sum(offsets * normals));  // <-p, a> 1 x h
    const Var ya = matmul(z, transpose(normals));      // <z, a>      r x h
    const Var a_norm = transpose(row_norm(normals));   // |a|         1 x h

    const Var big_a = 1.0 + 2.0 * c * xy + c * y2;
    const Var big_b = 1.0 - c * x2;
    const Var den = 1.0 + 2.0 * c * xy + (c * c) * (x2 * y2);
    const Var dot = (big_a * xa + big_b * ya) / den;
    const Var norm2 = (square(big_a) * x2 + 2.0 * big_a * big_b * xy + square(big_b) * y2) / square(den);
    const Var lambda_p = 2.0 / big_b;
    const Var arg = (2.0 * sc) * dot / ((1.0 - c * norm2) * a_norm);
    return (1.0 / sc) * lambda_p * a_norm * asinh(arg);
}

}  // namespace lightcone::ad
