#pragma once

// Reverse-mode automatic differentiation over dense row-major 2-D tensors.
//
// Graphs are built eagerly: every op evaluates its forward value immediately
// and appends a node (op tag, input ids, saved value, backward closure) to a
// Tape. Inputs always precede outputs, so the tape is acyclic by construction
// and backward() is a single reverse sweep.
//
// Elementwise binary ops broadcast: each operand dimension must either match
// or be 1. Gradients are summed back over broadcast dimensions.

#include "lightcone/rng.hpp"

#include <Eigen/Dense>

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace lightcone::ad {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

class Tensor {
public:
    Tensor() = default;
    Tensor(std::size_t rows, std::size_t cols, double fill = 0.0);
    Tensor(std::size_t rows, std::size_t cols, std::vector<double> data);

    static Tensor scalar(double v) { return Tensor(1, 1, v); }
    static Tensor zeros_like(const Tensor& t) { return Tensor(t.rows(), t.cols()); }

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::size_t size() const { return data_.size(); }
    std::vector<std::size_t> shape() const { return {rows_, cols_}; }
    bool same_shape(const Tensor& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }

    double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }
    double item() const;

    std::span<double> data() { return data_; }
    std::span<const double> data() const { return data_; }

    Eigen::Map<RowMatrix> mat() {
        return {data_.data(), static_cast<Eigen::Index>(rows_), static_cast<Eigen::Index>(cols_)};
    }
    Eigen::Map<const RowMatrix> mat() const {
        return {data_.data(), static_cast<Eigen::Index>(rows_), static_cast<Eigen::Index>(cols_)};
    }

    bool all_finite() const;

    friend bool operator==(const Tensor&, const Tensor&) = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

struct NamedTensor {
    std::string name;
    Tensor value;
};

class Tape;

/// Handle to a node on a Tape. Cheap to copy; only valid while the tape lives.
class Var {
public:
    Var() = default;
    Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

    const Tensor& value() const;
    /// Accumulated gradient (zeros if backward never reached this node).
    const Tensor& grad() const;
    std::size_t id() const { return id_; }
    Tape* tape() const { return tape_; }
    std::size_t rows() const { return value().rows(); }
    std::size_t cols() const { return value().cols(); }

private:
    Tape* tape_ = nullptr;
    std::size_t id_ = 0;
};

class Tape {
public:
    using BackwardFn = std::function<void(Tape&, std::size_t)>;

    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    /// Leaf that never receives a gradient.
    Var constant(Tensor value);
    /// Leaf whose gradient is accumulated by backward().
    Var parameter(Tensor value);

    /// Appends an op node; `fn` may be empty for non-differentiable results.
    /// Throws NumericalFailure if the forward value is not finite.
    Var record(std::string_view op, Tensor value, std::vector<std::size_t> inputs, BackwardFn fn);

    /// Reverse sweep from `output`. The seed defaults to 1 for a 1x1 output and
    /// must otherwise be given with the output's shape.
    void backward(const Var& output, std::optional<Tensor> seed = std::nullopt);
    void zero_grad();

    std::size_t size() const { return nodes_.size(); }
    const Tensor& value(std::size_t id) const { return nodes_.at(id).value; }
    const Tensor& grad(std::size_t id) const;
    Tensor& grad_mut(std::size_t id);
    bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
    const std::string& op(std::size_t id) const { return nodes_.at(id).op; }
    const std::vector<std::size_t>& inputs(std::size_t id) const { return nodes_.at(id).inputs; }

private:
    struct Node {
        std::string op;
        std::vector<std::size_t> inputs;
        Tensor value;
        Tensor grad;
        BackwardFn backward;
        bool requires_grad = false;
    };
    std::vector<Node> nodes_;
};

// Arithmetic (broadcasting).
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var div(const Var& a, const Var& b);
Var neg(const Var& a);
Var scale(const Var& a, double s);
Var add_scalar(const Var& a, double s);
Var reciprocal(const Var& a);

inline Var operator+(const Var& a, const Var& b) { return add(a, b); }
inline Var operator-(const Var& a, const Var& b) { return sub(a, b); }
inline Var operator*(const Var& a, const Var& b) { return mul(a, b); }
inline Var operator/(const Var& a, const Var& b) { return div(a, b); }
inline Var operator-(const Var& a) { return neg(a); }
inline Var operator*(double s, const Var& a) { return scale(a, s); }
inline Var operator*(const Var& a, double s) { return scale(a, s); }
inline Var operator+(const Var& a, double s) { return add_scalar(a, s); }
inline Var operator+(double s, const Var& a) { return add_scalar(a, s); }
inline Var operator-(const Var& a, double s) { return add_scalar(a, -s); }
inline Var operator-(double s, const Var& a) { return add_scalar(neg(a), s); }
inline Var operator/(const Var& a, double s) { return scale(a, 1.0 / s); }
inline Var operator/(double s, const Var& a) { return scale(reciprocal(a), s); }

// Linear algebra and shape.
Var matmul(const Var& a, const Var& b);
Var transpose(const Var& a);
Var slice_cols(const Var& a, std::size_t begin, std::size_t end);

// Reductions.
Var sum(const Var& a);
Var mean(const Var& a);
/// (r x c) -> (r x 1)
Var row_sum(const Var& a);
/// Euclidean norm of each row, (r x c) -> (r x 1). Gradient 0 at a zero row.
Var row_norm(const Var& a);

// Elementwise functions.
Var tanh(const Var& a);
Var sigmoid(const Var& a);
/// max(x, 0) + log1p(exp(-|x|))
Var softplus(const Var& a);
Var exp(const Var& a);
Var log(const Var& a);
Var sqrt(const Var& a);
Var square(const Var& a);
Var asinh(const Var& a);
/// Argument is clamped to >= 1.
Var acosh(const Var& a);
/// tanh(x)/x with value 1 at 0.
Var tanh_over_x(const Var& a);
/// artanh(x)/x with value 1 at 0; argument clamped below 1.
Var artanh_over_x(const Var& a);
/// log(x / sinh x) with value 0 at 0.
Var log_x_over_sinh(const Var& a);

struct AdamConfig {
    double lr = 5e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

struct AdamState {
    std::vector<Tensor> m;
    std::vector<Tensor> v;
    std::uint64_t step = 0;
};

/// One bias-corrected Adam update, in place.
void adam_step(std::span<Tensor> params, std::span<const Tensor> grads, AdamState& state,
               const AdamConfig& config);

struct GradCheckEntry {
    std::string name;
    std::size_t index = 0;
    double analytic = 0.0;
    double numeric = 0.0;
    double rel_error = 0.0;
};

struct GradCheckReport {
    double max_rel_error = 0.0;
    std::size_t checked = 0;
    /// Worst entry for each parameter tensor, in parameter order.
    std::vector<GradCheckEntry> worst_per_param;

    bool passed(double tol) const { return max_rel_error < tol; }
};

/// Builds a scalar loss from the given parameter leaves. Must be a
/// deterministic function of the parameter values.
using LossFn = std::function<Var(Tape&, std::span<const Var>)>;

struct GradCheckOptions {
    double h = 1e-5;
    /// Entries sampled per tensor (all entries if the tensor is smaller).
    std::size_t entries_per_param = 20;
    /// Denominator floor: rel = |a - n| / max(|a|, |n|, abs_floor).
    double abs_floor = 1e-6;
    /// Fourth-order central stencil (f(-2h), f(-h), f(h), f(2h)); lets h grow
    /// when the loss is large and rounding in f would swamp small gradients.
    bool five_point = false;
};

/// Central-difference check of the analytic gradient over a random subset of
/// parameter entries. Parameters are restored before returning.
GradCheckReport grad_check(const LossFn& loss, std::vector<NamedTensor>& params, RandomState& rng,
                           const GradCheckOptions& options = {});

}  // namespace lightcone::ad
