#include "lightcone/autodiff.hpp"

#include "lightcone/error.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace lightcone::ad {

Tensor::Tensor(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

Tensor::Tensor(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows_ * cols_) {
        throw DimensionMismatch("Tensor: data length " + std::to_string(data_.size()) +
                                " does not match shape " + std::to_string(rows_) + "x" +
                                std::to_string(cols_));
    }
}

double Tensor::item() const {
    if (data_.size() != 1) throw DimensionMismatch("Tensor::item on a non-scalar tensor");
    return data_[0];
}

bool Tensor::all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](double x) { return std::isfinite(x); });
}

const Tensor& Var::value() const { return tape_->value(id_); }
const Tensor& Var::grad() const { return tape_->grad(id_); }

Var Tape::constant(Tensor value) {
    nodes_.push_back(Node{"constant", {}, std::move(value), {}, {}, false});
    return Var(this, nodes_.size() - 1);
}

Var Tape::parameter(Tensor value) {
    nodes_.push_back(Node{"parameter", {}, std::move(value), {}, {}, true});
    return Var(this, nodes_.size() - 1);
}

Var Tape::record(std::string_view op, Tensor value, std::vector<std::size_t> inputs, BackwardFn fn) {
    if (!value.all_finite()) {
        throw NumericalFailure("autodiff: non-finite value produced by op '" + std::string(op) + "'");
    }
    bool rg = false;
    for (auto i : inputs) rg = rg || nodes_.at(i).requires_grad;
    if (!rg) fn = nullptr;
    nodes_.push_back(Node{std::string(op), std::move(inputs), std::move(value), {}, std::move(fn), rg});
    return Var(this, nodes_.size() - 1);
}

const Tensor& Tape::grad(std::size_t id) const {
    const Node& n = nodes_.at(id);
    if (n.grad.size() == 0 && n.value.size() != 0) {
        // Lazily materialize zeros so callers always see the value's shape.
        const_cast<Node&>(n).grad = Tensor::zeros_like(n.value);
    }
    return n.grad;
}

Tensor& Tape::grad_mut(std::size_t id) {
    Node& n = nodes_.at(id);
    if (!n.grad.same_shape(n.value)) n.grad = Tensor::zeros_like(n.value);
    return n.grad;
}

void Tape::zero_grad() {
    for (auto& n : nodes_) n.grad = Tensor();
}

void Tape::backward(const Var& output, std::optional<Tensor> seed) {
    if (output.tape() != this) throw std::invalid_argument("backward: variable belongs to another tape");
    const Tensor& out = nodes_.at(output.id()).value;
    Tensor s = seed ? std::move(*seed) : Tensor();
    if (!seed) {
        if (out.size() != 1) {
            throw DimensionMismatch("backward: non-scalar output requires an explicit seed");
        }
        s = Tensor::scalar(1.0);
    }
    if (!s.same_shape(out)) throw DimensionMismatch("backward: seed shape differs from output shape");
    Tensor& g = grad_mut(output.id());
    g.mat() += s.mat();
    for (std::size_t id = output.id() + 1; id-- > 0;) {
        Node& n = nodes_[id];
        if (!n.backward || n.grad.size() == 0) continue;
        n.backward(*this, id);
    }
}

namespace {

std::size_t bdim(std::size_t a, std::size_t b, const char* op) {
    if (a == b) return a;
    if (a == 1) return b;
    if (b == 1) return a;
    throw DimensionMismatch(std::string(op) + ": cannot broadcast " + std::to_string(a) + " with " +
                            std::to_string(b));
}

// Elementwise binary op with broadcasting. df(a, b, out) returns the pair of
// local partial derivatives.
template <class F, class DF>
Var binary(const char* name, const Var& a, const Var& b, F f, DF df) {
    Tape& tape = *a.tape();
    if (b.tape() != &tape) throw std::invalid_argument(std::string(name) + ": operands on different tapes");
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    const std::size_t rows = bdim(av.rows(), bv.rows(), name);
    const std::size_t cols = bdim(av.cols(), bv.cols(), name);
    Tensor out(rows, cols);
    const bool ar = av.rows() > 1 || rows == 1, ac = av.cols() > 1 || cols == 1;
    const bool br = bv.rows() > 1 || rows == 1, bc = bv.cols() > 1 || cols == 1;
    for (std::size_t i = 0; i < rows; ++i) {
        for (std::size_t j = 0; j < cols; ++j) {
            out(i, j) = f(av(ar ? i : 0, ac ? j : 0), bv(br ? i : 0, bc ? j : 0));
        }
    }
    const std::size_t ia = a.id(), ib = b.id();
    return tape.record(name, std::move(out), {ia, ib}, [=](Tape& t, std::size_t self) {
        const Tensor& g = t.grad(self);
        const Tensor& x = t.value(ia);
        const Tensor& y = t.value(ib);
        const Tensor& o = t.value(self);
        const bool need_a = t.requires_grad(ia), need_b = t.requires_grad(ib);
        Tensor* ga = need_a ? &t.grad_mut(ia) : nullptr;
        Tensor* gb = need_b ? &t.grad_mut(ib) : nullptr;
        for (std::size_t i = 0; i < g.rows(); ++i) {
            for (std::size_t j = 0; j < g.cols(); ++j) {
                const std::size_t xi = ar ? i : 0, xj = ac ? j : 0;
                const std::size_t yi = br ? i : 0, yj = bc ? j : 0;
                const auto [da, db] = df(x(xi, xj), y(yi, yj), o(i, j));
                if (ga) (*ga)(xi, xj) += g(i, j) * da;
                if (gb) (*gb)(yi, yj) += g(i, j) * db;
            }
        }
    });
}

// Elementwise unary op; df(x, y) is the local derivative given input and output.
template <class F, class DF>
Var unary(const char* name, const Var& a, F f, DF df) {
    Tape& tape = *a.tape();
    const Tensor& av = a.value();
    Tensor out(av.rows(), av.cols());
    for (std::size_t i = 0; i < av.size(); ++i) out[i] = f(av[i]);
    const std::size_t ia = a.id();
    return tape.record(name, std::move(out), {ia}, [=](Tape& t, std::size_t self) {
        const Tensor& g = t.grad(self);
        const Tensor& x = t.value(ia);
        const Tensor& y = t.value(self);
        Tensor& gx = t.grad_mut(ia);
        for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * df(x[i], y[i]);
    });
}

using Pair = std::pair<double, double>;

}  // namespace

Var add(const Var& a, const Var& b) {
    return binary("add", a, b, [](double x, double y) { return x + y; },
                  [](double, double, double) { return Pair{1.0, 1.0}; });
}

Var sub(const Var& a, const Var& b) {
    return binary("sub", a, b, [](double x, double y) { return x - y; },
                  [](double, double, double) { return Pair{1.0, -1.0}; });
}

Var mul(const Var& a, const Var& b) {
    return binary("mul", a, b, [](double x, double y) { return x * y; },
                  [](double x, double y, double) { return Pair{y, x}; });
}

Var div(const Var& a, const Var& b) {
    return binary("div", a, b, [](double x, double y) { return x / y; },
                  [](double, double y, double o) { return Pair{1.0 / y, -o / y}; });
}

Var neg(const Var& a) {
    return unary("neg", a, [](double x) { return -x; }, [](double, double) { return -1.0; });
}

Var scale(const Var& a, double s) {
    return unary("scale", a, [s](double x) { return s * x; }, [s](double, double) { return s; });
}

Var add_scalar(const Var& a, double s) {
    return unary("add_scalar", a, [s](double x) { return x + s; }, [](double, double) { return 1.0; });
}

Var reciprocal(const Var& a) {
    return unary("reciprocal", a, [](double x) { return 1.0 / x; },
                 [](double, double y) { return -y * y; });
}

Var matmul(const Var& a, const Var& b) {
    Tape& tape = *a.tape();
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    if (av.cols() != bv.rows()) {
        throw DimensionMismatch("matmul: " + std::to_string(av.rows()) + "x" + std::to_string(av.cols()) +
                                " times " + std::to_string(bv.rows()) + "x" + std::to_string(bv.cols()));
    }
    Tensor out(av.rows(), bv.cols());
    out.mat().noalias() = av.mat() * bv.mat();
    const std::size_t ia = a.id(), ib = b.id();
    return tape.record("matmul", std::move(out), {ia, ib}, [=](Tape& t, std::size_t self) {
        const Tensor& g = t.grad(self);
        if (t.requires_grad(ia)) t.grad_mut(ia).mat().noalias() += g.mat() * t.value(ib).mat().transpose();
        if (t.requires_grad(ib)) t.grad_mut(ib).mat().noalias() += t.value(ia).mat().transpose() * g.mat();
    });
}

Var transpose(const Var& a) {
    const Tensor& av = a.value();
    Tensor out(av.cols(), av.rows());
    out.mat() = av.mat().transpose();
    const std::size_t ia = a.id();
    return a.tape()->record("transpose", std::move(out), {ia}, [=](Tape& t, std::size_t self) {
        t.grad_mut(ia).mat() += t.grad(self).mat().transpose();
    });
}

Var slice_cols(const Var& a, std::size_t begin, std::size_t end) {
    const Tensor& av = a.value();
    if (begin > end || end > av.cols()) throw DimensionMismatch("slice_cols: range out of bounds");
    Tensor out(av.rows(), end - begin);
    out.mat() = av.mat().middleCols(static_cast<Eigen::Index>(begin), static_cast<Eigen::Index>(end - begin));
    const std::size_t ia = a.id();
    return a.tape()->record("slice_cols", std::move(out), {ia}, [=](Tape& t, std::size_t self) {
        t.grad_mut(ia).mat().middleCols(static_cast<Eigen::Index>(begin),
                                        static_cast<Eigen::Index>(end - begin)) += t.grad(self).mat();
    });
}

Var sum(const Var& a) {
    const Tensor& av = a.value();
    double s = 0.0;
    for (double x : av.data()) s += x;
    const std::size_t ia = a.id();
    return a.tape()->record("sum", Tensor::scalar(s), {ia}, [=](Tape& t, std::size_t self) {
        const double g = t.grad(self).item();
        for (double& x : t.grad_mut(ia).data()) x += g;
    });
}

Var mean(const Var& a) {
    const auto n = static_cast<double>(a.value().size());
    if (n == 0) throw DimensionMismatch("mean of an empty tensor");
    return scale(sum(a), 1.0 / n);
}

Var row_sum(const Var& a) {
    const Tensor& av = a.value();
    Tensor out(av.rows(), 1);
    for (std::size_t i = 0; i < av.rows(); ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < av.cols(); ++j) s += av(i, j);
        out(i, 0) = s;
    }
    const std::size_t ia = a.id();
    return a.tape()->record("row_sum", std::move(out), {ia}, [=](Tape& t, std::size_t self) {
        const Tensor& g = t.grad(self);
        Tensor& ga = t.grad_mut(ia);
        for (std::size_t i = 0; i < ga.rows(); ++i)
            for (std::size_t j = 0; j < ga.cols(); ++j) ga(i, j) += g(i, 0);
    });
}

Var row_norm(const Var& a) {
    const Tensor& av = a.value();
    Tensor out(av.rows(), 1);
    for (std::size_t i = 0; i < av.rows(); ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < av.cols(); ++j) s += av(i, j) * av(i, j);
        out(i, 0) = std::sqrt(s);
    }
    const std::size_t ia = a.id();
    return a.tape()->record("row_norm", std::move(out), {ia}, [=](Tape& t, std::size_t self) {
        const Tensor& g = t.grad(self);
        const Tensor& x = t.value(ia);
        const Tensor& n = t.value(self);
        Tensor& ga = t.grad_mut(ia);
        for (std::size_t i = 0; i < ga.rows(); ++i) {
            if (n(i, 0) == 0.0) continue;
            const double k = g(i, 0) / n(i, 0);
            for (std::size_t j = 0; j < ga.cols(); ++j) ga(i, j) += k * x(i, j);
        }
    });
}

Var tanh(const Var& a) {
    return unary("tanh", a, [](double x) { return std::tanh(x); },
                 [](double, double y) { return 1.0 - y * y; });
}

Var sigmoid(const Var& a) {
    return unary("sigmoid", a, [](double x) { return 1.0 / (1.0 + std::exp(-x)); },
                 [](double, double y) { return y * (1.0 - y); });
}

Var softplus(const Var& a) {
    return unary("softplus", a,
                 [](double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); },
                 [](double x, double) { return 1.0 / (1.0 + std::exp(-x)); });
}

Var exp(const Var& a) {
    return unary("exp", a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Var log(const Var& a) {
    return unary("log", a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Var sqrt(const Var& a) {
    return unary("sqrt", a, [](double x) { return std::sqrt(x); },
                 [](double, double y) { return y > 0.0 ? 0.5 / y : 0.0; });
}

Var square(const Var& a) {
    return unary("square", a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

Var asinh(const Var& a) {
    return unary("asinh", a, [](double x) { return std::asinh(x); },
                 [](double x, double) { return 1.0 / std::sqrt(1.0 + x * x); });
}

Var acosh(const Var& a) {
    return unary("acosh", a, [](double x) { return std::acosh(std::max(1.0, x)); },
                 [](double x, double) { return x > 1.0 ? 1.0 / std::sqrt(x * x - 1.0) : 0.0; });
}

Var tanh_over_x(const Var& a) {
    return unary(
        "tanh_over_x", a,
        [](double x) {
            if (std::abs(x) < 1e-3) {
                const double x2 = x * x;
                return 1.0 - x2 / 3.0 + 2.0 * x2 * x2 / 15.0;
            }
            return std::tanh(x) / x;
        },
        [](double x, double y) {
            if (std::abs(x) < 1e-3) return -2.0 * x / 3.0 + 8.0 * x * x * x / 15.0;
            const double th = std::tanh(x);
            return ((1.0 - th * th) - y) / x;
        });
}

namespace {
constexpr double kArtanhLimit = 1.0 - 1e-15;
}

Var artanh_over_x(const Var& a) {
    return unary(
        "artanh_over_x", a,
        [](double x) {
            if (std::abs(x) < 1e-3) {
                const double x2 = x * x;
                return 1.0 + x2 / 3.0 + x2 * x2 / 5.0;
            }
            const double xc = std::clamp(x, -kArtanhLimit, kArtanhLimit);
            return std::atanh(xc) / xc;
        },
        [](double x, double y) {
            if (std::abs(x) < 1e-3) return 2.0 * x / 3.0 + 4.0 * x * x * x / 5.0;
            const double xc = std::clamp(x, -kArtanhLimit, kArtanhLimit);
            return (1.0 / (1.0 - xc * xc) - y) / xc;
        });
}

Var log_x_over_sinh(const Var& a) {
    return unary(
        "log_x_over_sinh", a,
        [](double x) {
            const double ax = std::abs(x);
            if (ax < 1e-4) return -ax * ax / 6.0;
            if (ax > 20.0) return std::log(ax) - ax + std::log(2.0) - std::log1p(-std::exp(-2.0 * ax));
            return std::log(ax / std::sinh(ax));
        },
        [](double x, double) {
            if (std::abs(x) < 1e-3) return -x / 3.0 + x * x * x / 45.0;
            return 1.0 / x - 1.0 / std::tanh(x);
        });
}

void adam_step(std::span<Tensor> params, std::span<const Tensor> grads, AdamState& state,
               const AdamConfig& config) {
    if (params.size() != grads.size()) throw DimensionMismatch("adam_step: params/grads count mismatch");
    if (state.m.empty()) {
        for (const auto& p : params) {
            state.m.push_back(Tensor::zeros_like(p));
            state.v.push_back(Tensor::zeros_like(p));
        }
    }
    if (state.m.size() != params.size()) throw DimensionMismatch("adam_step: state size mismatch");
    ++state.step;
    const double t = static_cast<double>(state.step);
    const double c1 = 1.0 - std::pow(config.beta1, t);
    const double c2 = 1.0 - std::pow(config.beta2, t);
    for (std::size_t k = 0; k < params.size(); ++k) {
        Tensor& p = params[k];
        const Tensor& g = grads[k];
        if (!p.same_shape(g) || !p.same_shape(state.m[k])) {
            throw DimensionMismatch("adam_step: shape mismatch for parameter " + std::to_string(k));
        }
        auto pm = p.data();
        auto gm = g.data();
        auto mm = state.m[k].data();
        auto vm = state.v[k].data();
        for (std::size_t i = 0; i < pm.size(); ++i) {
            mm[i] = config.beta1 * mm[i] + (1.0 - config.beta1) * gm[i];
            vm[i] = config.beta2 * vm[i] + (1.0 - config.beta2) * gm[i] * gm[i];
            const double mhat = mm[i] / c1;
            const double vhat = vm[i] / c2;
            pm[i] -= config.lr * mhat / (std::sqrt(vhat) + config.eps);
        }
    }
}

GradCheckReport grad_check(const LossFn& loss, std::vector<NamedTensor>& params, RandomState& rng,
                           const GradCheckOptions& options) {
    auto evaluate = [&](bool with_grad, std::vector<Tensor>* grads) {
        Tape tape;
        std::vector<Var> leaves;
        leaves.reserve(params.size());
        for (const auto& p : params) leaves.push_back(tape.parameter(p.value));
        Var out = loss(tape, leaves);
        const double v = out.value().item();
        if (with_grad) {
            tape.backward(out);
            for (const auto& l : leaves) grads->push_back(l.grad());
        }
        return v;
    };

    std::vector<Tensor> analytic;
    evaluate(true, &analytic);

    GradCheckReport report;
    for (std::size_t k = 0; k < params.size(); ++k) {
        Tensor& value = params[k].value;
        std::vector<std::size_t> idx(value.size());
        std::iota(idx.begin(), idx.end(), std::size_t{0});
        if (idx.size() > options.entries_per_param) {
            // Partial Fisher-Yates draw of a subset.
            for (std::size_t i = 0; i < options.entries_per_param; ++i) {
                std::swap(idx[i], idx[i + rng.below(idx.size() - i)]);
            }
            idx.resize(options.entries_per_param);
        }
        GradCheckEntry worst{params[k].name, 0, 0.0, 0.0, -1.0};
        for (std::size_t i : idx) {
            const double saved = value[i];
            auto at = [&](double offset) {
                value[i] = saved + offset;
                return evaluate(false, nullptr);
            };
            const double h = options.h;
            double numeric;
            if (options.five_point) {
                numeric = (8.0 * (at(h) - at(-h)) - (at(2.0 * h) - at(-2.0 * h))) / (12.0 * h);
            } else {
                numeric = (at(h) - at(-h)) / (2.0 * h);
            }
            value[i] = saved;
            const double a = analytic[k][i];
            const double denom = std::max({std::abs(a), std::abs(numeric), options.abs_floor});
            const double rel = std::abs(a - numeric) / denom;
            ++report.checked;
            if (rel > worst.rel_error) worst = GradCheckEntry{params[k].name, i, a, numeric, rel};
        }
        if (worst.rel_error < 0.0) worst.rel_error = 0.0;
        report.max_rel_error = std::max(report.max_rel_error, worst.rel_error);
        report.worst_per_param.push_back(worst);
    }
    return report;
}

}  // namespace lightcone::ad
