#include "vitderm/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <unordered_set>

namespace vitderm {

namespace {

thread_local bool g_grad_enabled = true;
bool g_debug_checks = false;

size_t shape_numel(const std::vector<int>& shape) {
    size_t n = 1;
    for (int d : shape) {
        if (d <= 0)
            throw DimensionError("tensor extents must be positive: " + shape_string(shape));
        n *= static_cast<size_t>(d);
    }
    return n;
}

void check_finite(const std::vector<double>& v, const char* where) {
    for (double x : v) {
        if (!std::isfinite(x))
            throw NumericError(std::string(where) + ": non-finite value");
    }
}

// Builds the op result. Parents and the backward closure are kept only when
// recording is on and some parent needs gradients; otherwise the node is a
// plain constant and upstream intermediates can be released immediately.
Tensor make_result(std::vector<int> shape, std::vector<double> values,
                   std::vector<NodePtr> parents,
                   std::function<void(TensorNode&)> backward_fn) {
    if (g_debug_checks) check_finite(values, "op result");
    auto n = std::make_shared<TensorNode>();
    n->shape = std::move(shape);
    n->values = std::move(values);
    bool needs = false;
    if (g_grad_enabled) {
        for (const auto& p : parents) {
            if (p->requires_grad) { needs = true; break; }
        }
    }
    if (needs) {
        n->requires_grad = true;
        n->parents = std::move(parents);
        n->backward_fn = std::move(backward_fn);
    }
    return Tensor(n);
}

void require_rank2(const Tensor& t, const char* op) {
    if (t.rank() != 2)
        throw DimensionError(std::string(op) + ": expected rank-2 tensor, got " +
                             shape_string(t.shape()));
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() != b.shape())
        throw DimensionError(std::string(op) + ": shape mismatch: " +
                             shape_string(a.shape()) + " vs " + shape_string(b.shape()));
}

constexpr double kRreluLo = 1.0 / 8.0;
constexpr double kRreluHi = 1.0 / 3.0;
constexpr double kCeClamp = 1e-12;

} // namespace

std::string shape_string(const std::vector<int>& shape) {
    std::ostringstream os;
    os << '[';
    for (size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ',';
        os << shape[i];
    }
    os << ']';
    return os.str();
}

bool grad_enabled() { return g_grad_enabled; }
void set_grad_enabled(bool on) { g_grad_enabled = on; }
void set_debug_checks(bool on) { g_debug_checks = on; }
bool debug_checks() { return g_debug_checks; }

Activation activation_from_string(const std::string& name) {
    if (name == "relu") return Activation::Relu;
    if (name == "gelu") return Activation::Gelu;
    if (name == "rrelu") return Activation::Rrelu;
    throw ConfigError("unknown activation kind: '" + name + "'");
}

std::string to_string(Activation a) {
    switch (a) {
        case Activation::Relu: return "relu";
        case Activation::Gelu: return "gelu";
        case Activation::Rrelu: return "rrelu";
    }
    return "?";
}

// ---- Tensor ----------------------------------------------------------------

Tensor Tensor::zeros(std::vector<int> shape) {
    size_t n = shape_numel(shape);
    auto node = std::make_shared<TensorNode>();
    node->shape = std::move(shape);
    node->values.assign(n, 0.0);
    return Tensor(node);
}

Tensor Tensor::full(std::vector<int> shape, double value) {
    size_t n = shape_numel(shape);
    auto node = std::make_shared<TensorNode>();
    node->shape = std::move(shape);
    node->values.assign(n, value);
    return Tensor(node);
}

Tensor Tensor::scalar(double value) { return full({1}, value); }

Tensor Tensor::from(std::vector<int> shape, std::vector<double> values) {
    if (shape_numel(shape) != values.size())
        throw DimensionError("tensor data length " + std::to_string(values.size()) +
                             " does not match shape " + shape_string(shape));
    if (g_debug_checks) check_finite(values, "tensor init");
    auto node = std::make_shared<TensorNode>();
    node->shape = std::move(shape);
    node->values = std::move(values);
    return Tensor(node);
}

Tensor Tensor::param(std::vector<int> shape, std::vector<double> values) {
    Tensor t = from(std::move(shape), std::move(values));
    t.set_requires_grad(true);
    return t;
}

const std::vector<double>& Tensor::grad() const {
    if (node_->grad.empty())
        throw UsageError("tensor has no gradient (backward not run or not reached)");
    return node_->grad;
}

double Tensor::item() const {
    if (size() != 1)
        throw UsageError("item(): tensor is not scalar, shape " + shape_string(shape()));
    return node_->values[0];
}

double Tensor::at(int i, int j) const {
    return node_->values[static_cast<size_t>(i) * node_->shape[1] + j];
}

// ---- ops -------------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
    require_rank2(a, "matmul");
    require_rank2(b, "matmul");
    const int m = a.dim(0), k = a.dim(1), k2 = b.dim(0), n = b.dim(1);
    if (k != k2)
        throw DimensionError("matmul: inner dimensions disagree: " +
                             shape_string(a.shape()) + " vs " + shape_string(b.shape()));
    const auto& av = a.data();
    const auto& bv = b.data();
    std::vector<double> cv(static_cast<size_t>(m) * n, 0.0);
    for (int i = 0; i < m; ++i) {
        const double* arow = av.data() + static_cast<size_t>(i) * k;
        double* crow = cv.data() + static_cast<size_t>(i) * n;
        for (int p = 0; p < k; ++p) {
            const double aip = arow[p];
            const double* brow = bv.data() + static_cast<size_t>(p) * n;
            for (int j = 0; j < n; ++j) crow[j] += aip * brow[j];
        }
    }
    auto an = a.node(), bn = b.node();
    return make_result({m, n}, std::move(cv), {an, bn}, [an, bn, m, k, n](TensorNode& self) {
        const double* g = self.grad.data();
        if (an->requires_grad) {
            an->ensure_grad();
            double* da = an->grad.data();
            const double* bval = bn->values.data();
            for (int i = 0; i < m; ++i) {
                for (int p = 0; p < k; ++p) {
                    double acc = 0.0;
                    const double* grow = g + static_cast<size_t>(i) * n;
                    const double* brow = bval + static_cast<size_t>(p) * n;
                    for (int j = 0; j < n; ++j) acc += grow[j] * brow[j];
                    da[static_cast<size_t>(i) * k + p] += acc;
                }
            }
        }
        if (bn->requires_grad) {
            bn->ensure_grad();
            double* db = bn->grad.data();
            const double* aval = an->values.data();
            for (int i = 0; i < m; ++i) {
                const double* arow = aval + static_cast<size_t>(i) * k;
                const double* grow = g + static_cast<size_t>(i) * n;
                for (int p = 0; p < k; ++p) {
                    const double aip = arow[p];
                    double* dbrow = db + static_cast<size_t>(p) * n;
                    for (int j = 0; j < n; ++j) dbrow[j] += aip * grow[j];
                }
            }
        }
    });
}

Tensor transpose(const Tensor& a) {
    require_rank2(a, "transpose");
    const int m = a.dim(0), n = a.dim(1);
    std::vector<double> out(a.size());
    const auto& av = a.data();
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j)
            out[static_cast<size_t>(j) * m + i] = av[static_cast<size_t>(i) * n + j];
    auto an = a.node();
    return make_result({n, m}, std::move(out), {an}, [an, m, n](TensorNode& self) {
        if (!an->requires_grad) return;
        an->ensure_grad();
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < n; ++j)
                an->grad[static_cast<size_t>(i) * n + j] +=
                    self.grad[static_cast<size_t>(j) * m + i];
    });
}

Tensor add(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "add");
    std::vector<double> out(a.size());
    for (size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] + b.data()[i];
    auto an = a.node(), bn = b.node();
    return make_result(a.shape(), std::move(out), {an, bn}, [an, bn](TensorNode& self) {
        if (an->requires_grad) {
            an->ensure_grad();
            for (size_t i = 0; i < self.grad.size(); ++i) an->grad[i] += self.grad[i];
        }
        if (bn->requires_grad) {
            bn->ensure_grad();
            for (size_t i = 0; i < self.grad.size(); ++i) bn->grad[i] += self.grad[i];
        }
    });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "sub");
    std::vector<double> out(a.size());
    for (size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] - b.data()[i];
    auto an = a.node(), bn = b.node();
    return make_result(a.shape(), std::move(out), {an, bn}, [an, bn](TensorNode& self) {
        if (an->requires_grad) {
            an->ensure_grad();
            for (size_t i = 0; i < self.grad.size(); ++i) an->grad[i] += self.grad[i];
        }
        if (bn->requires_grad) {
            bn->ensure_grad();
            for (size_t i = 0; i < self.grad.size(); ++i) bn->grad[i] -= self.grad[i];
        }
    });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "mul");
    std::vector<double> out(a.size());
    for (size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * b.data()[i];
    auto an = a.node(), bn = b.node();
    return make_result(a.shape(), std::move(out), {an, bn}, [an, bn](TensorNode& self) {
        if (an->requires_grad) {
            an->ensure_grad();
            for (size_t i = 0; i < self.grad.size(); ++i)
                an->grad[i] += self.grad[i] * bn->values[i];
        }
        if (bn->requires_grad) {
            bn->ensure_grad();
            for (size_t i = 0; i < self.grad.size(); ++i)
                bn->grad[i] += self.grad[i] * an->values[i];
        }
    });
}

Tensor scale(const Tensor& a, double s) {
    std::vector<double> out(a.size());
    for (size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * s;
    auto an = a.node();
    return make_result(a.shape(), std::move(out), {an}, [an, s](TensorNode& self) {
        if (!an->requires_grad) return;
        an->ensure_grad();
        for (size_t i = 0; i < self.grad.size(); ++i) an->grad[i] += self.grad[i] * s;
    });
}

Tensor add_rowvec(const Tensor& x, const Tensor& b) {
    require_rank2(x, "add_rowvec");
    if (b.rank() != 1 || b.dim(0) != x.dim(1))
        throw DimensionError("add_rowvec: vector shape " + shape_string(b.shape()) +
                             " does not match columns of " + shape_string(x.shape()));
    const int n = x.dim(0), d = x.dim(1);
    std::vector<double> out(x.size());
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < d; ++j)
            out[static_cast<size_t>(i) * d + j] = x.at(i, j) + b.at(j);
    auto xn = x.node(), bn = b.node();
    return make_result(x.shape(), std::move(out), {xn, bn}, [xn, bn, n, d](TensorNode& self) {
        if (xn->requires_grad) {
            xn->ensure_grad();
            for (size_t i = 0; i < self.grad.size(); ++i) xn->grad[i] += self.grad[i];
        }
        if (bn->requires_grad) {
            bn->ensure_grad();
            for (int i = 0; i < n; ++i)
                for (int j = 0; j < d; ++j)
                    bn->grad[j] += self.grad[static_cast<size_t>(i) * d + j];
        }
    });
}

Tensor sum(const Tensor& a) {
    double s = 0.0;
    for (double v : a.data()) s += v;
    auto an = a.node();
    return make_result({1}, {s}, {an}, [an](TensorNode& self) {
        if (!an->requires_grad) return;
        an->ensure_grad();
        const double g = self.grad[0];
        for (double& gv : an->grad) gv += g;
    });
}

Tensor mean(const Tensor& a) {
    double s = 0.0;
    for (double v : a.data()) s += v;
    const double inv = 1.0 / static_cast<double>(a.size());
    auto an = a.node();
    return make_result({1}, {s * inv}, {an}, [an, inv](TensorNode& self) {
        if (!an->requires_grad) return;
        an->ensure_grad();
        const double g = self.grad[0] * inv;
        for (double& gv : an->grad) gv += g;
    });
}

Tensor sumsq(const Tensor& a) {
    double s = 0.0;
    for (double v : a.data()) s += v * v;
    auto an = a.node();
    return make_result({1}, {s}, {an}, [an](TensorNode& self) {
        if (!an->requires_grad) return;
        an->ensure_grad();
        const double g = self.grad[0];
        for (size_t i = 0; i < an->values.size(); ++i) an->grad[i] += 2.0 * an->values[i] * g;
    });
}

Tensor reshape(const Tensor& a, std::vector<int> shape) {
    if (shape_numel(shape) != a.size())
        throw DimensionError("reshape: cannot view " + shape_string(a.shape()) +
                             " as " + shape_string(shape));
    auto an = a.node();
    std::vector<double> out = a.data();
    return make_result(std::move(shape), std::move(out), {an}, [an](TensorNode& self) {
        if (!an->requires_grad) return;
        an->ensure_grad();
        for (size_t i = 0; i < self.grad.size(); ++i) an->grad[i] += self.grad[i];
    });
}

Tensor slice_rows(const Tensor& a, int from, int count) {
    require_rank2(a, "slice_rows");
    const int n = a.dim(0), d = a.dim(1);
    if (from < 0 || count <= 0 || from + count > n)
        throw DimensionError("slice_rows: range [" + std::to_string(from) + "," +
                             std::to_string(from + count) + ") out of " + shape_string(a.shape()));
    std::vector<double> out(static_cast<size_t>(count) * d);
    std::copy_n(a.data().begin() + static_cast<size_t>(from) * d, out.size(), out.begin());
    auto an = a.node();
    return make_result({count, d}, std::move(out), {an}, [an, from, count, d](TensorNode& self) {
        if (!an->requires_grad) return;
        an->ensure_grad();
        for (size_t i = 0; i < static_cast<size_t>(count) * d; ++i)
            an->grad[static_cast<size_t>(from) * d + i] += self.grad[i];
    });
}

Tensor slice_cols(const Tensor& a, int from, int count) {
    require_rank2(a, "slice_cols");
    const int n = a.dim(0), d = a.dim(1);
    if (from < 0 || count <= 0 || from + count > d)
        throw DimensionError("slice_cols: range [" + std::to_string(from) + "," +
                             std::to_string(from + count) + ") out of " + shape_string(a.shape()));
    std::vector<double> out(static_cast<size_t>(n) * count);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < count; ++j)
            out[static_cast<size_t>(i) * count + j] = a.at(i, from + j);
    auto an = a.node();
    return make_result({n, count}, std::move(out), {an}, [an, from, count, n, d](TensorNode& self) {
        if (!an->requires_grad) return;
        an->ensure_grad();
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < count; ++j)
                an->grad[static_cast<size_t>(i) * d + from + j] +=
                    self.grad[static_cast<size_t>(i) * count + j];
    });
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw DimensionError("concat_rows: no parts");
    const int d = parts[0].dim(1);
    int rows = 0;
    for (const auto& p : parts) {
        require_rank2(p, "concat_rows");
        if (p.dim(1) != d)
            throw DimensionError("concat_rows: column mismatch: " + shape_string(p.shape()) +
                                 " vs [*," + std::to_string(d) + "]");
        rows += p.dim(0);
    }
    std::vector<double> out;
    out.reserve(static_cast<size_t>(rows) * d);
    std::vector<NodePtr> parents;
    std::vector<int> part_rows;
    for (const auto& p : parts) {
        out.insert(out.end(), p.data().begin(), p.data().end());
        parents.push_back(p.node());
        part_rows.push_back(p.dim(0));
    }
    auto ps = parents;
    return make_result({rows, d}, std::move(out), std::move(parents),
                       [ps, part_rows, d](TensorNode& self) {
        size_t off = 0;
        for (size_t k = 0; k < ps.size(); ++k) {
            const size_t len = static_cast<size_t>(part_rows[k]) * d;
            if (ps[k]->requires_grad) {
                ps[k]->ensure_grad();
                for (size_t i = 0; i < len; ++i) ps[k]->grad[i] += self.grad[off + i];
            }
            off += len;
        }
    });
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw DimensionError("concat_cols: no parts");
    const int n = parts[0].dim(0);
    int cols = 0;
    for (const auto& p : parts) {
        require_rank2(p, "concat_cols");
        if (p.dim(0) != n)
            throw DimensionError("concat_cols: row mismatch: " + shape_string(p.shape()) +
                                 " vs [" + std::to_string(n) + ",*]");
        cols += p.dim(1);
    }
    std::vector<double> out(static_cast<size_t>(n) * cols);
    std::vector<NodePtr> parents;
    std::vector<int> part_cols;
    int at = 0;
    for (const auto& p : parts) {
        const int pc = p.dim(1);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < pc; ++j)
                out[static_cast<size_t>(i) * cols + at + j] = p.at(i, j);
        parents.push_back(p.node());
        part_cols.push_back(pc);
        at += pc;
    }
    auto ps = parents;
    return make_result({n, cols}, std::move(out), std::move(parents),
                       [ps, part_cols, n, cols](TensorNode& self) {
        int off = 0;
        for (size_t k = 0; k < ps.size(); ++k) {
            const int pc = part_cols[k];
            if (ps[k]->requires_grad) {
                ps[k]->ensure_grad();
                for (int i = 0; i < n; ++i)
                    for (int j = 0; j < pc; ++j)
                        ps[k]->grad[static_cast<size_t>(i) * pc + j] +=
                            self.grad[static_cast<size_t>(i) * cols + off + j];
            }
            off += pc;
        }
    });
}

namespace {

inline double gelu_tanh(double x) {
    constexpr double kSqrt2OverPi = 0.7978845608028654;
    constexpr double kCubic = 0.044715;
    const double u = kSqrt2OverPi * (x + kCubic * x * x * x);
    return 0.5 * x * (1.0 + std::tanh(u));
}

inline double gelu_tanh_grad(double x) {
    constexpr double kSqrt2OverPi = 0.7978845608028654;
    constexpr double kCubic = 0.044715;
    const double u = kSqrt2OverPi * (x + kCubic * x * x * x);
    const double t = std::tanh(u);
    const double du = kSqrt2OverPi * (1.0 + 3.0 * kCubic * x * x);
    return 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du;
}

} // namespace

Tensor activation(const Tensor& x, Activation kind, Mode mode, std::mt19937_64* rng) {
    const auto& xv = x.data();
    std::vector<double> out(x.size());
    auto xn = x.node();
    switch (kind) {
        case Activation::Relu: {
            for (size_t i = 0; i < out.size(); ++i) out[i] = xv[i] > 0.0 ? xv[i] : 0.0;
            return make_result(x.shape(), std::move(out), {xn}, [xn](TensorNode& self) {
                if (!xn->requires_grad) return;
                xn->ensure_grad();
                for (size_t i = 0; i < self.grad.size(); ++i)
                    if (xn->values[i] > 0.0) xn->grad[i] += self.grad[i];
            });
        }
        case Activation::Gelu: {
            for (size_t i = 0; i < out.size(); ++i) out[i] = gelu_tanh(xv[i]);
            return make_result(x.shape(), std::move(out), {xn}, [xn](TensorNode& self) {
                if (!xn->requires_grad) return;
                xn->ensure_grad();
                for (size_t i = 0; i < self.grad.size(); ++i)
                    xn->grad[i] += self.grad[i] * gelu_tanh_grad(xn->values[i]);
            });
        }
        case Activation::Rrelu: {
            std::vector<double> slopes(x.size(), 0.5 * (kRreluLo + kRreluHi));
            if (mode == Mode::Train) {
                if (!rng)
                    throw UsageError("rrelu: train mode requires an rng for slope sampling");
                std::uniform_real_distribution<double> dist(kRreluLo, kRreluHi);
                for (double& s : slopes) s = dist(*rng);
            }
            for (size_t i = 0; i < out.size(); ++i)
                out[i] = xv[i] >= 0.0 ? xv[i] : xv[i] * slopes[i];
            return make_result(x.shape(), std::move(out), {xn},
                               [xn, slopes = std::move(slopes)](TensorNode& self) {
                if (!xn->requires_grad) return;
                xn->ensure_grad();
                for (size_t i = 0; i < self.grad.size(); ++i)
                    xn->grad[i] += self.grad[i] * (xn->values[i] >= 0.0 ? 1.0 : slopes[i]);
            });
        }
    }
    throw ConfigError("unknown activation kind");
}

Tensor softmax(const Tensor& x, int axis) {
    const int r = x.rank();
    if (axis < 0) axis += r;
    if (axis < 0 || axis >= r)
        throw DimensionError("softmax: axis " + std::to_string(axis) + " invalid for " +
                             shape_string(x.shape()));
    check_finite(x.data(), "softmax");
    size_t outer = 1, inner = 1;
    const size_t len = static_cast<size_t>(x.dim(axis));
    for (int i = 0; i < axis; ++i) outer *= static_cast<size_t>(x.dim(i));
    for (int i = axis + 1; i < r; ++i) inner *= static_cast<size_t>(x.dim(i));

    const auto& xv = x.data();
    std::vector<double> out(x.size());
    for (size_t o = 0; o < outer; ++o) {
        for (size_t in = 0; in < inner; ++in) {
            const size_t base = o * len * inner + in;
            double mx = xv[base];
            for (size_t i = 1; i < len; ++i) mx = std::max(mx, xv[base + i * inner]);
            double s = 0.0;
            for (size_t i = 0; i < len; ++i) {
                const double e = std::exp(xv[base + i * inner] - mx);
                out[base + i * inner] = e;
                s += e;
            }
            const double invs = 1.0 / s;
            for (size_t i = 0; i < len; ++i) out[base + i * inner] *= invs;
        }
    }
    auto xn = x.node();
    return make_result(x.shape(), std::move(out), {xn},
                       [xn, outer, inner, len](TensorNode& self) {
        if (!xn->requires_grad) return;
        xn->ensure_grad();
        for (size_t o = 0; o < outer; ++o) {
            for (size_t in = 0; in < inner; ++in) {
                const size_t base = o * len * inner + in;
                double dot = 0.0;
                for (size_t i = 0; i < len; ++i)
                    dot += self.grad[base + i * inner] * self.values[base + i * inner];
                for (size_t i = 0; i < len; ++i) {
                    const size_t idx = base + i * inner;
                    xn->grad[idx] += self.values[idx] * (self.grad[idx] - dot);
                }
            }
        }
    });
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
    if (eps <= 0.0) throw ConfigError("layer_norm: eps must be positive");
    const int r = x.rank();
    const int d = x.dim(r - 1);
    if (gamma.rank() != 1 || gamma.dim(0) != d || beta.rank() != 1 || beta.dim(0) != d)
        throw DimensionError("layer_norm: gamma/beta " + shape_string(gamma.shape()) + "/" +
                             shape_string(beta.shape()) + " do not match last dim of " +
                             shape_string(x.shape()));
    const size_t rows = x.size() / static_cast<size_t>(d);
    const auto& xv = x.data();
    std::vector<double> out(x.size());
    std::vector<double> xhat(x.size());
    std::vector<double> inv_sigma(rows);
    for (size_t rI = 0; rI < rows; ++rI) {
        const size_t base = rI * d;
        double mu = 0.0;
        for (int j = 0; j < d; ++j) mu += xv[base + j];
        mu /= d;
        double var = 0.0;
        for (int j = 0; j < d; ++j) {
            const double c = xv[base + j] - mu;
            var += c * c;
        }
        var /= d;
        const double is = 1.0 / std::sqrt(var + eps);
        inv_sigma[rI] = is;
        for (int j = 0; j < d; ++j) {
            const double xh = (xv[base + j] - mu) * is;
            xhat[base + j] = xh;
            out[base + j] = gamma.at(j) * xh + beta.at(j);
        }
    }
    auto xn = x.node(), gn = gamma.node(), bn = beta.node();
    return make_result(x.shape(), std::move(out), {xn, gn, bn},
                       [xn, gn, bn, rows, d, xhat = std::move(xhat),
                        inv_sigma = std::move(inv_sigma)](TensorNode& self) {
        for (size_t rI = 0; rI < rows; ++rI) {
            const size_t base = rI * d;
            if (gn->requires_grad) {
                gn->ensure_grad();
                for (int j = 0; j < d; ++j)
                    gn->grad[j] += self.grad[base + j] * xhat[base + j];
            }
            if (bn->requires_grad) {
                bn->ensure_grad();
                for (int j = 0; j < d; ++j) bn->grad[j] += self.grad[base + j];
            }
            if (xn->requires_grad) {
                xn->ensure_grad();
                double mean_dxh = 0.0, mean_dxh_xh = 0.0;
                for (int j = 0; j < d; ++j) {
                    const double dxh = self.grad[base + j] * gn->values[j];
                    mean_dxh += dxh;
                    mean_dxh_xh += dxh * xhat[base + j];
                }
                mean_dxh /= d;
                mean_dxh_xh /= d;
                for (int j = 0; j < d; ++j) {
                    const double dxh = self.grad[base + j] * gn->values[j];
                    xn->grad[base + j] +=
                        inv_sigma[rI] * (dxh - mean_dxh - xhat[base + j] * mean_dxh_xh);
                }
            }
        }
    });
}

Tensor batch_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  Tensor& running_mean, Tensor& running_var,
                  Mode mode, double momentum, double eps) {
    require_rank2(x, "batch_norm");
    const int batch = x.dim(0), d = x.dim(1);
    if (gamma.dim(0) != d || beta.dim(0) != d || running_mean.dim(0) != d ||
        running_var.dim(0) != d)
        throw DimensionError("batch_norm: parameter length does not match feature dim " +
                             std::to_string(d));
    if (mode == Mode::Train && batch < 2)
        throw DimensionError("batch_norm: train mode needs batch >= 2, got " +
                             std::to_string(batch));
    const auto& xv = x.data();
    std::vector<double> out(x.size());
    auto xn = x.node(), gn = gamma.node(), bn = beta.node();

    if (mode == Mode::Eval) {
        std::vector<double> inv_sigma(d);
        for (int j = 0; j < d; ++j)
            inv_sigma[j] = 1.0 / std::sqrt(running_var.at(j) + eps);
        std::vector<double> xhat(x.size());
        for (int i = 0; i < batch; ++i) {
            for (int j = 0; j < d; ++j) {
                const size_t idx = static_cast<size_t>(i) * d + j;
                xhat[idx] = (xv[idx] - running_mean.at(j)) * inv_sigma[j];
                out[idx] = gamma.at(j) * xhat[idx] + beta.at(j);
            }
        }
        return make_result(x.shape(), std::move(out), {xn, gn, bn},
                           [xn, gn, bn, batch, d, xhat = std::move(xhat),
                            inv_sigma = std::move(inv_sigma)](TensorNode& self) {
            for (int i = 0; i < batch; ++i) {
                for (int j = 0; j < d; ++j) {
                    const size_t idx = static_cast<size_t>(i) * d + j;
                    if (gn->requires_grad) {
                        gn->ensure_grad();
                        gn->grad[j] += self.grad[idx] * xhat[idx];
                    }
                    if (bn->requires_grad) {
                        bn->ensure_grad();
                        bn->grad[j] += self.grad[idx];
                    }
                    if (xn->requires_grad) {
                        xn->ensure_grad();
                        xn->grad[idx] += self.grad[idx] * gn->values[j] * inv_sigma[j];
                    }
                }
            }
        });
    }

    // train mode: batch statistics + running update
    std::vector<double> mu(d, 0.0), var(d, 0.0), inv_sigma(d);
    for (int i = 0; i < batch; ++i)
        for (int j = 0; j < d; ++j) mu[j] += x.at(i, j);
    for (int j = 0; j < d; ++j) mu[j] /= batch;
    for (int i = 0; i < batch; ++i)
        for (int j = 0; j < d; ++j) {
            const double c = x.at(i, j) - mu[j];
            var[j] += c * c;
        }
    for (int j = 0; j < d; ++j) {
        var[j] /= batch;
        inv_sigma[j] = 1.0 / std::sqrt(var[j] + eps);
    }
    for (int j = 0; j < d; ++j) {
        running_mean.data()[j] = momentum * running_mean.at(j) + (1.0 - momentum) * mu[j];
        running_var.data()[j] = momentum * running_var.at(j) + (1.0 - momentum) * var[j];
    }
    std::vector<double> xhat(x.size());
    for (int i = 0; i < batch; ++i) {
        for (int j = 0; j < d; ++j) {
            const size_t idx = static_cast<size_t>(i) * d + j;
            xhat[idx] = (xv[idx] - mu[j]) * inv_sigma[j];
            out[idx] = gamma.at(j) * xhat[idx] + beta.at(j);
        }
    }
    return make_result(x.shape(), std::move(out), {xn, gn, bn},
                       [xn, gn, bn, batch, d, xhat = std::move(xhat),
                        inv_sigma = std::move(inv_sigma)](TensorNode& self) {
        if (gn->requires_grad || bn->requires_grad) {
            if (gn->requires_grad) gn->ensure_grad();
            if (bn->requires_grad) bn->ensure_grad();
            for (int i = 0; i < batch; ++i) {
                for (int j = 0; j < d; ++j) {
                    const size_t idx = static_cast<size_t>(i) * d + j;
                    if (gn->requires_grad) gn->grad[j] += self.grad[idx] * xhat[idx];
                    if (bn->requires_grad) bn->grad[j] += self.grad[idx];
                }
            }
        }
        if (xn->requires_grad) {
            xn->ensure_grad();
            for (int j = 0; j < d; ++j) {
                double mean_dxh = 0.0, mean_dxh_xh = 0.0;
                for (int i = 0; i < batch; ++i) {
                    const size_t idx = static_cast<size_t>(i) * d + j;
                    const double dxh = self.grad[idx] * gn->values[j];
                    mean_dxh += dxh;
                    mean_dxh_xh += dxh * xhat[idx];
                }
                mean_dxh /= batch;
                mean_dxh_xh /= batch;
                for (int i = 0; i < batch; ++i) {
                    const size_t idx = static_cast<size_t>(i) * d + j;
                    const double dxh = self.grad[idx] * gn->values[j];
                    xn->grad[idx] +=
                        inv_sigma[j] * (dxh - mean_dxh - xhat[idx] * mean_dxh_xh);
                }
            }
        }
    });
}

Tensor dropout(const Tensor& x, double rate, Mode mode, std::mt19937_64& rng) {
    if (rate < 0.0 || rate >= 1.0)
        throw ConfigError("dropout: rate must lie in [0,1), got " + std::to_string(rate));
    if (mode == Mode::Eval || rate == 0.0) return x;
    const double keep_scale = 1.0 / (1.0 - rate);
    std::uniform_real_distribution<double> dist(0.0, 1.0);
    std::vector<double> mask(x.size());
    for (double& m : mask) m = dist(rng) < rate ? 0.0 : keep_scale;
    std::vector<double> out(x.size());
    for (size_t i = 0; i < out.size(); ++i) out[i] = x.data()[i] * mask[i];
    auto xn = x.node();
    return make_result(x.shape(), std::move(out), {xn},
                       [xn, mask = std::move(mask)](TensorNode& self) {
        if (!xn->requires_grad) return;
        xn->ensure_grad();
        for (size_t i = 0; i < self.grad.size(); ++i) xn->grad[i] += self.grad[i] * mask[i];
    });
}

namespace {

void validate_onehot(const Tensor& onehot) {
    const int batch = onehot.dim(0), c = onehot.dim(1);
    for (int i = 0; i < batch; ++i) {
        int ones = 0;
        for (int j = 0; j < c; ++j) {
            const double v = onehot.at(i, j);
            if (v == 1.0) ++ones;
            else if (v != 0.0)
                throw DataError("invalid one-hot row " + std::to_string(i) +
                                ": entry " + std::to_string(v));
        }
        if (ones != 1)
            throw DataError("invalid one-hot row " + std::to_string(i) + ": " +
                            std::to_string(ones) + " ones");
    }
}

} // namespace

Tensor categorical_cross_entropy(const Tensor& probs, const Tensor& onehot) {
    require_rank2(probs, "categorical_cross_entropy");
    require_same_shape(probs, onehot, "categorical_cross_entropy");
    const int batch = probs.dim(0), c = probs.dim(1);
    validate_onehot(onehot);
    for (int i = 0; i < batch; ++i) {
        double s = 0.0;
        for (int j = 0; j < c; ++j) s += probs.at(i, j);
        if (std::abs(s - 1.0) > 1e-4)
            throw DataError("cross entropy: probs row " + std::to_string(i) +
                            " sums to " + std::to_string(s));
    }
    double loss = 0.0;
    for (int i = 0; i < batch; ++i)
        for (int j = 0; j < c; ++j)
            if (onehot.at(i, j) == 1.0)
                loss -= std::log(std::max(probs.at(i, j), kCeClamp));
    loss /= batch;
    auto pn = probs.node(), yn = onehot.node();
    return make_result({1}, {loss}, {pn, yn}, [pn, yn, batch, c](TensorNode& self) {
        if (!pn->requires_grad) return;
        pn->ensure_grad();
        const double g = self.grad[0] / batch;
        for (int i = 0; i < batch; ++i) {
            for (int j = 0; j < c; ++j) {
                const size_t idx = static_cast<size_t>(i) * c + j;
                if (yn->values[idx] == 1.0 && pn->values[idx] > kCeClamp)
                    pn->grad[idx] -= g / pn->values[idx];
            }
        }
    });
}

Tensor softmax_cross_entropy(const Tensor& logits, const Tensor& onehot, Tensor* probs_out) {
    require_rank2(logits, "softmax_cross_entropy");
    require_same_shape(logits, onehot, "softmax_cross_entropy");
    check_finite(logits.data(), "softmax_cross_entropy");
    validate_onehot(onehot);
    const int batch = logits.dim(0), c = logits.dim(1);
    std::vector<double> probs(logits.size());
    double loss = 0.0;
    for (int i = 0; i < batch; ++i) {
        const size_t base = static_cast<size_t>(i) * c;
        double mx = logits.data()[base];
        for (int j = 1; j < c; ++j) mx = std::max(mx, logits.data()[base + j]);
        double s = 0.0;
        for (int j = 0; j < c; ++j) {
            const double e = std::exp(logits.data()[base + j] - mx);
            probs[base + j] = e;
            s += e;
        }
        for (int j = 0; j < c; ++j) probs[base + j] /= s;
        for (int j = 0; j < c; ++j)
            if (onehot.at(i, j) == 1.0)
                loss -= std::log(std::max(probs[base + j], kCeClamp));
    }
    loss /= batch;
    if (probs_out) *probs_out = Tensor::from(logits.shape(), probs);
    auto ln = logits.node(), yn = onehot.node();
    return make_result({1}, {loss}, {ln, yn},
                       [ln, yn, batch, c, probs = std::move(probs)](TensorNode& self) {
        if (!ln->requires_grad) return;
        ln->ensure_grad();
        const double g = self.grad[0] / batch;
        for (size_t i = 0; i < probs.size(); ++i)
            ln->grad[i] += g * (probs[i] - yn->values[i]);
    });
}

void backward(const Tensor& loss) {
    if (loss.size() != 1)
        throw UsageError("backward: root must be scalar, got shape " +
                         shape_string(loss.shape()));
    NodePtr root = loss.node();
    if (!root->requires_grad) return;  // graph holds no trainable inputs

    // post-order over the recorded graph; parents precede children in `order`
    std::vector<TensorNode*> order;
    std::unordered_set<TensorNode*> done;
    struct Frame { TensorNode* node; size_t next; };
    std::vector<Frame> stack{{root.get(), 0}};
    std::unordered_set<TensorNode*> onstack{root.get()};
    while (!stack.empty()) {
        Frame& f = stack.back();
        if (f.next < f.node->parents.size()) {
            TensorNode* p = f.node->parents[f.next++].get();
            if (p->requires_grad && !done.count(p) && !onstack.count(p)) {
                stack.push_back({p, 0});
                onstack.insert(p);
            }
        } else {
            done.insert(f.node);
            order.push_back(f.node);
            onstack.erase(f.node);
            stack.pop_back();
        }
    }

    root->ensure_grad();
    root->grad[0] = 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        TensorNode* n = *it;
        if (n->backward_fn) {
            n->ensure_grad();
            n->backward_fn(*n);
        }
    }
}

} // namespace vitderm
