#pragma once

#include <functional>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "vitderm/errors.hpp"

namespace vitderm {

struct TensorNode;
using NodePtr = std::shared_ptr<TensorNode>;

// One recorded operation result. Nodes form the autodiff graph through
// their parent references; a node created while gradient recording is off
// (or from constant operands) has no parents and acts as a plain value.
struct TensorNode {
    std::vector<int> shape;
    std::vector<double> values;
    std::vector<double> grad;   // empty until backward touches this node
    bool requires_grad = false;
    std::vector<NodePtr> parents;
    std::function<void(TensorNode&)> backward_fn;

    size_t size() const { return values.size(); }
    void ensure_grad() {
        if (grad.size() != values.size()) grad.assign(values.size(), 0.0);
    }
};

enum class Mode { Train, Eval };

enum class Activation { Relu, Gelu, Rrelu };

Activation activation_from_string(const std::string& name);
std::string to_string(Activation a);

// Value-semantic handle to a graph node. Copies alias the same node.
class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(std::vector<int> shape);
    static Tensor full(std::vector<int> shape, double value);
    static Tensor scalar(double value);
    static Tensor from(std::vector<int> shape, std::vector<double> values);
    // Leaf with requires_grad set; used for model parameters.
    static Tensor param(std::vector<int> shape, std::vector<double> values);

    bool defined() const { return node_ != nullptr; }
    int rank() const { return static_cast<int>(node_->shape.size()); }
    const std::vector<int>& shape() const { return node_->shape; }
    int dim(int i) const { return node_->shape[static_cast<size_t>(i)]; }
    size_t size() const { return node_->values.size(); }

    std::vector<double>& data() { return node_->values; }
    const std::vector<double>& data() const { return node_->values; }
    const std::vector<double>& grad() const;
    bool has_grad() const { return !node_->grad.empty(); }
    void zero_grad() { node_->grad.clear(); }

    bool requires_grad() const { return node_->requires_grad; }
    void set_requires_grad(bool rg) { node_->requires_grad = rg; }

    // Scalar extraction; throws unless the tensor holds exactly one value.
    double item() const;
    double at(int i) const { return node_->values[static_cast<size_t>(i)]; }
    double at(int i, int j) const;

    NodePtr node() const { return node_; }
    explicit Tensor(NodePtr n) : node_(std::move(n)) {}

private:
    NodePtr node_;
};

// Thread-local gradient recording switch. While disabled, every op result
// is a constant node: no parents, no backward closure, memory released as
// intermediates go out of scope.
bool grad_enabled();
void set_grad_enabled(bool on);

struct NoGradGuard {
    NoGradGuard() : prev_(grad_enabled()) { set_grad_enabled(false); }
    ~NoGradGuard() { set_grad_enabled(prev_); }
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;
private:
    bool prev_;
};

// Debug-mode finite checks on op results (off by default; tests enable it).
void set_debug_checks(bool on);
bool debug_checks();

std::string shape_string(const std::vector<int>& shape);

// ---- ops ------------------------------------------------------------------

// [m,k] x [k,n] -> [m,n]; dA = dC.B^T, dB = A^T.dC
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);                       // 2-D
Tensor add(const Tensor& a, const Tensor& b);            // same shape
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);            // elementwise
Tensor scale(const Tensor& a, double s);
Tensor add_rowvec(const Tensor& x, const Tensor& b);     // [n,d] + [d]
Tensor sum(const Tensor& a);                             // -> scalar
Tensor mean(const Tensor& a);                            // -> scalar
Tensor sumsq(const Tensor& a);                           // sum of squares -> scalar
Tensor reshape(const Tensor& a, std::vector<int> shape);
Tensor slice_rows(const Tensor& a, int from, int count); // 2-D
Tensor slice_cols(const Tensor& a, int from, int count); // 2-D
Tensor concat_rows(const std::vector<Tensor>& parts);    // 2-D, equal cols
Tensor concat_cols(const std::vector<Tensor>& parts);    // 2-D, equal rows

// Elementwise activation. Rrelu samples its negative slope per element from
// U[1/8, 1/3] in train mode and uses the interval midpoint in eval mode.
Tensor activation(const Tensor& x, Activation kind, Mode mode = Mode::Eval,
                  std::mt19937_64* rng = nullptr);

// Max-subtracted softmax along `axis`; rejects non-finite input.
Tensor softmax(const Tensor& x, int axis);

// Normalizes the last dimension; gamma/beta have that dimension's extent.
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  double eps = 1e-6);

// Train mode normalizes [batch,d] by batch statistics (population variance)
// and folds them into running_mean / running_var with
//   running <- momentum * running + (1 - momentum) * batch.
// Eval mode normalizes by the running statistics. Batch of 1 in train mode
// is an error. running_* tensors are mutated in place, never differentiated.
Tensor batch_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  Tensor& running_mean, Tensor& running_var,
                  Mode mode, double momentum = 0.99, double eps = 1e-3);

// Inverted dropout: train mode zeroes elements with probability `rate` and
// scales survivors by 1/(1-rate); eval mode is the identity.
Tensor dropout(const Tensor& x, double rate, Mode mode, std::mt19937_64& rng);

// Mean over the batch of -log(p_true), p clamped at 1e-12. probs rows must
// sum to 1 within 1e-4; onehot rows must contain exactly one 1.
Tensor categorical_cross_entropy(const Tensor& probs, const Tensor& onehot);

// Fused softmax + cross-entropy on raw logits; gradient w.r.t. logits is
// (probs - onehot)/batch. If probs_out is given it receives the softmax
// values (detached).
Tensor softmax_cross_entropy(const Tensor& logits, const Tensor& onehot,
                             Tensor* probs_out = nullptr);

// Reverse pass from a scalar. Visits each reachable node exactly once in
// reverse topological order; gradients accumulate additively across fan-out.
void backward(const Tensor& loss);

} // namespace vitderm
