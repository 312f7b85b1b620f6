// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "vedocr/error.hpp"
#include "vedocr/rng.hpp"

namespace vedocr {

using Shape = std::vector<int64_t>;

int64_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

namespace detail {

struct TensorNode {
    uint64_t id = 0;
    Shape shape;
    std::vector<double> data;
    std::vector<double> grad; // empty until backward touches this node
    bool requires_grad = false;
};

} // namespace detail

/// Dense row-major tensor of doubles with an optional gradient buffer.
/// Value-semantic handle: copies share the underlying storage, so a parameter
/// held by a model and by an optimizer is the same buffer.
class Tensor {
public:
    Tensor() = default;
    Tensor(Shape shape, bool requires_grad = false);
    Tensor(Shape shape, std::vector<double> values, bool requires_grad = false);

    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor full(Shape shape, double value, bool requires_grad = false);
    static Tensor scalar(double value, bool requires_grad = false);
    /// Entries drawn i.i.d. normal(mean, stddev).
    static Tensor randn(Rng& rng, Shape shape, double mean, double stddev,
                        bool requires_grad = false);

    bool defined() const { return node_ != nullptr; }
    const Shape& shape() const;
    int64_t dim(size_t axis) const;
    size_t rank() const;
    int64_t numel() const;
    uint64_t id() const;

    std::span<double> data();
    std::span<const double> data() const;
    double item() const; // requires numel() == 1

    bool requires_grad() const;
    void set_requires_grad(bool value);

    /// Gradient buffer; reads as zeros when backward never reached this node.
    std::span<const double> grad() const;
    std::vector<double>& mutable_grad();
    void zero_grad();

    /// Deep copy of the values into a fresh leaf node.
    Tensor clone(bool requires_grad = false) const;

    const std::shared_ptr<detail::TensorNode>& node() const { return node_; }

private:
    std::shared_ptr<detail::TensorNode> node_;
};

/// Execution-ordered record of differentiable operations (define-by-run).
/// Constructing a Tape makes it the active one for the current thread; ops
/// executed while it is active append their backward rules. The recording
/// order is topological by construction, and backward replays it in exact
/// reverse, so gradients are bit-reproducible run to run.
class Tape {
public:
    Tape();
    ~Tape();
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    /// Seeds d(loss)/d(loss) = 1 and pulls gradients back through every
    /// recorded op whose output is reachable from `loss`.
    void backward(const Tensor& loss);

    size_t size() const { return ops_.size(); }
    void clear();
    bool contains_output(uint64_t tensor_id) const;

    static Tape* active();

    struct Op {
        std::vector<std::shared_ptr<detail::TensorNode>> inputs;
        std::shared_ptr<detail::TensorNode> output;
        std::function<void()> pull;
    };

    void record(Op op);

private:
    std::vector<Op> ops_;
    Tape* previous_ = nullptr;
};

// ---- differentiable operations ---------------------------------------------

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
Tensor add_scalar(const Tensor& a, double value);
Tensor neg(const Tensor& a);

/// [m,k] x [k,n] -> [m,n].
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a); // 2-D only

Tensor reshape(const Tensor& a, Shape shape);
Tensor concat_rows(std::span<const Tensor> parts);
Tensor concat_cols(std::span<const Tensor> parts);
Tensor slice_rows(const Tensor& a, int64_t start, int64_t count);
Tensor slice_cols(const Tensor& a, int64_t start, int64_t count);

/// Row lookup with scatter-add backward; `ids` may repeat.
Tensor gather_rows(const Tensor& a, std::span<const int64_t> ids);

Tensor softmax(const Tensor& a, int64_t axis);
Tensor log_softmax(const Tensor& a, int64_t axis);

/// Normalizes the last axis to mean 0 / variance 1 and applies gamma, beta.
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  double eps);

/// tanh-approximation GELU, elementwise.
Tensor gelu(const Tensor& x);

Tensor exp(const Tensor& x);
Tensor log(const Tensor& x);
Tensor abs(const Tensor& x);

Tensor sum_all(const Tensor& x);  // -> scalar
Tensor mean_all(const Tensor& x); // -> scalar

/// Valid (no padding) cross-correlation: x [C,H,W], kernels [F,C,kh,kw].
Tensor conv2d(const Tensor& x, const Tensor& kernels, int64_t stride_h,
              int64_t stride_w);
Tensor add_channel_bias(const Tensor& x, const Tensor& bias); // x [C,H,W], bias [C]

/// Adds v along the last axis of x (bias add).
Tensor add_rowvec(const Tensor& x, const Tensor& v);

/// Scales row i of x [N,D] by the constant factors[i] (not differentiable
/// w.r.t. the factors).
Tensor mul_rows(const Tensor& x, std::span<const double> factors);

/// Extracts one element as a [1] tensor.
Tensor select_item(const Tensor& x, int64_t flat_index);

/// Mean negative log-likelihood of `targets` under row-wise softmax of
/// `logits` [L,V]; rows whose target equals ignore_id contribute nothing and
/// an all-ignored batch scores exactly 0.
Tensor cross_entropy(const Tensor& logits, std::span<const int64_t> targets,
                     int64_t ignore_id);

/// Backward through the active tape. `loss` must be a scalar produced on it.
void backward(const Tensor& loss);

/// Central-difference gradient audit: runs f under a fresh tape to get the
/// analytic gradient of x, then probes every coordinate with (f(x+h e_i) -
/// f(x-h e_i)) / 2h and returns the worst relative error
/// |a-b| / max(1, |a|, |b|).
double finite_difference_check(const std::function<Tensor(const Tensor&)>& f,
                               const Tensor& x, double h);

} // namespace vedocr
