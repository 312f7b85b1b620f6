// SPDX-License-Identifier: Apache-2.0
#include "vedocr/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <sstream>

namespace vedocr {

namespace {

std::atomic<uint64_t> g_next_tensor_id{1};

thread_local Tape* g_active_tape = nullptr;

std::vector<double>& grad_of(const std::shared_ptr<detail::TensorNode>& n) {
    if (n->grad.empty()) {
        n->grad.assign(n->data.size(), 0.0);
    }
    return n->grad;
}

bool any_requires_grad(std::initializer_list<const Tensor*> ts) {
    for (const Tensor* t : ts) {
        if (t->defined() && t->requires_grad()) {
            return true;
        }
    }
    return false;
}

/// Records `op` on the active tape when the output participates in autodiff.
void maybe_record(Tape::Op op) {
    if (g_active_tape != nullptr && op.output->requires_grad) {
        g_active_tape->record(std::move(op));
    }
}

void check_defined(const Tensor& t, const char* op_name) {
    if (!t.defined()) {
        throw ContractError(std::string(op_name) + ": undefined tensor operand");
    }
}

// (outer, axis extent, inner) decomposition for axis-wise ops.
struct AxisSplit {
    int64_t outer = 1;
    int64_t extent = 1;
    int64_t inner = 1;
};

AxisSplit split_axis(const Shape& shape, int64_t axis, const char* op_name) {
    if (axis < 0 || axis >= static_cast<int64_t>(shape.size())) {
        std::ostringstream os;
        os << op_name << ": axis " << axis << " out of range for shape "
           << shape_str(shape);
        throw IndexError(os.str());
    }
    AxisSplit s;
    for (int64_t i = 0; i < axis; ++i) s.outer *= shape[i];
    s.extent = shape[axis];
    for (size_t i = axis + 1; i < shape.size(); ++i) s.inner *= shape[i];
    return s;
}

} // namespace

int64_t shape_numel(const Shape& shape) {
    int64_t n = 1;
    for (int64_t d : shape) n *= d;
    return n;
}

std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << "[";
    for (size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ",";
        os << shape[i];
    }
    os << "]";
    return os.str();
}

// ---- Tensor -----------------------------------------------------------------

Tensor::Tensor(Shape shape, bool requires_grad) {
    for (int64_t d : shape) {
        if (d <= 0) {
            throw ContractError("tensor: extents must be positive, got " +
                                shape_str(shape));
        }
    }
    node_ = std::make_shared<detail::TensorNode>();
    node_->id = g_next_tensor_id.fetch_add(1);
    node_->data.assign(static_cast<size_t>(shape_numel(shape)), 0.0);
    node_->shape = std::move(shape);
    node_->requires_grad = requires_grad;
}

Tensor::Tensor(Shape shape, std::vector<double> values, bool requires_grad)
    : Tensor(std::move(shape), requires_grad) {
    if (static_cast<int64_t>(values.size()) != numel()) {
        throw DimensionError("tensor: " + std::to_string(values.size()) +
                             " values for shape " + shape_str(node_->shape));
    }
    node_->data = std::move(values);
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
    return Tensor(std::move(shape), requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
    Tensor t(std::move(shape), requires_grad);
    std::fill(t.data().begin(), t.data().end(), value);
    return t;
}

Tensor Tensor::scalar(double value, bool requires_grad) {
    return Tensor({1}, {value}, requires_grad);
}

Tensor Tensor::randn(Rng& rng, Shape shape, double mean, double stddev,
                     bool requires_grad) {
    Tensor t(std::move(shape), requires_grad);
    for (double& v : t.data()) v = rng.next_normal(mean, stddev);
    return t;
}

const Shape& Tensor::shape() const { return node_->shape; }

int64_t Tensor::dim(size_t axis) const { return node_->shape.at(axis); }

size_t Tensor::rank() const { return node_->shape.size(); }

int64_t Tensor::numel() const {
    return static_cast<int64_t>(node_->data.size());
}

uint64_t Tensor::id() const { return node_->id; }

std::span<double> Tensor::data() { return node_->data; }

std::span<const double> Tensor::data() const { return node_->data; }

double Tensor::item() const {
    if (numel() != 1) {
        throw ContractError("item: tensor has shape " + shape_str(shape()));
    }
    return node_->data[0];
}

bool Tensor::requires_grad() const { return node_->requires_grad; }

void Tensor::set_requires_grad(bool value) { node_->requires_grad = value; }

std::span<const double> Tensor::grad() const {
    return grad_of(node_);
}

std::vector<double>& Tensor::mutable_grad() { return grad_of(node_); }

void Tensor::zero_grad() {
    std::fill(grad_of(node_).begin(), grad_of(node_).end(), 0.0);
}

Tensor Tensor::clone(bool requires_grad) const {
    Tensor t(node_->shape, requires_grad);
    t.node_->data = node_->data;
    return t;
}

// ---- Tape -------------------------------------------------------------------

Tape::Tape() {
    previous_ = g_active_tape;
    g_active_tape = this;
}

Tape::~Tape() { g_active_tape = previous_; }

Tape* Tape::active() { return g_active_tape; }

void Tape::record(Op op) { ops_.push_back(std::move(op)); }

void Tape::clear() { ops_.clear(); }

bool Tape::contains_output(uint64_t tensor_id) const {
    for (const Op& op : ops_) {
        if (op.output->id == tensor_id) return true;
    }
    return false;
}

void Tape::backward(const Tensor& loss) {
    if (!loss.defined() || loss.numel() != 1) {
        throw ContractError("backward: loss must be a defined scalar tensor");
    }
    if (!contains_output(loss.id())) {
        throw ContractError("backward: loss was not produced on this tape");
    }
    grad_of(loss.node())[0] += 1.0;
    for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) {
        // Nodes never reached from the loss keep an absent (= all zero) grad;
        // skipping them is what makes off-path gradients exactly zero.
        if (it->output->grad.empty()) continue;
        it->pull();
    }
}

void backward(const Tensor& loss) {
    Tape* tape = Tape::active();
    if (tape == nullptr) {
        throw ContractError("backward: no active tape");
    }
    tape->backward(loss);
}

// ---- elementwise ------------------------------------------------------------

namespace {

void check_same_shape(const Tensor& a, const Tensor& b, const char* op_name) {
    if (a.shape() != b.shape()) {
        throw DimensionError(std::string(op_name) + ": shapes " +
                             shape_str(a.shape()) + " and " +
                             shape_str(b.shape()) + " differ");
    }
}

} // namespace

Tensor add(const Tensor& a, const Tensor& b) {
    check_defined(a, "add");
    check_defined(b, "add");
    check_same_shape(a, b, "add");
    Tensor out(a.shape(), any_requires_grad({&a, &b}));
    auto ad = a.data(), bd = b.data();
    auto od = out.data();
    for (size_t i = 0; i < od.size(); ++i) od[i] = ad[i] + bd[i];
    maybe_record({{a.node(), b.node()},
                  out.node(),
                  [an = a.node(), bn = b.node(), on = out.node()] {
                      const auto& g = on->grad;
                      if (an->requires_grad) {
                          auto& ga = grad_of(an);
                          for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
                      }
                      if (bn->requires_grad) {
                          auto& gb = grad_of(bn);
                          for (size_t i = 0; i < g.size(); ++i) gb[i] += g[i];
                      }
                  }});
    return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
    check_defined(a, "sub");
    check_defined(b, "sub");
    check_same_shape(a, b, "sub");
    Tensor out(a.shape(), any_requires_grad({&a, &b}));
    auto ad = a.data(), bd = b.data();
    auto od = out.data();
    for (size_t i = 0; i < od.size(); ++i) od[i] = ad[i] - bd[i];
    maybe_record({{a.node(), b.node()},
                  out.node(),
                  [an = a.node(), bn = b.node(), on = out.node()] {
                      const auto& g = on->grad;
                      if (an->requires_grad) {
                          auto& ga = grad_of(an);
                          for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
                      }
                      if (bn->requires_grad) {
                          auto& gb = grad_of(bn);
                          for (size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
                      }
                  }});
    return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
    check_defined(a, "mul");
    check_defined(b, "mul");
    check_same_shape(a, b, "mul");
    Tensor out(a.shape(), any_requires_grad({&a, &b}));
    auto ad = a.data(), bd = b.data();
    auto od = out.data();
    for (size_t i = 0; i < od.size(); ++i) od[i] = ad[i] * bd[i];
    maybe_record({{a.node(), b.node()},
                  out.node(),
                  [an = a.node(), bn = b.node(), on = out.node()] {
                      const auto& g = on->grad;
                      if (an->requires_grad) {
                          auto& ga = grad_of(an);
                          for (size_t i = 0; i < g.size(); ++i)
                              ga[i] += g[i] * bn->data[i];
                      }
                      if (bn->requires_grad) {
                          auto& gb = grad_of(bn);
                          for (size_t i = 0; i < g.size(); ++i)
                              gb[i] += g[i] * an->data[i];
                      }
                  }});
    return out;
}

Tensor scale(const Tensor& a, double factor) {
    check_defined(a, "scale");
    Tensor out(a.shape(), a.requires_grad());
    auto ad = a.data();
    auto od = out.data();
    for (size_t i = 0; i < od.size(); ++i) od[i] = ad[i] * factor;
    maybe_record({{a.node()},
                  out.node(),
                  [an = a.node(), on = out.node(), factor] {
                      auto& ga = grad_of(an);
                      const auto& g = on->grad;
                      for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * factor;
                  }});
    return out;
}

Tensor add_scalar(const Tensor& a, double value) {
    check_defined(a, "add_scalar");
    Tensor out(a.shape(), a.requires_grad());
    auto ad = a.data();
    auto od = out.data();
    for (size_t i = 0; i < od.size(); ++i) od[i] = ad[i] + value;
    maybe_record({{a.node()},
                  out.node(),
                  [an = a.node(), on = out.node()] {
                      auto& ga = grad_of(an);
                      const auto& g = on->grad;
                      for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
                  }});
    return out;
}

Tensor neg(const Tensor& a) { return scale(a, -1.0); }

// ---- matmul / transpose -----------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
    check_defined(a, "matmul");
    check_defined(b, "matmul");
    if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
        throw DimensionError("matmul: incompatible shapes " +
                             shape_str(a.shape()) + " x " +
                             shape_str(b.shape()));
    }
    const int64_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
    Tensor out({m, n}, any_requires_grad({&a, &b}));
    const double* ad = a.data().data();
    const double* bd = b.data().data();
    double* od = out.data().data();
    for (int64_t i = 0; i < m; ++i) {
        double* orow = od + i * n;
        for (int64_t p = 0; p < k; ++p) {
            const double av = ad[i * k + p];
            const double* brow = bd + p * n;
            for (int64_t j = 0; j < n; ++j) orow[j] += av * brow[j];
        }
    }
    maybe_record({{a.node(), b.node()},
                  out.node(),
                  [an = a.node(), bn = b.node(), on = out.node(), m, k, n] {
                      const double* g = on->grad.data();
                      if (an->requires_grad) {
                          double* ga = grad_of(an).data();
                          const double* bd2 = bn->data.data();
                          // dA = dC . B^T
                          for (int64_t i = 0; i < m; ++i)
                              for (int64_t j = 0; j < n; ++j) {
                                  const double gv = g[i * n + j];
                                  for (int64_t p = 0; p < k; ++p)
                                      ga[i * k + p] += gv * bd2[p * n + j];
                              }
                      }
                      if (bn->requires_grad) {
                          double* gb = grad_of(bn).data();
                          const double* ad2 = an->data.data();
                          // dB = A^T . dC
                          for (int64_t p = 0; p < k; ++p)
                              for (int64_t i = 0; i < m; ++i) {
                                  const double av = ad2[i * k + p];
                                  for (int64_t j = 0; j < n; ++j)
                                      gb[p * n + j] += av * g[i * n + j];
                              }
                      }
                  }});
    return out;
}

Tensor transpose(const Tensor& a) {
    check_defined(a, "transpose");
    if (a.rank() != 2) {
        throw DimensionError("transpose: expected 2-D tensor, got " +
                             shape_str(a.shape()));
    }
    const int64_t m = a.dim(0), n = a.dim(1);
    Tensor out({n, m}, a.requires_grad());
    auto ad = a.data();
    auto od = out.data();
    for (int64_t i = 0; i < m; ++i)
        for (int64_t j = 0; j < n; ++j) od[j * m + i] = ad[i * n + j];
    maybe_record({{a.node()},
                  out.node(),
                  [an = a.node(), on = out.node(), m, n] {
                      auto& ga = grad_of(an);
                      const auto& g = on->grad;
                      for (int64_t i = 0; i < m; ++i)
                          for (int64_t j = 0; j < n; ++j)
                              ga[i * n + j] += g[j * m + i];
                  }});
    return out;
}

// ---- shape ops ----------------------------------------------------------------

Tensor reshape(const Tensor& a, Shape shape) {
    check_defined(a, "reshape");
    if (shape_numel(shape) != a.numel()) {
        throw DimensionError("reshape: cannot view " + shape_str(a.shape()) +
                             " as " + shape_str(shape));
    }
    Tensor out(std::move(shape), a.requires_grad());
    std::copy(a.data().begin(), a.data().end(), out.data().begin());
    maybe_record({{a.node()},
                  out.node(),
                  [an = a.node(), on = out.node()] {
                      auto& ga = grad_of(an);
                      const auto& g = on->grad;
                      for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
                  }});
    return out;
}

Tensor concat_rows(std::span<const Tensor> parts) {
    if (parts.empty()) {
        throw ContractError("concat_rows: no parts");
    }
    const int64_t cols = parts.front().dim(parts.front().rank() - 1);
    int64_t rows = 0;
    bool req = false;
    for (const Tensor& p : parts) {
        if (p.rank() != 2 || p.dim(1) != cols) {
            throw DimensionError("concat_rows: part shape " +
                                 shape_str(p.shape()) + " incompatible");
        }
        rows += p.dim(0);
        req = req || p.requires_grad();
    }
    Tensor out({rows, cols}, req);
    auto od = out.data();
    int64_t at = 0;
    std::vector<std::shared_ptr<detail::TensorNode>> ins;
    std::vector<int64_t> offsets;
    for (const Tensor& p : parts) {
        std::copy(p.data().begin(), p.data().end(), od.begin() + at);
        ins.push_back(p.node());
        offsets.push_back(at);
        at += p.numel();
    }
    maybe_record({ins,
                  out.node(),
                  [ins, offsets, on = out.node()] {
                      const auto& g = on->grad;
                      for (size_t t = 0; t < ins.size(); ++t) {
                          if (!ins[t]->requires_grad) continue;
                          auto& gp = grad_of(ins[t]);
                          const int64_t off = offsets[t];
                          for (size_t i = 0; i < gp.size(); ++i)
                              gp[i] += g[off + i];
                      }
                  }});
    return out;
}

Tensor concat_cols(std::span<const Tensor> parts) {
    if (parts.empty()) {
        throw ContractError("concat_cols: no parts");
    }
    const int64_t rows = parts.front().dim(0);
    int64_t cols = 0;
    bool req = false;
    for (const Tensor& p : parts) {
        if (p.rank() != 2 || p.dim(0) != rows) {
            throw DimensionError("concat_cols: part shape " +
                                 shape_str(p.shape()) + " incompatible");
        }
        cols += p.dim(1);
        req = req || p.requires_grad();
    }
    Tensor out({rows, cols}, req);
    auto od = out.data();
    std::vector<std::shared_ptr<detail::TensorNode>> ins;
    std::vector<int64_t> offsets;
    int64_t at = 0;
    for (const Tensor& p : parts) {
        const int64_t pc = p.dim(1);
        auto pd = p.data();
        for (int64_t r = 0; r < rows; ++r)
            std::copy(pd.begin() + r * pc, pd.begin() + (r + 1) * pc,
                      od.begin() + r * cols + at);
        ins.push_back(p.node());
        offsets.push_back(at);
        at += pc;
    }
    maybe_record({ins,
                  out.node(),
                  [ins, offsets, on = out.node(), rows, cols] {
                      const auto& g = on->grad;
                      for (size_t t = 0; t < ins.size(); ++t) {
                          if (!ins[t]->requires_grad) continue;
                          auto& gp = grad_of(ins[t]);
                          const int64_t pc =
                              static_cast<int64_t>(gp.size()) / rows;
                          const int64_t off = offsets[t];
                          for (int64_t r = 0; r < rows; ++r)
                              for (int64_t c = 0; c < pc; ++c)
                                  gp[r * pc + c] += g[r * cols + off + c];
                      }
                  }});
    return out;
}

Tensor slice_rows(const Tensor& a, int64_t start, int64_t count) {
    check_defined(a, "slice_rows");
    if (a.rank() != 2) {
        throw DimensionError("slice_rows: expected 2-D tensor");
    }
    if (start < 0 || count < 1 || start + count > a.dim(0)) {
        throw IndexError("slice_rows: range [" + std::to_string(start) + "," +
                         std::to_string(start + count) + ") out of " +
                         std::to_string(a.dim(0)) + " rows");
    }
    const int64_t cols = a.dim(1);
    Tensor out({count, cols}, a.requires_grad());
    auto ad = a.data();
    std::copy(ad.begin() + start * cols, ad.begin() + (start + count) * cols,
              out.data().begin());
    maybe_record({{a.node()},
                  out.node(),
                  [an = a.node(), on = out.node(), start, cols] {
                      auto& ga = grad_of(an);
                      const auto& g = on->grad;
                      for (size_t i = 0; i < g.size(); ++i)
                          ga[start * cols + i] += g[i];
                  }});
    return out;
}

Tensor slice_cols(const Tensor& a, int64_t start, int64_t count) {
    check_defined(a, "slice_cols");
    if (a.rank() != 2) {
        throw DimensionError("slice_cols: expected 2-D tensor");
    }
    if (start < 0 || count < 1 || start + count > a.dim(1)) {
        throw IndexError("slice_cols: range [" + std::to_string(start) + "," +
                         std::to_string(start + count) + ") out of " +
                         std::to_string(a.dim(1)) + " cols");
    }
    const int64_t rows = a.dim(0), cols = a.dim(1);
    Tensor out({rows, count}, a.requires_grad());
    auto ad = a.data();
    auto od = out.data();
    for (int64_t r = 0; r < rows; ++r)
        std::copy(ad.begin() + r * cols + start,
                  ad.begin() + r * cols + start + count,
                  od.begin() + r * count);
    maybe_record({{a.node()},
                  out.node(),
                  [an = a.node(), on = out.node(), start, rows, cols, count] {
                      auto& ga = grad_of(an);
                      const auto& g = on->grad;
                      for (int64_t r = 0; r < rows; ++r)
                          for (int64_t c = 0; c < count; ++c)
                              ga[r * cols + start + c] += g[r * count + c];
                  }});
    return out;
}

Tensor gather_rows(const Tensor& a, std::span<const int64_t> ids) {
    check_defined(a, "gather_rows");
    if (a.rank() != 2) {
        throw DimensionError("gather_rows: expected 2-D tensor");
    }
    const int64_t rows = a.dim(0), cols = a.dim(1);
    for (int64_t id : ids) {
        if (id < 0 || id >= rows) {
            throw IndexError("gather_rows: row id " + std::to_string(id) +
                             " out of [0," + std::to_string(rows) + ")");
        }
    }
    Tensor out({static_cast<int64_t>(ids.size()), cols}, a.requires_grad());
    auto ad = a.data();
    auto od = out.data();
    for (size_t i = 0; i < ids.size(); ++i)
        std::copy(ad.begin() + ids[i] * cols, ad.begin() + (ids[i] + 1) * cols,
                  od.begin() + static_cast<int64_t>(i) * cols);
    std::vector<int64_t> idv(ids.begin(), ids.end());
    maybe_record({{a.node()},
                  out.node(),
                  [an = a.node(), on = out.node(), idv, cols] {
                      auto& ga = grad_of(an);
                      const auto& g = on->grad;
                      for (size_t i = 0; i < idv.size(); ++i)
                          for (int64_t c = 0; c < cols; ++c)
                              ga[idv[i] * cols + c] +=
                                  g[static_cast<int64_t>(i) * cols + c];
                  }});
    return out;
}

// ---- softmax family -----------------------------------------------------------

Tensor softmax(const Tensor& a, int64_t axis) {
    check_defined(a, "softmax");
    const AxisSplit s = split_axis(a.shape(), axis, "softmax");
    Tensor out(a.shape(), a.requires_grad());
    auto ad = a.data();
    auto od = out.data();
    for (int64_t o = 0; o < s.outer; ++o) {
        for (int64_t in = 0; in < s.inner; ++in) {
            const int64_t base = o * s.extent * s.inner + in;
            double mx = ad[base];
            for (int64_t e = 1; e < s.extent; ++e)
                mx = std::max(mx, ad[base + e * s.inner]);
            double denom = 0.0;
            for (int64_t e = 0; e < s.extent; ++e) {
                const double v = std::exp(ad[base + e * s.inner] - mx);
                od[base + e * s.inner] = v;
                denom += v;
            }
            for (int64_t e = 0; e < s.extent; ++e)
                od[base + e * s.inner] /= denom;
        }
    }
    maybe_record({{a.node()},
                  out.node(),
                  [an = a.node(), on = out.node(), s] {
                      auto& ga = grad_of(an);
                      const auto& g = on->grad;
                      const auto& y = on->data;
                      for (int64_t o = 0; o < s.outer; ++o) {
                          for (int64_t in = 0; in < s.inner; ++in) {
                              const int64_t base = o * s.extent * s.inner + in;
                              double dot = 0.0;
                              for (int64_t e = 0; e < s.extent; ++e) {
                                  const int64_t i = base + e * s.inner;
                                  dot += g[i] * y[i];
                              }
                              for (int64_t e = 0; e < s.extent; ++e) {
                                  const int64_t i = base + e * s.inner;
                                  ga[i] += (g[i] - dot) * y[i];
                              }
                          }
                      }
                  }});
    return out;
}

Tensor log_softmax(const Tensor& a, int64_t axis) {
    check_defined(a, "log_softmax");
    const AxisSplit s = split_axis(a.shape(), axis, "log_softmax");
    Tensor out(a.shape(), a.requires_grad());
    auto ad = a.data();
    auto od = out.data();
    for (int64_t o = 0; o < s.outer; ++o) {
        for (int64_t in = 0; in < s.inner; ++in) {
            const int64_t base = o * s.extent * s.inner + in;
            double mx = ad[base];
            for (int64_t e = 1; e < s.extent; ++e)
                mx = std::max(mx, ad[base + e * s.inner]);
            double denom = 0.0;
            for (int64_t e = 0; e < s.extent; ++e)
                denom += std::exp(ad[base + e * s.inner] - mx);
            const double lse = mx + std::log(denom);
            for (int64_t e = 0; e < s.extent; ++e)
                od[base + e * s.inner] = ad[base + e * s.inner] - lse;
        }
    }
    maybe_record({{a.node()},
                  out.node(),
                  [an = a.node(), on = out.node(), s] {
                      auto& ga = grad_of(an);
                      const auto& g = on->grad;
                      const auto& y = on->data;
                      for (int64_t o = 0; o < s.outer; ++o) {
                          for (int64_t in = 0; in < s.inner; ++in) {
                              const int64_t base = o * s.extent * s.inner + in;
                              double gsum = 0.0;
                              for (int64_t e = 0; e < s.extent; ++e)
                                  gsum += g[base + e * s.inner];
                              for (int64_t e = 0; e < s.extent; ++e) {
                                  const int64_t i = base + e * s.inner;
                                  ga[i] += g[i] - std::exp(y[i]) * gsum;
                              }
                          }
                      }
                  }});
    return out;
}

// ---- layer norm ----------------------------------------------------------------

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  double eps) {
    check_defined(x, "layer_norm");
    check_defined(gamma, "layer_norm");
    check_defined(beta, "layer_norm");
    if (eps <= 0.0) {
        throw ContractError("layer_norm: eps must be positive");
    }
    const int64_t d = x.dim(x.rank() - 1);
    if (gamma.numel() != d || beta.numel() != d) {
        throw DimensionError("layer_norm: affine params must have length " +
                             std::to_string(d));
    }
    const int64_t rows = x.numel() / d;
    Tensor out(x.shape(), any_requires_grad({&x, &gamma, &beta}));
    auto xd = x.data();
    auto gd = gamma.data();
    auto bd = beta.data();
    auto od = out.data();
    std::vector<double> inv_sigma(rows), means(rows);
    for (int64_t r = 0; r < rows; ++r) {
        const double* row = xd.data() + r * d;
        double mean = 0.0;
        for (int64_t i = 0; i < d; ++i) mean += row[i];
        mean /= static_cast<double>(d);
        double var = 0.0;
        for (int64_t i = 0; i < d; ++i) {
            const double c = row[i] - mean;
            var += c * c;
        }
        var /= static_cast<double>(d);
        const double is = 1.0 / std::sqrt(var + eps);
        means[r] = mean;
        inv_sigma[r] = is;
        for (int64_t i = 0; i < d; ++i)
            od[r * d + i] = (row[i] - mean) * is * gd[i] + bd[i];
    }
    maybe_record(
        {{x.node(), gamma.node(), beta.node()},
         out.node(),
         [xn = x.node(), gn = gamma.node(), bn = beta.node(), on = out.node(),
          means, inv_sigma, d, rows] {
             const auto& g = on->grad;
             for (int64_t r = 0; r < rows; ++r) {
                 const double* xrow = xn->data.data() + r * d;
                 const double* grow = g.data() + r * d;
                 const double is = inv_sigma[r];
                 const double mean = means[r];
                 if (bn->requires_grad) {
                     auto& gb = grad_of(bn);
                     for (int64_t i = 0; i < d; ++i) gb[i] += grow[i];
                 }
                 if (gn->requires_grad) {
                     auto& gg = grad_of(gn);
                     for (int64_t i = 0; i < d; ++i)
                         gg[i] += grow[i] * (xrow[i] - mean) * is;
                 }
                 if (xn->requires_grad) {
                     auto& gx = grad_of(xn);
                     // dx = is * (h - mean(h) - xhat * mean(h*xhat)),
                     // h = gamma .* dy
                     double mh = 0.0, mhx = 0.0;
                     for (int64_t i = 0; i < d; ++i) {
                         const double h = gn->data[i] * grow[i];
                         const double xhat = (xrow[i] - mean) * is;
                         mh += h;
                         mhx += h * xhat;
                     }
                     mh /= static_cast<double>(d);
                     mhx /= static_cast<double>(d);
                     for (int64_t i = 0; i < d; ++i) {
                         const double h = gn->data[i] * grow[i];
                         const double xhat = (xrow[i] - mean) * is;
                         gx[r * d + i] += is * (h - mh - xhat * mhx);
                     }
                 }
             }
         }});
    return out;
}

// ---- pointwise nonlinearities ---------------------------------------------------

namespace {
constexpr double kGeluC = 0.7978845608028654; // sqrt(2/pi)
constexpr double kGeluA = 0.044715;
} // namespace

Tensor gelu(const Tensor& x) {
    check_defined(x, "gelu");
    Tensor out(x.shape(), x.requires_grad());
    auto xd = x.data();
    auto od = out.data();
    for (size_t i = 0; i < od.size(); ++i) {
        const double v = xd[i];
        const double t = std::tanh(kGeluC * (v + kGeluA * v * v * v));
        od[i] = 0.5 * v * (1.0 + t);
    }
    maybe_record({{x.node()},
                  out.node(),
                  [xn = x.node(), on = out.node()] {
                      auto& gx = grad_of(xn);
                      const auto& g = on->grad;
                      for (size_t i = 0; i < g.size(); ++i) {
                          const double v = xn->data[i];
                          const double u = kGeluC * (v + kGeluA * v * v * v);
                          const double t = std::tanh(u);
                          const double sech2 = 1.0 - t * t;
                          const double du =
                              kGeluC * (1.0 + 3.0 * kGeluA * v * v);
                          gx[i] += g[i] * (0.5 * (1.0 + t) +
                                           0.5 * v * sech2 * du);
                      }
                  }});
    return out;
}

Tensor exp(const Tensor& x) {
    check_defined(x, "exp");
    Tensor out(x.shape(), x.requires_grad());
    auto xd = x.data();
    auto od = out.data();
    for (size_t i = 0; i < od.size(); ++i) od[i] = std::exp(xd[i]);
    maybe_record({{x.node()},
                  out.node(),
                  [xn = x.node(), on = out.node()] {
                      auto& gx = grad_of(xn);
                      const auto& g = on->grad;
                      for (size_t i = 0; i < g.size(); ++i)
                          gx[i] += g[i] * on->data[i];
                  }});
    return out;
}

Tensor log(const Tensor& x) {
    check_defined(x, "log");
    Tensor out(x.shape(), x.requires_grad());
    auto xd = x.data();
    auto od = out.data();
    for (size_t i = 0; i < od.size(); ++i) od[i] = std::log(xd[i]);
    maybe_record({{x.node()},
                  out.node(),
                  [xn = x.node(), on = out.node()] {
                      auto& gx = grad_of(xn);
                      const auto& g = on->grad;
                      for (size_t i = 0; i < g.size(); ++i)
                          gx[i] += g[i] / xn->data[i];
                  }});
    return out;
}

Tensor abs(const Tensor& x) {
    check_defined(x, "abs");
    Tensor out(x.shape(), x.requires_grad());
    auto xd = x.data();
    auto od = out.data();
    for (size_t i = 0; i < od.size(); ++i) od[i] = std::abs(xd[i]);
    maybe_record({{x.node()},
                  out.node(),
                  [xn = x.node(), on = out.node()] {
                      auto& gx = grad_of(xn);
                      const auto& g = on->grad;
                      for (size_t i = 0; i < g.size(); ++i) {
                          const double v = xn->data[i];
                          const double s = v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0);
                          gx[i] += g[i] * s;
                      }
                  }});
    return out;
}

// ---- reductions ------------------------------------------------------------------

Tensor sum_all(const Tensor& x) {
    check_defined(x, "sum_all");
    double s = 0.0;
    for (double v : x.data()) s += v;
    Tensor out({1}, {s}, x.requires_grad());
    maybe_record({{x.node()},
                  out.node(),
                  [xn = x.node(), on = out.node()] {
                      auto& gx = grad_of(xn);
                      const double g = on->grad[0];
                      for (double& v : gx) v += g;
                  }});
    return out;
}

Tensor mean_all(const Tensor& x) {
    check_defined(x, "mean_all");
    return scale(sum_all(x), 1.0 / static_cast<double>(x.numel()));
}

// ---- conv2d ----------------------------------------------------------------------

Tensor conv2d(const Tensor& x, const Tensor& kernels, int64_t stride_h,
              int64_t stride_w) {
    check_defined(x, "conv2d");
    check_defined(kernels, "conv2d");
    if (x.rank() != 3 || kernels.rank() != 4) {
        throw DimensionError("conv2d: expected x [C,H,W] and kernels "
                             "[F,C,kh,kw], got " +
                             shape_str(x.shape()) + " and " +
                             shape_str(kernels.shape()));
    }
    if (stride_h < 1 || stride_w < 1) {
        throw ContractError("conv2d: strides must be positive");
    }
    const int64_t c = x.dim(0), h = x.dim(1), w = x.dim(2);
    const int64_t f = kernels.dim(0), kc = kernels.dim(1), kh = kernels.dim(2),
                  kw = kernels.dim(3);
    if (kc != c) {
        throw DimensionError("conv2d: channel mismatch between input " +
                             shape_str(x.shape()) + " and kernels " +
                             shape_str(kernels.shape()));
    }
    if (kh > h || kw > w) {
        throw DimensionError("conv2d: kernel " + shape_str(kernels.shape()) +
                             " larger than input " + shape_str(x.shape()));
    }
    const int64_t ho = (h - kh) / stride_h + 1;
    const int64_t wo = (w - kw) / stride_w + 1;
    Tensor out({f, ho, wo}, any_requires_grad({&x, &kernels}));
    const double* xd = x.data().data();
    const double* kd = kernels.data().data();
    double* od = out.data().data();
    for (int64_t of = 0; of < f; ++of)
        for (int64_t oy = 0; oy < ho; ++oy)
            for (int64_t ox = 0; ox < wo; ++ox) {
                double acc = 0.0;
                const int64_t iy0 = oy * stride_h, ix0 = ox * stride_w;
                for (int64_t ic = 0; ic < c; ++ic)
                    for (int64_t ky = 0; ky < kh; ++ky)
                        for (int64_t kx = 0; kx < kw; ++kx)
                            acc += xd[(ic * h + iy0 + ky) * w + ix0 + kx] *
                                   kd[((of * c + ic) * kh + ky) * kw + kx];
                od[(of * ho + oy) * wo + ox] = acc;
            }
    maybe_record(
        {{x.node(), kernels.node()},
         out.node(),
         [xn = x.node(), kn = kernels.node(), on = out.node(), c, h, w, f, kh,
          kw, ho, wo, stride_h, stride_w] {
             const double* g = on->grad.data();
             double* gx = xn->requires_grad ? grad_of(xn).data() : nullptr;
             double* gk = kn->requires_grad ? grad_of(kn).data() : nullptr;
             for (int64_t of = 0; of < f; ++of)
                 for (int64_t oy = 0; oy < ho; ++oy)
                     for (int64_t ox = 0; ox < wo; ++ox) {
                         const double gv = g[(of * ho + oy) * wo + ox];
                         if (gv == 0.0) continue;
                         const int64_t iy0 = oy * stride_h,
                                       ix0 = ox * stride_w;
                         for (int64_t ic = 0; ic < c; ++ic)
                             for (int64_t ky = 0; ky < kh; ++ky)
                                 for (int64_t kx = 0; kx < kw; ++kx) {
                                     const int64_t xi =
                                         (ic * h + iy0 + ky) * w + ix0 + kx;
                                     const int64_t ki =
                                         ((of * c + ic) * kh + ky) * kw + kx;
                                     if (gx) gx[xi] += gv * kn->data[ki];
                                     if (gk) gk[ki] += gv * xn->data[xi];
                                 }
                     }
         }});
    return out;
}

Tensor add_channel_bias(const Tensor& x, const Tensor& bias) {
    check_defined(x, "add_channel_bias");
    check_defined(bias, "add_channel_bias");
    if (x.rank() != 3 || bias.numel() != x.dim(0)) {
        throw DimensionError("add_channel_bias: x " + shape_str(x.shape()) +
                             " vs bias " + shape_str(bias.shape()));
    }
    const int64_t c = x.dim(0), plane = x.dim(1) * x.dim(2);
    Tensor out(x.shape(), any_requires_grad({&x, &bias}));
    auto xd = x.data();
    auto bd = bias.data();
    auto od = out.data();
    for (int64_t ic = 0; ic < c; ++ic)
        for (int64_t i = 0; i < plane; ++i)
            od[ic * plane + i] = xd[ic * plane + i] + bd[ic];
    maybe_record({{x.node(), bias.node()},
                  out.node(),
                  [xn = x.node(), bn = bias.node(), on = out.node(), c, plane] {
                      const auto& g = on->grad;
                      if (xn->requires_grad) {
                          auto& gx = grad_of(xn);
                          for (size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
                      }
                      if (bn->requires_grad) {
                          auto& gb = grad_of(bn);
                          for (int64_t ic = 0; ic < c; ++ic) {
                              double s = 0.0;
                              for (int64_t i = 0; i < plane; ++i)
                                  s += g[ic * plane + i];
                              gb[ic] += s;
                          }
                      }
                  }});
    return out;
}

Tensor add_rowvec(const Tensor& x, const Tensor& v) {
    check_defined(x, "add_rowvec");
    check_defined(v, "add_rowvec");
    const int64_t d = x.dim(x.rank() - 1);
    if (v.numel() != d) {
        throw DimensionError("add_rowvec: x " + shape_str(x.shape()) +
                             " vs v " + shape_str(v.shape()));
    }
    const int64_t rows = x.numel() / d;
    Tensor out(x.shape(), any_requires_grad({&x, &v}));
    auto xd = x.data();
    auto vd = v.data();
    auto od = out.data();
    for (int64_t r = 0; r < rows; ++r)
        for (int64_t i = 0; i < d; ++i)
            od[r * d + i] = xd[r * d + i] + vd[i];
    maybe_record({{x.node(), v.node()},
                  out.node(),
                  [xn = x.node(), vn = v.node(), on = out.node(), rows, d] {
                      const auto& g = on->grad;
                      if (xn->requires_grad) {
                          auto& gx = grad_of(xn);
                          for (size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
                      }
                      if (vn->requires_grad) {
                          auto& gv = grad_of(vn);
                          for (int64_t r = 0; r < rows; ++r)
                              for (int64_t i = 0; i < d; ++i)
                                  gv[i] += g[r * d + i];
                      }
                  }});
    return out;
}

Tensor mul_rows(const Tensor& x, std::span<const double> factors) {
    check_defined(x, "mul_rows");
    if (x.rank() != 2 || static_cast<int64_t>(factors.size()) != x.dim(0)) {
        throw DimensionError("mul_rows: x " + shape_str(x.shape()) + " vs " +
                             std::to_string(factors.size()) + " factors");
    }
    const int64_t rows = x.dim(0), cols = x.dim(1);
    Tensor out(x.shape(), x.requires_grad());
    auto xd = x.data();
    auto od = out.data();
    for (int64_t r = 0; r < rows; ++r)
        for (int64_t c = 0; c < cols; ++c)
            od[r * cols + c] = xd[r * cols + c] * factors[r];
    std::vector<double> fv(factors.begin(), factors.end());
    maybe_record({{x.node()},
                  out.node(),
                  [xn = x.node(), on = out.node(), fv, rows, cols] {
                      auto& gx = grad_of(xn);
                      const auto& g = on->grad;
                      for (int64_t r = 0; r < rows; ++r)
                          for (int64_t c = 0; c < cols; ++c)
                              gx[r * cols + c] += g[r * cols + c] * fv[r];
                  }});
    return out;
}

Tensor select_item(const Tensor& x, int64_t flat_index) {
    check_defined(x, "select_item");
    if (flat_index < 0 || flat_index >= x.numel()) {
        throw IndexError("select_item: index " + std::to_string(flat_index) +
                         " out of [0," + std::to_string(x.numel()) + ")");
    }
    Tensor out({1}, {x.data()[flat_index]}, x.requires_grad());
    maybe_record({{x.node()},
                  out.node(),
                  [xn = x.node(), on = out.node(), flat_index] {
                      grad_of(xn)[flat_index] += on->grad[0];
                  }});
    return out;
}

// ---- cross entropy ---------------------------------------------------------------

Tensor cross_entropy(const Tensor& logits, std::span<const int64_t> targets,
                     int64_t ignore_id) {
    check_defined(logits, "cross_entropy");
    if (logits.rank() != 2 ||
        logits.dim(0) != static_cast<int64_t>(targets.size())) {
        throw DimensionError("cross_entropy: logits " +
                             shape_str(logits.shape()) + " vs " +
                             std::to_string(targets.size()) + " targets");
    }
    const int64_t rows = logits.dim(0), v = logits.dim(1);
    for (int64_t t : targets) {
        if (t != ignore_id && (t < 0 || t >= v)) {
            throw IndexError("cross_entropy: target " + std::to_string(t) +
                             " out of [0," + std::to_string(v) + ")");
        }
    }
    const double* ld = logits.data().data();
    double total = 0.0;
    int64_t counted = 0;
    std::vector<double> lse(rows);
    for (int64_t r = 0; r < rows; ++r) {
        if (targets[r] == ignore_id) continue;
        const double* row = ld + r * v;
        double mx = row[0];
        for (int64_t i = 1; i < v; ++i) mx = std::max(mx, row[i]);
        double denom = 0.0;
        for (int64_t i = 0; i < v; ++i) denom += std::exp(row[i] - mx);
        lse[r] = mx + std::log(denom);
        total += lse[r] - row[targets[r]];
        ++counted;
    }
    const double loss = counted == 0 ? 0.0 : total / counted;
    Tensor out({1}, {loss}, logits.requires_grad());
    if (counted == 0) return out;
    std::vector<int64_t> tv(targets.begin(), targets.end());
    maybe_record(
        {{logits.node()},
         out.node(),
         [ln = logits.node(), on = out.node(), tv, lse, ignore_id, rows, v,
          counted] {
             auto& gl = grad_of(ln);
             const double g = on->grad[0] / counted;
             for (int64_t r = 0; r < rows; ++r) {
                 if (tv[r] == ignore_id) continue;
                 const double* row = ln->data.data() + r * v;
                 for (int64_t i = 0; i < v; ++i) {
                     const double p = std::exp(row[i] - lse[r]);
                     gl[r * v + i] += g * (p - (i == tv[r] ? 1.0 : 0.0));
                 }
             }
         }});
    return out;
}

// ---- finite differences ------------------------------------------------------------

double finite_difference_check(const std::function<Tensor(const Tensor&)>& f,
                               const Tensor& x, double h) {
    if (h <= 0.0) {
        throw ContractError("finite_difference_check: h must be positive");
    }
    Tensor probe = x.clone(/*requires_grad=*/true);
    std::vector<double> analytic;
    {
        Tape tape;
        Tensor y = f(probe);
        if (y.numel() != 1) {
            throw ContractError("finite_difference_check: f must be scalar");
        }
        tape.backward(y);
        auto g = probe.grad();
        analytic.assign(g.begin(), g.end());
    }
    Tensor plain = x.clone(/*requires_grad=*/false);
    double worst = 0.0;
    for (int64_t i = 0; i < plain.numel(); ++i) {
        const double keep = plain.data()[i];
        plain.data()[i] = keep + h;
        const double up = f(plain).item();
        plain.data()[i] = keep - h;
        const double down = f(plain).item();
        plain.data()[i] = keep;
        const double numeric = (up - down) / (2.0 * h);
        const double a = analytic[static_cast<size_t>(i)];
        const double denom = std::max({1.0, std::abs(a), std::abs(numeric)});
        worst = std::max(worst, std::abs(a - numeric) / denom);
    }
    return worst;
}

} // namespace vedocr
