/*
 * Copyright 2026 The wsrnet Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *    http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>
#include <unordered_set>

#include <Eigen/Dense>

WSR_NS_BEGIN

namespace {

using RowMat = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMat>;
using ConstMatMap = Eigen::Map<const RowMat>;

thread_local Tape* g_active_tape = nullptr;

MatMap as_mat(Buffer& v, int rows, int cols) {
  return MatMap(v.data(), rows, cols);
}
MatMap as_mat(Real* p, int rows, int cols) { return MatMap(p, rows, cols); }
ConstMatMap as_mat(const Real* p, int rows, int cols) {
  return ConstMatMap(p, rows, cols);
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    contract_fail(std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                  " vs " + shape_str(b.shape()));
  }
}

// Leading-dims product for ops acting on the last axis.
int rows_of(const Tensor& x) {
  return static_cast<int>(x.numel() / static_cast<std::size_t>(x.dim(-1)));
}

template <typename F>
Tensor unary(const Tensor& x, F&& f) {
  Tensor out(x.shape());
  auto in = x.data();
  auto o = out.data();
  for (std::size_t i = 0; i < in.size(); ++i) o[i] = f(in[i]);
  return out;
}

}  // namespace

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (int d : shape) n *= static_cast<std::size_t>(d);
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ')';
  return os.str();
}

Tensor::Tensor(Shape shape, Real fill) : node_(std::make_shared<Node>()) {
  for (int d : shape) WSR_REQUIRE(d > 0, "tensor dims must be positive: " + shape_str(shape));
  node_->value.assign(shape_numel(shape), fill);
  node_->shape = std::move(shape);
}

Tensor::Tensor(Shape shape, std::vector<Real> values) : node_(std::make_shared<Node>()) {
  for (int d : shape) WSR_REQUIRE(d > 0, "tensor dims must be positive: " + shape_str(shape));
  WSR_REQUIRE(values.size() == shape_numel(shape),
              "value count does not match shape " + shape_str(shape));
  node_->shape = std::move(shape);
  node_->value.assign(values.begin(), values.end());
}

Tensor Tensor::parameter(Shape shape, std::vector<Real> values) {
  Tensor t(std::move(shape), std::move(values));
  t.node_->requires_grad = true;
  return t;
}

int Tensor::dim(int axis) const {
  const int r = rank();
  if (axis < 0) axis += r;
  WSR_REQUIRE(axis >= 0 && axis < r, "axis out of range");
  return node_->shape[static_cast<std::size_t>(axis)];
}

Real Tensor::item() const {
  WSR_REQUIRE(numel() == 1, "item() on non-scalar tensor " + shape_str(shape()));
  return node_->value[0];
}

Tensor& Tensor::set_requires_grad(bool on) {
  node_->requires_grad = on;
  return *this;
}

void Tensor::zero_grad() { node_->grad.clear(); }

Tensor Tensor::detach() const {
  Tensor t(shape());
  t.node_->value = node_->value;
  return t;
}

// ---------------------------------------------------------------------------

void Tape::record(const Tensor& output, std::vector<Tensor> inputs, BackwardFn fn) {
  Node* out = output.node();
  out->requires_grad = true;
  out->is_leaf = false;
  Entry e;
  e.output = output.shared_node();
  e.inputs.reserve(inputs.size());
  for (auto& t : inputs) e.inputs.push_back(t.shared_node());
  e.fn = std::move(fn);
  entries_.push_back(std::move(e));
}

void Tape::backward(const Tensor& loss) {
  WSR_REQUIRE(loss.defined() && loss.numel() == 1,
              "backward() needs a scalar loss");
  WSR_REQUIRE(loss.requires_grad(), "loss does not depend on any parameter");

  std::unordered_set<const Node*> seen;
  seen.reserve(entries_.size());
  for (auto& e : entries_) {
    if (!seen.insert(e.output.get()).second) {
      throw std::logic_error("tape records the same output twice");
    }
    e.output->grad.clear();
  }
  loss.node()->grad_buffer()[0] += Real(1);

  for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) {
    if (it->output->grad.empty()) continue;
    it->fn();
  }
}

TapeScope::TapeScope(Tape& tape) : previous_(g_active_tape) { g_active_tape = &tape; }
TapeScope::~TapeScope() { g_active_tape = previous_; }

NoGradScope::NoGradScope() : previous_(g_active_tape) { g_active_tape = nullptr; }
NoGradScope::~NoGradScope() { g_active_tape = previous_; }

Tape* active_tape() { return g_active_tape; }

Tape* tape_for(std::initializer_list<const Tensor*> inputs) {
  if (g_active_tape == nullptr) return nullptr;
  for (const Tensor* t : inputs) {
    if (t != nullptr && t->defined() && t->requires_grad()) return g_active_tape;
  }
  return nullptr;
}

bool all_finite(const Tensor& t) {
  return std::all_of(t.data().begin(), t.data().end(),
                     [](Real v) { return std::isfinite(v); });
}

// ---------------------------------------------------------------------------
// Elementwise

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  Tensor out(a.shape());
  auto o = out.data();
  auto x = a.data();
  auto y = b.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = x[i] + y[i];
  if (Tape* tape = tape_for({&a, &b})) {
    tape->record(out, {a, b}, [an = a.node(), bn = b.node(), on = out.node()] {
      const auto& g = on->grad;
      if (an->requires_grad) {
        auto& ga = an->grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
      }
      if (bn->requires_grad) {
        auto& gb = bn->grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i];
      }
    });
  }
  return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  Tensor out(a.shape());
  auto o = out.data();
  auto x = a.data();
  auto y = b.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = x[i] - y[i];
  if (Tape* tape = tape_for({&a, &b})) {
    tape->record(out, {a, b}, [an = a.node(), bn = b.node(), on = out.node()] {
      const auto& g = on->grad;
      if (an->requires_grad) {
        auto& ga = an->grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
      }
      if (bn->requires_grad) {
        auto& gb = bn->grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
      }
    });
  }
  return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  Tensor out(a.shape());
  auto o = out.data();
  auto x = a.data();
  auto y = b.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = x[i] * y[i];
  if (Tape* tape = tape_for({&a, &b})) {
    tape->record(out, {a, b}, [an = a.node(), bn = b.node(), on = out.node()] {
      const auto& g = on->grad;
      if (an->requires_grad) {
        auto& ga = an->grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bn->value[i];
      }
      if (bn->requires_grad) {
        auto& gb = bn->grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * an->value[i];
      }
    });
  }
  return out;
}

Tensor scale(const Tensor& x, Real s) { return affine(x, s, Real(0)); }

Tensor affine(const Tensor& x, Real a, Real b) {
  Tensor out = unary(x, [a, b](Real v) { return a * v + b; });
  if (Tape* tape = tape_for({&x})) {
    tape->record(out, {x}, [xn = x.node(), on = out.node(), a] {
      auto& gx = xn->grad_buffer();
      for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += a * on->grad[i];
    });
  }
  return out;
}

Tensor add_bias(const Tensor& x, const Tensor& bias) {
  const int cols = x.dim(-1);
  WSR_REQUIRE(bias.numel() == static_cast<std::size_t>(cols), "add_bias: bias size mismatch");
  const int rows = rows_of(x);
  Tensor out(x.shape());
  auto o = out.data();
  auto in = x.data();
  auto bv = bias.data();
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      const std::size_t i = static_cast<std::size_t>(r) * cols + c;
      o[i] = in[i] + bv[c];
    }
  }
  if (Tape* tape = tape_for({&x, &bias})) {
    tape->record(out, {x, bias}, [xn = x.node(), bn = bias.node(), on = out.node(), rows, cols] {
      const auto& g = on->grad;
      if (xn->requires_grad) {
        auto& gx = xn->grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
      }
      if (bn->requires_grad) {
        auto& gb = bn->grad_buffer();
        for (int r = 0; r < rows; ++r)
          for (int c = 0; c < cols; ++c) gb[c] += g[static_cast<std::size_t>(r) * cols + c];
      }
    });
  }
  return out;
}

Tensor relu(const Tensor& x) {
  Tensor out = unary(x, [](Real v) { return v > 0 ? v : Real(0); });
  if (Tape* tape = tape_for({&x})) {
    tape->record(out, {x}, [xn = x.node(), on = out.node()] {
      auto& gx = xn->grad_buffer();
      for (std::size_t i = 0; i < gx.size(); ++i)
        if (xn->value[i] > 0) gx[i] += on->grad[i];
    });
  }
  return out;
}

Tensor tanh(const Tensor& x) {
  Tensor out = unary(x, [](Real v) { return std::tanh(v); });
  if (Tape* tape = tape_for({&x})) {
    tape->record(out, {x}, [xn = x.node(), on = out.node()] {
      auto& gx = xn->grad_buffer();
      for (std::size_t i = 0; i < gx.size(); ++i) {
        const Real y = on->value[i];
        gx[i] += on->grad[i] * (Real(1) - y * y);
      }
    });
  }
  return out;
}

Tensor sigmoid(const Tensor& x) {
  Tensor out = unary(x, [](Real v) {
    return v >= 0 ? Real(1) / (Real(1) + std::exp(-v))
                  : std::exp(v) / (Real(1) + std::exp(v));
  });
  if (Tape* tape = tape_for({&x})) {
    tape->record(out, {x}, [xn = x.node(), on = out.node()] {
      auto& gx = xn->grad_buffer();
      for (std::size_t i = 0; i < gx.size(); ++i) {
        const Real y = on->value[i];
        gx[i] += on->grad[i] * y * (Real(1) - y);
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// Reductions

Tensor sum(const Tensor& x) {
  double acc = 0;
  for (Real v : x.data()) acc += v;
  Tensor out = Tensor::scalar(static_cast<Real>(acc));
  if (Tape* tape = tape_for({&x})) {
    tape->record(out, {x}, [xn = x.node(), on = out.node()] {
      auto& gx = xn->grad_buffer();
      const Real g = on->grad[0];
      for (auto& v : gx) v += g;
    });
  }
  return out;
}

Tensor mean(const Tensor& x) {
  return scale(sum(x), Real(1) / static_cast<Real>(x.numel()));
}

Tensor weighted_sum(const Tensor& x, std::span<const Real> weights) {
  WSR_REQUIRE(weights.size() == x.numel(), "weighted_sum: weight count mismatch");
  double acc = 0;
  auto xv = x.data();
  for (std::size_t i = 0; i < weights.size(); ++i) acc += static_cast<double>(weights[i]) * xv[i];
  Tensor out = Tensor::scalar(static_cast<Real>(acc));
  if (Tape* tape = tape_for({&x})) {
    std::vector<Real> w(weights.begin(), weights.end());
    tape->record(out, {x}, [xn = x.node(), on = out.node(), w = std::move(w)] {
      auto& gx = xn->grad_buffer();
      const Real g = on->grad[0];
      for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g * w[i];
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// Dense algebra

Tensor matmul(const Tensor& a, const Tensor& b) {
  WSR_REQUIRE(a.rank() == 2 && b.rank() == 2 && a.dim(1) == b.dim(0),
              "matmul: incompatible shapes " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  const int m = a.dim(0), k = a.dim(1), n = b.dim(1);
  Tensor out(Shape{m, n});
  as_mat(out.node()->value, m, n).noalias() =
      as_mat(a.node()->value, m, k) * as_mat(b.node()->value, k, n);
  if (Tape* tape = tape_for({&a, &b})) {
    tape->record(out, {a, b}, [an = a.node(), bn = b.node(), on = out.node(), m, k, n] {
      auto g = as_mat(on->grad, m, n);
      if (an->requires_grad)
        as_mat(an->grad_buffer(), m, k).noalias() += g * as_mat(bn->value, k, n).transpose();
      if (bn->requires_grad)
        as_mat(bn->grad_buffer(), k, n).noalias() += as_mat(an->value, m, k).transpose() * g;
    });
  }
  return out;
}

Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  WSR_REQUIRE(weight.rank() == 2, "linear: weight must be [out x in]");
  const int in = weight.dim(1), outf = weight.dim(0);
  WSR_REQUIRE(x.dim(-1) == in, "linear: input width " + std::to_string(x.dim(-1)) +
                                   " does not match weight " + shape_str(weight.shape()));
  const bool has_bias = bias.defined();
  if (has_bias) WSR_REQUIRE(bias.numel() == static_cast<std::size_t>(outf), "linear: bias size");
  const int rows = rows_of(x);
  Shape oshape = x.shape();
  oshape.back() = outf;
  Tensor out(oshape);
  auto o = as_mat(out.node()->value, rows, outf);
  o.noalias() = as_mat(x.node()->value, rows, in) * as_mat(weight.node()->value, outf, in).transpose();
  if (has_bias) {
    o.rowwise() += Eigen::Map<const Eigen::Matrix<Real, 1, Eigen::Dynamic>>(bias.node()->value.data(), outf);
  }
  if (Tape* tape = tape_for({&x, &weight, &bias})) {
    std::vector<Tensor> inputs{x, weight};
    if (has_bias) inputs.push_back(bias);
    tape->record(out, std::move(inputs),
                 [xn = x.node(), wn = weight.node(), bn = has_bias ? bias.node() : nullptr,
                  on = out.node(), rows, in, outf] {
      auto g = as_mat(on->grad, rows, outf);
      if (xn->requires_grad)
        as_mat(xn->grad_buffer(), rows, in).noalias() += g * as_mat(wn->value, outf, in);
      if (wn->requires_grad)
        as_mat(wn->grad_buffer(), outf, in).noalias() += g.transpose() * as_mat(xn->value, rows, in);
      if (bn != nullptr && bn->requires_grad) {
        auto& gb = bn->grad_buffer();
        Eigen::Map<Eigen::Matrix<Real, 1, Eigen::Dynamic>>(gb.data(), outf) += g.colwise().sum();
      }
    });
  }
  return out;
}

Tensor softmax(const Tensor& x) {
  const int cols = x.dim(-1), rows = rows_of(x);
  Tensor out(x.shape());
  auto in = x.data();
  auto o = out.data();
  for (int r = 0; r < rows; ++r) {
    const Real* xr = in.data() + static_cast<std::size_t>(r) * cols;
    Real* orow = o.data() + static_cast<std::size_t>(r) * cols;
    const Real m = *std::max_element(xr, xr + cols);
    double s = 0;
    for (int c = 0; c < cols; ++c) {
      orow[c] = std::exp(xr[c] - m);
      s += orow[c];
    }
    for (int c = 0; c < cols; ++c) orow[c] = static_cast<Real>(orow[c] / s);
  }
  if (Tape* tape = tape_for({&x})) {
    tape->record(out, {x}, [xn = x.node(), on = out.node(), rows, cols] {
      auto& gx = xn->grad_buffer();
      for (int r = 0; r < rows; ++r) {
        const std::size_t base = static_cast<std::size_t>(r) * cols;
        double dot = 0;
        for (int c = 0; c < cols; ++c) dot += on->grad[base + c] * on->value[base + c];
        for (int c = 0; c < cols; ++c)
          gx[base + c] += on->value[base + c] * (on->grad[base + c] - static_cast<Real>(dot));
      }
    });
  }
  return out;
}

Tensor log_softmax(const Tensor& x) {
  const int cols = x.dim(-1), rows = rows_of(x);
  Tensor out(x.shape());
  auto in = x.data();
  auto o = out.data();
  for (int r = 0; r < rows; ++r) {
    const Real* xr = in.data() + static_cast<std::size_t>(r) * cols;
    Real* orow = o.data() + static_cast<std::size_t>(r) * cols;
    const Real m = *std::max_element(xr, xr + cols);
    double s = 0;
    for (int c = 0; c < cols; ++c) s += std::exp(static_cast<double>(xr[c] - m));
    const Real lse = m + static_cast<Real>(std::log(s));
    for (int c = 0; c < cols; ++c) orow[c] = xr[c] - lse;
  }
  if (Tape* tape = tape_for({&x})) {
    tape->record(out, {x}, [xn = x.node(), on = out.node(), rows, cols] {
      auto& gx = xn->grad_buffer();
      for (int r = 0; r < rows; ++r) {
        const std::size_t base = static_cast<std::size_t>(r) * cols;
        double gs = 0;
        for (int c = 0; c < cols; ++c) gs += on->grad[base + c];
        for (int c = 0; c < cols; ++c)
          gx[base + c] += on->grad[base + c] - std::exp(on->value[base + c]) * static_cast<Real>(gs);
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// Indexing and layout

Tensor gather_last(const Tensor& x, std::span<const int> index) {
  WSR_REQUIRE(x.rank() == 2, "gather_last expects [R x C]");
  const int rows = x.dim(0), cols = x.dim(1);
  WSR_REQUIRE(static_cast<int>(index.size()) == rows, "gather_last: one index per row");
  Tensor out(Shape{rows});
  for (int r = 0; r < rows; ++r) {
    WSR_REQUIRE(index[r] >= 0 && index[r] < cols, "gather_last: index out of range");
    out.data()[r] = x.data()[static_cast<std::size_t>(r) * cols + index[r]];
  }
  if (Tape* tape = tape_for({&x})) {
    std::vector<int> idx(index.begin(), index.end());
    tape->record(out, {x}, [xn = x.node(), on = out.node(), cols, idx = std::move(idx)] {
      auto& gx = xn->grad_buffer();
      for (std::size_t r = 0; r < idx.size(); ++r) gx[r * cols + idx[r]] += on->grad[r];
    });
  }
  return out;
}

Tensor embedding(const Tensor& table, std::span<const int> index) {
  WSR_REQUIRE(table.rank() == 2, "embedding table must be [V x E]");
  const int vocab = table.dim(0), width = table.dim(1);
  const int n = static_cast<int>(index.size());
  WSR_REQUIRE(n > 0, "embedding: empty index");
  Tensor out(Shape{n, width});
  for (int i = 0; i < n; ++i) {
    WSR_REQUIRE(index[i] >= 0 && index[i] < vocab, "embedding: index out of range");
    std::copy_n(table.data().data() + static_cast<std::size_t>(index[i]) * width, width,
                out.data().data() + static_cast<std::size_t>(i) * width);
  }
  if (Tape* tape = tape_for({&table})) {
    std::vector<int> idx(index.begin(), index.end());
    tape->record(out, {table}, [tn = table.node(), on = out.node(), width, idx = std::move(idx)] {
      auto& gt = tn->grad_buffer();
      for (std::size_t i = 0; i < idx.size(); ++i)
        for (int e = 0; e < width; ++e)
          gt[static_cast<std::size_t>(idx[i]) * width + e] += on->grad[i * width + e];
    });
  }
  return out;
}

Tensor concat_last(const std::vector<Tensor>& parts) {
  WSR_REQUIRE(!parts.empty(), "concat_last: nothing to concatenate");
  const int rows = rows_of(parts[0]);
  std::vector<int> widths;
  int total = 0;
  for (const auto& p : parts) {
    WSR_REQUIRE(rows_of(p) == rows && p.rank() == parts[0].rank(), "concat_last: leading dims differ");
    widths.push_back(p.dim(-1));
    total += p.dim(-1);
  }
  Shape shape = parts[0].shape();
  shape.back() = total;
  Tensor out(shape);
  auto o = out.data();
  int offset = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    auto in = parts[k].data();
    const int w = widths[k];
    for (int r = 0; r < rows; ++r)
      std::copy_n(in.data() + static_cast<std::size_t>(r) * w, w,
                  o.data() + static_cast<std::size_t>(r) * total + offset);
    offset += w;
  }
  Tape* tape = active_tape();
  bool any = false;
  for (const auto& p : parts) any = any || p.requires_grad();
  if (tape != nullptr && any) {
    std::vector<Node*> nodes;
    for (const auto& p : parts) nodes.push_back(p.node());
    tape->record(out, parts, [nodes, widths, on = out.node(), rows, total] {
      int off = 0;
      for (std::size_t k = 0; k < nodes.size(); ++k) {
        const int w = widths[k];
        if (nodes[k]->requires_grad) {
          auto& g = nodes[k]->grad_buffer();
          for (int r = 0; r < rows; ++r)
            for (int c = 0; c < w; ++c)
              g[static_cast<std::size_t>(r) * w + c] += on->grad[static_cast<std::size_t>(r) * total + off + c];
        }
        off += w;
      }
    });
  }
  return out;
}

Tensor slice_last(const Tensor& x, int begin, int end) {
  const int cols = x.dim(-1), rows = rows_of(x);
  WSR_REQUIRE(0 <= begin && begin < end && end <= cols, "slice_last: bad range");
  const int w = end - begin;
  Shape shape = x.shape();
  shape.back() = w;
  Tensor out(shape);
  for (int r = 0; r < rows; ++r)
    std::copy_n(x.data().data() + static_cast<std::size_t>(r) * cols + begin, w,
                out.data().data() + static_cast<std::size_t>(r) * w);
  if (Tape* tape = tape_for({&x})) {
    tape->record(out, {x}, [xn = x.node(), on = out.node(), rows, cols, begin, w] {
      auto& gx = xn->grad_buffer();
      for (int r = 0; r < rows; ++r)
        for (int c = 0; c < w; ++c)
          gx[static_cast<std::size_t>(r) * cols + begin + c] += on->grad[static_cast<std::size_t>(r) * w + c];
    });
  }
  return out;
}

Tensor time_step(const Tensor& x, int t) {
  WSR_REQUIRE(x.rank() == 3, "time_step expects [B x T x F]");
  const int b = x.dim(0), steps = x.dim(1), f = x.dim(2);
  WSR_REQUIRE(t >= 0 && t < steps, "time_step: t out of range");
  Tensor out(Shape{b, f});
  for (int i = 0; i < b; ++i)
    std::copy_n(x.data().data() + (static_cast<std::size_t>(i) * steps + t) * f, f,
                out.data().data() + static_cast<std::size_t>(i) * f);
  if (Tape* tape = tape_for({&x})) {
    tape->record(out, {x}, [xn = x.node(), on = out.node(), b, steps, f, t] {
      auto& gx = xn->grad_buffer();
      for (int i = 0; i < b; ++i)
        for (int c = 0; c < f; ++c)
          gx[(static_cast<std::size_t>(i) * steps + t) * f + c] += on->grad[static_cast<std::size_t>(i) * f + c];
    });
  }
  return out;
}

Tensor stack_time(const std::vector<Tensor>& steps) {
  WSR_REQUIRE(!steps.empty(), "stack_time: no steps");
  const int b = steps[0].dim(0), f = steps[0].dim(1);
  const int t = static_cast<int>(steps.size());
  Tensor out(Shape{b, t, f});
  bool any = false;
  for (int s = 0; s < t; ++s) {
    WSR_REQUIRE(steps[s].shape() == steps[0].shape(), "stack_time: step shapes differ");
    any = any || steps[s].requires_grad();
    for (int i = 0; i < b; ++i)
      std::copy_n(steps[s].data().data() + static_cast<std::size_t>(i) * f, f,
                  out.data().data() + (static_cast<std::size_t>(i) * t + s) * f);
  }
  Tape* tape = active_tape();
  if (tape != nullptr && any) {
    std::vector<Node*> nodes;
    for (const auto& s : steps) nodes.push_back(s.node());
    tape->record(out, steps, [nodes, on = out.node(), b, t, f] {
      for (int s = 0; s < t; ++s) {
        if (!nodes[s]->requires_grad) continue;
        auto& g = nodes[s]->grad_buffer();
        for (int i = 0; i < b; ++i)
          for (int c = 0; c < f; ++c)
            g[static_cast<std::size_t>(i) * f + c] += on->grad[(static_cast<std::size_t>(i) * t + s) * f + c];
      }
    });
  }
  return out;
}

Tensor reshape(const Tensor& x, Shape shape) {
  WSR_REQUIRE(shape_numel(shape) == x.numel(),
              "reshape: " + shape_str(x.shape()) + " -> " + shape_str(shape));
  Tensor out(std::move(shape));
  out.node()->value = x.node()->value;
  if (Tape* tape = tape_for({&x})) {
    tape->record(out, {x}, [xn = x.node(), on = out.node()] {
      auto& gx = xn->grad_buffer();
      for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += on->grad[i];
    });
  }
  return out;
}

Tensor transpose12(const Tensor& x) {
  WSR_REQUIRE(x.rank() == 3, "transpose12 expects rank 3");
  const int n = x.dim(0), a = x.dim(1), b = x.dim(2);
  Tensor out(Shape{n, b, a});
  for (int i = 0; i < n; ++i) {
    as_mat(out.node()->value.data() + static_cast<std::size_t>(i) * a * b, b, a) =
        as_mat(static_cast<const Real*>(x.node()->value.data() + static_cast<std::size_t>(i) * a * b), a, b)
            .transpose();
  }
  if (Tape* tape = tape_for({&x})) {
    tape->record(out, {x}, [xn = x.node(), on = out.node(), n, a, b] {
      auto& gx = xn->grad_buffer();
      for (int i = 0; i < n; ++i) {
        const std::size_t off = static_cast<std::size_t>(i) * a * b;
        as_mat(gx.data() + off, a, b) +=
            as_mat(static_cast<const Real*>(on->grad.data() + off), b, a).transpose();
      }
    });
  }
  return out;
}

Tensor row_scale(const Tensor& x, std::span<const Real> s) {
  WSR_REQUIRE(x.rank() == 2 && static_cast<int>(s.size()) == x.dim(0), "row_scale: one factor per row");
  const int rows = x.dim(0), cols = x.dim(1);
  Tensor out(x.shape());
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) {
      const std::size_t i = static_cast<std::size_t>(r) * cols + c;
      out.data()[i] = x.data()[i] * s[r];
    }
  if (Tape* tape = tape_for({&x})) {
    std::vector<Real> f(s.begin(), s.end());
    tape->record(out, {x}, [xn = x.node(), on = out.node(), cols, f = std::move(f)] {
      auto& gx = xn->grad_buffer();
      for (std::size_t r = 0; r < f.size(); ++r)
        for (int c = 0; c < cols; ++c) gx[r * cols + c] += on->grad[r * cols + c] * f[r];
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// Convolution and pooling

namespace {

struct ConvGeom {
  int c, h, w, kh, kw, stride, ph, pw, ho, wo;
};

void im2col(const Real* img, const ConvGeom& g, Real* col) {
  const int cols = g.ho * g.wo;
  for (int ch = 0; ch < g.c; ++ch)
    for (int ki = 0; ki < g.kh; ++ki)
      for (int kj = 0; kj < g.kw; ++kj) {
        Real* dst = col + (static_cast<std::size_t>(ch * g.kh + ki) * g.kw + kj) * cols;
        for (int oy = 0; oy < g.ho; ++oy) {
          const int iy = oy * g.stride - g.ph + ki;
          Real* row = dst + static_cast<std::size_t>(oy) * g.wo;
          if (iy < 0 || iy >= g.h) {
            std::fill_n(row, g.wo, Real(0));
            continue;
          }
          const Real* src = img + (static_cast<std::size_t>(ch) * g.h + iy) * g.w;
          for (int ox = 0; ox < g.wo; ++ox) {
            const int ix = ox * g.stride - g.pw + kj;
            row[ox] = (ix >= 0 && ix < g.w) ? src[ix] : Real(0);
          }
        }
      }
}

void col2im_add(const Real* col, const ConvGeom& g, Real* img) {
  const int cols = g.ho * g.wo;
  for (int ch = 0; ch < g.c; ++ch)
    for (int ki = 0; ki < g.kh; ++ki)
      for (int kj = 0; kj < g.kw; ++kj) {
        const Real* srcrow = col + (static_cast<std::size_t>(ch * g.kh + ki) * g.kw + kj) * cols;
        for (int oy = 0; oy < g.ho; ++oy) {
          const int iy = oy * g.stride - g.ph + ki;
          if (iy < 0 || iy >= g.h) continue;
          Real* dst = img + (static_cast<std::size_t>(ch) * g.h + iy) * g.w;
          const Real* row = srcrow + static_cast<std::size_t>(oy) * g.wo;
          for (int ox = 0; ox < g.wo; ++ox) {
            const int ix = ox * g.stride - g.pw + kj;
            if (ix >= 0 && ix < g.w) dst[ix] += row[ox];
          }
        }
      }
}

}  // namespace

Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias, int stride,
              int pad_h, int pad_w) {
  WSR_REQUIRE(x.rank() == 4 && weight.rank() == 4, "conv2d expects 4-d input and weight");
  WSR_REQUIRE(x.dim(1) == weight.dim(1),
              "conv2d: channel mismatch, input " + shape_str(x.shape()) + " weight " +
                  shape_str(weight.shape()));
  WSR_REQUIRE(stride >= 1 && pad_h >= 0 && pad_w >= 0, "conv2d: bad stride/padding");
  ConvGeom g{x.dim(1), x.dim(2), x.dim(3), weight.dim(2), weight.dim(3), stride, pad_h, pad_w, 0, 0};
  g.ho = (g.h + 2 * pad_h - g.kh) / stride + 1;
  g.wo = (g.w + 2 * pad_w - g.kw) / stride + 1;
  WSR_REQUIRE(g.ho > 0 && g.wo > 0, "conv2d: kernel larger than padded input");
  const int n = x.dim(0), oc = weight.dim(0);
  const int kdim = g.c * g.kh * g.kw, cols = g.ho * g.wo;
  const bool has_bias = bias.defined();
  if (has_bias) WSR_REQUIRE(bias.numel() == static_cast<std::size_t>(oc), "conv2d: bias size");

  Tensor out(Shape{n, oc, g.ho, g.wo});
  Buffer col(static_cast<std::size_t>(kdim) * cols);
  auto wmat = as_mat(weight.node()->value, oc, kdim);
  const std::size_t in_stride = static_cast<std::size_t>(g.c) * g.h * g.w;
  const std::size_t out_stride = static_cast<std::size_t>(oc) * cols;
  for (int i = 0; i < n; ++i) {
    im2col(x.node()->value.data() + i * in_stride, g, col.data());
    auto o = as_mat(out.node()->value.data() + i * out_stride, oc, cols);
    o.noalias() = wmat * as_mat(static_cast<const Real*>(col.data()), kdim, cols);
    if (has_bias)
      for (int c = 0; c < oc; ++c) o.row(c).array() += bias.node()->value[c];
  }

  if (Tape* tape = tape_for({&x, &weight, &bias})) {
    std::vector<Tensor> inputs{x, weight};
    if (has_bias) inputs.push_back(bias);
    tape->record(out, std::move(inputs),
                 [xn = x.node(), wn = weight.node(), bn = has_bias ? bias.node() : nullptr,
                  on = out.node(), g, n, oc, kdim, cols, in_stride, out_stride] {
      Buffer colbuf(static_cast<std::size_t>(kdim) * cols);
      Buffer dcol(static_cast<std::size_t>(kdim) * cols);
      auto w = as_mat(wn->value, oc, kdim);
      for (int i = 0; i < n; ++i) {
        auto gout = as_mat(static_cast<const Real*>(on->grad.data() + i * out_stride), oc, cols);
        if (wn->requires_grad) {
          im2col(xn->value.data() + i * in_stride, g, colbuf.data());
          as_mat(wn->grad_buffer(), oc, kdim).noalias() +=
              gout * as_mat(static_cast<const Real*>(colbuf.data()), kdim, cols).transpose();
        }
        if (xn->requires_grad) {
          as_mat(dcol.data(), kdim, cols).noalias() = w.transpose() * gout;
          col2im_add(dcol.data(), g, xn->grad_buffer().data() + i * in_stride);
        }
        if (bn != nullptr && bn->requires_grad) {
          auto& gb = bn->grad_buffer();
          for (int c = 0; c < oc; ++c) gb[c] += gout.row(c).sum();
        }
      }
    });
  }
  return out;
}

Tensor conv1d(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  WSR_REQUIRE(x.rank() == 3 && weight.rank() == 3, "conv1d expects 3-d input and weight");
  const int k = weight.dim(2);
  WSR_REQUIRE(k % 2 == 1, "conv1d: kernel size must be odd");
  Tensor x4 = reshape(x, Shape{x.dim(0), x.dim(1), 1, x.dim(2)});
  Tensor w4 = reshape(weight, Shape{weight.dim(0), weight.dim(1), 1, k});
  Tensor y = conv2d(x4, w4, bias, 1, 0, k / 2);
  return reshape(y, Shape{y.dim(0), y.dim(1), y.dim(3)});
}

Tensor maxpool2d(const Tensor& x) {
  WSR_REQUIRE(x.rank() == 4, "maxpool2d expects [N x C x H x W]");
  const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const int ho = h / 2, wo = w / 2;
  WSR_REQUIRE(ho > 0 && wo > 0, "maxpool2d: input smaller than window");
  Tensor out(Shape{n, c, ho, wo});
  std::vector<std::uint32_t> argmax(out.numel());
  const auto& in = x.node()->value;
  auto& o = out.node()->value;
  std::size_t k = 0;
  for (int p = 0; p < n * c; ++p) {
    const std::size_t base = static_cast<std::size_t>(p) * h * w;
    for (int y = 0; y < ho; ++y)
      for (int xx = 0; xx < wo; ++xx, ++k) {
        std::size_t best = base + static_cast<std::size_t>(2 * y) * w + 2 * xx;
        for (int dy = 0; dy < 2; ++dy)
          for (int dx = 0; dx < 2; ++dx) {
            const std::size_t idx = base + static_cast<std::size_t>(2 * y + dy) * w + 2 * xx + dx;
            if (in[idx] > in[best]) best = idx;
          }
        o[k] = in[best];
        argmax[k] = static_cast<std::uint32_t>(best);
      }
  }
  if (Tape* tape = tape_for({&x})) {
    tape->record(out, {x}, [xn = x.node(), on = out.node(), argmax = std::move(argmax)] {
      auto& gx = xn->grad_buffer();
      for (std::size_t i = 0; i < argmax.size(); ++i) gx[argmax[i]] += on->grad[i];
    });
  }
  return out;
}

Tensor max_over_height(const Tensor& x) {
  WSR_REQUIRE(x.rank() == 4, "max_over_height expects [N x C x H x W]");
  const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  Tensor out(Shape{n, c, w});
  std::vector<std::uint32_t> argmax(out.numel());
  const auto& in = x.node()->value;
  for (int p = 0; p < n * c; ++p) {
    const std::size_t base = static_cast<std::size_t>(p) * h * w;
    for (int col = 0; col < w; ++col) {
      std::size_t best = base + col;
      for (int y = 1; y < h; ++y) {
        const std::size_t idx = base + static_cast<std::size_t>(y) * w + col;
        if (in[idx] > in[best]) best = idx;
      }
      const std::size_t o = static_cast<std::size_t>(p) * w + col;
      out.node()->value[o] = in[best];
      argmax[o] = static_cast<std::uint32_t>(best);
    }
  }
  if (Tape* tape = tape_for({&x})) {
    tape->record(out, {x}, [xn = x.node(), on = out.node(), argmax = std::move(argmax)] {
      auto& gx = xn->grad_buffer();
      for (std::size_t i = 0; i < argmax.size(); ++i) gx[argmax[i]] += on->grad[i];
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// Normalization and regularization

Tensor batch_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, BatchNormStats& stats,
                  bool train, Real momentum, Real eps) {
  WSR_REQUIRE(x.rank() >= 2, "batch_norm expects [N x C x ...]");
  const int n = x.dim(0), c = x.dim(1);
  WSR_REQUIRE(gamma.numel() == static_cast<std::size_t>(c) && beta.numel() == static_cast<std::size_t>(c),
              "batch_norm: affine parameter size");
  WSR_REQUIRE(stats.mean.numel() == static_cast<std::size_t>(c), "batch_norm: running stats size");
  const std::size_t inner = x.numel() / (static_cast<std::size_t>(n) * c);
  const std::size_t count = static_cast<std::size_t>(n) * inner;
  if (train) WSR_REQUIRE(n >= 2, "batch_norm: train mode needs batch >= 2");

  std::vector<Real> mu(c), inv_std(c);
  const auto& in = x.node()->value;
  for (int ch = 0; ch < c; ++ch) {
    if (train) {
      double s = 0, ss = 0;
      for (int i = 0; i < n; ++i) {
        const Real* p = in.data() + (static_cast<std::size_t>(i) * c + ch) * inner;
        for (std::size_t j = 0; j < inner; ++j) s += p[j];
      }
      const double m = s / static_cast<double>(count);
      for (int i = 0; i < n; ++i) {
        const Real* p = in.data() + (static_cast<std::size_t>(i) * c + ch) * inner;
        for (std::size_t j = 0; j < inner; ++j) ss += (p[j] - m) * (p[j] - m);
      }
      const double var = ss / static_cast<double>(count);
      mu[ch] = static_cast<Real>(m);
      inv_std[ch] = static_cast<Real>(1.0 / std::sqrt(var + eps));
      const double unbiased = count > 1 ? ss / static_cast<double>(count - 1) : var;
      stats.mean.data()[ch] = (1 - momentum) * stats.mean.data()[ch] + momentum * mu[ch];
      stats.var.data()[ch] = (1 - momentum) * stats.var.data()[ch] + momentum * static_cast<Real>(unbiased);
    } else {
      mu[ch] = stats.mean.data()[ch];
      inv_std[ch] = Real(1) / std::sqrt(stats.var.data()[ch] + eps);
    }
  }

  Tensor out(x.shape());
  std::vector<Real> xhat(x.numel());
  auto& o = out.node()->value;
  for (int i = 0; i < n; ++i)
    for (int ch = 0; ch < c; ++ch) {
      const std::size_t base = (static_cast<std::size_t>(i) * c + ch) * inner;
      const Real gm = gamma.data()[ch], bt = beta.data()[ch];
      for (std::size_t j = 0; j < inner; ++j) {
        xhat[base + j] = (in[base + j] - mu[ch]) * inv_std[ch];
        o[base + j] = gm * xhat[base + j] + bt;
      }
    }

  if (Tape* tape = tape_for({&x, &gamma, &beta})) {
    tape->record(out, {x, gamma, beta},
                 [xn = x.node(), gn = gamma.node(), bn = beta.node(), on = out.node(), n, c, inner,
                  count, train, inv_std = std::move(inv_std), xhat = std::move(xhat)] {
      const auto& g = on->grad;
      for (int ch = 0; ch < c; ++ch) {
        double sg = 0, sgx = 0;
        for (int i = 0; i < n; ++i) {
          const std::size_t base = (static_cast<std::size_t>(i) * c + ch) * inner;
          for (std::size_t j = 0; j < inner; ++j) {
            sg += g[base + j];
            sgx += g[base + j] * xhat[base + j];
          }
        }
        if (gn->requires_grad) gn->grad_buffer()[ch] += static_cast<Real>(sgx);
        if (bn->requires_grad) bn->grad_buffer()[ch] += static_cast<Real>(sg);
        if (!xn->requires_grad) continue;
        auto& gx = xn->grad_buffer();
        const Real k = gn->value[ch] * inv_std[ch];
        const Real mg = static_cast<Real>(sg / static_cast<double>(count));
        const Real mgx = static_cast<Real>(sgx / static_cast<double>(count));
        for (int i = 0; i < n; ++i) {
          const std::size_t base = (static_cast<std::size_t>(i) * c + ch) * inner;
          for (std::size_t j = 0; j < inner; ++j) {
            gx[base + j] += train ? k * (g[base + j] - mg - xhat[base + j] * mgx) : k * g[base + j];
          }
        }
      }
    });
  }
  return out;
}

Tensor dropout(const Tensor& x, Real p, bool train, Rng& rng) {
  WSR_REQUIRE(p >= 0 && p < 1, "dropout: p must be in [0, 1)");
  if (!train || p == 0) return x;
  const Real keep_scale = Real(1) / (Real(1) - p);
  std::vector<Real> mask(x.numel());
  for (auto& m : mask) m = rng.uniform() < p ? Real(0) : keep_scale;
  Tensor out(x.shape());
  for (std::size_t i = 0; i < mask.size(); ++i) out.data()[i] = x.data()[i] * mask[i];
  if (Tape* tape = tape_for({&x})) {
    tape->record(out, {x}, [xn = x.node(), on = out.node(), mask = std::move(mask)] {
      auto& gx = xn->grad_buffer();
      for (std::size_t i = 0; i < mask.size(); ++i) gx[i] += on->grad[i] * mask[i];
    });
  }
  return out;
}

Tensor cosine_distance_rows(const Tensor& a, const Tensor& b, int* zero_rows) {
  require_same_shape(a, b, "cosine_distance_rows");
  WSR_REQUIRE(a.rank() == 2, "cosine_distance_rows expects [R x D]");
  const int rows = a.dim(0), d = a.dim(1);
  Tensor out(Shape{rows});
  std::vector<double> na(rows), nb(rows), dot(rows);
  int zeros = 0;
  for (int r = 0; r < rows; ++r) {
    const Real* pa = a.data().data() + static_cast<std::size_t>(r) * d;
    const Real* pb = b.data().data() + static_cast<std::size_t>(r) * d;
    double saa = 0, sbb = 0, sab = 0;
    for (int j = 0; j < d; ++j) {
      saa += static_cast<double>(pa[j]) * pa[j];
      sbb += static_cast<double>(pb[j]) * pb[j];
      sab += static_cast<double>(pa[j]) * pb[j];
    }
    na[r] = std::sqrt(saa);
    nb[r] = std::sqrt(sbb);
    dot[r] = sab;
    if (na[r] == 0 || nb[r] == 0) {
      ++zeros;
      out.data()[r] = Real(1);
    } else {
      out.data()[r] = static_cast<Real>(1.0 - sab / (na[r] * nb[r]));
    }
  }
  if (zero_rows != nullptr) *zero_rows = zeros;
  if (Tape* tape = tape_for({&a, &b})) {
    tape->record(out, {a, b}, [an = a.node(), bn = b.node(), on = out.node(), rows, d,
                               na = std::move(na), nb = std::move(nb), dot = std::move(dot)] {
      for (int r = 0; r < rows; ++r) {
        if (na[r] == 0 || nb[r] == 0) continue;
        const double g = on->grad[r];
        const double inv = 1.0 / (na[r] * nb[r]);
        const double cosv = dot[r] * inv;
        const std::size_t base = static_cast<std::size_t>(r) * d;
        // d(1 - cos)/da = -(b/(|a||b|) - cos * a/|a|^2)
        if (an->requires_grad) {
          auto& ga = an->grad_buffer();
          for (int j = 0; j < d; ++j)
            ga[base + j] += static_cast<Real>(
                -g * (bn->value[base + j] * inv - cosv * an->value[base + j] / (na[r] * na[r])));
        }
        if (bn->requires_grad) {
          auto& gb = bn->grad_buffer();
          for (int j = 0; j < d; ++j)
            gb[base + j] += static_cast<Real>(
                -g * (an->value[base + j] * inv - cosv * bn->value[base + j] / (nb[r] * nb[r])));
        }
      }
    });
  }
  return out;
}

WSR_NS_END
