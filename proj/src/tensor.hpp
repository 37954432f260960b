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

#pragma once

#include <functional>
#include <initializer_list>
#include <memory>
#include <new>
#include <span>
#include <string>
#include <vector>

#include "common.hpp"
#include "rng.hpp"

WSR_NS_BEGIN

using Shape = std::vector<int>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

/// Cache-line aligned allocation. Vectorized kernels peel unaligned heads, so
/// a fixed base alignment keeps results independent of heap addresses.
template <typename T>
struct AlignedAllocator {
  using value_type = T;
  static constexpr std::align_val_t kAlignment{64};

  AlignedAllocator() = default;
  template <typename U>
  AlignedAllocator(const AlignedAllocator<U>&) noexcept {}

  T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), kAlignment)); }
  void deallocate(T* p, std::size_t) noexcept { ::operator delete(p, kAlignment); }

  template <typename U>
  bool operator==(const AlignedAllocator<U>&) const noexcept {
    return true;
  }
};

using Buffer = std::vector<Real, AlignedAllocator<Real>>;

/// Storage behind a Tensor handle. Gradients are allocated lazily.
struct Node {
  Shape shape;
  Buffer value;
  Buffer grad;
  bool requires_grad = false;
  bool is_leaf = true;

  Buffer& grad_buffer() {
    if (grad.size() != value.size()) grad.assign(value.size(), Real(0));
    return grad;
  }
};

/// Dense row-major tensor with reference semantics: copies of a Tensor share
/// storage, which is how parameters are shared between modules and the
/// parameter store.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, Real fill = Real(0));
  Tensor(Shape shape, std::vector<Real> values);

  static Tensor scalar(Real v) { return Tensor(Shape{1}, std::vector<Real>{v}); }
  /// Leaf that receives gradients.
  static Tensor parameter(Shape shape, std::vector<Real> values);

  bool defined() const { return static_cast<bool>(node_); }
  const Shape& shape() const { return node_->shape; }
  int rank() const { return static_cast<int>(node_->shape.size()); }
  /// Negative axes count from the end.
  int dim(int axis) const;
  std::size_t numel() const { return node_->value.size(); }

  std::span<Real> data() { return node_->value; }
  std::span<const Real> data() const { return node_->value; }
  Real operator[](std::size_t i) const { return node_->value[i]; }
  Real item() const;

  bool requires_grad() const { return node_->requires_grad; }
  Tensor& set_requires_grad(bool on);
  bool has_grad() const { return node_->grad.size() == node_->value.size(); }
  /// Empty span when no gradient has been accumulated.
  std::span<const Real> grad() const { return node_->grad; }
  std::span<Real> mutable_grad() { return node_->grad_buffer(); }
  void zero_grad();

  /// Same values, fresh storage, no gradient tracking.
  Tensor detach() const;

  Node* node() const { return node_.get(); }
  const std::shared_ptr<Node>& shared_node() const { return node_; }

 private:
  std::shared_ptr<Node> node_;
};

/// Ordered record of executed differentiable ops. Backward replays the
/// records in exact reverse order; gradients accumulate additively.
class Tape {
 public:
  using BackwardFn = std::function<void()>;

  void record(const Tensor& output, std::vector<Tensor> inputs, BackwardFn fn);

  /// Seeds d(loss)/d(loss) = 1 and propagates. Non-leaf gradients are reset
  /// first, so calling twice doubles the leaf gradients.
  void backward(const Tensor& loss);

  std::size_t size() const { return entries_.size(); }
  void clear() { entries_.clear(); }

 private:
  struct Entry {
    std::shared_ptr<Node> output;
    std::vector<std::shared_ptr<Node>> inputs;
    BackwardFn fn;
  };
  std::vector<Entry> entries_;
};

/// Makes a tape the recording target for the current thread. Without an
/// active scope ops run as pure functions and record nothing.
class TapeScope {
 public:
  explicit TapeScope(Tape& tape);
  ~TapeScope();
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape* previous_;
};

Tape* active_tape();

/// Active tape when at least one input requires grad, nullptr otherwise.
Tape* tape_for(std::initializer_list<const Tensor*> inputs);

/// Disables recording for the current thread while alive.
class NoGradScope {
 public:
  NoGradScope();
  ~NoGradScope();
  NoGradScope(const NoGradScope&) = delete;
  NoGradScope& operator=(const NoGradScope&) = delete;

 private:
  Tape* previous_;
};

/// Non-finite check used by training to detect divergence.
bool all_finite(const Tensor& t);

// ---------------------------------------------------------------------------
// Ops. All ops are differentiable w.r.t. their Tensor arguments unless noted.

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, Real s);
/// a * x + b elementwise.
Tensor affine(const Tensor& x, Real a, Real b);
/// x[..., j] + bias[j]
Tensor add_bias(const Tensor& x, const Tensor& bias);

Tensor relu(const Tensor& x);
Tensor tanh(const Tensor& x);
Tensor sigmoid(const Tensor& x);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
/// Σ w_i x_i with constant weights; returns a scalar.
Tensor weighted_sum(const Tensor& x, std::span<const Real> weights);

/// [M x K] * [K x N]
Tensor matmul(const Tensor& a, const Tensor& b);
/// x [..., in] times weight [out x in] transposed, plus optional bias [out].
Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias = {});

Tensor softmax(const Tensor& x);
Tensor log_softmax(const Tensor& x);

/// x [R x C], picks x[r, index[r]] -> [R].
Tensor gather_last(const Tensor& x, std::span<const int> index);
/// table [V x E] -> [n x E]
Tensor embedding(const Tensor& table, std::span<const int> index);
/// Concatenates along the last axis; leading dims must agree.
Tensor concat_last(const std::vector<Tensor>& parts);
Tensor slice_last(const Tensor& x, int begin, int end);
/// x [B x T x F] -> [B x F] at step t.
Tensor time_step(const Tensor& x, int t);
/// list of [B x F] -> [B x T x F]
Tensor stack_time(const std::vector<Tensor>& steps);
Tensor reshape(const Tensor& x, Shape shape);
/// [N x A x B] -> [N x B x A]
Tensor transpose12(const Tensor& x);
/// Multiplies row r of x [R x C] by the constant s[r].
Tensor row_scale(const Tensor& x, std::span<const Real> s);

/// Cross-correlation. x [N x C x H x W], weight [O x C x kh x kw].
Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias,
              int stride, int pad_h, int pad_w);
/// x [N x C x L], weight [O x C x k]; symmetric padding k/2 keeps length.
Tensor conv1d(const Tensor& x, const Tensor& weight, const Tensor& bias);
/// 2x2 windows, stride 2.
Tensor maxpool2d(const Tensor& x);
/// [N x C x H x W] -> [N x C x W], per-column maximum over the height axis.
Tensor max_over_height(const Tensor& x);

/// Running statistics of a batch-norm layer; not trained by gradients.
struct BatchNormStats {
  Tensor mean;
  Tensor var;
};

/// Per-channel normalization over every axis but axis 1. Train mode uses
/// batch statistics and updates `stats` by exponential moving average.
Tensor batch_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  BatchNormStats& stats, bool train, Real momentum = Real(0.1),
                  Real eps = Real(1e-5));

/// Inverted dropout. Identity when !train or p == 0.
Tensor dropout(const Tensor& x, Real p, bool train, Rng& rng);

/// Per-row cosine distance 1 - <a,b>/(|a||b|) for [R x D] inputs. Rows with
/// a zero norm get distance 1, no gradient, and are counted in *zero_rows.
Tensor cosine_distance_rows(const Tensor& a, const Tensor& b,
                            int* zero_rows = nullptr);

WSR_NS_END
