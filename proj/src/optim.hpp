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

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "rng.hpp"
#include "tensor.hpp"

WSR_NS_BEGIN

/// Which part of the network a parameter belongs to. The multi-task loss
/// routes gradients by group: the backbone is shared, the CTC head and the
/// Seq2Seq modules are branch-exclusive.
enum class ParamGroup : std::uint8_t { Backbone, CtcHead, Encoder, Decoder, CharEncoder };

const char* group_name(ParamGroup g);

/// Named, ordered registry of trainable parameters and non-trainable buffers
/// (batch-norm running statistics). Modules keep Tensor handles that share
/// storage with the entries here.
class ParamStore {
 public:
  struct Entry {
    std::string name;
    ParamGroup group;
    Tensor tensor;
  };

  Tensor add(const std::string& name, ParamGroup group, Shape shape, std::vector<Real> values);
  Tensor add_buffer(const std::string& name, Shape shape, Real fill);

  const std::vector<Entry>& params() const { return params_; }
  const std::vector<Entry>& buffers() const { return buffers_; }

  /// Parameters then buffers, in registration order.
  std::vector<Entry> all() const;
  const Entry* find(const std::string& name) const;

  void zero_grad();
  std::size_t parameter_count() const;

 private:
  std::vector<Entry> params_;
  std::vector<Entry> buffers_;
  std::map<std::string, std::size_t> index_;
};

/// Fan-in scaled initializers.
std::vector<Real> kaiming_normal(std::size_t count, int fan_in, Rng& rng);
std::vector<Real> uniform_fan_in(std::size_t count, int fan_in, Rng& rng);

struct AdamState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::int64_t step = 0;
  std::map<std::string, std::vector<Real>> m;
  std::map<std::string, std::vector<Real>> v;
};

/// One bias-corrected Adam update over `params`. Every entry must hold a
/// gradient; pass `skip_missing` to leave gradient-less entries untouched.
void adam_step(const std::vector<ParamStore::Entry>& params, AdamState& state, double lr,
               bool skip_missing = false);

/// Rescales all gradients so their global L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
double clip_grad_norm(const std::vector<ParamStore::Entry>& params, double max_norm);

struct LrSchedule {
  double initial = 0.01;
  int total_epochs = 80;
  double minimum = 0.0;
};

/// Cosine annealing from `initial` at epoch 0 to `minimum` at `total_epochs`.
double cosine_lr(double epoch, const LrSchedule& schedule);

WSR_NS_END
