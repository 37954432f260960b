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

#include "optim.hpp"

#include <cmath>
#include <numbers>

WSR_NS_BEGIN

const char* group_name(ParamGroup g) {
  switch (g) {
    case ParamGroup::Backbone: return "backbone";
    case ParamGroup::CtcHead: return "ctc_head";
    case ParamGroup::Encoder: return "encoder";
    case ParamGroup::Decoder: return "decoder";
    case ParamGroup::CharEncoder: return "char_encoder";
  }
  return "?";
}

Tensor ParamStore::add(const std::string& name, ParamGroup group, Shape shape,
                       std::vector<Real> values) {
  WSR_REQUIRE(!index_.contains(name), "duplicate parameter name: " + name);
  Tensor t = Tensor::parameter(std::move(shape), std::move(values));
  index_[name] = params_.size();
  params_.push_back({name, group, t});
  return t;
}

Tensor ParamStore::add_buffer(const std::string& name, Shape shape, Real fill) {
  WSR_REQUIRE(!index_.contains(name), "duplicate buffer name: " + name);
  Tensor t(std::move(shape), fill);
  index_[name] = params_.size() + buffers_.size() + (1u << 30);
  buffers_.push_back({name, ParamGroup::Backbone, t});
  return t;
}

std::vector<ParamStore::Entry> ParamStore::all() const {
  std::vector<Entry> out = params_;
  out.insert(out.end(), buffers_.begin(), buffers_.end());
  return out;
}

const ParamStore::Entry* ParamStore::find(const std::string& name) const {
  for (const auto& e : params_)
    if (e.name == name) return &e;
  for (const auto& e : buffers_)
    if (e.name == name) return &e;
  return nullptr;
}

void ParamStore::zero_grad() {
  for (auto& e : params_) e.tensor.zero_grad();
}

std::size_t ParamStore::parameter_count() const {
  std::size_t n = 0;
  for (const auto& e : params_) n += e.tensor.numel();
  return n;
}

std::vector<Real> kaiming_normal(std::size_t count, int fan_in, Rng& rng) {
  const double std_dev = std::sqrt(2.0 / fan_in);
  std::vector<Real> v(count);
  for (auto& x : v) x = static_cast<Real>(rng.normal() * std_dev);
  return v;
}

std::vector<Real> uniform_fan_in(std::size_t count, int fan_in, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  std::vector<Real> v(count);
  for (auto& x : v) x = static_cast<Real>(rng.uniform(-bound, bound));
  return v;
}

void adam_step(const std::vector<ParamStore::Entry>& params, AdamState& state, double lr,
               bool skip_missing) {
  ++state.step;
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  for (const auto& e : params) {
    Tensor p = e.tensor;
    if (!p.has_grad()) {
      if (skip_missing) continue;
      contract_fail("adam_step: parameter without gradient: " + e.name);
    }
    auto& m = state.m[e.name];
    auto& v = state.v[e.name];
    if (m.size() != p.numel()) {
      m.assign(p.numel(), Real(0));
      v.assign(p.numel(), Real(0));
    }
    auto g = p.grad();
    auto w = p.data();
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double gi = g[i];
      const double mi = state.beta1 * m[i] + (1.0 - state.beta1) * gi;
      const double vi = state.beta2 * v[i] + (1.0 - state.beta2) * gi * gi;
      m[i] = static_cast<Real>(mi);
      v[i] = static_cast<Real>(vi);
      w[i] = static_cast<Real>(w[i] - lr * (mi / bc1) / (std::sqrt(vi / bc2) + state.eps));
    }
  }
}

double clip_grad_norm(const std::vector<ParamStore::Entry>& params, double max_norm) {
  double sq = 0;
  for (const auto& e : params) {
    if (!e.tensor.has_grad()) continue;
    for (Real g : e.tensor.grad()) sq += static_cast<double>(g) * g;
  }
  const double norm = std::sqrt(sq);
  if (max_norm > 0 && norm > max_norm) {
    const Real factor = static_cast<Real>(max_norm / norm);
    for (const auto& e : params) {
      Tensor t = e.tensor;
      if (!t.has_grad()) continue;
      for (auto& g : t.mutable_grad()) g *= factor;
    }
  }
  return norm;
}

double cosine_lr(double epoch, const LrSchedule& s) {
  WSR_REQUIRE(s.total_epochs >= 1, "cosine_lr: total epochs must be >= 1");
  if (epoch >= s.total_epochs) return s.minimum;
  if (epoch < 0) epoch = 0;
  return s.minimum + 0.5 * (s.initial - s.minimum) *
                         (1.0 + std::cos(std::numbers::pi * epoch / s.total_epochs));
}

WSR_NS_END
