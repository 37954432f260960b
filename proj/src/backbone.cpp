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

#include "backbone.hpp"

WSR_NS_BEGIN

int BackboneConfig::width_stride() const {
  int s = 1;
  for (bool p : pool_after) s *= p ? 2 : 1;
  return s;
}

BatchNormLayer BatchNormLayer::create(ParamStore& store, const std::string& name, ParamGroup group,
                                      int channels) {
  BatchNormLayer bn;
  bn.gamma = store.add(name + ".gamma", group, Shape{channels}, std::vector<Real>(channels, Real(1)));
  bn.beta = store.add(name + ".beta", group, Shape{channels}, std::vector<Real>(channels, Real(0)));
  bn.stats.mean = store.add_buffer(name + ".running_mean", Shape{channels}, Real(0));
  bn.stats.var = store.add_buffer(name + ".running_var", Shape{channels}, Real(1));
  return bn;
}

Tensor BatchNormLayer::forward(const Tensor& x, bool train, double momentum) const {
  BatchNormStats s = stats;  // handles share storage
  return batch_norm(x, gamma, beta, s, train, static_cast<Real>(momentum));
}

Tensor residual_block(const Tensor& x, const ResidualBlock& block, bool train, double dropout_p,
                      double bn_momentum, Rng& rng) {
  Tensor h = block.bn.forward(x, train, bn_momentum);
  h = relu(h);
  h = dropout(h, static_cast<Real>(dropout_p), train, rng);
  h = conv2d(h, block.conv, {}, 1, block.pad, block.pad);
  Tensor skip = block.projection.defined() ? conv2d(x, block.projection, {}, 1, 0, 0) : x;
  return add(skip, h);
}

Backbone::Backbone(const BackboneConfig& config, ParamStore& store, Rng& init_rng) : config_(config) {
  WSR_REQUIRE(config.scale >= 1, "backbone scale must be >= 1");
  WSR_REQUIRE(config.layers[0] == 1, "stack 1 is a single plain convolution");
  const int c1 = config.depth(0), k1 = config.kernels[0];
  WSR_REQUIRE(k1 % 2 == 1, "kernel sizes must be odd");
  conv1_weight_ = store.add("backbone.conv1.weight", ParamGroup::Backbone, Shape{c1, 1, k1, k1},
                            kaiming_normal(static_cast<std::size_t>(c1) * k1 * k1, k1 * k1, init_rng));
  conv1_bias_ = store.add("backbone.conv1.bias", ParamGroup::Backbone, Shape{c1}, std::vector<Real>(c1, 0));

  int in = c1;
  for (int s = 1; s < 4; ++s) {
    const int out = config.depth(s), k = config.kernels[static_cast<std::size_t>(s)];
    WSR_REQUIRE(k % 2 == 1, "kernel sizes must be odd");
    std::vector<ResidualBlock> stack;
    for (int l = 0; l < config.layers[static_cast<std::size_t>(s)]; ++l) {
      const std::string name = "backbone.stack" + std::to_string(s + 1) + ".block" + std::to_string(l);
      ResidualBlock b;
      b.bn = BatchNormLayer::create(store, name + ".bn", ParamGroup::Backbone, in);
      b.conv = store.add(name + ".conv", ParamGroup::Backbone, Shape{out, in, k, k},
                         kaiming_normal(static_cast<std::size_t>(out) * in * k * k, in * k * k, init_rng));
      if (in != out) {
        b.projection = store.add(name + ".proj", ParamGroup::Backbone, Shape{out, in, 1, 1},
                                 kaiming_normal(static_cast<std::size_t>(out) * in, in, init_rng));
      }
      b.pad = k / 2;
      stack.push_back(std::move(b));
      in = out;
    }
    stacks_.push_back(std::move(stack));
  }
  out_bn_ = BatchNormLayer::create(store, "backbone.out_bn", ParamGroup::Backbone, in);
}

Tensor Backbone::feature_map(const Tensor& images, bool train, Rng& rng) const {
  WSR_REQUIRE(images.rank() == 4 && images.dim(1) == 1,
              "backbone expects [N x 1 x H x W] images, got " + shape_str(images.shape()));
  const int stride = config_.width_stride();
  WSR_REQUIRE(images.dim(2) % stride == 0 && images.dim(3) % stride == 0,
              "backbone input dims must be divisible by " + std::to_string(stride));
  const int k1 = config_.kernels[0];
  Tensor h = conv2d(images, conv1_weight_, conv1_bias_, 1, k1 / 2, k1 / 2);
  if (config_.pool_after[0]) h = maxpool2d(h);
  for (std::size_t s = 0; s < stacks_.size(); ++s) {
    for (const auto& block : stacks_[s]) h = residual_block(h, block, train, config_.dropout, config_.bn_momentum, rng);
    if (config_.pool_after[s + 1]) h = maxpool2d(h);
  }
  h = out_bn_.forward(h, train, config_.bn_momentum);
  return relu(h);
}

Tensor Backbone::forward(const Tensor& images, bool train, Rng& rng) const {
  return max_over_height(feature_map(images, train, rng));
}

WSR_NS_END
