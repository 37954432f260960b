// Copyright 2026 The wsrnet Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <vector>

#include "backbone.hpp"

using namespace wsr;

namespace {

Tensor random_images(int n, int h, int w, Rng& rng) {
  std::vector<Real> v(static_cast<std::size_t>(n) * h * w);
  for (auto& x : v) x = static_cast<Real>(rng.uniform());
  return Tensor({n, 1, h, w}, v);
}

}  // namespace

TEST_CASE("full-width backbone output shape") {
  ParamStore store;
  Rng init(1), rng(2);
  BackboneConfig cfg;
  cfg.scale = 1;
  Backbone net(cfg, store, init);
  NoGradScope off;
  Tensor y = net.forward(random_images(1, 64, 256, rng), false, rng);
  CHECK(y.shape() == Shape{1, 128, 32});
  CHECK(all_finite(y));
  CHECK(net.output_depth() == 128);
  CHECK(cfg.width_stride() == 8);
}

TEST_CASE("width scaling divides depths") {
  BackboneConfig cfg;
  cfg.scale = 8;
  ParamStore store;
  Rng init(1), rng(2);
  Backbone net(cfg, store, init);
  NoGradScope off;
  Tensor y = net.forward(random_images(2, 32, 64, rng), false, rng);
  CHECK(y.shape() == Shape{2, 16, 8});
}

TEST_CASE("column reduction is the per-column maximum of the map") {
  ParamStore store;
  Rng init(4), rng(5);
  BackboneConfig cfg;
  cfg.scale = 8;
  Backbone net(cfg, store, init);
  NoGradScope off;
  Tensor images = random_images(1, 32, 64, rng);
  Tensor map = net.feature_map(images, false, rng);
  Tensor cols = net.forward(images, false, rng);
  CHECK(max_over_height(map).data().size() == cols.numel());
  Tensor reduced = max_over_height(map);
  for (std::size_t i = 0; i < cols.numel(); ++i) CHECK(cols[i] == reduced[i]);

  // Permuting rows of the map leaves the column maximum unchanged.
  const int c = map.dim(1), h = map.dim(2), w = map.dim(3);
  std::vector<Real> permuted(map.numel());
  for (int ch = 0; ch < c; ++ch)
    for (int r = 0; r < h; ++r)
      for (int q = 0; q < w; ++q)
        permuted[(ch * h + r) * w + q] = map[(ch * h + (h - 1 - r)) * w + q];
  Tensor flipped = max_over_height(Tensor(map.shape(), permuted));
  for (std::size_t i = 0; i < cols.numel(); ++i) CHECK(flipped[i] == reduced[i]);
}

TEST_CASE("residual block with zero convolution is the identity") {
  ParamStore store;
  Rng rng(7);
  ResidualBlock block;
  block.bn = BatchNormLayer::create(store, "bn", ParamGroup::Backbone, 3);
  block.conv = Tensor({3, 3, 3, 3}, 0);
  Tensor x = random_images(2, 5, 6, rng);
  Tensor x3 = Tensor({2, 3, 5, 2}, std::vector<Real>(x.data().begin(), x.data().end()));
  Tensor y = residual_block(x3, block, true, 0.0, 0.1, rng);
  REQUIRE(y.shape() == x3.shape());
  for (std::size_t i = 0; i < y.numel(); ++i) CHECK(y[i] == doctest::Approx(x3[i]));
}

TEST_CASE("evaluation mode is deterministic") {
  ParamStore store;
  Rng init(3), rng(6);
  BackboneConfig cfg;
  cfg.scale = 8;
  Backbone net(cfg, store, init);
  NoGradScope off;
  Tensor images = random_images(2, 32, 64, rng);
  Rng a(10), b(11);
  Tensor y1 = net.forward(images, false, a);
  Tensor y2 = net.forward(images, false, b);
  for (std::size_t i = 0; i < y1.numel(); ++i) CHECK(y1[i] == y2[i]);
}

TEST_CASE("training mode output is finite and seeded") {
  ParamStore store;
  Rng init(3), rng(6);
  BackboneConfig cfg;
  cfg.scale = 8;
  Backbone net(cfg, store, init);
  Tensor images = random_images(2, 32, 64, rng);
  Tape tape;
  TapeScope scope(tape);
  Rng a(10), b(10);
  Tensor y1 = net.forward(images, true, a);
  Tensor y2 = net.forward(images, true, b);
  CHECK(all_finite(y1));
  for (std::size_t i = 0; i < y1.numel(); ++i) CHECK(y1[i] == y2[i]);
}
