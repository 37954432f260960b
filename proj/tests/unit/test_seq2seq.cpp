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

#include <cmath>
#include <vector>

#include "seq2seq.hpp"

using namespace wsr;

namespace {

std::vector<Real> normals(std::size_t n, Rng& rng, double sd = 1.0) {
  std::vector<Real> v(n);
  for (auto& x : v) x = static_cast<Real>(sd * rng.normal());
  return v;
}

void fill(Tensor t, Real value) {
  for (auto& x : t.data()) x = value;
}

std::vector<int> random_word(Rng& rng, int classes, int max_len) {
  std::vector<int> w(1 + rng.below(static_cast<std::size_t>(max_len)));
  for (auto& c : w) c = 2 + static_cast<int>(rng.below(static_cast<std::size_t>(classes - 2)));
  return w;
}

}  // namespace

TEST_CASE("gru with zero parameters halves the state") {
  ParamStore store;
  Rng init(1);
  GruParams p = GruParams::create(store, "g", ParamGroup::Decoder, 3, 4, init);
  fill(p.w_in, 0);
  fill(p.bias, 0);
  fill(p.u_rz, 0);
  fill(p.u_h, 0);
  Tensor x({2, 3}, std::vector<Real>{1, -2, 3, 0.5, 0.1, -1});
  Tensor h({2, 4}, std::vector<Real>{1, 2, -3, 4, 0.2, 0, -1, 8});
  Tensor out = gru_cell(x, h, p);
  for (std::size_t i = 0; i < h.numel(); ++i) CHECK(out[i] == doctest::Approx(0.5 * h[i]));
}

TEST_CASE("saturated update gate keeps the state") {
  ParamStore store;
  Rng init(2);
  GruParams p = GruParams::create(store, "g", ParamGroup::Decoder, 3, 4, init);
  for (int j = 4; j < 8; ++j) p.bias.data()[static_cast<std::size_t>(j)] = 60;
  Tensor x({1, 3}, std::vector<Real>{0.3, -0.2, 0.1});
  Tensor h({1, 4}, std::vector<Real>{0.5, -0.25, 0.75, 0.1});
  Tensor out = gru_cell(x, h, p);
  for (std::size_t i = 0; i < h.numel(); ++i) CHECK(out[i] == doctest::Approx(h[i]).epsilon(1e-12));
}

TEST_CASE("encoder descriptors") {
  ParamStore store;
  Rng init(3), rng(4);
  Encoder enc(8, EncoderConfig{16, 2}, store, init);
  NoGradScope off;
  const int w = 7;
  auto values = normals(8 * w, rng);
  Tensor f({1, 8, w}, values);
  Tensor d1 = enc.forward(f);
  Tensor d2 = enc.forward(Tensor({1, 8, w}, values));
  REQUIRE(d1.shape() == Shape{1, kDescriptorDim});
  for (std::size_t i = 0; i < d1.numel(); ++i) CHECK(d1[i] == d2[i]);

  std::vector<Real> reversed(values.size());
  for (int c = 0; c < 8; ++c)
    for (int t = 0; t < w; ++t) reversed[static_cast<std::size_t>(c * w + t)] = values[static_cast<std::size_t>(c * w + w - 1 - t)];
  Tensor d3 = enc.forward(Tensor({1, 8, w}, reversed));
  double diff = 0;
  for (std::size_t i = 0; i < d1.numel(); ++i) diff = std::max(diff, std::abs(static_cast<double>(d1[i] - d3[i])));
  CHECK(diff > 1e-6);
}

TEST_CASE("decoder forced to stop immediately yields nothing") {
  ParamStore store;
  Rng init(5), rng(6);
  Decoder dec(6, DecoderConfig{8, 32}, store, init);
  fill(dec.out_weight(), 0);
  fill(dec.out_bias(), 0);
  dec.out_bias().data()[Charset::kSpace] = 100;
  NoGradScope off;
  Tensor x({1, kDescriptorDim}, normals(kDescriptorDim, rng));
  DecodeResult r = decode_greedy(dec, x, 32);
  CHECK(r.labels.empty());
  CHECK(r.terminated);
  CHECK(decode_beam(dec, x, 5, 32).labels.empty());

  // Terminal-only target is predicted perfectly.
  Tensor loss = s2s_loss(dec, x, {std::vector<int>{}}, 1.0, rng);
  CHECK(loss.item() == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("decoder that never stops is flagged unterminated") {
  ParamStore store;
  Rng init(5), rng(6);
  Decoder dec(6, DecoderConfig{8, 32}, store, init);
  fill(dec.out_weight(), 0);
  fill(dec.out_bias(), 0);
  dec.out_bias().data()[3] = 100;
  NoGradScope off;
  Tensor x({1, kDescriptorDim}, normals(kDescriptorDim, rng));
  DecodeResult r = decode_greedy(dec, x, 4);
  CHECK_FALSE(r.terminated);
  CHECK(r.labels == std::vector<int>{3, 3, 3, 3});
}

TEST_CASE("uniform output layer costs ln C") {
  ParamStore store;
  Rng init(7), rng(8);
  const int classes = 9;
  Decoder dec(classes, DecoderConfig{8, 32}, store, init);
  fill(dec.out_weight(), 0);
  fill(dec.out_bias(), 0);
  Tensor x({2, kDescriptorDim}, normals(2 * kDescriptorDim, rng));
  Tensor loss = s2s_loss(dec, x, {{2, 3, 4}, {5}}, 0.5, rng);
  CHECK(loss.item() == doctest::Approx(std::log(static_cast<double>(classes))));
}

TEST_CASE("beam search is exact on a two-step decoder") {
  Rng rng(9);
  for (int trial = 0; trial < 20; ++trial) {
    ParamStore store;
    Rng init(100 + static_cast<std::uint64_t>(trial));
    const int classes = 4;
    Decoder dec(classes, DecoderConfig{8, 2}, store, init);
    auto ow = dec.out_weight().data();
    for (auto& w : ow) w = static_cast<Real>(0.2 * rng.normal());
    NoGradScope off;
    Tensor x({1, kDescriptorDim}, normals(kDescriptorDim, rng));
    // Terminated strings within two steps: "" and each single character.
    int sp = Charset::kSpace;
    Decoder::Step first = dec.step(std::span<const int>(&sp, 1), x);
    std::vector<int> best;
    double best_lp = first.log_probs[Charset::kSpace];
    for (int c = 2; c < classes; ++c) {
      Decoder::Step second = dec.step(std::span<const int>(&c, 1), first.hidden);
      const double lp = first.log_probs[static_cast<std::size_t>(c)] + second.log_probs[Charset::kSpace];
      if (lp > best_lp) best_lp = lp, best = {c};
    }
    DecodeResult r = decode_beam(dec, x, 9, 2);
    CHECK(r.terminated);
    CHECK(r.labels == best);
    CHECK(r.log_prob == doctest::Approx(best_lp));
  }
}

TEST_CASE("width one beam equals greedy") {
  Rng rng(10);
  ParamStore store;
  Rng init(11);
  Decoder dec(12, DecoderConfig{8, 32}, store, init);
  NoGradScope off;
  for (int trial = 0; trial < 20; ++trial) {
    Tensor x({1, kDescriptorDim}, normals(kDescriptorDim, rng));
    DecodeResult g = decode_greedy(dec, x, 10);
    DecodeResult b = decode_beam(dec, x, 1, 10);
    CHECK(g.labels == b.labels);
    CHECK(g.terminated == b.terminated);
  }
}

TEST_CASE("forced alignment equals fully teacher-forced loss") {
  Rng rng(12);
  ParamStore store;
  Rng init(13);
  Decoder dec(10, DecoderConfig{8, 32}, store, init);
  for (int trial = 0; trial < 20; ++trial) {
    Tensor x({1, kDescriptorDim}, normals(kDescriptorDim, rng));
    const auto q = random_word(rng, 10, 6);
    const double fa = forced_align_score(dec, x, q);
    const double loss = s2s_loss(dec, x, {q}, 1.0, rng).item();
    CHECK(std::abs(fa - loss) <= 1e-6);
  }
}

TEST_CASE("out-of-charset query is rejected") {
  ParamStore store;
  Rng init(13);
  Decoder dec(10, DecoderConfig{8, 32}, store, init);
  Tensor x({1, kDescriptorDim}, 0.1);
  CHECK_THROWS_AS(forced_align_score(dec, x, std::vector<int>{2, 10}), ContractViolation);
  CHECK_THROWS_AS(forced_align_score(dec, x, std::vector<int>{Charset::kBlank}), ContractViolation);
  CHECK_THROWS_AS(forced_align_score(dec, x, std::vector<int>{}), ContractViolation);
}

TEST_CASE("trie shares prefixes") {
  const std::vector<int> car{4, 2, 19}, cat{4, 2, 21};
  QueryTrie trie({car, cat});
  CHECK(trie.nodes().size() == 5);
  CHECK(trie.query_count() == 2);

  ParamStore store;
  Rng init(14), rng(15);
  Decoder dec(30, DecoderConfig{8, 32}, store, init);
  NoGradScope off;
  Tensor x({1, kDescriptorDim}, normals(kDescriptorDim, rng));
  std::size_t steps = 0;
  auto scores = trie_forced_align(dec, x, trie, &steps);
  CHECK(steps == 5);
  CHECK(steps < (car.size() + 1) + (cat.size() + 1));
  CHECK(scores[0][0] == doctest::Approx(forced_align_score(dec, x, car)).epsilon(1e-9));
  CHECK(scores[0][1] == doctest::Approx(forced_align_score(dec, x, cat)).epsilon(1e-9));

  QueryTrie single({std::vector<int>{2}});
  auto one = trie_forced_align(dec, x, single);
  CHECK(one[0][0] == forced_align_score(dec, x, std::vector<int>{2}));
}

TEST_CASE("trie scores match per-query alignment") {
  ParamStore store;
  Rng init(16), rng(17);
  const int classes = 8;
  Decoder dec(classes, DecoderConfig{8, 32}, store, init);
  NoGradScope off;
  std::vector<std::vector<int>> queries;
  for (int q = 0; q < 100; ++q) queries.push_back(random_word(rng, classes, 5));
  Tensor xs({3, kDescriptorDim}, normals(3 * kDescriptorDim, rng));
  auto scores = trie_forced_align(dec, xs, QueryTrie(queries));
  double worst = 0;
  for (int r = 0; r < 3; ++r) {
    Tensor row({1, kDescriptorDim}, std::vector<Real>(xs.data().begin() + r * kDescriptorDim,
                                                      xs.data().begin() + (r + 1) * kDescriptorDim));
    for (std::size_t q = 0; q < queries.size(); ++q)
      worst = std::max(worst, std::abs(scores[static_cast<std::size_t>(r)][q] - forced_align_score(dec, row, queries[q])));
  }
  CHECK(worst <= 1e-6);
}

TEST_CASE("loss is deterministic for a fixed seed") {
  ParamStore store;
  Rng init(18), rng(19);
  Decoder dec(10, DecoderConfig{8, 32}, store, init);
  Tensor x({2, kDescriptorDim}, normals(2 * kDescriptorDim, rng));
  Rng a(5), b(5);
  const double la = s2s_loss(dec, x, {{2, 3, 4}, {5, 6}}, 0.5, a).item();
  const double lb = s2s_loss(dec, x, {{2, 3, 4}, {5, 6}}, 0.5, b).item();
  CHECK(la == lb);
}
