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
#include <functional>
#include <limits>
#include <map>
#include <vector>

#include "ctc.hpp"

using namespace wsr;

namespace {

// Row-major T x C log-probabilities built from probabilities.
std::vector<Real> logs(const std::vector<double>& probs) {
  std::vector<Real> out;
  for (double p : probs) out.push_back(static_cast<Real>(std::log(p)));
  return out;
}

FrameLogProbs frames(const std::vector<Real>& lp, int t, int c) { return {lp, t, c, 0}; }

std::vector<int> collapse(const std::vector<int>& path) {
  std::vector<int> out;
  int prev = -1;
  for (int k : path) {
    if (k != prev && k != 0) out.push_back(k);
    prev = k;
  }
  return out;
}

// Probability of every labeling by enumerating all paths.
std::map<std::vector<int>, double> labeling_probs(const FrameLogProbs& lp) {
  std::map<std::vector<int>, double> out;
  std::vector<int> path(static_cast<std::size_t>(lp.frames));
  std::function<void(int, double)> walk = [&](int t, double logp) {
    if (t == lp.frames) {
      out[collapse(path)] += std::exp(logp);
      return;
    }
    for (int k = 0; k < lp.classes; ++k) {
      path[static_cast<std::size_t>(t)] = k;
      walk(t + 1, logp + lp.at(t, k));
    }
  };
  walk(0, 0.0);
  return out;
}

std::vector<Real> random_frames(int t, int c, Rng& rng) {
  std::vector<Real> v;
  for (int i = 0; i < t; ++i) {
    std::vector<double> row(static_cast<std::size_t>(c));
    double z = 0;
    for (auto& p : row) z += (p = std::exp(2.0 * rng.normal()));
    for (double p : row) v.push_back(static_cast<Real>(std::log(p / z)));
  }
  return v;
}

}  // namespace

TEST_CASE("two frames, one label") {
  auto lp = logs({0.4, 0.6, 0.4, 0.6});
  const std::vector<int> target{1};
  CtcResult r = ctc_nll(frames(lp, 2, 2), target);
  CHECK(r.feasible);
  CHECK(r.loss == doctest::Approx(-std::log(0.84)));
  CHECK(r.loss == doctest::Approx(0.17435).epsilon(1e-4));
}

TEST_CASE("single frame is the label probability") {
  for (double q : {0.1, 0.5, 0.93}) {
    auto lp = logs({1 - q, q});
    const std::vector<int> target{1};
    CHECK(ctc_nll(frames(lp, 1, 2), target).loss == doctest::Approx(-std::log(q)));
  }
}

TEST_CASE("repeated label needs a separating blank") {
  auto lp = logs({0.4, 0.6, 0.4, 0.6});
  const std::vector<int> target{1, 1};
  CHECK(ctc_min_frames(target) == 3);
  CtcResult r = ctc_nll(frames(lp, 2, 2), target);
  CHECK_FALSE(r.feasible);
  CHECK(std::isinf(r.loss));
  Tensor batch({1, 2, 2}, lp);
  try {
    ctc_loss(batch, {target});
    FAIL("expected InfeasibleAlignment");
  } catch (const InfeasibleAlignment& e) {
    CHECK(e.sample() == 0);
  }
}

TEST_CASE("greedy collapse") {
  const int a = 2, b = 3;
  auto one_hot = [](const std::vector<int>& argmax) {
    std::vector<Real> v;
    for (int k : argmax)
      for (int c = 0; c < 4; ++c) v.push_back(static_cast<Real>(std::log(c == k ? 0.97 : 0.01)));
    return v;
  };
  Charset cs;
  auto v1 = one_hot({0, a, a, 0, b});
  CHECK(ctc_greedy_labels(frames(v1, 5, 4)) == std::vector<int>{a, b});
  auto v2 = one_hot({a, a, 0, a, b});
  CHECK(ctc_greedy_labels(frames(v2, 5, 4)) == std::vector<int>{a, a, b});
  auto v3 = one_hot({0, 0, 0});
  CHECK(ctc_greedy_labels(frames(v3, 3, 4)).empty());
  CHECK(greedy_decode(frames(v1, 5, 4), cs) == cs.decode(std::vector<int>{a, b}));
  CHECK(ctc_prefix_beam_labels(frames(v2, 5, 4), 5) == std::vector<int>{a, a, b});
}

TEST_CASE("beam is exact on a two-frame instance") {
  auto lp = logs({0.3, 0.36, 0.34, 0.3, 0.3, 0.4});
  auto f = frames(lp, 2, 3);
  auto probs = labeling_probs(f);
  std::vector<int> best;
  double best_p = -1;
  for (const auto& [labels, p] : probs)
    if (p > best_p) best_p = p, best = labels;
  const auto found = ctc_prefix_beam_labels(f, 5);
  CHECK(probs[found] == doctest::Approx(best_p));
  CHECK(found == std::vector<int>{2});
  CHECK(ctc_greedy_labels(f) == std::vector<int>{1, 2});
}

TEST_CASE("beam agrees with enumeration and dominates greedy") {
  Rng rng(17);
  for (int trial = 0; trial < 200; ++trial) {
    const int t = 1 + static_cast<int>(rng.below(5)), c = 2 + static_cast<int>(rng.below(3));
    auto lp = random_frames(t, c, rng);
    auto f = frames(lp, t, c);
    auto probs = labeling_probs(f);
    const auto beam = ctc_prefix_beam_labels(f, 5);
    const auto greedy = ctc_greedy_labels(f);
    CHECK(probs[beam] >= probs[greedy] * (1 - 1e-12));
    CHECK(std::exp(ctc_log_prob(f, beam)) == doctest::Approx(probs[beam]));
    const double nll = ctc_nll(f, beam).loss;
    CHECK(nll >= 0);
  }
}

TEST_CASE("one-hot frames: beam equals greedy") {
  Rng rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    const int t = 6, c = 4;
    std::vector<Real> lp;
    for (int i = 0; i < t; ++i) {
      const int hot = static_cast<int>(rng.below(c));
      for (int k = 0; k < c; ++k) lp.push_back(static_cast<Real>(k == hot ? 0.0 : -1e4));
    }
    auto f = frames(lp, t, c);
    CHECK(ctc_prefix_beam_labels(f, 5) == ctc_greedy_labels(f));
  }
}

TEST_CASE("loss is non-negative and gradient rows sum to zero") {
  Rng rng(8);
  for (int trial = 0; trial < 100; ++trial) {
    const int t = 3 + static_cast<int>(rng.below(4)), c = 4;
    auto lp = random_frames(t, c, rng);
    std::vector<int> target;
    const int len = 1 + static_cast<int>(rng.below(3));
    for (int i = 0; i < len; ++i) target.push_back(1 + static_cast<int>(rng.below(c - 1)));
    std::vector<double> grad;
    CtcResult r = ctc_nll(frames(lp, t, c), target, &grad);
    if (!r.feasible) {
      CHECK(ctc_min_frames(target) > t);
      continue;
    }
    CHECK(r.loss >= 0);
    // d loss / d log p sums to -1 per frame: posterior occupancies sum to one.
    for (int i = 0; i < t; ++i) {
      double row = 0;
      for (int k = 0; k < c; ++k) row += grad[static_cast<std::size_t>(i * c + k)];
      CHECK(row == doctest::Approx(-1.0));
    }
  }
}

TEST_CASE("head produces normalized frames") {
  ParamStore store;
  Rng init(2), rng(3);
  CtcHead head(16, 12, 7, 0.2, 0.1, store, init);
  std::vector<Real> v(2 * 16 * 9);
  for (auto& x : v) x = static_cast<Real>(rng.normal());
  NoGradScope off;
  Tensor out = head.forward(Tensor({2, 16, 9}, v), false, rng);
  REQUIRE(out.shape() == Shape{2, 9, 12});
  for (int r = 0; r < 18; ++r) {
    double z = 0;
    for (int k = 0; k < 12; ++k) z += std::exp(out[static_cast<std::size_t>(r * 12 + k)]);
    CHECK(z == doctest::Approx(1.0).epsilon(1e-6));
  }
}

TEST_CASE("batch loss is the mean of per-sample losses") {
  auto a = logs({0.4, 0.6, 0.4, 0.6});
  auto b = logs({0.9, 0.1, 0.2, 0.8});
  std::vector<Real> both(a);
  both.insert(both.end(), b.begin(), b.end());
  const std::vector<int> target{1};
  Tensor loss = ctc_loss(Tensor({2, 2, 2}, both), {target, target});
  const double expect = 0.5 * (ctc_nll(frames(a, 2, 2), target).loss + ctc_nll(frames(b, 2, 2), target).loss);
  CHECK(loss.item() == doctest::Approx(expect));
}
