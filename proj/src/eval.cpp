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

#include "eval.hpp"

#include <algorithm>
#include <cmath>
#include <set>

WSR_NS_BEGIN

namespace {

template <typename Seq>
int levenshtein(const Seq& a, const Seq& b) {
  const std::size_t n = a.size(), m = b.size();
  std::vector<int> row(m + 1);
  for (std::size_t j = 0; j <= m; ++j) row[j] = static_cast<int>(j);
  for (std::size_t i = 1; i <= n; ++i) {
    int diag = row[0];
    row[0] = static_cast<int>(i);
    for (std::size_t j = 1; j <= m; ++j) {
      const int up = row[j];
      row[j] = std::min({row[j] + 1, row[j - 1] + 1, diag + (a[i - 1] == b[j - 1] ? 0 : 1)});
      diag = up;
    }
  }
  return row[m];
}

}  // namespace

int edit_distance(std::string_view a, std::string_view b) { return levenshtein(a, b); }
int edit_distance(std::span<const int> a, std::span<const int> b) { return levenshtein(a, b); }

double cer(const std::vector<RecognitionPair>& pairs) {
  WSR_REQUIRE(!pairs.empty(), "CER needs at least one pair");
  long long edits = 0, chars = 0;
  for (const auto& p : pairs) {
    WSR_REQUIRE(!p.reference.empty(), "reference transcripts must be non-empty");
    edits += edit_distance(p.hypothesis, p.reference);
    chars += static_cast<long long>(p.reference.size());
  }
  return 100.0 * static_cast<double>(edits) / static_cast<double>(chars);
}

double wer(const std::vector<RecognitionPair>& pairs) {
  WSR_REQUIRE(!pairs.empty(), "WER needs at least one pair");
  std::size_t wrong = 0;
  for (const auto& p : pairs) wrong += p.hypothesis == p.reference ? 0 : 1;
  return 100.0 * static_cast<double>(wrong) / static_cast<double>(pairs.size());
}

double average_precision(const std::vector<bool>& ranked_relevance, std::size_t total_relevant) {
  if (total_relevant == 0) return 0.0;
  double acc = 0;
  std::size_t hits = 0;
  for (std::size_t k = 0; k < ranked_relevance.size(); ++k) {
    if (!ranked_relevance[k]) continue;
    ++hits;
    acc += static_cast<double>(hits) / static_cast<double>(k + 1);
  }
  return acc / static_cast<double>(total_relevant);
}

double mean_ap(const std::vector<ApQuery>& queries) {
  double acc = 0;
  std::size_t judged = 0;
  for (const auto& q : queries) {
    if (q.total_relevant == 0) continue;
    acc += average_precision(q.ranked_relevance, q.total_relevant);
    ++judged;
  }
  return judged == 0 ? 0.0 : acc / static_cast<double>(judged);
}

namespace {

/// Bucket of every pair by its reference distance, divided by the largest one.
std::vector<int> reference_buckets(std::span<const double> reference, int bins) {
  double top = 0;
  for (double v : reference) top = std::max(top, v);
  std::vector<int> out;
  out.reserve(reference.size());
  for (double v : reference) out.push_back(top > 0 ? std::min(bins - 1, static_cast<int>(v / top * bins)) : 0);
  return out;
}

/// Distance mass per bucket, smoothed and normalized to a distribution.
std::vector<double> bucket_mass(std::span<const double> values, const std::vector<int>& buckets, const KlOptions& o) {
  std::vector<double> h(static_cast<std::size_t>(o.bins), 0.0);
  double sum = 0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    h[static_cast<std::size_t>(buckets[i])] += values[i];
    sum += values[i];
  }
  double total = 0;
  for (auto& x : h) {
    x = (sum > 0 ? x / sum : 0.0) + o.epsilon;
    total += x;
  }
  for (auto& x : h) x /= total;
  return h;
}

}  // namespace

double kl_from_distances(std::span<const double> reference, std::span<const double> candidate,
                         const KlOptions& options) {
  WSR_REQUIRE(options.bins >= 1 && options.epsilon > 0, "KL needs >= 1 bin and a positive epsilon");
  WSR_REQUIRE(!reference.empty() && reference.size() == candidate.size(), "KL needs paired, non-empty distances");
  for (std::size_t i = 0; i < reference.size(); ++i)
    WSR_REQUIRE(std::isfinite(reference[i]) && reference[i] >= 0 && std::isfinite(candidate[i]) && candidate[i] >= 0,
                "distances must be finite and non-negative");
  const auto buckets = reference_buckets(reference, options.bins);
  const auto p = bucket_mass(reference, buckets, options);
  const auto q = bucket_mass(candidate, buckets, options);
  double kl = 0;
  for (std::size_t i = 0; i < p.size(); ++i) kl += p[i] * std::log(p[i] / q[i]);
  return std::max(0.0, kl);
}

double kl_statistic(std::span<const float> descriptors, int dim, const std::vector<std::string>& transcripts,
                    const KlOptions& options) {
  const std::size_t n = transcripts.size();
  WSR_REQUIRE(dim >= 1 && descriptors.size() == n * static_cast<std::size_t>(dim),
              "kl_statistic: one descriptor row per transcript");
  WSR_REQUIRE(std::set<std::string>(transcripts.begin(), transcripts.end()).size() >= 2,
              "kl_statistic needs at least two distinct transcripts");
  std::vector<double> norms(n);
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0;
    for (int k = 0; k < dim; ++k) s += static_cast<double>(descriptors[i * dim + k]) * descriptors[i * dim + k];
    norms[i] = std::sqrt(s);
  }
  std::vector<double> ref, cand;
  ref.reserve(n * (n - 1) / 2);
  cand.reserve(n * (n - 1) / 2);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const auto longest = std::max(transcripts[i].size(), transcripts[j].size());
      ref.push_back(longest == 0 ? 0.0
                                 : static_cast<double>(edit_distance(transcripts[i], transcripts[j])) / longest);
      double dot = 0;
      for (int k = 0; k < dim; ++k) dot += static_cast<double>(descriptors[i * dim + k]) * descriptors[j * dim + k];
      const double denom = norms[i] * norms[j];
      cand.push_back(denom > 0 ? std::clamp(1.0 - dot / denom, 0.0, 2.0) : 1.0);
    }
  }
  return kl_from_distances(ref, cand, options);
}

WSR_NS_END
