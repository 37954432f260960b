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
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "common.hpp"

WSR_NS_BEGIN

/// Levenshtein distance with unit costs.
int edit_distance(std::string_view a, std::string_view b);
int edit_distance(std::span<const int> a, std::span<const int> b);

struct RecognitionPair {
  std::string hypothesis;
  std::string reference;
};

/// 100 * total edits / total reference characters.
double cer(const std::vector<RecognitionPair>& pairs);
/// 100 * inexact transcripts / pairs.
double wer(const std::vector<RecognitionPair>& pairs);

/// AP of one ranked relevance list: mean precision@k over relevant ranks k,
/// divided by `total_relevant` (relevant items missing from the list count
/// as zero precision). Returns 0 when nothing is relevant.
double average_precision(const std::vector<bool>& ranked_relevance, std::size_t total_relevant);

/// Mean of per-query AP over queries with at least one relevant candidate.
struct ApQuery {
  std::vector<bool> ranked_relevance;
  std::size_t total_relevant = 0;
};
double mean_ap(const std::vector<ApQuery>& queries);

struct KlOptions {
  int bins = 20;
  double epsilon = 1e-9;
};

/// KL(P || Q) over buckets of the reference distance (divided by its maximum).
/// P holds the reference distance mass per bucket and Q the candidate distance
/// mass of the same pairs, so Q equals P whenever the candidate is a positive
/// multiple of the reference. Both are smoothed with epsilon and renormalized.
double kl_from_distances(std::span<const double> reference, std::span<const double> candidate,
                         const KlOptions& options = {});

/// All unordered pairs of words: reference = edit distance normalized by the
/// longer transcript, candidate = cosine distance of the descriptors
/// (rows of `descriptors`, `dim` values each).
double kl_statistic(std::span<const float> descriptors, int dim, const std::vector<std::string>& transcripts,
                    const KlOptions& options = {});

WSR_NS_END
