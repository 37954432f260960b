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
#include <optional>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "binarize.hpp"
#include "eval.hpp"
#include "model.hpp"

WSR_NS_BEGIN

struct IndexRecord {
  std::uint32_t id = 0;
  std::string transcript;
  std::vector<float> descriptor;  ///< 512 values when the index has float descriptors
  BinaryDescriptor bits{};        ///< valid when the index has binary descriptors

  bool operator==(const IndexRecord&) const = default;
};

/// Persisted descriptor collection for spotting.
struct SpotIndex {
  static constexpr std::uint8_t kFloatFlag = 1;
  static constexpr std::uint8_t kBinaryFlag = 2;
  static constexpr std::size_t kHeaderBytes = 4 + 2 + 1 + 4 + 4;

  std::uint32_t fingerprint = 0;
  bool has_float = true;
  bool has_binary = true;
  std::vector<IndexRecord> records;

  bool operator==(const SpotIndex&) const = default;

  /// Closed-form size of the saved file.
  std::uint64_t file_size() const;
};

/// One record per sample (ids 0..N-1): eval-mode x_enc and its sign bits.
SpotIndex build_index(const WsrNet& model, const std::vector<WordSample>& samples, bool with_float = true,
                      bool with_binary = true);

std::string serialize_index(const SpotIndex& index);
SpotIndex deserialize_index(const std::string& bytes);
void save_index(const SpotIndex& index, const std::string& path);
SpotIndex load_index(const std::string& path);

enum class Backend { Float, Binary };

/// Candidates sorted by ascending score, ties by ascending id.
struct Ranking {
  std::string query_id;
  std::vector<std::pair<std::uint32_t, double>> entries;
};

/// Cosine distance to a float query descriptor.
Ranking rank_float(const SpotIndex& index, std::span<const float> query, std::optional<std::uint32_t> exclude = {});
/// 1 - binary cosine to a packed query.
Ranking rank_binary(const SpotIndex& index, const BinaryDescriptor& query, std::optional<std::uint32_t> exclude = {});

/// Query by an indexed record.
Ranking qbe(const SpotIndex& index, std::uint32_t query_id, Backend backend, bool exclude_self);
/// Query by a new image.
Ranking qbe_image(const WsrNet& model, const SpotIndex& index, const Image& image, Backend backend);
/// Query by string through the character encoder.
Ranking qbs_embed(const WsrNet& model, const SpotIndex& index, const std::string& query, Backend backend);
/// Query by string through forced alignment, one ranking per query. Uses the
/// float descriptors, or the unpacked sign bits with Backend::Binary.
std::vector<Ranking> qbs_fa(const WsrNet& model, const SpotIndex& index, const std::vector<std::string>& queries,
                            Backend backend);

/// `query_id\trank\tcandidate_id\tscore` lines, ranks from 1.
void write_rankings(std::ostream& out, const std::vector<Ranking>& rankings);

/// Query protocol: QbE queries are records whose transcript occurs at least
/// twice (self excluded); QbS queries are the distinct transcripts; relevance
/// is exact transcript equality.
std::vector<std::uint32_t> qbe_query_ids(const SpotIndex& index);
std::vector<std::string> qbs_queries(const SpotIndex& index);
ApQuery judge(const SpotIndex& index, const Ranking& ranking, const std::string& transcript);

struct KwsReport {
  double map = 0;
  std::size_t queries = 0;
};
KwsReport evaluate_qbe(const SpotIndex& index, Backend backend);
KwsReport evaluate_qbs_embed(const WsrNet& model, const SpotIndex& index, Backend backend);
KwsReport evaluate_qbs_fa(const WsrNet& model, const SpotIndex& index, Backend backend);

WSR_NS_END
