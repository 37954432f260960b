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

#include "spotting.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "bytes.hpp"

WSR_NS_BEGIN

namespace {

constexpr char kMagic[4] = {'W', 'S', 'R', 'I'};
constexpr std::uint16_t kVersion = 1;

void sort_ranking(Ranking& r) {
  std::sort(r.entries.begin(), r.entries.end(), [](const auto& a, const auto& b) {
    return a.second != b.second ? a.second < b.second : a.first < b.first;
  });
}

void require_charset(const WsrNet& model, const SpotIndex& index) {
  if (model.charset().fingerprint() != index.fingerprint)
    throw DataError("index charset fingerprint does not match the model");
}

}  // namespace

std::uint64_t SpotIndex::file_size() const {
  std::uint64_t n = kHeaderBytes;
  const std::uint64_t per = 4 + 2 + (has_float ? 4 * kDescriptorDim : 0) + (has_binary ? kBinaryBytes : 0);
  for (const auto& r : records) n += per + r.transcript.size();
  return n;
}

SpotIndex build_index(const WsrNet& model, const std::vector<WordSample>& samples, bool with_float,
                      bool with_binary) {
  WSR_REQUIRE(with_float || with_binary, "an index needs at least one descriptor form");
  for (const auto& s : samples) model.charset().encode(s.transcript);
  SpotIndex index;
  index.fingerprint = model.charset().fingerprint();
  index.has_float = with_float;
  index.has_binary = with_binary;
  std::vector<const Image*> images;
  for (const auto& s : samples) images.push_back(&s.image);
  const auto desc = model.descriptors(images);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    IndexRecord r;
    r.id = static_cast<std::uint32_t>(i);
    r.transcript = samples[i].transcript;
    std::span<const float> row(desc.data() + i * kDescriptorDim, kDescriptorDim);
    if (with_float) r.descriptor.assign(row.begin(), row.end());
    if (with_binary) r.bits = pack_bits_f32(row);
    index.records.push_back(std::move(r));
  }
  return index;
}

std::string serialize_index(const SpotIndex& index) {
  WSR_REQUIRE(index.has_float || index.has_binary, "an index needs at least one descriptor form");
  ByteWriter w;
  w.raw(kMagic, 4);
  w.u16(kVersion);
  w.u8(static_cast<std::uint8_t>((index.has_float ? SpotIndex::kFloatFlag : 0) |
                                 (index.has_binary ? SpotIndex::kBinaryFlag : 0)));
  w.u32(static_cast<std::uint32_t>(index.records.size()));
  w.u32(index.fingerprint);
  for (const auto& r : index.records) {
    WSR_REQUIRE(r.transcript.size() <= 0xFFFF, "transcript too long for the index format");
    w.u32(r.id);
    w.u16(static_cast<std::uint16_t>(r.transcript.size()));
    w.raw(r.transcript);
    if (index.has_float) {
      WSR_REQUIRE(r.descriptor.size() == static_cast<std::size_t>(kDescriptorDim), "record lacks a float descriptor");
      for (float v : r.descriptor) w.f32(v);
    }
    if (index.has_binary) w.raw(r.bits.data(), r.bits.size());
  }
  return w.take();
}

SpotIndex deserialize_index(const std::string& bytes) {
  if (bytes.size() < 4 || bytes.compare(0, 4, kMagic, 4) != 0) throw DataError("not an index file (bad magic)");
  ByteReader r(bytes, "index");
  r.raw(4);
  const auto version = r.u16();
  if (version != kVersion) throw DataError("unsupported index version " + std::to_string(version));
  const auto flags = r.u8();
  if ((flags & ~3u) != 0 || flags == 0) throw DataError("index: invalid flags " + std::to_string(flags));
  SpotIndex index;
  index.has_float = (flags & SpotIndex::kFloatFlag) != 0;
  index.has_binary = (flags & SpotIndex::kBinaryFlag) != 0;
  const auto count = r.u32();
  index.fingerprint = r.u32();
  for (std::uint32_t i = 0; i < count; ++i) {
    IndexRecord rec;
    rec.id = r.u32();
    if (rec.id != i) throw DataError("index: record ids must be dense from 0");
    rec.transcript = std::string(r.raw(r.u16()));
    if (index.has_float) {
      rec.descriptor.resize(kDescriptorDim);
      for (auto& v : rec.descriptor) v = r.f32();
    }
    if (index.has_binary) {
      const auto b = r.raw(kBinaryBytes);
      std::copy(b.begin(), b.end(), rec.bits.begin());
    }
    index.records.push_back(std::move(rec));
  }
  if (!r.at_end()) throw DataError("index: trailing bytes");
  return index;
}

void save_index(const SpotIndex& index, const std::string& path) { write_file_bytes(path, serialize_index(index)); }

SpotIndex load_index(const std::string& path) { return deserialize_index(read_file_bytes(path)); }

Ranking rank_float(const SpotIndex& index, std::span<const float> query, std::optional<std::uint32_t> exclude) {
  if (!index.has_float) throw DataError("index has no float descriptors (build with the float flag)");
  WSR_REQUIRE(query.size() == static_cast<std::size_t>(kDescriptorDim), "query descriptor must have 512 values");
  double qn = 0;
  for (float v : query) qn += static_cast<double>(v) * v;
  qn = std::sqrt(qn);
  Ranking out;
  for (const auto& rec : index.records) {
    if (exclude && rec.id == *exclude) continue;
    double dot = 0, rn = 0;
    for (int k = 0; k < kDescriptorDim; ++k) {
      dot += static_cast<double>(query[k]) * rec.descriptor[k];
      rn += static_cast<double>(rec.descriptor[k]) * rec.descriptor[k];
    }
    const double denom = qn * std::sqrt(rn);
    out.entries.emplace_back(rec.id, denom > 0 ? 1.0 - dot / denom : 1.0);
  }
  sort_ranking(out);
  return out;
}

Ranking rank_binary(const SpotIndex& index, const BinaryDescriptor& query, std::optional<std::uint32_t> exclude) {
  if (!index.has_binary) throw DataError("index has no binary descriptors (build with the binary flag)");
  Ranking out;
  for (const auto& rec : index.records) {
    if (exclude && rec.id == *exclude) continue;
    out.entries.emplace_back(rec.id, 1.0 - binary_cosine(query, rec.bits));
  }
  sort_ranking(out);
  return out;
}

Ranking qbe(const SpotIndex& index, std::uint32_t query_id, Backend backend, bool exclude_self) {
  if (query_id >= index.records.size()) throw DataError("query id " + std::to_string(query_id) + " not in index");
  const auto& rec = index.records[query_id];
  const std::optional<std::uint32_t> exclude = exclude_self ? std::optional(query_id) : std::nullopt;
  Ranking r = backend == Backend::Float ? rank_float(index, rec.descriptor, exclude) : rank_binary(index, rec.bits, exclude);
  r.query_id = std::to_string(query_id);
  return r;
}

Ranking qbe_image(const WsrNet& model, const SpotIndex& index, const Image& image, Backend backend) {
  require_charset(model, index);
  const auto d = model.descriptors({&image});
  Ranking r = backend == Backend::Float ? rank_float(index, d) : rank_binary(index, pack_bits_f32(d));
  r.query_id = "image";
  return r;
}

Ranking qbs_embed(const WsrNet& model, const SpotIndex& index, const std::string& query, Backend backend) {
  require_charset(model, index);
  if (query.empty()) throw DataError("empty query string");
  const auto d = model.char_descriptors({query});
  Ranking r = backend == Backend::Float ? rank_float(index, d) : rank_binary(index, pack_bits_f32(d));
  r.query_id = query;
  return r;
}

std::vector<Ranking> qbs_fa(const WsrNet& model, const SpotIndex& index, const std::vector<std::string>& queries,
                            Backend backend) {
  require_charset(model, index);
  if (queries.empty()) return {};
  if (backend == Backend::Float && !index.has_float) throw DataError("index has no float descriptors (build with the float flag)");
  if (backend == Backend::Binary && !index.has_binary) throw DataError("index has no binary descriptors (build with the binary flag)");
  std::vector<std::vector<int>> encoded;
  for (const auto& q : queries) {
    if (q.empty()) throw DataError("empty query string");
    encoded.push_back(model.charset().encode(q));
  }
  std::vector<Ranking> out(queries.size());
  for (std::size_t q = 0; q < queries.size(); ++q) out[q].query_id = queries[q];
  if (index.records.empty()) return out;

  const QueryTrie trie(encoded);
  const int n = static_cast<int>(index.records.size());
  Tensor x(Shape{n, kDescriptorDim});
  for (int i = 0; i < n; ++i) {
    const auto& rec = index.records[static_cast<std::size_t>(i)];
    Real* row = x.data().data() + static_cast<std::size_t>(i) * kDescriptorDim;
    if (backend == Backend::Float) {
      std::copy(rec.descriptor.begin(), rec.descriptor.end(), row);
    } else {
      const auto v = unpack_bits(rec.bits);
      std::copy(v.begin(), v.end(), row);
    }
  }
  NoGradScope no_grad;
  const auto scores = trie_forced_align(model.decoder(), x, trie);
  for (int i = 0; i < n; ++i)
    for (std::size_t q = 0; q < queries.size(); ++q)
      out[q].entries.emplace_back(index.records[static_cast<std::size_t>(i)].id, scores[static_cast<std::size_t>(i)][q]);
  for (auto& r : out) sort_ranking(r);
  return out;
}

void write_rankings(std::ostream& out, const std::vector<Ranking>& rankings) {
  char buf[64];
  for (const auto& r : rankings) {
    std::size_t rank = 1;
    for (const auto& [id, score] : r.entries) {
      std::snprintf(buf, sizeof buf, "%.9g", score);
      out << r.query_id << '\t' << rank++ << '\t' << id << '\t' << buf << '\n';
    }
  }
}

std::vector<std::uint32_t> qbe_query_ids(const SpotIndex& index) {
  std::map<std::string, int> counts;
  for (const auto& r : index.records) ++counts[r.transcript];
  std::vector<std::uint32_t> ids;
  for (const auto& r : index.records)
    if (counts[r.transcript] >= 2) ids.push_back(r.id);
  return ids;
}

std::vector<std::string> qbs_queries(const SpotIndex& index) {
  std::vector<std::string> out;
  for (const auto& r : index.records)
    if (std::find(out.begin(), out.end(), r.transcript) == out.end()) out.push_back(r.transcript);
  return out;
}

ApQuery judge(const SpotIndex& index, const Ranking& ranking, const std::string& transcript) {
  ApQuery q;
  for (const auto& [id, score] : ranking.entries) {
    const bool rel = index.records.at(id).transcript == transcript;
    q.ranked_relevance.push_back(rel);
    q.total_relevant += rel ? 1 : 0;
  }
  return q;
}

KwsReport evaluate_qbe(const SpotIndex& index, Backend backend) {
  std::vector<ApQuery> judged;
  for (std::uint32_t id : qbe_query_ids(index))
    judged.push_back(judge(index, qbe(index, id, backend, true), index.records[id].transcript));
  return {mean_ap(judged), judged.size()};
}

KwsReport evaluate_qbs_embed(const WsrNet& model, const SpotIndex& index, Backend backend) {
  std::vector<ApQuery> judged;
  for (const auto& q : qbs_queries(index)) judged.push_back(judge(index, qbs_embed(model, index, q, backend), q));
  return {mean_ap(judged), judged.size()};
}

KwsReport evaluate_qbs_fa(const WsrNet& model, const SpotIndex& index, Backend backend) {
  const auto queries = qbs_queries(index);
  const auto rankings = qbs_fa(model, index, queries, backend);
  std::vector<ApQuery> judged;
  for (std::size_t q = 0; q < queries.size(); ++q) judged.push_back(judge(index, rankings[q], queries[q]));
  return {mean_ap(judged), judged.size()};
}

WSR_NS_END
