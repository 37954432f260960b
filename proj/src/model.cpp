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

#include "model.hpp"

#include <algorithm>
#include <set>
#include <sstream>

#include "binarize.hpp"
#include "bytes.hpp"

WSR_NS_BEGIN

namespace {

constexpr char kMagic[4] = {'W', 'S', 'R', 'N'};
constexpr std::uint16_t kVersion = 1;
constexpr std::uint64_t kInitStream = 0x9E3779B97F4A7C15ull;

const std::set<std::string>& architecture_keys() {
  static const std::set<std::string> keys = {"charset",        "input_height",   "input_width",   "backbone_scale",
                                             "ctc_kernel",     "encoder_hidden", "encoder_layers", "decoder_embed",
                                             "charenc_embed", "charenc_hidden"};
  return keys;
}

int checked_int(const RunConfig& c, const char* key, int lo) {
  const auto v = c.get_int(key);
  WSR_REQUIRE(v >= lo && v <= (1 << 20), std::string("config key ") + key + " out of range");
  return static_cast<int>(v);
}

struct CheckpointData {
  RunConfig config;
  std::map<std::string, std::string> meta;
  CharsetMode mode = CharsetMode::Kws;
  std::string symbols;
  struct Named {
    std::string name;
    Shape shape;
    std::vector<float> values;
  };
  std::vector<Named> tensors;
};

CheckpointData parse_checkpoint(const std::string& bytes) {
  ByteReader r(bytes, "checkpoint");
  if (bytes.size() < 4 || bytes.compare(0, 4, kMagic, 4) != 0) throw DataError("not a checkpoint file (bad magic)");
  r.raw(4);
  const auto version = r.u16();
  if (version != kVersion) throw DataError("unsupported checkpoint version " + std::to_string(version));
  CheckpointData d;
  const std::string text(r.raw(r.u32()));
  std::istringstream lines(text);
  std::string line, config_text;
  while (std::getline(lines, line)) {
    if (line.rfind("meta.", 0) == 0) {
      const auto eq = line.find(" = ");
      if (eq == std::string::npos) throw DataError("checkpoint: malformed metadata line");
      d.meta[line.substr(5, eq - 5)] = line.substr(eq + 3);
    } else {
      config_text += line + "\n";
    }
  }
  try {
    d.config = RunConfig::parse(config_text);
  } catch (const ContractViolation& e) {
    throw DataError(std::string("checkpoint config: ") + e.what());
  }
  d.mode = r.u8() == 0 ? CharsetMode::Kws : CharsetMode::Full;
  d.symbols = std::string(r.raw(r.u32()));
  const auto count = r.u32();
  for (std::uint32_t i = 0; i < count; ++i) {
    CheckpointData::Named t;
    t.name = std::string(r.raw(r.u16()));
    if (r.u8() != 0) throw DataError("checkpoint tensor " + t.name + ": unsupported dtype");
    const int rank = r.u8();
    std::size_t n = 1;
    for (int k = 0; k < rank; ++k) {
      t.shape.push_back(static_cast<int>(r.u32()));
      n *= static_cast<std::size_t>(t.shape.back());
    }
    if (r.remaining() < 4 * n) throw DataError("checkpoint: truncated file");
    t.values.resize(n);
    for (auto& v : t.values) v = r.f32();
    d.tensors.push_back(std::move(t));
  }
  if (!r.at_end()) throw DataError("checkpoint: trailing bytes");
  return d;
}

}  // namespace

bool is_architecture_key(const std::string& key) { return architecture_keys().contains(key); }

WsrNet::WsrNet(const RunConfig& config)
    : config_(config),
      charset_(parse_charset_mode(config.get("charset"))),
      input_h_(checked_int(config, "input_height", 8)),
      input_w_(checked_int(config, "input_width", 8)) {
  Rng init_rng(static_cast<std::uint64_t>(config.get_int("seed")) * kInitStream + 1);
  BackboneConfig bc;
  bc.scale = checked_int(config, "backbone_scale", 1);
  bc.dropout = config.get_real("dropout");
  bc.bn_momentum = config.get_real("bn_momentum");
  WSR_REQUIRE(bc.dropout >= 0 && bc.dropout < 1, "dropout must be in [0, 1)");
  backbone_ = std::make_unique<Backbone>(bc, store_, init_rng);
  const int classes = charset_.num_classes();
  ctc_ = std::make_unique<CtcHead>(backbone_->output_depth(), classes, checked_int(config, "ctc_kernel", 1),
                                   bc.dropout, bc.bn_momentum, store_, init_rng);
  EncoderConfig ec{checked_int(config, "encoder_hidden", 1), checked_int(config, "encoder_layers", 1)};
  encoder_ = std::make_unique<Encoder>(backbone_->output_depth(), ec, store_, init_rng);
  DecoderConfig dc{checked_int(config, "decoder_embed", 1), checked_int(config, "max_len", 1)};
  decoder_ = std::make_unique<Decoder>(classes, dc, store_, init_rng);
  CharEncoderConfig cc{checked_int(config, "charenc_embed", 1), checked_int(config, "charenc_hidden", 1)};
  charenc_ = std::make_unique<CharEncoder>(classes, cc, store_, init_rng);
}

void WsrNet::set_run_key(const std::string& key, const std::string& value) {
  RunConfig probe = config_;
  probe.set(key, value);
  WSR_REQUIRE(!is_architecture_key(key) || probe.get(key) == config_.get(key),
              "config key " + key + " is fixed by the checkpoint");
  config_ = probe;
}

Tensor WsrNet::image_batch(const std::vector<const Image*>& images) const {
  const int n = static_cast<int>(images.size());
  Tensor out(Shape{n, 1, input_h_, input_w_});
  const std::size_t plane = static_cast<std::size_t>(input_h_) * input_w_;
  for (int i = 0; i < n; ++i) {
    const Image p = (images[i]->height == input_h_ && images[i]->width == input_w_)
                        ? *images[i]
                        : preprocess(*images[i], input_h_, input_w_);
    std::copy(p.pixels.begin(), p.pixels.end(), out.data().begin() + static_cast<std::ptrdiff_t>(i * plane));
  }
  return out;
}

std::vector<float> WsrNet::descriptors(const std::vector<const Image*>& images) const {
  NoGradScope no_grad;
  Rng unused(0);
  constexpr std::size_t kBatch = 64;
  std::vector<float> out;
  out.reserve(images.size() * kDescriptorDim);
  for (std::size_t start = 0; start < images.size(); start += kBatch) {
    const std::vector<const Image*> chunk(images.begin() + static_cast<std::ptrdiff_t>(start),
                                          images.begin() + static_cast<std::ptrdiff_t>(std::min(images.size(), start + kBatch)));
    Tensor x = encoder_->forward(backbone_->forward(image_batch(chunk), false, unused));
    out.insert(out.end(), x.data().begin(), x.data().end());
  }
  return out;
}

std::vector<float> WsrNet::char_descriptors(const std::vector<std::string>& words) const {
  NoGradScope no_grad;
  std::vector<std::vector<int>> encoded;
  for (const auto& w : words) {
    if (w.empty()) throw DataError("empty query string");
    encoded.push_back(charset_.encode(w));
  }
  Tensor x = charenc_->forward(encoded);
  return {x.data().begin(), x.data().end()};
}

std::vector<std::string> WsrNet::decode_descriptors(std::span<const float> descriptors, bool sign) const {
  NoGradScope no_grad;
  WSR_REQUIRE(descriptors.size() % kDescriptorDim == 0, "descriptor buffer is not a multiple of 512");
  const int n = static_cast<int>(descriptors.size() / kDescriptorDim);
  std::vector<std::string> out;
  if (n == 0) return out;
  Tensor x(Shape{n, kDescriptorDim});
  for (std::size_t i = 0; i < descriptors.size(); ++i) {
    const float v = descriptors[i];
    x.data()[i] = sign ? (v >= 0 ? Real(1) : Real(-1)) : static_cast<Real>(v);
  }
  for (const auto& r : decode_greedy_batch(*decoder_, x, decoder_->config().max_len)) out.push_back(charset_.decode(r.labels));
  return out;
}

std::vector<std::string> WsrNet::recognize(const std::vector<const Image*>& images, Branch branch, Decoding decoding,
                                           int beam_width, bool sign_descriptors) const {
  WSR_REQUIRE(beam_width >= 1, "beam width must be >= 1");
  NoGradScope no_grad;
  Rng unused(0);
  const bool sign = sign_descriptors || config_.get_bool("binarize");
  std::vector<std::string> out;
  constexpr std::size_t kBatch = 64;
  for (std::size_t start = 0; start < images.size(); start += kBatch) {
    const std::vector<const Image*> chunk(images.begin() + static_cast<std::ptrdiff_t>(start),
                                          images.begin() + static_cast<std::ptrdiff_t>(std::min(images.size(), start + kBatch)));
    Tensor feats = backbone_->forward(image_batch(chunk), false, unused);
    if (branch == Branch::Ctc) {
      Tensor lp = ctc_->forward(feats, false, unused);
      for (int i = 0; i < lp.dim(0); ++i) {
        const FrameLogProbs f = frame_log_probs(lp, i);
        out.push_back(decoding == Decoding::Greedy ? greedy_decode(f, charset_)
                                                   : prefix_beam_decode(f, beam_width, charset_));
      }
      continue;
    }
    Tensor x = encoder_->forward(feats);
    if (sign)
      for (auto& v : x.data()) v = v >= 0 ? Real(1) : Real(-1);
    const int max_len = decoder_->config().max_len;
    if (decoding == Decoding::Greedy) {
      for (const auto& r : decode_greedy_batch(*decoder_, x, max_len)) out.push_back(charset_.decode(r.labels));
    } else {
      for (int i = 0; i < x.dim(0); ++i) {
        Tensor row(Shape{1, kDescriptorDim},
                   std::vector<Real>(x.data().begin() + static_cast<std::ptrdiff_t>(i) * kDescriptorDim,
                                     x.data().begin() + static_cast<std::ptrdiff_t>(i + 1) * kDescriptorDim));
        out.push_back(charset_.decode(decode_beam(*decoder_, row, beam_width, max_len).labels));
      }
    }
  }
  return out;
}

std::string WsrNet::serialize() const {
  ByteWriter w;
  w.raw(kMagic, 4);
  w.u16(kVersion);
  std::string text = config_.echo();
  for (const auto& [k, v] : metadata_) {
    WSR_REQUIRE(k.find_first_of("\n=") == std::string::npos && v.find('\n') == std::string::npos,
                "metadata must be single-line key = value");
    text += "meta." + k + " = " + v + "\n";
  }
  w.u32(static_cast<std::uint32_t>(text.size()));
  w.raw(text);
  w.u8(charset_.mode() == CharsetMode::Kws ? 0 : 1);
  w.u32(static_cast<std::uint32_t>(charset_.symbols().size()));
  w.raw(charset_.symbols());
  const auto entries = store_.all();
  w.u32(static_cast<std::uint32_t>(entries.size()));
  for (const auto& e : entries) {
    w.u16(static_cast<std::uint16_t>(e.name.size()));
    w.raw(e.name);
    w.u8(0);
    w.u8(static_cast<std::uint8_t>(e.tensor.rank()));
    for (int d : e.tensor.shape()) w.u32(static_cast<std::uint32_t>(d));
    for (Real v : e.tensor.data()) w.f32(static_cast<float>(v));
  }
  return w.take();
}

void WsrNet::save(const std::string& path) const { write_file_bytes(path, serialize()); }

void WsrNet::load_tensors(const std::string& bytes, bool allow_missing_charenc, RunConfig* config_out,
                          std::map<std::string, std::string>* meta_out) {
  CheckpointData d = parse_checkpoint(bytes);
  if (d.mode != charset_.mode() || d.symbols != charset_.symbols())
    throw DataError("checkpoint charset does not match the model charset");
  for (const auto& key : architecture_keys())
    if (d.config.get(key) != config_.get(key))
      throw DataError("checkpoint architecture differs in " + key + ": " + d.config.get(key) + " vs " +
                      config_.get(key));
  std::map<std::string, const CheckpointData::Named*> by_name;
  for (const auto& t : d.tensors) by_name[t.name] = &t;
  std::set<std::string> used;
  for (const auto& e : store_.all()) {
    const auto it = by_name.find(e.name);
    if (it == by_name.end()) {
      if (allow_missing_charenc && e.group == ParamGroup::CharEncoder && e.name.rfind("charenc.", 0) == 0) continue;
      throw DataError("checkpoint is missing tensor " + e.name);
    }
    if (it->second->shape != e.tensor.shape())
      throw DataError("checkpoint tensor " + e.name + " has shape " + shape_str(it->second->shape) + ", expected " +
                      shape_str(e.tensor.shape()));
    Tensor t = e.tensor;
    std::copy(it->second->values.begin(), it->second->values.end(), t.data().begin());
    used.insert(e.name);
  }
  for (const auto& t : d.tensors)
    if (!used.contains(t.name)) throw DataError("checkpoint has unknown tensor " + t.name);
  if (config_out != nullptr) *config_out = d.config;
  if (meta_out != nullptr) *meta_out = d.meta;
}

std::unique_ptr<WsrNet> WsrNet::deserialize(const std::string& bytes) {
  CheckpointData d = parse_checkpoint(bytes);
  auto model = std::make_unique<WsrNet>(d.config);
  model->load_tensors(bytes, false, nullptr, &model->metadata_);
  return model;
}

std::unique_ptr<WsrNet> WsrNet::load(const std::string& path) { return deserialize(read_file_bytes(path)); }

void WsrNet::load_weights(const std::string& path, bool allow_missing_charenc) {
  std::map<std::string, std::string> meta;
  load_tensors(read_file_bytes(path), allow_missing_charenc, nullptr, &meta);
  for (const auto& [k, v] : meta) metadata_["base." + k] = v;
}

std::vector<std::vector<Real>> WsrNet::snapshot() const {
  std::vector<std::vector<Real>> out;
  for (const auto& e : store_.all()) out.emplace_back(e.tensor.data().begin(), e.tensor.data().end());
  return out;
}

void WsrNet::restore(const std::vector<std::vector<Real>>& values) {
  auto entries = store_.all();
  WSR_REQUIRE(values.size() == entries.size(), "snapshot does not match the model");
  for (std::size_t i = 0; i < entries.size(); ++i) {
    WSR_REQUIRE(values[i].size() == entries[i].tensor.numel(), "snapshot does not match the model");
    std::copy(values[i].begin(), values[i].end(), entries[i].tensor.data().begin());
  }
}

WSR_NS_END
