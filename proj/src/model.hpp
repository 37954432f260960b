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

#include <map>
#include <memory>
#include <string>
#include <vector>

#include "backbone.hpp"
#include "charenc.hpp"
#include "config.hpp"
#include "ctc.hpp"
#include "data.hpp"
#include "seq2seq.hpp"

WSR_NS_BEGIN

enum class Branch { Ctc, Seq2Seq };
enum class Decoding { Greedy, Beam };

/// The full network: shared backbone, CTC head, Seq2Seq encoder/decoder and
/// the character encoder of the autoencoder path. Architecture and run
/// settings come from the RunConfig.
class WsrNet {
 public:
  explicit WsrNet(const RunConfig& config);
  WsrNet(const WsrNet&) = delete;
  WsrNet& operator=(const WsrNet&) = delete;

  const RunConfig& config() const { return config_; }
  /// Only run-time keys (schedule, loss weights, flags) may change after
  /// construction; architecture keys are fixed.
  void set_run_key(const std::string& key, const std::string& value);

  const Charset& charset() const { return charset_; }
  ParamStore& store() { return store_; }
  const ParamStore& store() const { return store_; }
  const Backbone& backbone() const { return *backbone_; }
  const CtcHead& ctc() const { return *ctc_; }
  const Encoder& encoder() const { return *encoder_; }
  Decoder& decoder() { return *decoder_; }
  const Decoder& decoder() const { return *decoder_; }
  const CharEncoder& charenc() const { return *charenc_; }

  int input_height() const { return input_h_; }
  int input_width() const { return input_w_; }

  /// Free-form metadata saved with checkpoints (regime, epoch, ...).
  std::map<std::string, std::string>& metadata() { return metadata_; }
  const std::map<std::string, std::string>& metadata() const { return metadata_; }

  /// Preprocessed [N x 1 x H x W] batch.
  Tensor image_batch(const std::vector<const Image*>& images) const;

  /// Eval-mode x_enc for every image, row-major [N x 512].
  std::vector<float> descriptors(const std::vector<const Image*>& images) const;
  /// Character encoder descriptors for words in the model's charset.
  std::vector<float> char_descriptors(const std::vector<std::string>& words) const;

  /// Transcripts through the selected branch. With `sign_descriptors` the
  /// Seq2Seq branch decodes sign(x_enc); binarized models always do.
  std::vector<std::string> recognize(const std::vector<const Image*>& images, Branch branch, Decoding decoding,
                                     int beam_width, bool sign_descriptors = false) const;
  /// Greedy Seq2Seq decoding of given descriptors [N x 512].
  std::vector<std::string> decode_descriptors(std::span<const float> descriptors, bool sign) const;

  void save(const std::string& path) const;
  std::string serialize() const;
  static std::unique_ptr<WsrNet> load(const std::string& path);
  static std::unique_ptr<WsrNet> deserialize(const std::string& bytes);
  /// Copies matching tensors from a checkpoint. Character-encoder tensors may
  /// be absent when `allow_missing_charenc` is set; anything else missing or
  /// mismatched throws DataError.
  void load_weights(const std::string& path, bool allow_missing_charenc);

  /// Copies of every parameter and buffer value, for snapshots.
  std::vector<std::vector<Real>> snapshot() const;
  void restore(const std::vector<std::vector<Real>>& values);

 private:
  void load_tensors(const std::string& bytes, bool allow_missing_charenc, RunConfig* config_out,
                    std::map<std::string, std::string>* meta_out);

  RunConfig config_;
  Charset charset_;
  int input_h_;
  int input_w_;
  ParamStore store_;
  std::unique_ptr<Backbone> backbone_;
  std::unique_ptr<CtcHead> ctc_;
  std::unique_ptr<Encoder> encoder_;
  std::unique_ptr<Decoder> decoder_;
  std::unique_ptr<CharEncoder> charenc_;
  std::map<std::string, std::string> metadata_;
};

/// Architecture-defining keys; a checkpoint fixes them.
bool is_architecture_key(const std::string& key);

WSR_NS_END
