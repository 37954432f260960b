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

#include "config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>

WSR_NS_BEGIN

const std::vector<ConfigKey>& config_keys() {
  static const std::vector<ConfigKey> keys = {
      {"charset", KeyType::Choice, "kws", true, "token inventory: kws (a-z0-9) or full", {"kws", "full"}},
      {"input_height", KeyType::Int, "64", true, "network input height after padding", {}},
      {"input_width", KeyType::Int, "256", true, "network input width after padding", {}},
      {"backbone_scale", KeyType::Int, "4", false, "divides the backbone depths 64,64,128,128", {}},
      {"dropout", KeyType::Real, "0.2", false, "dropout probability", {}},
      {"bn_momentum", KeyType::Real, "0.1", false, "batch-norm running statistics momentum", {}},
      {"ctc_kernel", KeyType::Int, "7", true, "CTC head 1-d kernel size", {}},
      {"encoder_hidden", KeyType::Int, "256", true, "encoder GRU hidden size", {}},
      {"encoder_layers", KeyType::Int, "3", true, "bidirectional encoder layers", {}},
      {"decoder_embed", KeyType::Int, "128", false, "decoder character embedding size", {}},
      {"max_len", KeyType::Int, "32", false, "decoding step limit", {}},
      {"charenc_embed", KeyType::Int, "128", false, "character encoder embedding size", {}},
      {"charenc_hidden", KeyType::Int, "512", false, "character encoder GRU hidden size", {}},
      {"lambda", KeyType::Real, "10", true, "weight of the Seq2Seq loss", {}},
      {"lr", KeyType::Real, "0.01", true, "initial Adam learning rate", {}},
      {"lr_min", KeyType::Real, "0", false, "learning rate at the end of the cosine schedule", {}},
      {"epochs", KeyType::Int, "80", true, "training epochs", {}},
      {"batch_size", KeyType::Int, "32", false, "samples per batch", {}},
      {"teacher_forcing", KeyType::Real, "0.5", false, "per-step probability of feeding the true character", {}},
      {"grad_clip", KeyType::Real, "5", false, "global gradient norm limit, 0 disables", {}},
      {"augment", KeyType::Bool, "1", true, "random global affine augmentation", {}},
      {"aug_rotation", KeyType::Real, "5", false, "max rotation in degrees", {}},
      {"aug_shear", KeyType::Real, "0.3", false, "max horizontal shear", {}},
      {"aug_scale_min", KeyType::Real, "0.9", false, "min scale factor", {}},
      {"aug_scale_max", KeyType::Real, "1.1", false, "max scale factor", {}},
      {"aug_translate", KeyType::Real, "3", false, "max translation in pixels", {}},
      {"branches", KeyType::Choice, "joint", true, "trained branches: joint, ctc or s2s", {"joint", "ctc", "s2s"}},
      {"autoencoder", KeyType::Bool, "0", false, "train the character encoder with the mixed loss", {}},
      {"lm", KeyType::Bool, "0", false, "interleave corpus fine-tuning steps", {}},
      {"corpus", KeyType::Text, "", false, "word<TAB>count corpus file for lm", {}},
      {"lm_lr_factor", KeyType::Real, "0.1", false, "corpus step learning rate relative to the schedule", {}},
      {"lm_batch_size", KeyType::Int, "32", false, "corpus words per fine-tuning step", {}},
      {"binarize", KeyType::Bool, "0", false, "sign-binarize descriptors with the straight-through estimator", {}},
      {"ste_slope", KeyType::Real, "1", false, "tanh slope of the binarization backward pass", {}},
      {"beam_width", KeyType::Int, "5", true, "beam width for beam decoding", {}},
      {"kl_bins", KeyType::Int, "20", false, "histogram bins of the KL statistic", {}},
      {"seed", KeyType::Int, "0", false, "seed of the run generator", {}},
      {"regime", KeyType::Choice, "scratch", true, "scratch or fine_tune from a base checkpoint", {"scratch", "fine_tune"}},
  };
  return keys;
}

namespace {

const ConfigKey& key_info(const std::string& key) {
  for (const auto& k : config_keys())
    if (key == k.name) return k;
  contract_fail("unknown config key: " + key);
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

bool parse_int(const std::string& v, std::int64_t& out) {
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  return ec == std::errc() && p == v.data() + v.size();
}

bool parse_real(const std::string& v, double& out) {
  try {
    std::size_t used = 0;
    out = std::stod(v, &used);
    return used == v.size();
  } catch (const std::exception&) {
    return false;
  }
}

std::string canonical(const ConfigKey& k, const std::string& raw) {
  const std::string v = trim(raw);
  const std::string bad = "invalid value for " + std::string(k.name) + ": '" + v + "'";
  switch (k.type) {
    case KeyType::Int: {
      std::int64_t x;
      if (!parse_int(v, x)) contract_fail(bad);
      return std::to_string(x);
    }
    case KeyType::Real: {
      double x;
      if (!parse_real(v, x)) contract_fail(bad);
      return v;
    }
    case KeyType::Bool:
      if (v == "1" || v == "true" || v == "on" || v == "yes") return "1";
      if (v == "0" || v == "false" || v == "off" || v == "no") return "0";
      contract_fail(bad);
    case KeyType::Choice:
      if (std::find(k.choices.begin(), k.choices.end(), v) == k.choices.end()) contract_fail(bad);
      return v;
    case KeyType::Text:
      return v;
  }
  return v;
}

}  // namespace

RunConfig::RunConfig() {
  for (const auto& k : config_keys()) values_[k.name] = k.default_value;
}

RunConfig RunConfig::parse(const std::string& text) {
  RunConfig c;
  c.merge_text(text);
  return c;
}

RunConfig RunConfig::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open config file: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

void RunConfig::set(const std::string& key, const std::string& value) {
  const ConfigKey& k = key_info(key);
  values_[key] = canonical(k, value);
}

void RunConfig::merge_text(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) contract_fail("config line " + std::to_string(number) + ": expected key = value");
    set(trim(line.substr(0, eq)), line.substr(eq + 1));
  }
}

const std::string& RunConfig::get(const std::string& key) const {
  const auto it = values_.find(key);
  if (it == values_.end()) contract_fail("unknown config key: " + key);
  return it->second;
}

std::int64_t RunConfig::get_int(const std::string& key) const {
  std::int64_t x = 0;
  if (!parse_int(get(key), x)) contract_fail("config key " + key + " is not an integer");
  return x;
}

double RunConfig::get_real(const std::string& key) const {
  double x = 0;
  if (!parse_real(get(key), x)) contract_fail("config key " + key + " is not a number");
  return x;
}

bool RunConfig::get_bool(const std::string& key) const { return get(key) == "1"; }

std::string RunConfig::echo() const {
  std::string out;
  for (const auto& k : config_keys()) out += std::string(k.name) + " = " + values_.at(k.name) + "\n";
  return out;
}

std::string RunConfig::help_text() {
  std::string out = "Config keys (key = value; [published] marks values of the published method,\n"
                    "[default] marks values chosen by this implementation):\n";
  for (const auto& k : config_keys()) {
    std::string line = "  " + std::string(k.name) + " = " + (k.default_value[0] ? k.default_value : "\"\"");
    line.resize(std::max<std::size_t>(line.size() + 1, 30), ' ');
    out += line + (k.published ? "[published] " : "[default] ") + k.help + "\n";
  }
  return out;
}

WSR_NS_END
