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
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "common.hpp"
#include "rng.hpp"

WSR_NS_BEGIN

enum class CharsetMode { Full, Kws };

std::string_view charset_mode_name(CharsetMode mode);
CharsetMode parse_charset_mode(std::string_view name);

/// Token inventory. Index 0 is the CTC blank, index 1 the SP start/end token
/// of the Seq2Seq branch, characters follow in a fixed order.
class Charset {
 public:
  static constexpr int kBlank = 0;
  static constexpr int kSpace = 1;

  explicit Charset(CharsetMode mode = CharsetMode::Kws);

  CharsetMode mode() const { return mode_; }
  int num_classes() const { return static_cast<int>(symbols_.size()) + 2; }
  const std::string& symbols() const { return symbols_; }

  std::optional<int> index_of(char c) const;
  /// Throws DataError naming every offending character.
  std::vector<int> encode(std::string_view s) const;
  /// Maps class indices back to text; blank and SP are dropped.
  std::string decode(std::span<const int> indices) const;
  /// Printable form of one class; blank is '_' and SP is ' '.
  char symbol(int index) const;

  /// kws: lowercase and drop anything outside [a-z0-9]. full: keep as is if
  /// every character is known. nullopt when nothing valid remains.
  std::optional<std::string> normalize(std::string_view s) const;

  /// FNV-1a over the mode name and the ordered symbol list.
  std::uint32_t fingerprint() const;

  bool operator==(const Charset& other) const = default;

 private:
  CharsetMode mode_;
  std::string symbols_;
  std::vector<int> lookup_;
};

/// Grayscale image, row-major, ink-positive values in [0, 1].
struct Image {
  int height = 0;
  int width = 0;
  std::vector<float> pixels;

  Image() = default;
  Image(int h, int w, float fill = 0.0f) : height(h), width(w), pixels(static_cast<std::size_t>(h) * w, fill) {}

  float& at(int y, int x) { return pixels[static_cast<std::size_t>(y) * width + x]; }
  float at(int y, int x) const { return pixels[static_cast<std::size_t>(y) * width + x]; }
  bool operator==(const Image&) const = default;
};

enum class Split { Train, Val, Test };
std::string_view split_name(Split s);
Split parse_split(std::string_view s);

struct WordSample {
  std::string id;
  std::string transcript;
  Image image;
  Split split = Split::Train;
};

/// Reads a binary PGM (P5, maxval 255). A white background (255) maps to 0 and
/// black ink to 1.
Image read_pgm(const std::string& path);
void write_pgm(const std::string& path, const Image& image);

struct LoadReport {
  std::vector<WordSample> samples;
  std::vector<std::string> errors;  ///< "line N: message"
  std::size_t excluded = 0;         ///< transcripts empty after normalization
};

/// Relative image path of a sample id: the id itself when it names a PGM
/// file, otherwise the id plus ".pgm".
std::string image_file(const std::string& id);

/// Loads `path\ttranscript\tsplit` lines; image paths are relative to `root`
/// and become the sample ids. Throws DataError when more than 1% of the lines
/// fail.
LoadReport load_dataset(const std::string& root, const std::string& manifest,
                        const Charset& charset);

/// Writes the manifest for `samples`; image files are named after sample ids.
void write_manifest(const std::string& path, const std::vector<WordSample>& samples);

/// Fits the image inside height x width (bilinear down-scaling with the aspect
/// ratio preserved, never up-scaling) and zero-pads bottom/right.
Image preprocess(const Image& image, int height = 64, int width = 256);

struct AffineRanges {
  double rotation_deg = 5.0;
  double shear = 0.3;
  double scale_min = 0.9;
  double scale_max = 1.1;
  double translate_px = 3.0;
};

struct AffineParams {
  double rotation_rad = 0.0;
  double shear = 0.0;
  double scale = 1.0;
  double tx = 0.0;
  double ty = 0.0;
};

AffineParams sample_affine(const AffineRanges& ranges, Rng& rng);
/// Global warp about the image centre with bilinear sampling and zero fill.
Image apply_affine(const Image& image, const AffineParams& params);
Image augment_affine(const Image& image, Rng& rng, const AffineRanges& ranges);

WSR_NS_END
