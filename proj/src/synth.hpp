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
#include <string>
#include <vector>

#include "data.hpp"

WSR_NS_BEGIN

/// Per-sample rendering variation. All zero gives the canonical rendering.
struct SynthJitter {
  double thickness = 0.4;  ///< +/- around the base stroke width
  double slant = 0.25;     ///< horizontal shear
  double baseline = 2.0;   ///< px
  double spacing = 1.5;    ///< px per glyph
  double wobble = 0.6;     ///< px per control point
};

struct SynthOptions {
  int height = 48;
  int glyph_width = 12;
  double stroke_width = 1.8;
  SynthJitter jitter;
  Split split = Split::Train;
  std::string id_prefix = "w";
};

/// Polyline skeleton of one symbol in unit glyph coordinates (x, y in [0,1]).
struct GlyphStroke {
  std::vector<std::pair<double, double>> points;
};
std::vector<GlyphStroke> glyph_skeleton(char symbol);

/// Renders one word; deterministic given the rng state.
Image render_word(const std::string& word, const SynthOptions& options, Rng& rng);

/// `samples_per_word` renderings of every vocabulary word, word-major order.
/// Output depends only on (vocab, samples_per_word, seed, options).
std::vector<WordSample> synth_generate(const std::vector<std::string>& vocab,
                                       int samples_per_word, std::uint64_t seed,
                                       const SynthOptions& options = {});

/// Reads one word per line (blank lines skipped).
std::vector<std::string> read_vocab(const std::string& path);

/// Writes PGM files plus manifest.tsv under `dir`.
void write_dataset(const std::string& dir, const std::vector<WordSample>& samples);

WSR_NS_END
