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

#include "data.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>

WSR_NS_BEGIN

std::string_view charset_mode_name(CharsetMode mode) {
  return mode == CharsetMode::Full ? "full" : "kws";
}

CharsetMode parse_charset_mode(std::string_view name) {
  if (name == "full") return CharsetMode::Full;
  if (name == "kws") return CharsetMode::Kws;
  contract_fail("unknown charset mode '" + std::string(name) + "' (expected full|kws)");
}

Charset::Charset(CharsetMode mode) : mode_(mode), lookup_(256, -1) {
  for (char c = 'a'; c <= 'z'; ++c) symbols_ += c;
  if (mode == CharsetMode::Full)
    for (char c = 'A'; c <= 'Z'; ++c) symbols_ += c;
  for (char c = '0'; c <= '9'; ++c) symbols_ += c;
  if (mode == CharsetMode::Full) {
    for (int c = 33; c < 127; ++c)
      if (std::ispunct(c)) symbols_ += static_cast<char>(c);
  }
  for (std::size_t i = 0; i < symbols_.size(); ++i)
    lookup_[static_cast<unsigned char>(symbols_[i])] = static_cast<int>(i) + 2;
}

std::optional<int> Charset::index_of(char c) const {
  const int idx = lookup_[static_cast<unsigned char>(c)];
  if (idx < 0) return std::nullopt;
  return idx;
}

std::vector<int> Charset::encode(std::string_view s) const {
  std::vector<int> out;
  out.reserve(s.size());
  std::string bad;
  for (char c : s) {
    if (auto idx = index_of(c)) {
      out.push_back(*idx);
    } else if (bad.find(c) == std::string::npos) {
      bad += c;
    }
  }
  if (!bad.empty()) {
    throw DataError("characters outside the " + std::string(charset_mode_name(mode_)) +
                    " charset: '" + bad + "'");
  }
  return out;
}

std::string Charset::decode(std::span<const int> indices) const {
  std::string out;
  for (int i : indices)
    if (i >= 2 && i < num_classes()) out += symbols_[static_cast<std::size_t>(i) - 2];
  return out;
}

char Charset::symbol(int index) const {
  if (index == kBlank) return '_';
  if (index == kSpace) return ' ';
  WSR_REQUIRE(index >= 2 && index < num_classes(), "class index out of range");
  return symbols_[static_cast<std::size_t>(index) - 2];
}

std::optional<std::string> Charset::normalize(std::string_view s) const {
  std::string out;
  if (mode_ == CharsetMode::Kws) {
    for (char c : s) {
      const char lc = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
      if (index_of(lc)) out += lc;
    }
  } else {
    for (char c : s) {
      if (!index_of(c)) return std::nullopt;
      out += c;
    }
  }
  if (out.empty()) return std::nullopt;
  return out;
}

std::uint32_t Charset::fingerprint() const {
  std::uint32_t h = 2166136261u;
  auto mix = [&h](char c) {
    h ^= static_cast<unsigned char>(c);
    h *= 16777619u;
  };
  for (char c : charset_mode_name(mode_)) mix(c);
  mix(':');
  for (char c : symbols_) mix(c);
  return h;
}

std::string_view split_name(Split s) {
  switch (s) {
    case Split::Train: return "train";
    case Split::Val: return "val";
    case Split::Test: return "test";
  }
  return "train";
}

Split parse_split(std::string_view s) {
  if (s == "train") return Split::Train;
  if (s == "val") return Split::Val;
  if (s == "test") return Split::Test;
  throw DataError("unknown split '" + std::string(s) + "'");
}

// ---------------------------------------------------------------------------
// PGM

namespace {

// Skips whitespace and '#' comments between header tokens.
void skip_pgm_space(std::istream& in) {
  for (;;) {
    const int c = in.peek();
    if (c == '#') {
      std::string line;
      std::getline(in, line);
    } else if (c != EOF && std::isspace(c)) {
      in.get();
    } else {
      return;
    }
  }
}

}  // namespace

Image read_pgm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open image " + path);
  char magic[2] = {0, 0};
  in.read(magic, 2);
  if (!in || magic[0] != 'P' || magic[1] != '5') throw DataError("not a binary PGM (P5): " + path);
  int w = 0, h = 0, maxval = 0;
  skip_pgm_space(in);
  in >> w;
  skip_pgm_space(in);
  in >> h;
  skip_pgm_space(in);
  in >> maxval;
  if (!in || w <= 0 || h <= 0) throw DataError("bad PGM header: " + path);
  if (maxval != 255) throw DataError("PGM maxval must be 255: " + path);
  in.get();
  std::vector<unsigned char> raw(static_cast<std::size_t>(w) * h);
  in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (in.gcount() != static_cast<std::streamsize>(raw.size())) throw DataError("truncated PGM: " + path);
  Image img(h, w);
  for (std::size_t i = 0; i < raw.size(); ++i)
    img.pixels[i] = static_cast<float>(255 - raw[i]) / 255.0f;
  return img;
}

void write_pgm(const std::string& path, const Image& image) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write image " + path);
  out << "P5\n" << image.width << ' ' << image.height << "\n255\n";
  std::vector<unsigned char> raw(image.pixels.size());
  for (std::size_t i = 0; i < raw.size(); ++i) {
    const float v = std::clamp(image.pixels[i], 0.0f, 1.0f);
    raw[i] = static_cast<unsigned char>(255 - static_cast<int>(std::lround(v * 255.0f)));
  }
  out.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
}

// ---------------------------------------------------------------------------
// Manifest

std::string image_file(const std::string& id) { return id.ends_with(".pgm") ? id : id + ".pgm"; }

LoadReport load_dataset(const std::string& root, const std::string& manifest,
                        const Charset& charset) {
  std::ifstream in(manifest);
  if (!in) throw DataError("cannot open manifest " + manifest);
  LoadReport report;
  std::string line;
  std::size_t lineno = 0, total = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    ++total;
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string f;
    while (std::getline(ss, f, '\t')) fields.push_back(f);
    if (fields.size() != 3) {
      report.errors.push_back("line " + std::to_string(lineno) + ": expected 3 tab-separated fields");
      continue;
    }
    try {
      WordSample s;
      s.split = parse_split(fields[2]);
      auto norm = charset.normalize(fields[1]);
      if (!norm) {
        ++report.excluded;
        continue;
      }
      s.transcript = *norm;
      s.image = read_pgm((std::filesystem::path(root) / fields[0]).string());
      s.id = fields[0];
      report.samples.push_back(std::move(s));
    } catch (const DataError& e) {
      report.errors.push_back("line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  if (total > 0 && report.errors.size() * 100 > total) {
    throw DataError(std::to_string(report.errors.size()) + " of " + std::to_string(total) +
                    " manifest lines failed; first: " + report.errors.front());
  }
  return report;
}

void write_manifest(const std::string& path, const std::vector<WordSample>& samples) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write manifest " + path);
  for (const auto& s : samples)
    out << image_file(s.id) << '\t' << s.transcript << '\t' << split_name(s.split) << '\n';
}

// ---------------------------------------------------------------------------
// Geometry

namespace {

float sample_bilinear(const Image& img, double y, double x) {
  const int y0 = static_cast<int>(std::floor(y));
  const int x0 = static_cast<int>(std::floor(x));
  const double fy = y - y0, fx = x - x0;
  auto px = [&img](int yy, int xx) -> double {
    if (yy < 0 || yy >= img.height || xx < 0 || xx >= img.width) return 0.0;
    return img.at(yy, xx);
  };
  double v = px(y0, x0) * (1 - fy) * (1 - fx);
  if (fx != 0) v += px(y0, x0 + 1) * (1 - fy) * fx;
  if (fy != 0) v += px(y0 + 1, x0) * fy * (1 - fx);
  if (fx != 0 && fy != 0) v += px(y0 + 1, x0 + 1) * fy * fx;
  return v;
}

}  // namespace

Image preprocess(const Image& image, int height, int width) {
  WSR_REQUIRE(image.height > 0 && image.width > 0, "preprocess: empty image");
  Image content = image;
  if (image.height > height || image.width > width) {
    const double s = std::min(static_cast<double>(height) / image.height,
                              static_cast<double>(width) / image.width);
    const int nh = std::clamp(static_cast<int>(std::lround(image.height * s)), 1, height);
    const int nw = std::clamp(static_cast<int>(std::lround(image.width * s)), 1, width);
    const double sy = static_cast<double>(image.height) / nh;
    const double sx = static_cast<double>(image.width) / nw;
    content = Image(nh, nw);
    for (int y = 0; y < nh; ++y)
      for (int x = 0; x < nw; ++x) {
        const double srcy = std::clamp((y + 0.5) * sy - 0.5, 0.0, image.height - 1.0);
        const double srcx = std::clamp((x + 0.5) * sx - 0.5, 0.0, image.width - 1.0);
        content.at(y, x) = std::clamp(sample_bilinear(image, srcy, srcx), 0.0f, 1.0f);
      }
  }
  Image out(height, width, 0.0f);
  for (int y = 0; y < content.height; ++y)
    std::copy_n(content.pixels.begin() + static_cast<std::ptrdiff_t>(y) * content.width,
                content.width, out.pixels.begin() + static_cast<std::ptrdiff_t>(y) * width);
  return out;
}

AffineParams sample_affine(const AffineRanges& r, Rng& rng) {
  AffineParams p;
  p.rotation_rad = rng.uniform(-r.rotation_deg, r.rotation_deg) * std::numbers::pi / 180.0;
  p.shear = rng.uniform(-r.shear, r.shear);
  p.scale = rng.uniform(r.scale_min, r.scale_max);
  p.tx = rng.uniform(-r.translate_px, r.translate_px);
  p.ty = rng.uniform(-r.translate_px, r.translate_px);
  return p;
}

Image apply_affine(const Image& image, const AffineParams& p) {
  // Forward map A = R * Shear * Scale about the centre, then translation.
  const double c = std::cos(p.rotation_rad), s = std::sin(p.rotation_rad);
  const double a00 = c * p.scale, a01 = (c * p.shear - s) * p.scale;
  const double a10 = s * p.scale, a11 = (s * p.shear + c) * p.scale;
  const double det = a00 * a11 - a01 * a10;
  WSR_REQUIRE(std::abs(det) > 1e-12, "apply_affine: singular transform");
  const double i00 = a11 / det, i01 = -a01 / det, i10 = -a10 / det, i11 = a00 / det;
  const double cy = (image.height - 1) / 2.0, cx = (image.width - 1) / 2.0;
  Image out(image.height, image.width);
  for (int y = 0; y < image.height; ++y)
    for (int x = 0; x < image.width; ++x) {
      const double dx = x - cx - p.tx, dy = y - cy - p.ty;
      const double sx = i00 * dx + i01 * dy + cx;
      const double sy = i10 * dx + i11 * dy + cy;
      out.at(y, x) = std::clamp(sample_bilinear(image, sy, sx), 0.0f, 1.0f);
    }
  return out;
}

Image augment_affine(const Image& image, Rng& rng, const AffineRanges& ranges) {
  return apply_affine(image, sample_affine(ranges, rng));
}

WSR_NS_END
