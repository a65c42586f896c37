// Copyright 2026 The AFANet Desk Authors
// SPDX-License-Identifier: Apache-2.0

#include "afanet/data.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <numbers>

#include <nlohmann/json.hpp>

#include "afanet/io.hpp"
#include "afanet/params.hpp"

namespace afanet::data {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr float kPi = std::numbers::pi_v<float>;
constexpr const char* kManifestFormat = "afanet-shapes-v1";

bool inside(std::size_t class_id, const ShapeParams& s, float px, float py) {
  const float dx = px - s.cx, dy = py - s.cy;
  const float c = std::cos(s.angle), sn = std::sin(s.angle);
  const float u = c * dx + sn * dy;  // rotated frame
  const float v = -sn * dx + c * dy;
  const float r = s.radius;
  const float d = std::sqrt(dx * dx + dy * dy);
  switch (class_id) {
    case 0:  // disk
      return d <= r;
    case 1:  // square
      return std::fabs(dx) <= 0.8f * r && std::fabs(dy) <= 0.8f * r;
    case 2: {  // triangle, circumradius r, apex along -v
      const float a = r, b = 0.5f * r, half = r * std::sqrt(3.0f) / 2.0f;
      if (v < -a || v > b) return false;
      return std::fabs(u) <= half * (v + a) / (a + b);
    }
    case 3:  // ring
      return d <= r && d >= 0.55f * r;
    case 4:  // cross
      return (std::fabs(dx) <= 0.3f * r && std::fabs(dy) <= r) ||
             (std::fabs(dy) <= 0.3f * r && std::fabs(dx) <= r);
    case 5:  // bar
      return std::fabs(u) <= r && std::fabs(v) <= 0.3f * r;
    case 6:  // ellipse
      return (u * u) / (r * r) + (v * v) / (0.3f * r * r) <= 1.0f;
    case 7:  // diamond
      return std::fabs(dx) + std::fabs(dy) <= r;
    default:
      throw_invalid("unknown shape class " + std::to_string(class_id));
  }
}

struct Rgb {
  float r, g, b;
};

Rgb background_tone(Rng& rng) {
  const float level = rng.uniform(0.2f, 0.8f);
  return {level + rng.uniform(-0.05f, 0.05f), level + rng.uniform(-0.05f, 0.05f),
          level + rng.uniform(-0.05f, 0.05f)};
}

Rgb saturated_color(Rng& rng) {
  // HSV with high saturation, converted to RGB.
  const float h = rng.uniform(0.0f, 6.0f);
  const float s = rng.uniform(0.7f, 1.0f);
  const float v = rng.uniform(0.7f, 1.0f);
  const float c = v * s;
  const float x = c * (1.0f - std::fabs(std::fmod(h, 2.0f) - 1.0f));
  const float m = v - c;
  std::array<float, 3> rgb{};
  switch (static_cast<int>(h) % 6) {
    case 0: rgb = {c, x, 0}; break;
    case 1: rgb = {x, c, 0}; break;
    case 2: rgb = {0, c, x}; break;
    case 3: rgb = {0, x, c}; break;
    case 4: rgb = {x, 0, c}; break;
    default: rgb = {c, 0, x}; break;
  }
  return {rgb[0] + m, rgb[1] + m, rgb[2] + m};
}

// Smooth two-tone gradient or a 2-pixel checker of two gray tones.
Tensor render_background(Rng& rng, std::size_t size) {
  Tensor img({3, size, size});
  const bool checker = rng.uniform(0.0f, 1.0f) < 0.5f;
  const Rgb a = background_tone(rng);
  Rgb b = background_tone(rng);
  if (checker) {
    const float shift = rng.uniform(0.0f, 1.0f) < 0.5f ? 0.3f : -0.3f;
    b = {a.r + shift, a.g + shift, a.b + shift};
  }
  const float theta = rng.uniform(0.0f, 2.0f * kPi);
  const float cx = std::cos(theta), cy = std::sin(theta);
  const std::size_t cell = 2;
  const std::size_t ox = rng.index(cell), oy = rng.index(cell);
  const float inv = 1.0f / static_cast<float>(size);
  for (std::size_t y = 0; y < size; ++y)
    for (std::size_t x = 0; x < size; ++x) {
      float w;
      if (checker) {
        w = static_cast<float>(((x + ox) / cell + (y + oy) / cell) % 2);
      } else {
        const float px = (static_cast<float>(x) + 0.5f) * inv - 0.5f;
        const float py = (static_cast<float>(y) + 0.5f) * inv - 0.5f;
        w = std::clamp(0.5f + cx * px + cy * py, 0.0f, 1.0f);
      }
      img.at(0, y, x) = std::clamp(a.r + w * (b.r - a.r), 0.0f, 1.0f);
      img.at(1, y, x) = std::clamp(a.g + w * (b.g - a.g), 0.0f, 1.0f);
      img.at(2, y, x) = std::clamp(a.b + w * (b.b - a.b), 0.0f, 1.0f);
    }
  return img;
}

ShapeParams random_shape(Rng& rng, std::size_t size) {
  const float s = static_cast<float>(size);
  ShapeParams p;
  p.radius = rng.uniform(0.17f, 0.27f) * s;
  const float margin = p.radius + 2.0f;
  p.cx = rng.uniform(margin, s - margin);
  p.cy = rng.uniform(margin, s - margin);
  p.angle = rng.uniform(0.0f, kPi);
  return p;
}

void render_object(Rng& rng, std::size_t class_id, Tensor& img, Tensor& mask) {
  const std::size_t size = img.dim(1);
  mask = render_mask(class_id, random_shape(rng, size), size);
  const Rgb color = saturated_color(rng);
  for (std::size_t y = 0; y < size; ++y)
    for (std::size_t x = 0; x < size; ++x) {
      if (mask.at(0, y, x) == 0.0f) continue;
      const float n = rng.normal(0.0f, 0.04f);
      img.at(0, y, x) = std::clamp(color.r + n, 0.0f, 1.0f);
      img.at(1, y, x) = std::clamp(color.g + n, 0.0f, 1.0f);
      img.at(2, y, x) = std::clamp(color.b + n, 0.0f, 1.0f);
    }
}

std::string indexed(const std::string& stem, std::size_t i, const char* ext) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "_%03zu", i);
  return stem + buf + ext;
}

// Quantize through the 8-bit codec so in-memory and on-disk datasets agree.
Tensor quantize_rgb(const Tensor& t) { return io::decode_ppm(io::encode_ppm(t)); }

}  // namespace

const std::vector<std::string>& shape_class_names() {
  static const std::vector<std::string> names{"disk",  "square", "triangle", "ring",
                                              "cross", "bar",    "ellipse",  "diamond"};
  return names;
}

Tensor render_mask(std::size_t class_id, const ShapeParams& shape, std::size_t size) {
  if (class_id >= shape_class_names().size())
    throw_invalid("unknown shape class " + std::to_string(class_id));
  Tensor m({1, size, size});
  for (std::size_t y = 0; y < size; ++y)
    for (std::size_t x = 0; x < size; ++x)
      m.at(0, y, x) = inside(class_id, shape, static_cast<float>(x) + 0.5f,
                             static_cast<float>(y) + 0.5f)
                          ? 1.0f
                          : 0.0f;
  return m;
}

std::vector<std::size_t> Dataset::indices_of(std::size_t class_id) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < samples.size(); ++i)
    if (samples[i].class_id == class_id) out.push_back(i);
  return out;
}

Dataset render_dataset(const GenOptions& options) {
  if (options.per_class == 0) throw_invalid("gen_dataset: per_class must be positive");
  if (options.image_size < 16 || options.image_size % 8)
    throw_invalid("gen_dataset: image_size must be a multiple of 8 and at least 16");
  Dataset ds;
  ds.class_names = shape_class_names();
  ds.image_size = options.image_size;
  ds.options = options;
  for (std::size_t c = 0; c < ds.class_names.size(); ++c) {
    for (std::size_t i = 0; i < options.per_class; ++i) {
      const std::string stem = ds.class_names[c];
      Rng rng(derive_seed(options.seed, "image/" + indexed(stem, i, "")));
      Sample s;
      s.image = render_background(rng, options.image_size);
      render_object(rng, c, s.image, s.mask);
      s.image = quantize_rgb(s.image);
      s.class_id = c;
      s.image_file = "images/" + indexed(stem, i, ".ppm");
      s.mask_file = "masks/" + indexed(stem, i, ".pgm");
      ds.samples.push_back(std::move(s));
    }
  }
  for (std::size_t i = 0; i < options.backgrounds; ++i) {
    Rng rng(derive_seed(options.seed, "background/" + std::to_string(i)));
    ds.backgrounds.push_back(quantize_rgb(render_background(rng, options.image_size)));
  }
  return ds;
}

Dataset gen_dataset(const GenOptions& options, const fs::path& out_dir) {
  Dataset ds = render_dataset(options);
  json samples = json::array();
  for (const auto& s : ds.samples) {
    io::write_file(out_dir / s.image_file, io::encode_ppm(s.image));
    io::write_file(out_dir / s.mask_file, io::encode_pgm(s.mask));
    samples.push_back({{"image", s.image_file},
                       {"mask", s.mask_file},
                       {"class_id", s.class_id},
                       {"class_name", ds.class_names[s.class_id]}});
  }
  json backgrounds = json::array();
  for (std::size_t i = 0; i < ds.backgrounds.size(); ++i) {
    const std::string file = "backgrounds/" + indexed("bg", i, ".ppm");
    io::write_file(out_dir / file, io::encode_ppm(ds.backgrounds[i]));
    backgrounds.push_back(file);
  }
  const json manifest = {{"format", kManifestFormat},
                         {"classes", ds.class_names},
                         {"samples", samples},
                         {"backgrounds", backgrounds},
                         {"generator",
                          {{"seed", options.seed},
                           {"per_class", options.per_class},
                           {"backgrounds", options.backgrounds},
                           {"image_size", options.image_size}}}};
  const std::string text = manifest.dump(2) + "\n";
  io::write_file(out_dir / "manifest.json", io::Bytes(text.begin(), text.end()));
  return ds;
}

Dataset load_dataset(const fs::path& dir) {
  const io::Bytes raw = io::read_file(dir / "manifest.json");
  json m;
  try {
    m = json::parse(raw.begin(), raw.end());
    if (m.at("format").get<std::string>() != kManifestFormat)
      throw Error(ErrorCode::kFormat, "manifest: unsupported format");
    Dataset ds;
    ds.class_names = m.at("classes").get<std::vector<std::string>>();
    const json& gen = m.at("generator");
    ds.options.seed = gen.at("seed").get<std::uint64_t>();
    ds.options.per_class = gen.at("per_class").get<std::size_t>();
    ds.options.backgrounds = gen.at("backgrounds").get<std::size_t>();
    ds.options.image_size = gen.at("image_size").get<std::size_t>();
    ds.image_size = ds.options.image_size;
    const Shape rgb{3, ds.image_size, ds.image_size};
    const Shape gray{1, ds.image_size, ds.image_size};
    for (const json& e : m.at("samples")) {
      Sample s;
      s.image_file = e.at("image").get<std::string>();
      s.mask_file = e.at("mask").get<std::string>();
      s.class_id = e.at("class_id").get<std::size_t>();
      if (s.class_id >= ds.class_names.size())
        throw Error(ErrorCode::kFormat, "manifest: class id out of range in " + s.image_file);
      s.image = io::decode_ppm(io::read_file(dir / s.image_file));
      s.mask = io::decode_pgm(io::read_file(dir / s.mask_file));
      if (s.image.shape() != rgb || s.mask.shape() != gray)
        throw Error(ErrorCode::kFormat, "manifest: unexpected image size in " + s.image_file);
      ds.samples.push_back(std::move(s));
    }
    for (const json& e : m.at("backgrounds")) {
      Tensor bg = io::decode_ppm(io::read_file(dir / e.get<std::string>()));
      if (bg.shape() != rgb) throw Error(ErrorCode::kFormat, "manifest: bad background size");
      ds.backgrounds.push_back(std::move(bg));
    }
    for (std::size_t c = 0; c < ds.class_names.size(); ++c)
      if (ds.indices_of(c).empty())
        throw Error(ErrorCode::kFormat, "manifest: class " + ds.class_names[c] + " has no images");
    return ds;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kFormat, std::string("manifest: ") + e.what());
  }
}

csm::ClassEmbeddingTable gen_pseudo_embeddings(const std::vector<std::string>& class_names,
                                               std::size_t dim, std::uint64_t seed) {
  if (dim < 8) throw_invalid("gen_pseudo_embeddings: dim must be >= 8");
  if (class_names.empty()) throw_invalid("gen_pseudo_embeddings: no class names");
  const std::size_t n = class_names.size();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < i; ++j)
      if (class_names[i] == class_names[j])
        throw_invalid("gen_pseudo_embeddings: duplicate class name '" + class_names[i] + "'");
  std::vector<std::vector<float>> rows(n);
  auto draw = [&](std::size_t i, std::size_t attempt) {
    std::string stream = "embedding/" + class_names[i];
    if (attempt > 0) stream += "#" + std::to_string(attempt);
    Rng rng(derive_seed(seed, stream));
    std::vector<float> v(dim);
    double norm = 0.0;
    for (auto& x : v) {
      x = rng.normal();
      norm += static_cast<double>(x) * x;
    }
    const float inv = static_cast<float>(1.0 / std::sqrt(norm));
    for (auto& x : v) x *= inv;
    return v;
  };
  auto cosine = [&](const std::vector<float>& a, const std::vector<float>& b) {
    double s = 0.0;
    for (std::size_t k = 0; k < dim; ++k) s += static_cast<double>(a[k]) * b[k];
    return s;
  };
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t attempt = 0;; ++attempt) {
      rows[i] = draw(i, attempt);
      bool ok = true;
      if (dim >= 64)
        for (std::size_t j = 0; j < i && ok; ++j) ok = std::fabs(cosine(rows[i], rows[j])) < 0.5;
      if (ok) break;
      if (attempt > 1000) throw Error(ErrorCode::kInternal, "gen_pseudo_embeddings: no progress");
    }
  }
  csm::ClassEmbeddingTable table;
  table.class_names = class_names;
  table.dim = dim;
  std::vector<float> flat;
  flat.reserve(n * dim);
  for (const auto& r : rows) flat.insert(flat.end(), r.begin(), r.end());
  table.vectors = Tensor({n, dim}, std::move(flat));
  return table;
}

}  // namespace afanet::data
