// Copyright 2026 The AFANet Desk Authors
// SPDX-License-Identifier: Apache-2.0

// Synthetic shape dataset and pseudo text embeddings.

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "afanet/csm.hpp"
#include "afanet/tensor.hpp"

namespace afanet::data {

/// disk, square, triangle, ring, cross, bar, ellipse, diamond.
const std::vector<std::string>& shape_class_names();

struct ShapeParams {
  float cx = 32.0f, cy = 32.0f;  // center in pixel units
  float radius = 16.0f;
  float angle = 0.0f;  // radians; only used by rotationally distinct shapes
};

/// Binary 1 x size x size mask, sampled at pixel centers.
Tensor render_mask(std::size_t class_id, const ShapeParams& shape, std::size_t size);

struct GenOptions {
  std::uint64_t seed = 0;
  std::size_t per_class = 40;
  std::size_t backgrounds = 40;  // object-free images used as objectness negatives
  std::size_t image_size = 64;
};

struct Sample {
  Tensor image;  // 3 x H x W in [0,1]
  Tensor mask;   // 1 x H x W in {0,1}
  std::size_t class_id = 0;
  std::string image_file, mask_file;
};

struct Dataset {
  std::vector<std::string> class_names;
  std::vector<Sample> samples;
  std::vector<Tensor> backgrounds;
  std::size_t image_size = 64;
  GenOptions options;

  /// Sample indices of one class, in manifest order.
  std::vector<std::size_t> indices_of(std::size_t class_id) const;
};

/// Renders the dataset in memory. Deterministic per seed.
Dataset render_dataset(const GenOptions& options);

/// Renders and writes images/, masks/, backgrounds/ and manifest.json under
/// `out_dir`. Returns the dataset as written.
Dataset gen_dataset(const GenOptions& options, const std::filesystem::path& out_dir);

/// Reads manifest.json and every listed file. Throws if anything is missing
/// or malformed.
Dataset load_dataset(const std::filesystem::path& dir);

/// Unit-norm vector per class seeded by (name, seed). Distinct classes are
/// re-drawn until every pairwise |cosine| is below 0.5 (for dim >= 64).
csm::ClassEmbeddingTable gen_pseudo_embeddings(const std::vector<std::string>& class_names,
                                               std::size_t dim, std::uint64_t seed);

}  // namespace afanet::data
