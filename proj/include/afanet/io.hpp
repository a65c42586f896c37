// Copyright 2026 The AFANet Desk Authors
// SPDX-License-Identifier: Apache-2.0

// Binary and image file formats. All multi-byte values are little-endian.
//
//   TEN0      "TEN0" | u32 ndim | ndim x u32 dims | f32 data (row-major)
//   CLIPEMB1  "CLIPEMB1" | u32 num_classes | u32 dim | f32 vectors | JSON names
//   AFCKPT01  "AFCKPT01" | u32 count | count x (u32 name_len | name | u64 size |
//             TEN0 blob) | u32 json_len | JSON metadata
//   PPM/PGM   binary P6 / P5, maxval 255

#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "afanet/csm.hpp"
#include "afanet/params.hpp"
#include "afanet/tensor.hpp"

namespace afanet::io {

using Bytes = std::vector<unsigned char>;

Bytes read_file(const std::filesystem::path& path);
/// Writes through a temporary file and renames, so readers never see a
/// partial file.
void write_file(const std::filesystem::path& path, const Bytes& bytes);

Bytes encode_tensor(const Tensor& t);
Tensor decode_tensor(const Bytes& bytes);
void save_tensor(const std::filesystem::path& path, const Tensor& t);
Tensor load_tensor(const std::filesystem::path& path);

Bytes encode_embeddings(const csm::ClassEmbeddingTable& table);
csm::ClassEmbeddingTable decode_embeddings(const Bytes& bytes);
void save_embeddings(const std::filesystem::path& path, const csm::ClassEmbeddingTable& table);
csm::ClassEmbeddingTable load_embeddings(const std::filesystem::path& path);

struct Checkpoint {
  ParamStore params;
  std::string metadata_json = "{}";
};

Bytes encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(const Bytes& bytes);
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// 3 x H x W in [0,1] <-> P6. Values are rounded to 8 bits on write.
Bytes encode_ppm(const Tensor& rgb);
Tensor decode_ppm(const Bytes& bytes);
/// 1 x H x W in [0,1] <-> P5.
Bytes encode_pgm(const Tensor& gray);
Tensor decode_pgm(const Bytes& bytes);

}  // namespace afanet::io
