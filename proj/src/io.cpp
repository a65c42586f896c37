// Copyright 2026 The AFANet Desk Authors
// SPDX-License-Identifier: Apache-2.0

#include "afanet/io.hpp"

#include <algorithm>
#include <bit>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string_view>

#include <nlohmann/json.hpp>

namespace afanet::io {

namespace fs = std::filesystem;

namespace {

constexpr std::string_view kTensorMagic = "TEN0";
constexpr std::string_view kEmbeddingMagic = "CLIPEMB1";
constexpr std::string_view kCheckpointMagic = "AFCKPT01";

[[noreturn]] void format_error(const std::string& what) { throw Error(ErrorCode::kFormat, what); }

class Writer {
 public:
  explicit Writer(Bytes& out) : out_(out) {}
  void raw(std::string_view s) { out_.insert(out_.end(), s.begin(), s.end()); }
  void raw(const Bytes& b) { out_.insert(out_.end(), b.begin(), b.end()); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out_.push_back(static_cast<unsigned char>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out_.push_back(static_cast<unsigned char>(v >> (8 * i)));
  }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }

 private:
  Bytes& out_;
};

class Reader {
 public:
  Reader(const Bytes& in, std::string context) : in_(in), context_(std::move(context)) {}

  void need(std::size_t n) const {
    if (in_.size() - pos_ < n) format_error(context_ + ": truncated data");
  }
  void magic(std::string_view m) {
    need(m.size());
    if (std::memcmp(in_.data() + pos_, m.data(), m.size()) != 0)
      format_error(context_ + ": bad magic, expected '" + std::string(m) + "'");
    pos_ += m.size();
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(in_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(in_[pos_ + i]) << (8 * i);
    pos_ += 8;
    return v;
  }
  float f32() { return std::bit_cast<float>(u32()); }
  std::string str(std::size_t n) {
    need(n);
    std::string s(in_.begin() + pos_, in_.begin() + pos_ + n);
    pos_ += n;
    return s;
  }
  Bytes bytes(std::size_t n) {
    need(n);
    Bytes b(in_.begin() + pos_, in_.begin() + pos_ + n);
    pos_ += n;
    return b;
  }
  std::size_t remaining() const { return in_.size() - pos_; }
  void expect_end() const {
    if (remaining() != 0) format_error(context_ + ": trailing bytes");
  }

 private:
  const Bytes& in_;
  std::string context_;
  std::size_t pos_ = 0;
};

std::uint32_t checked_u32(std::size_t v, const char* what) {
  if (v > 0xffffffffu) throw_invalid(std::string(what) + " exceeds 32 bits");
  return static_cast<std::uint32_t>(v);
}

// Netpbm header: magic, width, height, maxval separated by whitespace, with
// optional comments, then exactly one whitespace byte.
struct NetpbmHeader {
  std::size_t width = 0, height = 0, offset = 0;
};

NetpbmHeader parse_netpbm(const Bytes& b, char kind) {
  if (b.size() < 2 || b[0] != 'P' || b[1] != kind)
    format_error(std::string("netpbm: expected P") + kind + " magic");
  std::size_t pos = 2;
  auto next_int = [&]() -> std::size_t {
    for (;;) {
      while (pos < b.size() && std::isspace(b[pos])) ++pos;
      if (pos < b.size() && b[pos] == '#') {
        while (pos < b.size() && b[pos] != '\n') ++pos;
        continue;
      }
      break;
    }
    if (pos >= b.size() || !std::isdigit(b[pos])) format_error("netpbm: malformed header");
    std::size_t v = 0;
    while (pos < b.size() && std::isdigit(b[pos])) {
      v = v * 10 + static_cast<std::size_t>(b[pos] - '0');
      if (v > 1u << 20) format_error("netpbm: header value too large");
      ++pos;
    }
    return v;
  };
  NetpbmHeader h;
  h.width = next_int();
  h.height = next_int();
  const std::size_t maxval = next_int();
  if (h.width == 0 || h.height == 0) format_error("netpbm: zero image size");
  if (maxval != 255) format_error("netpbm: only maxval 255 is supported");
  if (pos >= b.size() || !std::isspace(b[pos])) format_error("netpbm: malformed header");
  h.offset = pos + 1;
  return h;
}

Bytes encode_netpbm(const Tensor& t, std::size_t channels, char kind) {
  if (t.rank() != 3 || t.dim(0) != channels)
    throw_shape(std::string("netpbm: expected ") + std::to_string(channels) + "xHxW, got " +
                shape_str(t.shape()));
  const std::size_t h = t.dim(1), w = t.dim(2);
  const std::string header =
      std::string("P") + kind + "\n" + std::to_string(w) + " " + std::to_string(h) + "\n255\n";
  Bytes out(header.begin(), header.end());
  out.reserve(out.size() + t.numel());
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x)
      for (std::size_t c = 0; c < channels; ++c) {
        const float v = std::clamp(t.at(c, y, x), 0.0f, 1.0f);
        out.push_back(static_cast<unsigned char>(std::lround(v * 255.0f)));
      }
  return out;
}

Tensor decode_netpbm(const Bytes& b, std::size_t channels, char kind) {
  const NetpbmHeader h = parse_netpbm(b, kind);
  if (b.size() - h.offset != h.width * h.height * channels)
    format_error("netpbm: pixel data size does not match header");
  Tensor t({channels, h.height, h.width});
  const unsigned char* p = b.data() + h.offset;
  for (std::size_t y = 0; y < h.height; ++y)
    for (std::size_t x = 0; x < h.width; ++x)
      for (std::size_t c = 0; c < channels; ++c) t.at(c, y, x) = static_cast<float>(*p++) / 255.0f;
  return t;
}

}  // namespace

Bytes read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot open '" + path.string() + "' for reading");
  Bytes b((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw Error(ErrorCode::kIo, "read error on '" + path.string() + "'");
  return b;
}

void write_file(const fs::path& path, const Bytes& bytes) {
  if (path.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
    if (ec) throw Error(ErrorCode::kIo, "cannot create '" + path.parent_path().string() + "'");
  }
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::kIo, "cannot open '" + tmp.string() + "' for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error(ErrorCode::kIo, "write error on '" + tmp.string() + "'");
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw Error(ErrorCode::kIo, "cannot rename to '" + path.string() + "': " + ec.message());
}

Bytes encode_tensor(const Tensor& t) {
  Bytes out;
  out.reserve(8 + 4 * t.rank() + 4 * t.numel());
  Writer w(out);
  w.raw(kTensorMagic);
  w.u32(checked_u32(t.rank(), "tensor rank"));
  for (std::size_t d : t.shape()) w.u32(checked_u32(d, "tensor dim"));
  for (float v : t.data()) w.f32(v);
  return out;
}

namespace {

Tensor read_tensor(Reader& r) {
  r.magic(kTensorMagic);
  const std::uint32_t ndim = r.u32();
  if (ndim == 0 || ndim > 8) format_error("TEN0: unsupported rank " + std::to_string(ndim));
  Shape shape(ndim);
  std::size_t n = 1;
  for (auto& d : shape) {
    d = r.u32();
    if (d == 0) format_error("TEN0: zero dimension");
    n *= d;
    if (n > (std::size_t{1} << 32)) format_error("TEN0: tensor too large");
  }
  r.need(4 * n);
  std::vector<float> data(n);
  for (auto& v : data) v = r.f32();
  return Tensor(std::move(shape), std::move(data));
}

}  // namespace

Tensor decode_tensor(const Bytes& bytes) {
  Reader r(bytes, "TEN0");
  Tensor t = read_tensor(r);
  r.expect_end();
  return t;
}

void save_tensor(const fs::path& path, const Tensor& t) { write_file(path, encode_tensor(t)); }
Tensor load_tensor(const fs::path& path) { return decode_tensor(read_file(path)); }

Bytes encode_embeddings(const csm::ClassEmbeddingTable& table) {
  table.validate();
  Bytes out;
  Writer w(out);
  w.raw(kEmbeddingMagic);
  w.u32(checked_u32(table.size(), "class count"));
  w.u32(checked_u32(table.dim, "embedding dim"));
  for (float v : table.vectors.data()) w.f32(v);
  w.raw(nlohmann::json(table.class_names).dump());
  return out;
}

csm::ClassEmbeddingTable decode_embeddings(const Bytes& bytes) {
  Reader r(bytes, "CLIPEMB1");
  r.magic(kEmbeddingMagic);
  csm::ClassEmbeddingTable table;
  const std::uint32_t n = r.u32();
  table.dim = r.u32();
  if (n == 0 || table.dim == 0) format_error("CLIPEMB1: empty table");
  r.need(4 * static_cast<std::size_t>(n) * table.dim);
  std::vector<float> data(static_cast<std::size_t>(n) * table.dim);
  for (auto& v : data) v = r.f32();
  table.vectors = Tensor({n, table.dim}, std::move(data));
  const std::string trailer = r.str(r.remaining());
  nlohmann::json names;
  try {
    names = nlohmann::json::parse(trailer);
  } catch (const nlohmann::json::exception& e) {
    format_error(std::string("CLIPEMB1: class name trailer is not JSON: ") + e.what());
  }
  if (!names.is_array() || names.size() != n)
    format_error("CLIPEMB1: trailer must be an array of " + std::to_string(n) + " names");
  for (const auto& name : names) {
    if (!name.is_string()) format_error("CLIPEMB1: class names must be strings");
    table.class_names.push_back(name.get<std::string>());
  }
  if (!table.vectors.all_finite()) throw Error(ErrorCode::kNumeric, "CLIPEMB1: non-finite value");
  return table;
}

void save_embeddings(const fs::path& path, const csm::ClassEmbeddingTable& table) {
  write_file(path, encode_embeddings(table));
}
csm::ClassEmbeddingTable load_embeddings(const fs::path& path) {
  return decode_embeddings(read_file(path));
}

Bytes encode_checkpoint(const Checkpoint& ckpt) {
  Bytes out;
  Writer w(out);
  w.raw(kCheckpointMagic);
  w.u32(checked_u32(ckpt.params.size(), "parameter count"));
  for (const auto& [name, t] : ckpt.params.tensors()) {
    w.u32(checked_u32(name.size(), "parameter name"));
    w.raw(name);
    const Bytes blob = encode_tensor(t);
    w.u64(blob.size());
    w.raw(blob);
  }
  w.u32(checked_u32(ckpt.metadata_json.size(), "metadata"));
  w.raw(ckpt.metadata_json);
  return out;
}

Checkpoint decode_checkpoint(const Bytes& bytes) {
  Reader r(bytes, "checkpoint");
  r.magic(kCheckpointMagic);
  Checkpoint ckpt;
  const std::uint32_t count = r.u32();
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::string name = r.str(r.u32());
    if (name.empty()) format_error("checkpoint: empty parameter name");
    if (ckpt.params.contains(name)) format_error("checkpoint: duplicate parameter '" + name + "'");
    const std::uint64_t size = r.u64();
    if (size > r.remaining()) format_error("checkpoint: truncated tensor '" + name + "'");
    ckpt.params.add(name, decode_tensor(r.bytes(static_cast<std::size_t>(size))));
  }
  ckpt.metadata_json = r.str(r.u32());
  r.expect_end();
  if (!nlohmann::json::accept(ckpt.metadata_json))
    format_error("checkpoint: metadata is not valid JSON");
  return ckpt;
}

void save_checkpoint(const fs::path& path, const Checkpoint& ckpt) {
  write_file(path, encode_checkpoint(ckpt));
}
Checkpoint load_checkpoint(const fs::path& path) { return decode_checkpoint(read_file(path)); }

Bytes encode_ppm(const Tensor& rgb) { return encode_netpbm(rgb, 3, '6'); }
Tensor decode_ppm(const Bytes& bytes) { return decode_netpbm(bytes, 3, '6'); }
Bytes encode_pgm(const Tensor& gray) { return encode_netpbm(gray, 1, '5'); }
Tensor decode_pgm(const Bytes& bytes) { return decode_netpbm(bytes, 1, '5'); }

}  // namespace afanet::io
