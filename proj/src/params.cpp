// Copyright 2026 The AFANet Desk Authors
// SPDX-License-Identifier: Apache-2.0

#include "afanet/params.hpp"

#include <cmath>

namespace afanet {

Tensor Rng::uniform_tensor(Shape shape, float lo, float hi) {
  Tensor t(std::move(shape));
  for (auto& v : t.data()) v = uniform(lo, hi);
  return t;
}

Tensor Rng::normal_tensor(Shape shape, float stddev) {
  Tensor t(std::move(shape));
  for (auto& v : t.data()) v = normal(0.0f, stddev);
  return t;
}

std::uint64_t derive_seed(std::uint64_t seed, std::string_view stream) {
  // FNV-1a over the label, then splitmix64 finalization.
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : stream) {
    h ^= c;
    h *= 1099511628211ull;
  }
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ull * (h | 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

Tensor& ParamStore::add(const std::string& name, Tensor value) {
  auto [it, inserted] = tensors_.insert_or_assign(name, std::move(value));
  (void)inserted;
  return it->second;
}

const Tensor& ParamStore::get(const std::string& name) const {
  auto it = tensors_.find(name);
  if (it == tensors_.end()) throw_invalid("unknown parameter '" + name + "'");
  return it->second;
}

Tensor& ParamStore::get(const std::string& name) {
  auto it = tensors_.find(name);
  if (it == tensors_.end()) throw_invalid("unknown parameter '" + name + "'");
  return it->second;
}

std::vector<std::string> ParamStore::names() const {
  std::vector<std::string> out;
  out.reserve(tensors_.size());
  for (const auto& [k, v] : tensors_) out.push_back(k);
  return out;
}

std::size_t ParamStore::total_elements() const {
  std::size_t n = 0;
  for (const auto& [k, v] : tensors_) n += v.numel();
  return n;
}

void ParamStore::add_conv(const std::string& name, std::size_t cout, std::size_t cin,
                          std::size_t k, Rng& rng) {
  const float bound = std::sqrt(6.0f / static_cast<float>(cin * k * k));
  add(name + ".w", rng.uniform_tensor({cout, cin, k, k}, -bound, bound));
  add(name + ".b", Tensor::zeros({cout}));
}

bool ParamBinder::is_frozen(const std::string& name) const {
  for (const auto& p : frozen_)
    if (name.compare(0, p.size(), p) == 0) return true;
  return false;
}

Var ParamBinder::operator()(const std::string& name) {
  auto it = bound_.find(name);
  if (it != bound_.end()) return it->second;
  const bool grad = trainable_ && !is_frozen(name);
  Var v = graph_.leaf(store_.get(name), grad);
  bound_.emplace(name, v);
  return v;
}

}  // namespace afanet
