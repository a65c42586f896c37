// Copyright 2026 The AFANet Desk Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <filesystem>
#include <functional>
#include <string>

#include <gtest/gtest.h>
#include <unistd.h>

#include "afanet/graph.hpp"
#include "afanet/params.hpp"

namespace afanet::testing {

inline Tensor rand_tensor(Rng& rng, Shape shape, float lo = -1.0f, float hi = 1.0f) {
  return rng.uniform_tensor(std::move(shape), lo, hi);
}

/// Runs `op` on constant leaves and returns the output value.
inline Tensor run(const std::function<Var(Graph&)>& op) {
  Graph g;
  return g.value(op(g));
}

inline ::testing::AssertionResult near_all(const Tensor& a, const Tensor& b, float tol) {
  if (a.shape() != b.shape())
    return ::testing::AssertionFailure()
           << "shape " << shape_str(a.shape()) << " vs " << shape_str(b.shape());
  for (std::size_t i = 0; i < a.numel(); ++i)
    if (!(std::fabs(a[i] - b[i]) <= tol))
      return ::testing::AssertionFailure()
             << "element " << i << ": " << a[i] << " vs " << b[i] << " (tol " << tol << ")";
  return ::testing::AssertionSuccess();
}

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    path_ = std::filesystem::temp_directory_path() /
            ("afanet_test_" + tag + "_" + std::to_string(::getpid()));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

}  // namespace afanet::testing
