// Copyright 2026 The AFANet Desk Authors
// SPDX-License-Identifier: Apache-2.0

// Exercises the shared library through its C header only.

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <gtest/gtest.h>
#include <unistd.h>

#include "afanet/afanet.h"

namespace {

namespace fs = std::filesystem;

class CApi : public ::testing::Test {
 protected:
  void SetUp() override {
    ctx_ = afanet_context_create();
    ASSERT_NE(ctx_, nullptr);
    dir_ = fs::temp_directory_path() / ("afanet_capi_" + std::to_string(::getpid()) + "_" +
                                        ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override {
    afanet_context_destroy(ctx_);
    std::error_code ec;
    fs::remove_all(dir_, ec);
  }
  std::string path(const char* name) const { return (dir_ / name).string(); }
  static std::string slurp(const std::string& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
  }

  afanet_context* ctx_ = nullptr;
  fs::path dir_;
};

// Small enough to train in a few seconds.
constexpr const char* kTinyConfig =
    R"({"seed": 7, "data": {"per_class": 4, "backgrounds": 2},
        "pretrain": {"steps": 5}, "train": {"episodes": 3}, "eval": {"episodes": 4}})";

TEST_F(CApi, VersionAndStatusStrings) {
  EXPECT_STRNE(afanet_version(), "");
  EXPECT_STRNE(afanet_status_string(AFANET_ERR_FORMAT), "");
  EXPECT_STRNE(afanet_status_string(static_cast<afanet_status>(99)), "");
  EXPECT_STREQ(afanet_last_error(ctx_), "");
}

TEST_F(CApi, TensorRoundTrip) {
  const uint32_t dims[] = {2, 3};
  const float data[] = {1, 2, 3, 4, 5, 6};
  afanet_tensor* t = nullptr;
  ASSERT_EQ(afanet_tensor_create(ctx_, dims, 2, data, &t), AFANET_OK);
  ASSERT_EQ(afanet_tensor_save(ctx_, t, path("t.ten").c_str()), AFANET_OK);
  afanet_tensor* back = nullptr;
  ASSERT_EQ(afanet_tensor_load(ctx_, path("t.ten").c_str(), &back), AFANET_OK);
  EXPECT_EQ(afanet_tensor_ndim(back), 2u);
  EXPECT_EQ(afanet_tensor_dim(back, 1), 3u);
  ASSERT_EQ(afanet_tensor_numel(back), 6u);
  for (int i = 0; i < 6; ++i) EXPECT_EQ(afanet_tensor_data(back)[i], data[i]);
  afanet_tensor_destroy(t);
  afanet_tensor_destroy(back);
}

TEST_F(CApi, ErrorsAreReportedNotThrown) {
  afanet_tensor* t = nullptr;
  EXPECT_EQ(afanet_tensor_load(ctx_, path("missing.ten").c_str(), &t), AFANET_ERR_IO);
  EXPECT_STRNE(afanet_last_error(ctx_), "");
  std::ofstream(path("bad.ten")) << "nope";
  EXPECT_EQ(afanet_tensor_load(ctx_, path("bad.ten").c_str(), &t), AFANET_ERR_FORMAT);
  EXPECT_EQ(afanet_tensor_create(ctx_, nullptr, 0, nullptr, &t), AFANET_ERR_INVALID_ARGUMENT);
  EXPECT_EQ(afanet_train(ctx_, R"({"unknown": 1})", nullptr, nullptr),
            AFANET_ERR_INVALID_ARGUMENT);
  EXPECT_EQ(afanet_train(ctx_, "{not json", nullptr, nullptr), AFANET_ERR_INVALID_ARGUMENT);
  const uint32_t dims[] = {1};
  ASSERT_EQ(afanet_tensor_create(ctx_, dims, 1, nullptr, &t), AFANET_OK);
  EXPECT_STREQ(afanet_last_error(ctx_), "");
  afanet_tensor_destroy(t);
}

TEST_F(CApi, GenerateDatasetAndEmbeddings) {
  ASSERT_EQ(afanet_gen_dataset(ctx_, 1, 2, 1, path("data").c_str()), AFANET_OK)
      << afanet_last_error(ctx_);
  EXPECT_TRUE(fs::exists(dir_ / "data" / "manifest.json"));
  ASSERT_EQ(afanet_gen_embeddings(ctx_, R"(["dog", "cat"])", 64, 0, path("e.bin").c_str()),
            AFANET_OK)
      << afanet_last_error(ctx_);
  EXPECT_EQ(slurp(path("e.bin")).substr(0, 8), "CLIPEMB1");
  EXPECT_NE(afanet_gen_embeddings(ctx_, R"(["dog", "dog"])", 64, 0, path("f.bin").c_str()),
            AFANET_OK);
}

TEST_F(CApi, TrainIsDeterministicAndEvaluates) {
  ASSERT_EQ(afanet_train(ctx_, kTinyConfig, path("a.ckpt").c_str(), path("a.csv").c_str()),
            AFANET_OK)
      << afanet_last_error(ctx_);
  ASSERT_EQ(afanet_train(ctx_, kTinyConfig, path("b.ckpt").c_str(), nullptr), AFANET_OK);
  EXPECT_EQ(slurp(path("a.ckpt")), slurp(path("b.ckpt")));
  EXPECT_EQ(slurp(path("a.csv")).rfind("step,loss\n", 0), 0u);

  ASSERT_EQ(afanet_evaluate(ctx_, path("a.ckpt").c_str(), nullptr), AFANET_OK)
      << afanet_last_error(ctx_);
  const std::string report = afanet_last_output(ctx_);
  EXPECT_NE(report.find("\"model\""), std::string::npos);
  EXPECT_NE(report.find("\"constant_foreground\""), std::string::npos);

  ASSERT_EQ(afanet_cam_dump(ctx_, path("a.ckpt").c_str(), nullptr, 1, path("cams").c_str()),
            AFANET_OK)
      << afanet_last_error(ctx_);
  EXPECT_FALSE(fs::is_empty(dir_ / "cams"));
}

TEST_F(CApi, AblationEmitsOneRowPerModuleSet) {
  const std::string req = std::string(R"({"config": )") + kTinyConfig +
                          R"(, "modules": ["baseline", "cfm", "cfm+csm"], "seeds": [0]})";
  ASSERT_EQ(afanet_ablate(ctx_, req.c_str(), path("ab.csv").c_str()), AFANET_OK)
      << afanet_last_error(ctx_);
  const std::string csv = slurp(path("ab.csv"));
  EXPECT_EQ(csv, afanet_last_output(ctx_));
  std::size_t lines = 0;
  for (char c : csv) lines += c == '\n';
  EXPECT_EQ(lines, 4u);
  EXPECT_NE(afanet_ablate(ctx_, R"({"modules": ["everything"]})", nullptr), AFANET_OK);
}

TEST_F(CApi, GradcheckSingleSeed) {
  int passed = 0;
  ASSERT_EQ(afanet_gradcheck(ctx_, 1, 0, &passed), AFANET_OK) << afanet_last_error(ctx_);
  EXPECT_EQ(passed, 1);
}

}  // namespace
