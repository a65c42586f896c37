// Copyright 2026 The AFANet Desk Authors
// SPDX-License-Identifier: Apache-2.0

#include "afanet/afanet.h"

#include <algorithm>
#include <exception>
#include <memory>
#include <new>
#include <string>

#include <nlohmann/json.hpp>

#include "afanet/data.hpp"
#include "afanet/gradient_suite.hpp"
#include "afanet/io.hpp"
#include "afanet/pipeline.hpp"

struct afanet_context {
  std::string error;
  std::string output;
};

struct afanet_tensor {
  afanet::Tensor value;
};

namespace {

using afanet::Error;
using afanet::ErrorCode;
using nlohmann::json;

// Runs `body`, translating exceptions into status codes and messages.
template <typename Body>
afanet_status guarded(afanet_context* ctx, Body&& body) {
  if (ctx == nullptr) return AFANET_ERR_INVALID_ARGUMENT;
  ctx->error.clear();
  ctx->output.clear();
  try {
    body();
    return AFANET_OK;
  } catch (const Error& e) {
    ctx->error = e.what();
    return static_cast<afanet_status>(e.code());
  } catch (const json::exception& e) {
    ctx->error = std::string("invalid JSON: ") + e.what();
    return AFANET_ERR_INVALID_ARGUMENT;
  } catch (const std::bad_alloc&) {
    ctx->error = "out of memory";
    return AFANET_ERR_INTERNAL;
  } catch (const std::exception& e) {
    ctx->error = e.what();
    return AFANET_ERR_INTERNAL;
  } catch (...) {
    ctx->error = "unknown error";
    return AFANET_ERR_INTERNAL;
  }
}

std::string require(const char* s, const char* what) {
  if (s == nullptr || *s == '\0') afanet::throw_invalid(std::string(what) + " is required");
  return s;
}

afanet::pipeline::RunConfig config_from(const char* config_json) {
  return afanet::pipeline::parse_config(config_json ? config_json : "");
}

void write_text(const char* path, const std::string& text) {
  if (path != nullptr && *path != '\0')
    afanet::io::write_file(path, afanet::io::Bytes(text.begin(), text.end()));
}

}  // namespace

extern "C" {

const char* afanet_version(void) { return "0.1.0"; }

const char* afanet_status_string(afanet_status status) {
  switch (status) {
    case AFANET_OK: return "ok";
    case AFANET_ERR_INVALID_ARGUMENT: return "invalid argument";
    case AFANET_ERR_SHAPE: return "shape error";
    case AFANET_ERR_IO: return "i/o error";
    case AFANET_ERR_FORMAT: return "format error";
    case AFANET_ERR_NUMERIC: return "numeric error";
    case AFANET_ERR_INTERNAL: return "internal error";
  }
  return "unknown status";
}

afanet_context* afanet_context_create(void) { return new (std::nothrow) afanet_context(); }

void afanet_context_destroy(afanet_context* ctx) { delete ctx; }

const char* afanet_last_error(const afanet_context* ctx) {
  return ctx ? ctx->error.c_str() : "null context";
}

const char* afanet_last_output(const afanet_context* ctx) {
  return ctx ? ctx->output.c_str() : "";
}

afanet_status afanet_gen_dataset(afanet_context* ctx, uint64_t seed, uint32_t per_class,
                                 uint32_t backgrounds, const char* out_dir) {
  return guarded(ctx, [&] {
    afanet::data::GenOptions opt;
    opt.seed = seed;
    opt.per_class = per_class;
    opt.backgrounds = backgrounds;
    const auto ds = afanet::data::gen_dataset(opt, require(out_dir, "output directory"));
    ctx->output = json{{"samples", ds.samples.size()},
                       {"backgrounds", ds.backgrounds.size()},
                       {"classes", ds.class_names}}
                      .dump();
  });
}

afanet_status afanet_gen_embeddings(afanet_context* ctx, const char* class_names_json,
                                    uint32_t dim, uint64_t seed, const char* out_path) {
  return guarded(ctx, [&] {
    std::vector<std::string> names = afanet::data::shape_class_names();
    if (class_names_json != nullptr) {
      const json j = json::parse(class_names_json);
      if (!j.is_array()) afanet::throw_invalid("class names must be a JSON array of strings");
      names = j.get<std::vector<std::string>>();
    }
    const auto table = afanet::data::gen_pseudo_embeddings(names, dim, seed);
    afanet::io::save_embeddings(require(out_path, "output path"), table);
    ctx->output = json{{"classes", table.class_names}, {"dim", table.dim}}.dump();
  });
}

afanet_status afanet_train(afanet_context* ctx, const char* config_json,
                           const char* checkpoint_out, const char* loss_csv_out) {
  return guarded(ctx, [&] {
    const auto cfg = config_from(config_json);
    const auto outcome = afanet::pipeline::run_train(cfg);
    if (checkpoint_out != nullptr && *checkpoint_out != '\0')
      afanet::io::save_checkpoint(checkpoint_out, outcome.checkpoint);
    ctx->output = afanet::episodic::loss_csv(outcome.losses);
    write_text(loss_csv_out, ctx->output);
  });
}

afanet_status afanet_evaluate(afanet_context* ctx, const char* checkpoint_path,
                              const char* config_json) {
  return guarded(ctx, [&] {
    const auto ckpt = afanet::io::load_checkpoint(require(checkpoint_path, "checkpoint path"));
    std::vector<std::string> names;
    const auto report = afanet::pipeline::run_eval(ckpt, config_from(config_json), &names);
    ctx->output = report.to_json(names);
  });
}

afanet_status afanet_gradcheck(afanet_context* ctx, uint32_t seeds, uint64_t base_seed,
                               int* all_passed) {
  return guarded(ctx, [&] {
    if (seeds == 0) afanet::throw_invalid("gradcheck: seeds must be positive");
    afanet::GradientSuiteOptions opt;
    opt.seeds = seeds;
    opt.base_seed = base_seed;
    const auto cases = afanet::run_gradient_suite(opt);
    bool ok = true;
    json failures = json::array();
    json worst = json::object();
    for (const auto& c : cases) {
      const double err = c.report.max_rel_error();
      if (!worst.contains(c.name) || worst[c.name].get<double>() < err) worst[c.name] = err;
      if (!c.report.passed) {
        ok = false;
        failures.push_back({{"case", c.name}, {"seed", c.seed}, {"message", c.report.message}});
      }
    }
    if (all_passed) *all_passed = ok ? 1 : 0;
    ctx->output = json{{"cases", cases.size()},
                       {"passed", ok},
                       {"max_rel_error", worst},
                       {"failures", failures}}
                      .dump(2);
  });
}

afanet_status afanet_cam_dump(afanet_context* ctx, const char* checkpoint_path,
                              const char* config_json, uint32_t per_class, const char* out_dir) {
  return guarded(ctx, [&] {
    const auto ckpt = afanet::io::load_checkpoint(require(checkpoint_path, "checkpoint path"));
    const std::size_t n = afanet::pipeline::run_cam_dump(ckpt, config_from(config_json), per_class,
                                                         require(out_dir, "output directory"));
    ctx->output = json{{"images", n}}.dump();
  });
}

afanet_status afanet_ablate(afanet_context* ctx, const char* request_json, const char* csv_out) {
  return guarded(ctx, [&] {
    const json j = json::parse(request_json ? request_json : "{}");
    if (!j.is_object()) afanet::throw_invalid("ablation request must be a JSON object");
    afanet::pipeline::AblationRequest req;
    for (const auto& [key, value] : j.items()) {
      if (key == "config") {
        req.base = afanet::pipeline::parse_config(value.dump());
      } else if (key == "modules") {
        req.modules = value.get<std::vector<std::string>>();
      } else if (key == "adapter_sizes") {
        req.adapter_sizes = value.get<std::vector<std::size_t>>();
      } else if (key == "alpha_betas") {
        req.alpha_betas = value.get<std::vector<std::pair<float, float>>>();
      } else if (key == "seeds") {
        req.seeds = value.get<std::vector<std::uint64_t>>();
      } else {
        afanet::throw_invalid("ablation request: unknown field '" + key + "'");
      }
    }
    for (const auto& m : req.modules) {
      afanet::model::ModelConfig probe;
      afanet::pipeline::apply_modules(probe, m);
    }
    const auto rows = afanet::pipeline::run_ablation(req);
    ctx->output = afanet::pipeline::ablation_csv(rows, req.seeds);
    write_text(csv_out, ctx->output);
  });
}

afanet_status afanet_tensor_create(afanet_context* ctx, const uint32_t* dims, uint32_t ndim,
                                   const float* data, afanet_tensor** out) {
  return guarded(ctx, [&] {
    if (out == nullptr || dims == nullptr || ndim == 0)
      afanet::throw_invalid("tensor_create: dims and output are required");
    afanet::Shape shape(dims, dims + ndim);
    auto t = std::make_unique<afanet_tensor>();
    t->value = afanet::Tensor(shape);
    if (data != nullptr) std::copy(data, data + t->value.numel(), t->value.data().begin());
    *out = t.release();
  });
}

afanet_status afanet_tensor_load(afanet_context* ctx, const char* path, afanet_tensor** out) {
  return guarded(ctx, [&] {
    if (out == nullptr) afanet::throw_invalid("tensor_load: output is required");
    auto t = std::make_unique<afanet_tensor>();
    t->value = afanet::io::load_tensor(require(path, "tensor path"));
    *out = t.release();
  });
}

afanet_status afanet_tensor_save(afanet_context* ctx, const afanet_tensor* tensor,
                                 const char* path) {
  return guarded(ctx, [&] {
    if (tensor == nullptr) afanet::throw_invalid("tensor_save: tensor is required");
    afanet::io::save_tensor(require(path, "tensor path"), tensor->value);
  });
}

uint32_t afanet_tensor_ndim(const afanet_tensor* tensor) {
  return tensor ? static_cast<uint32_t>(tensor->value.rank()) : 0;
}

uint32_t afanet_tensor_dim(const afanet_tensor* tensor, uint32_t axis) {
  if (tensor == nullptr || axis >= tensor->value.rank()) return 0;
  return static_cast<uint32_t>(tensor->value.dim(axis));
}

size_t afanet_tensor_numel(const afanet_tensor* tensor) {
  return tensor ? tensor->value.numel() : 0;
}

const float* afanet_tensor_data(const afanet_tensor* tensor) {
  return tensor ? tensor->value.data().data() : nullptr;
}

void afanet_tensor_destroy(afanet_tensor* tensor) { delete tensor; }

}  // extern "C"
