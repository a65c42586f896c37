// Copyright 2026 The AFANet Desk Authors
// SPDX-License-Identifier: Apache-2.0

// Command-line front end over the C API.

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "afanet/afanet.h"

namespace {

using nlohmann::json;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Common {
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> fold;
  std::optional<std::size_t> shots;
  std::string config;
  std::string data_dir;
};

void add_common(CLI::App* app, Common& c, bool with_fold = true) {
  app->add_option("--seed", c.seed, "Random seed (overrides the config)");
  if (with_fold) app->add_option("--fold", c.fold, "Held-out fold in [0, 3]");
  app->add_option("--shots", c.shots, "Support images per episode");
  app->add_option("--config", c.config,
                  "Configuration as a JSON file path or an inline JSON object");
  app->add_option("--data", c.data_dir,
                  "Dataset directory from gen-data (default: render in memory)");
}

json load_config(const std::string& arg) {
  if (arg.empty()) return json::object();
  std::string text = arg;
  if (arg.front() != '{') {
    std::ifstream in(arg);
    if (!in) throw UsageError("cannot read config file '" + arg + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    text = ss.str();
  }
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw UsageError(std::string("malformed config: ") + e.what());
  }
  if (!j.is_object()) throw UsageError("config must be a JSON object");
  return j;
}

json merged_config(const Common& c) {
  json j = load_config(c.config);
  if (c.seed) j["seed"] = *c.seed;
  if (c.fold) j["fold"] = *c.fold;
  if (c.shots) j["shots"] = *c.shots;
  if (!c.data_dir.empty()) j["data_dir"] = c.data_dir;
  return j;
}

void set_nested(json& j, const char* section, const char* key, const json& value) {
  if (!j.contains(section)) j[section] = json::object();
  j[section][key] = value;
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) out.push_back(item);
  return out;
}

class Session {
 public:
  Session() : ctx_(afanet_context_create()) {
    if (!ctx_) throw std::runtime_error("cannot allocate library context");
  }
  ~Session() { afanet_context_destroy(ctx_); }
  Session(const Session&) = delete;
  Session& operator=(const Session&) = delete;

  afanet_context* get() { return ctx_; }

  // Prints the library error and returns a process exit code for `status`.
  int check(afanet_status status, const CLI::App* usage) {
    if (status == AFANET_OK) return 0;
    std::cerr << "error: " << afanet_status_string(status) << ": " << afanet_last_error(ctx_)
              << "\n";
    if (status == AFANET_ERR_INVALID_ARGUMENT && usage) std::cerr << usage->help();
    return status == AFANET_ERR_INVALID_ARGUMENT ? 2 : 1;
  }
  std::string output() const { return afanet_last_output(ctx_); }

 private:
  afanet_context* ctx_;
};

void write_or_print(const std::string& path, const std::string& text) {
  if (path.empty()) {
    std::cout << text;
    if (!text.empty() && text.back() != '\n') std::cout << "\n";
    return;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  out << text;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Desk-scale weakly-supervised few-shot segmentation"};
  app.require_subcommand(1);
  app.set_version_flag("--version", afanet_version());

  // gen-data
  auto* gen_data = app.add_subcommand("gen-data", "Render the synthetic shape dataset");
  std::string gd_out;
  std::uint64_t gd_seed = 0;
  std::uint32_t gd_per_class = 40, gd_backgrounds = 40;
  gen_data->add_option("--out", gd_out, "Output directory")->required();
  gen_data->add_option("--seed", gd_seed, "Generator seed");
  gen_data->add_option("--per-class", gd_per_class, "Images per class")->check(CLI::PositiveNumber);
  gen_data->add_option("--backgrounds", gd_backgrounds, "Object-free background images");

  // gen-embeddings
  auto* gen_emb = app.add_subcommand("gen-embeddings", "Write pseudo class embeddings (CLIPEMB1)");
  std::string ge_out, ge_classes;
  std::uint64_t ge_seed = 0;
  std::uint32_t ge_dim = 1024;
  gen_emb->add_option("--out", ge_out, "Output file")->required();
  gen_emb->add_option("--seed", ge_seed, "Embedding seed");
  gen_emb->add_option("--dim", ge_dim, "Embedding dimension (>= 8)");
  gen_emb->add_option("--classes", ge_classes,
                      "Comma-separated class names (default: the dataset classes)");

  // train
  auto* train = app.add_subcommand("train", "Pretrain the backbone and train episodically");
  Common tr;
  add_common(train, tr);
  std::string tr_ckpt, tr_csv;
  std::optional<std::size_t> tr_episodes;
  std::optional<float> tr_alpha, tr_beta;
  std::string tr_modules;
  train->add_option("--checkpoint", tr_ckpt, "Checkpoint output path");
  train->add_option("--loss-csv", tr_csv, "Loss curve output path (default: stdout)");
  train->add_option("--episodes", tr_episodes, "Training episodes");
  train->add_option("--alpha", tr_alpha, "Support loss weight");
  train->add_option("--beta", tr_beta, "Query loss weight");
  train->add_option("--modules", tr_modules, "baseline, cfm, csm or cfm+csm");

  // eval
  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on novel-class episodes");
  Common ev;
  add_common(eval, ev, false);
  std::string ev_ckpt, ev_out;
  std::optional<std::size_t> ev_episodes;
  eval->add_option("--checkpoint", ev_ckpt, "Checkpoint to evaluate")->required();
  eval->add_option("--episodes", ev_episodes, "Evaluation episodes");
  eval->add_option("--out", ev_out, "Report output path (default: stdout)");

  // gradcheck
  auto* grad = app.add_subcommand("gradcheck", "Run the finite-difference gradient suite");
  std::uint32_t gc_seeds = 20;
  std::uint64_t gc_seed = 0;
  grad->add_option("--seeds", gc_seeds, "Number of random seeds")->check(CLI::PositiveNumber);
  grad->add_option("--seed", gc_seed, "First seed");

  // cam-dump
  auto* cam = app.add_subcommand("cam-dump", "Write pseudo-masks and predictions as PGM");
  Common cd;
  add_common(cam, cd, false);
  std::string cd_ckpt, cd_out;
  std::uint32_t cd_per_class = 4;
  cam->add_option("--checkpoint", cd_ckpt, "Trained checkpoint")->required();
  cam->add_option("--out", cd_out, "Output directory")->required();
  cam->add_option("--per-class", cd_per_class, "Images per class");

  // ablate
  auto* ablate = app.add_subcommand("ablate", "Compare module, adapter-size and loss-weight settings");
  Common ab;
  add_common(ablate, ab);
  std::string ab_modules = "baseline,cfm,cfm+csm", ab_sizes, ab_weights, ab_seeds = "0,1,2", ab_out;
  std::optional<std::size_t> ab_episodes, ab_eval;
  ablate->add_option("--modules", ab_modules, "Comma-separated module sets")->capture_default_str();
  ablate->add_option("--adapter-sizes", ab_sizes, "Comma-separated adapter sizes, e.g. 20,25,50");
  ablate->add_option("--alpha-beta", ab_weights, "Comma-separated alpha:beta pairs, e.g. 1:1,0.5:1");
  ablate->add_option("--seeds", ab_seeds, "Comma-separated seeds")->capture_default_str();
  ablate->add_option("--episodes", ab_episodes, "Training episodes per run");
  ablate->add_option("--eval-episodes", ab_eval, "Evaluation episodes per run");
  ablate->add_option("--out", ab_out, "CSV output path (default: stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  CLI::App* active = app.get_subcommands().front();
  try {
    Session s;
    if (active == gen_data) {
      const int rc = s.check(
          afanet_gen_dataset(s.get(), gd_seed, gd_per_class, gd_backgrounds, gd_out.c_str()),
          active);
      if (rc == 0) std::cout << s.output() << "\n";
      return rc;
    }
    if (active == gen_emb) {
      std::string names_json;
      if (!ge_classes.empty()) names_json = json(split_list(ge_classes)).dump();
      const int rc = s.check(afanet_gen_embeddings(s.get(), names_json.empty() ? nullptr
                                                                                : names_json.c_str(),
                                                   ge_dim, ge_seed, ge_out.c_str()),
                             active);
      if (rc == 0) std::cout << s.output() << "\n";
      return rc;
    }
    if (active == train) {
      json cfg = merged_config(tr);
      if (tr_episodes) set_nested(cfg, "train", "episodes", *tr_episodes);
      if (tr_alpha) set_nested(cfg, "train", "alpha", *tr_alpha);
      if (tr_beta) set_nested(cfg, "train", "beta", *tr_beta);
      if (!tr_modules.empty()) {
        if (tr_modules != "baseline" && tr_modules != "cfm" && tr_modules != "csm" &&
            tr_modules != "cfm+csm")
          throw UsageError("unknown module set '" + tr_modules + "'");
        set_nested(cfg, "model", "use_cfm", tr_modules.find("cfm") != std::string::npos);
        set_nested(cfg, "model", "use_csm", tr_modules.find("csm") != std::string::npos);
      }
      const std::string text = cfg.dump();
      const int rc = s.check(afanet_train(s.get(), text.c_str(), tr_ckpt.c_str(), tr_csv.c_str()),
                             active);
      if (rc == 0 && tr_csv.empty()) std::cout << s.output();
      return rc;
    }
    if (active == eval) {
      json cfg = merged_config(ev);
      if (ev_episodes) set_nested(cfg, "eval", "episodes", *ev_episodes);
      const std::string text = cfg.dump();
      const int rc = s.check(afanet_evaluate(s.get(), ev_ckpt.c_str(), text.c_str()), active);
      if (rc == 0) write_or_print(ev_out, s.output());
      return rc;
    }
    if (active == grad) {
      int passed = 0;
      const int rc = s.check(afanet_gradcheck(s.get(), gc_seeds, gc_seed, &passed), active);
      if (rc != 0) return rc;
      std::cout << s.output() << "\n";
      return passed ? 0 : 1;
    }
    if (active == cam) {
      const std::string text = merged_config(cd).dump();
      const int rc = s.check(
          afanet_cam_dump(s.get(), cd_ckpt.c_str(), text.c_str(), cd_per_class, cd_out.c_str()),
          active);
      if (rc == 0) std::cout << s.output() << "\n";
      return rc;
    }
    if (active == ablate) {
      json cfg = merged_config(ab);
      if (ab_episodes) set_nested(cfg, "train", "episodes", *ab_episodes);
      if (ab_eval) set_nested(cfg, "eval", "episodes", *ab_eval);
      json req = {{"config", cfg}, {"modules", split_list(ab_modules)}};
      try {
        json seeds = json::array();
        for (const auto& v : split_list(ab_seeds)) seeds.push_back(std::stoull(v));
        req["seeds"] = seeds;
        if (!ab_sizes.empty()) {
          json sizes = json::array();
          for (const auto& v : split_list(ab_sizes)) sizes.push_back(std::stoul(v));
          req["adapter_sizes"] = sizes;
        }
        if (!ab_weights.empty()) {
          json pairs = json::array();
          for (const auto& v : split_list(ab_weights)) {
            const auto colon = v.find(':');
            if (colon == std::string::npos) throw UsageError("alpha:beta pair expected, got " + v);
            pairs.push_back({std::stof(v.substr(0, colon)), std::stof(v.substr(colon + 1))});
          }
          req["alpha_betas"] = pairs;
        }
      } catch (const std::logic_error& e) {
        throw UsageError(std::string("malformed list value: ") + e.what());
      }
      const std::string text = req.dump();
      const int rc = s.check(afanet_ablate(s.get(), text.c_str(), ab_out.c_str()), active);
      if (rc == 0 && ab_out.empty()) std::cout << s.output();
      return rc;
    }
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n" << active->help();
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
