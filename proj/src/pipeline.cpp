// Copyright 2026 The AFANet Desk Authors
// SPDX-License-Identifier: Apache-2.0

#include "afanet/pipeline.hpp"

#include <algorithm>
#include <cstdio>
#include <numeric>
#include <set>

#include <nlohmann/json.hpp>

namespace afanet::pipeline {

using nlohmann::json;

namespace {

// Reads fields of one JSON object, rejecting keys nobody asked for.
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw_invalid("config: '" + path_ + "' must be an object");
  }
  ~Section() noexcept(false) {
    if (std::uncaught_exceptions() > 0) return;
    for (const auto& [key, value] : j_.items())
      if (!seen_.count(key)) throw_invalid("config: unknown field '" + qualified(key) + "'");
  }

  template <typename T>
  void get(const std::string& key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception&) {
      throw_invalid("config: field '" + qualified(key) + "' has the wrong type");
    }
  }
  template <typename T>
  void get_positive(const std::string& key, T& out) {
    get(key, out);
    if (!(out > T{})) throw_invalid("config: field '" + qualified(key) + "' must be positive");
  }
  const json* child(const std::string& key) {
    seen_.insert(key);
    return j_.contains(key) ? &j_.at(key) : nullptr;
  }
  std::string qualified(const std::string& key) const {
    return path_.empty() ? key : path_ + "." + key;
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

void apply_json(RunConfig& cfg, const json& root) {
  Section s(root, "");
  s.get("data_dir", cfg.data_dir);
  s.get("embeddings", cfg.embeddings);
  s.get("embedding_seed", cfg.embedding_seed);
  s.get("seed", cfg.seed);
  s.get("fold", cfg.fold);
  s.get_positive("shots", cfg.shots);
  if (const json* d = s.child("data")) {
    Section ds(*d, "data");
    ds.get("seed", cfg.data.seed);
    ds.get_positive("per_class", cfg.data.per_class);
    ds.get("backgrounds", cfg.data.backgrounds);
    ds.get_positive("image_size", cfg.data.image_size);
  }
  if (const json* m = s.child("model")) {
    Section ms(*m, "model");
    ms.get("use_cfm", cfg.model.use_cfm);
    ms.get("use_csm", cfg.model.use_csm);
    ms.get_positive("adapter_size", cfg.model.csm.adapter_size);
    ms.get_positive("text_dim", cfg.model.csm.text_dim);
    ms.get_positive("fam_channels", cfg.model.cfm.fam_channels);
    ms.get_positive("ncd_channels", cfg.model.cfm.ncd_channels);
    ms.get_positive("grid", cfg.model.cfm.grid);
    ms.get_positive("head_hidden", cfg.model.head.hidden);
    ms.get_positive("iterations", cfg.model.head.iterations);
    ms.get("backbone_channels", cfg.model.backbone.channels);
  }
  if (const json* p = s.child("pretrain")) {
    Section ps(*p, "pretrain");
    ps.get("steps", cfg.pretrain.steps);
    ps.get_positive("batch", cfg.pretrain.batch);
    ps.get("background_per_batch", cfg.pretrain.background_per_batch);
    ps.get("lr", cfg.pretrain.lr);
    ps.get("momentum", cfg.pretrain.momentum);
    ps.get("logit_scale", cfg.pretrain.logit_scale);
  }
  if (const json* t = s.child("train")) {
    Section ts(*t, "train");
    ts.get("episodes", cfg.train.episodes);
    ts.get("lr", cfg.train.lr);
    ts.get("momentum", cfg.train.momentum);
    ts.get("alpha", cfg.train.alpha);
    ts.get("beta", cfg.train.beta);
    ts.get("clip_norm", cfg.train.clip_norm);
  }
  if (const json* e = s.child("eval")) {
    Section es(*e, "eval");
    es.get_positive("episodes", cfg.eval_episodes);
  }
}

void finalize(RunConfig& cfg) {
  cfg.model.image_size = cfg.data.image_size;
  cfg.model.head.image_size = cfg.data.image_size;
  cfg.model.csm.grid = cfg.model.cfm.grid;
  cfg.train.seed = cfg.seed;
  cfg.train.shots = cfg.shots;
  if (cfg.train.alpha < 0.0f || cfg.train.beta < 0.0f)
    throw_invalid("config: alpha and beta must be >= 0");
  if (cfg.train.lr < 0.0f || cfg.pretrain.lr < 0.0f) throw_invalid("config: negative learning rate");
  cfg.model.validate();
}

}  // namespace

void merge_config(RunConfig& cfg, const std::string& json_text) {
  json root;
  try {
    root = json::parse(json_text);
  } catch (const json::exception& e) {
    throw_invalid(std::string("config: malformed JSON: ") + e.what());
  }
  apply_json(cfg, root);
  finalize(cfg);
}

RunConfig parse_config(const std::string& json_text) {
  RunConfig cfg;
  merge_config(cfg, json_text.empty() ? "{}" : json_text);
  return cfg;
}

std::string config_to_json(const RunConfig& cfg) {
  const json j = {
      {"data_dir", cfg.data_dir},
      {"embeddings", cfg.embeddings},
      {"embedding_seed", cfg.embedding_seed},
      {"seed", cfg.seed},
      {"fold", cfg.fold},
      {"shots", cfg.shots},
      {"data",
       {{"seed", cfg.data.seed},
        {"per_class", cfg.data.per_class},
        {"backgrounds", cfg.data.backgrounds},
        {"image_size", cfg.data.image_size}}},
      {"model",
       {{"use_cfm", cfg.model.use_cfm},
        {"use_csm", cfg.model.use_csm},
        {"adapter_size", cfg.model.csm.adapter_size},
        {"text_dim", cfg.model.csm.text_dim},
        {"fam_channels", cfg.model.cfm.fam_channels},
        {"ncd_channels", cfg.model.cfm.ncd_channels},
        {"grid", cfg.model.cfm.grid},
        {"head_hidden", cfg.model.head.hidden},
        {"iterations", cfg.model.head.iterations},
        {"backbone_channels", cfg.model.backbone.channels}}},
      {"pretrain",
       {{"steps", cfg.pretrain.steps},
        {"batch", cfg.pretrain.batch},
        {"background_per_batch", cfg.pretrain.background_per_batch},
        {"lr", cfg.pretrain.lr},
        {"momentum", cfg.pretrain.momentum},
        {"logit_scale", cfg.pretrain.logit_scale}}},
      {"train",
       {{"episodes", cfg.train.episodes},
        {"lr", cfg.train.lr},
        {"momentum", cfg.train.momentum},
        {"alpha", cfg.train.alpha},
        {"beta", cfg.train.beta},
        {"clip_norm", cfg.train.clip_norm}}},
      {"eval", {{"episodes", cfg.eval_episodes}}}};
  return j.dump(2);
}

data::Dataset load_or_render(const RunConfig& cfg) {
  data::Dataset ds = cfg.data_dir.empty() ? data::render_dataset(cfg.data)
                                          : data::load_dataset(cfg.data_dir);
  if (ds.image_size != cfg.model.image_size)
    throw_invalid("dataset image size " + std::to_string(ds.image_size) +
                  " differs from the configured " + std::to_string(cfg.model.image_size));
  return ds;
}

csm::ClassEmbeddingTable load_table(const RunConfig& cfg, const std::vector<std::string>& names) {
  if (cfg.embeddings.empty())
    return data::gen_pseudo_embeddings(names, cfg.model.csm.text_dim, cfg.embedding_seed);
  csm::ClassEmbeddingTable file = io::load_embeddings(cfg.embeddings);
  if (file.dim != cfg.model.csm.text_dim)
    throw_invalid("embeddings: dim " + std::to_string(file.dim) + " differs from text_dim " +
                  std::to_string(cfg.model.csm.text_dim));
  // Reorder rows to the dataset's class order.
  csm::ClassEmbeddingTable table;
  table.class_names = names;
  table.dim = file.dim;
  std::vector<float> flat;
  for (const auto& name : names) {
    std::size_t row = file.size();
    for (std::size_t i = 0; i < file.size(); ++i)
      if (file.class_names[i] == name) row = i;
    if (row == file.size()) throw_invalid("embeddings: no vector for class '" + name + "'");
    const Tensor r = file.row(row);
    flat.insert(flat.end(), r.data().begin(), r.data().end());
  }
  table.vectors = Tensor({names.size(), table.dim}, std::move(flat));
  return table;
}

Prepared prepare(const RunConfig& cfg) {
  data::Dataset ds = load_or_render(cfg);
  csm::ClassEmbeddingTable table = load_table(cfg, ds.class_names);
  return prepare(cfg, std::move(ds), std::move(table));
}

Prepared prepare(const RunConfig& cfg, data::Dataset dataset, csm::ClassEmbeddingTable table) {
  Prepared p;
  p.dataset = std::move(dataset);
  p.table = std::move(table);
  p.split = episodic::make_split(cfg.fold, p.dataset.class_names.size());
  p.frozen = model::pretrain(cfg.model, cfg.pretrain, p.dataset, p.split.base, p.table, cfg.seed);
  p.cache = model::build_cache(cfg.model, p.frozen, p.dataset, p.table);
  return p;
}

ParamStore initial_params(const RunConfig& cfg, const ParamStore& frozen) {
  ParamStore params = frozen;
  Rng rng(derive_seed(cfg.seed, "model/init"));
  model::init_model(params, cfg.model, rng);
  return params;
}

TrainOutcome run_train(const RunConfig& cfg) { return run_train(cfg, prepare(cfg)); }

TrainOutcome run_train(const RunConfig& cfg, const Prepared& prep) {
  episodic::TrainResult r = episodic::train(cfg.model, cfg.train, prep.context(), prep.split,
                                            initial_params(cfg, prep.frozen));
  TrainOutcome out;
  out.checkpoint.params = std::move(r.params);
  out.checkpoint.metadata_json = config_to_json(cfg);
  out.losses = std::move(r.losses);
  return out;
}

RunConfig checkpoint_config(const io::Checkpoint& ckpt, const RunConfig& request) {
  RunConfig cfg = parse_config(ckpt.metadata_json);
  cfg.data_dir = request.data_dir;
  cfg.data = request.data;
  cfg.seed = request.seed;
  cfg.shots = request.shots;
  cfg.eval_episodes = request.eval_episodes;
  finalize(cfg);
  return cfg;
}

episodic::EvalReport run_eval(const io::Checkpoint& ckpt, const RunConfig& request,
                              std::vector<std::string>* class_names) {
  const RunConfig cfg = checkpoint_config(ckpt, request);
  const data::Dataset ds = load_or_render(cfg);
  const csm::ClassEmbeddingTable table = load_table(cfg, ds.class_names);
  const episodic::SplitConfig split = episodic::make_split(cfg.fold, ds.class_names.size());
  const std::vector<model::ImageEntry> cache = model::build_cache(cfg.model, ckpt.params, ds, table);
  const episodic::Context ctx{&ds, &cache, &table};
  if (class_names) *class_names = ds.class_names;
  return episodic::evaluate(cfg.model, ckpt.params, ctx, split.novel, cfg.eval_episodes,
                            cfg.shots, cfg.seed);
}

std::size_t run_cam_dump(const io::Checkpoint& ckpt, const RunConfig& request,
                         std::size_t per_class, const std::filesystem::path& out_dir) {
  const RunConfig cfg = checkpoint_config(ckpt, request);
  const data::Dataset ds = load_or_render(cfg);
  const csm::ClassEmbeddingTable table = load_table(cfg, ds.class_names);
  const std::vector<model::ImageEntry> cache = model::build_cache(cfg.model, ckpt.params, ds, table);
  std::size_t written = 0;
  for (std::size_t c = 0; c < ds.class_names.size(); ++c) {
    const std::vector<std::size_t> idx = ds.indices_of(c);
    for (std::size_t i = 0; i < std::min(per_class, idx.size()); ++i) {
      const std::string stem = std::filesystem::path(ds.samples[idx[i]].image_file).stem().string();
      io::write_file(out_dir / ("cam_" + stem + ".pgm"), io::encode_pgm(cache[idx[i]].cam_image));
      if (idx.size() > 1) {
        model::EpisodeInputs in;
        in.class_id = c;
        in.support = {&cache[idx[(i + idx.size() - 1) % idx.size()]]};
        in.query = &cache[idx[i]];
        io::write_file(out_dir / ("pred_" + stem + ".pgm"),
                       io::encode_pgm(model::predict_query(cfg.model, ckpt.params, table, in)));
      }
      ++written;
    }
  }
  return written;
}

double AblationRow::mean_miou() const {
  return std::accumulate(miou_per_seed.begin(), miou_per_seed.end(), 0.0) /
         static_cast<double>(miou_per_seed.size());
}

double AblationRow::mean_constant_foreground() const {
  return std::accumulate(constant_foreground_per_seed.begin(), constant_foreground_per_seed.end(),
                         0.0) /
         static_cast<double>(constant_foreground_per_seed.size());
}

void apply_modules(model::ModelConfig& cfg, const std::string& modules) {
  if (modules == "baseline") {
    cfg.use_cfm = cfg.use_csm = false;
  } else if (modules == "cfm") {
    cfg.use_cfm = true;
    cfg.use_csm = false;
  } else if (modules == "csm") {
    cfg.use_cfm = false;
    cfg.use_csm = true;
  } else if (modules == "cfm+csm") {
    cfg.use_cfm = cfg.use_csm = true;
  } else {
    throw_invalid("unknown module set '" + modules + "' (baseline, cfm, csm, cfm+csm)");
  }
}

std::vector<AblationRow> run_ablation(const AblationRequest& req) {
  if (req.seeds.empty() || req.modules.empty()) throw_invalid("ablate: need seeds and modules");
  std::vector<AblationRow> rows;
  const std::vector<std::size_t> sizes =
      req.adapter_sizes.empty() ? std::vector<std::size_t>{req.base.model.csm.adapter_size}
                                : req.adapter_sizes;
  const std::vector<std::pair<float, float>> weights =
      req.alpha_betas.empty()
          ? std::vector<std::pair<float, float>>{{req.base.train.alpha, req.base.train.beta}}
          : req.alpha_betas;
  std::vector<RunConfig> variants;
  for (const auto& m : req.modules)
    for (std::size_t s : sizes)
      for (const auto& [a, b] : weights) {
        RunConfig v = req.base;
        apply_modules(v.model, m);
        v.model.csm.adapter_size = s;
        v.train.alpha = a;
        v.train.beta = b;
        finalize(v);
        variants.push_back(v);
        AblationRow row;
        row.modules = m;
        row.adapter_size = s;
        row.alpha = a;
        row.beta = b;
        rows.push_back(row);
      }

  const data::Dataset ds = load_or_render(req.base);
  const csm::ClassEmbeddingTable table = load_table(req.base, ds.class_names);
  for (std::uint64_t seed : req.seeds) {
    RunConfig seeded = req.base;
    seeded.seed = seed;
    finalize(seeded);
    const Prepared prep = prepare(seeded, ds, table);
    for (std::size_t i = 0; i < variants.size(); ++i) {
      RunConfig v = variants[i];
      v.seed = seed;
      finalize(v);
      const TrainOutcome t = run_train(v, prep);
      const episodic::EvalReport rep =
          episodic::evaluate(v.model, t.checkpoint.params, prep.context(), prep.split.novel,
                             v.eval_episodes, v.shots, seed);
      rows[i].miou_per_seed.push_back(rep.model.mean);
      rows[i].constant_foreground_per_seed.push_back(rep.constant_foreground.mean);
    }
  }
  return rows;
}

std::string ablation_csv(const std::vector<AblationRow>& rows,
                         const std::vector<std::uint64_t>& seeds) {
  std::string out = "modules,adapter_size,alpha,beta,mean_miou";
  for (std::uint64_t s : seeds) out += ",miou_seed" + std::to_string(s);
  out += ",constant_foreground_miou\n";
  char buf[64];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, ",%zu,%g,%g,%.6f", r.adapter_size, r.alpha, r.beta,
                  r.mean_miou());
    out += r.modules + buf;
    for (double m : r.miou_per_seed) {
      std::snprintf(buf, sizeof buf, ",%.6f", m);
      out += buf;
    }
    std::snprintf(buf, sizeof buf, ",%.6f\n", r.mean_constant_foreground());
    out += buf;
  }
  return out;
}

}  // namespace afanet::pipeline
