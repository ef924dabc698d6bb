// Copyright 2026 The massact Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "massact/config.hpp"

#include <algorithm>
#include <set>

#include "massact/error.hpp"
#include "massact/io.hpp"

namespace massact::config {
namespace {

// Reads one JSON object and rejects keys that were never asked for.
class Section {
 public:
  Section(const Json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j_.is_object()) fail(ErrorKind::kConfig, where_ + ": expected an object");
  }

  std::string path(std::string_view key) const { return where_ + "." + std::string(key); }

  const Json* raw(std::string_view key) {
    seen_.insert(std::string(key));
    auto it = j_.find(std::string(key));
    return it == j_.end() ? nullptr : &*it;
  }

  template <typename T>
  std::optional<T> opt(std::string_view key) {
    const Json* v = raw(key);
    if (!v) return std::nullopt;
    try {
      return v->get<T>();
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorKind::kConfig, path(key) + ": wrong type (" + e.what() + ")");
    }
  }

  template <typename T>
  T get(std::string_view key, T fallback) {
    return opt<T>(key).value_or(std::move(fallback));
  }

  template <typename T>
  T require(std::string_view key) {
    auto v = opt<T>(key);
    if (!v) fail(ErrorKind::kConfig, path(key) + ": required key is missing");
    return *v;
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!seen_.contains(it.key())) fail(ErrorKind::kConfig, path(it.key()) + ": unknown key");
    }
  }

 private:
  const Json& j_;
  std::string where_;
  std::set<std::string> seen_;
};

template <typename F>
auto rethrow_as_config(const std::string& where, F&& f) {
  try {
    return f();
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::kConfig) throw;
    throw Error(ErrorKind::kConfig, where + ": " + e.what());
  }
}

// "all" or a list of indices.
std::optional<std::set<int>> index_set(Section& s, std::string_view key) {
  const Json* v = s.raw(key);
  if (!v || (v->is_string() && v->get<std::string>() == "all")) return std::nullopt;
  if (!v->is_array()) fail(ErrorKind::kConfig, s.path(key) + ": expected \"all\" or a list");
  std::set<int> out;
  for (const auto& e : *v) {
    if (!e.is_number_integer()) fail(ErrorKind::kConfig, s.path(key) + ": expected integers");
    out.insert(e.get<int>());
  }
  return out;
}

void check_range(const std::optional<std::set<int>>& set, int limit, const std::string& where) {
  if (!set) return;
  for (int v : *set) {
    if (v < 0 || v >= limit) {
      fail(ErrorKind::kConfig, where + ": index " + std::to_string(v) + " outside [0, " +
                                   std::to_string(limit) + ")");
    }
  }
}

template <typename E, typename Parse>
std::vector<E> enum_list(Section& s, std::string_view key, Parse parse) {
  const auto names = s.opt<std::vector<std::string>>(key);
  std::vector<E> out;
  if (!names) return out;
  for (const auto& n : *names) out.push_back(rethrow_as_config(s.path(key), [&] { return parse(n); }));
  return out;
}

void read_plan(Section& s, TransportPlan& plan) {
  if (const Json* layers = s.raw("layers")) {
    plan.regime.reset();
    plan.all_layers = false;
    plan.layers.clear();
    if (layers->is_string()) {
      const auto name = layers->get<std::string>();
      if (name == "all") {
        plan.all_layers = true;
      } else {
        plan.regime = rethrow_as_config(s.path("layers"), [&] { return parse_regime(name); });
      }
    } else if (layers->is_array()) {
      for (const auto& e : *layers) {
        if (!e.is_number_integer()) fail(ErrorKind::kConfig, s.path("layers") + ": expected integers");
        plan.layers.push_back(e.get<int>());
      }
    } else {
      fail(ErrorKind::kConfig, s.path("layers") + ": expected a regime name, \"all\" or a list");
    }
  }
  plan.image_k = s.get("image_k", plan.image_k);
  plan.encoder_k = s.get("encoder_k", plan.encoder_k);
  if (auto c = s.opt<std::string>("channel_criterion")) {
    plan.channel_criterion =
        rethrow_as_config(s.path("channel_criterion"), [&] { return parse_channel_criterion(*c); });
  }
  if (auto c = s.opt<std::string>("mask_criterion")) {
    plan.mask_criterion =
        rethrow_as_config(s.path("mask_criterion"), [&] { return parse_mask_criterion(*c); });
  }
  plan.use_spatial_mask = s.get("use_spatial_mask", plan.use_spatial_mask);
  plan.mask_k = s.get("mask_k", plan.mask_k);
  if (auto m = s.opt<std::string>("mask_from")) {
    plan.mask_from = rethrow_as_config(s.path("mask_from"), [&] { return parse_mask_from(*m); });
  }
  plan.seed = s.get<std::uint64_t>("seed", plan.seed);
  if (plan.image_k < 0) fail(ErrorKind::kConfig, s.path("image_k") + ": must be >= 0");
  if (plan.encoder_k < 0) fail(ErrorKind::kConfig, s.path("encoder_k") + ": must be >= 0");
  if (plan.mask_k < 1) fail(ErrorKind::kConfig, s.path("mask_k") + ": must be >= 1");
}

std::vector<int> read_foreground(Section& s, const EngineConfig& engine) {
  const Json* v = s.raw("foreground");
  if (!v) fail(ErrorKind::kConfig, s.path("foreground") + ": required key is missing");
  std::vector<int> out;
  if (v->is_array()) {
    for (const auto& e : *v) {
      if (!e.is_number_integer()) fail(ErrorKind::kConfig, s.path("foreground") + ": expected integers");
      out.push_back(e.get<int>());
    }
    return out;
  }
  if (v->is_object() && v->contains("rect") && v->size() == 1) {
    const auto r = v->at("rect");
    if (!r.is_array() || r.size() != 4) {
      fail(ErrorKind::kConfig, s.path("foreground.rect") + ": expected [row0, col0, row1, col1]");
    }
    const int r0 = r[0].get<int>(), c0 = r[1].get<int>(), r1 = r[2].get<int>(), c1 = r[3].get<int>();
    if (r0 < 0 || c0 < 0 || r1 > engine.latent_h || c1 > engine.latent_w || r0 >= r1 || c0 >= c1) {
      fail(ErrorKind::kConfig, s.path("foreground.rect") + ": rectangle outside the latent grid");
    }
    for (int row = r0; row < r1; ++row) {
      for (int col = c0; col < c1; ++col) out.push_back(row * engine.latent_w + col);
    }
    return out;
  }
  fail(ErrorKind::kConfig, s.path("foreground") + ": expected a list or {\"rect\": [...]}");
}

std::vector<int> default_prompt(const EngineConfig& engine) {
  std::vector<int> p(static_cast<std::size_t>(engine.encoder_len));
  for (std::size_t i = 0; i < p.size(); ++i) p[i] = static_cast<int>(i % static_cast<std::size_t>(engine.vocab));
  return p;
}

void check_prompt(const std::vector<int>& prompt, const EngineConfig& engine, const std::string& where) {
  if (prompt.size() != static_cast<std::size_t>(engine.encoder_len)) {
    fail(ErrorKind::kConfig, where + ": length " + std::to_string(prompt.size()) +
                                 " != engine.encoder_len " + std::to_string(engine.encoder_len));
  }
  for (int id : prompt) {
    if (id < 0 || id >= engine.vocab) {
      fail(ErrorKind::kConfig, where + ": token id " + std::to_string(id) + " outside [0, vocab)");
    }
  }
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  std::filesystem::path path(p);
  return path.is_absolute() ? path : base / path;
}

}  // namespace

Json to_json(const EngineConfig& c) {
  return Json{{"depth", c.depth},        {"width", c.width},
              {"heads", c.heads},        {"latent_h", c.latent_h},
              {"latent_w", c.latent_w},  {"encoder_len", c.encoder_len},
              {"steps", c.steps},        {"seed", c.seed},
              {"variant", std::string(to_string(c.variant))}, {"vocab", c.vocab}};
}

EngineConfig engine_from_json(const Json& j, const std::string& where) {
  Section s(j, where);
  EngineConfig c;
  c.depth = s.get("depth", c.depth);
  c.width = s.get("width", c.width);
  c.heads = s.get("heads", c.heads);
  c.latent_h = s.get("latent_h", c.latent_h);
  c.latent_w = s.get("latent_w", c.latent_w);
  c.encoder_len = s.get("encoder_len", c.encoder_len);
  c.steps = s.get("steps", c.steps);
  c.seed = s.get<std::uint64_t>("seed", c.seed);
  c.vocab = s.get("vocab", c.vocab);
  if (auto v = s.opt<std::string>("variant")) {
    c.variant = rethrow_as_config(s.path("variant"), [&] { return parse_variant(*v); });
  }
  s.finish();
  rethrow_as_config(where, [&] {
    c.validate();
    return 0;
  });
  return c;
}

Json to_json(const ChannelScore& score) {
  return Json{{"layer", score.layer},
              {"stream", std::string(to_string(score.stream))},
              {"mu", score.mu},
              {"scores", score.score}};
}

Json to_json(const ChannelSelection& sel, int layer, Stream stream) {
  Json j{{"layer", layer},
         {"stream", std::string(to_string(stream))},
         {"k", sel.k},
         {"criterion", std::string(to_string(sel.criterion))},
         {"indices", sel.indices}};
  if (sel.source) {
    j["scores"] = sel.source->score;
  } else {
    j["scores"] = nullptr;
  }
  return j;
}

Json to_json(const TransportPlan& plan) {
  Json layers;
  if (plan.all_layers) {
    layers = "all";
  } else if (plan.regime) {
    layers = std::string(to_string(*plan.regime));
  } else {
    layers = plan.layers;
  }
  return Json{{"layers", layers},
              {"image_k", plan.image_k},
              {"encoder_k", plan.encoder_k},
              {"channel_criterion", std::string(to_string(plan.channel_criterion))},
              {"mask_criterion", std::string(to_string(plan.mask_criterion))},
              {"use_spatial_mask", plan.use_spatial_mask},
              {"mask_k", plan.mask_k},
              {"mask_from", std::string(to_string(plan.mask_from))},
              {"seed", plan.seed}};
}

TransportPlan plan_from_json(const Json& j, const std::string& where) {
  Section s(j, where);
  TransportPlan plan;
  read_plan(s, plan);
  s.finish();
  return plan;
}

Json to_json(const DisruptionReport& r) {
  Json metrics = Json::object();
  for (const auto& [k, v] : r.metrics) metrics[k] = v;
  return Json{{"k", r.spec.k},
              {"criterion", std::string(to_string(r.spec.criterion))},
              {"stream", std::string(to_string(r.spec.target))},
              {"layers", format_index_set(r.spec.layers)},
              {"timesteps", format_index_set(r.spec.timesteps)},
              {"latent_rmse", r.latent_rmse},
              {"metrics", metrics}};
}

Json to_json(const SweepRow& row) {
  return Json{{"regime", row.regime},
              {"image_k", row.image_k},
              {"encoder_k", row.encoder_k},
              {"mask_criterion", std::string(to_string(row.mask_criterion))},
              {"delta_S", row.delta_source},
              {"delta_T", row.delta_target},
              {"delta_diff", row.delta_diff}};
}

Json to_json(const MetricRow& row) {
  return Json{{"layer", row.layer},
              {"k", row.k},
              {"channel_criterion", std::string(to_string(row.channel_criterion))},
              {"mask_criterion", std::string(to_string(row.mask_criterion))},
              {"iou", row.metrics.iou},
              {"miou", row.metrics.miou},
              {"mae", row.metrics.mae},
              {"biou", row.metrics.biou}};
}

PlantSpec PlantSection::spec(const EngineConfig& engine) const {
  return PlantSpec{engine, foreground, channels, amplitude, noise, seed};
}

std::vector<std::string> preset_names() {
  return {"paper-default-mask", "paper-default-transport", "sana-transport"};
}

Json preset(std::string_view name) {
  if (name == "paper-default-mask") return Json{{"segment", {{"k", kDefaultMaskChannels}}}};
  if (name == "paper-default-transport") {
    return Json{{"transport", {{"layers", "middle"}, {"image_k", kDefaultImageK}, {"encoder_k", 0}}}};
  }
  if (name == "sana-transport") {
    return Json{{"transport", {{"layers", "middle"}, {"image_k", kCompactImageK}, {"encoder_k", 0}}}};
  }
  fail(ErrorKind::kConfig, "preset: unknown preset '" + std::string(name) + "'");
}

RunConfig parse_run_config(const Json& document, std::optional<std::string> preset_name,
                           std::optional<std::uint64_t> seed_override,
                           const std::filesystem::path& base_dir) {
  if (!document.is_object()) fail(ErrorKind::kConfig, "config: top level must be an object");
  Json doc = document;
  if (!preset_name && doc.contains("preset")) {
    if (!doc["preset"].is_string()) fail(ErrorKind::kConfig, "preset: expected a string");
    preset_name = doc["preset"].get<std::string>();
  }
  doc.erase("preset");
  if (preset_name) {
    Json merged = preset(*preset_name);
    merged.merge_patch(doc);
    doc = std::move(merged);
  }

  Section root(doc, "config");
  RunConfig rc;
  const Json* engine = root.raw("engine");
  if (!engine) fail(ErrorKind::kConfig, "config.engine: required key is missing");
  rc.engine = engine_from_json(*engine, "engine");
  if (seed_override) rc.engine.seed = *seed_override;

  rc.prompt = root.get("prompt", default_prompt(rc.engine));
  check_prompt(rc.prompt, rc.engine, "prompt");

  if (const Json* pj = root.raw("plant")) {
    Section s(*pj, "plant");
    PlantSection plant;
    plant.foreground = read_foreground(s, rc.engine);
    plant.channels = s.require<std::vector<int>>("channels");
    plant.amplitude = s.get("amplitude", plant.amplitude);
    plant.noise = s.get("noise", plant.noise);
    plant.seed = s.get<std::uint64_t>("seed", plant.seed);
    const auto mode = s.get<std::string>("mode", "synthetic");
    if (mode != "synthetic" && mode != "engine") {
      fail(ErrorKind::kConfig, "plant.mode: expected \"synthetic\" or \"engine\"");
    }
    plant.synthetic = mode == "synthetic";
    s.finish();
    rethrow_as_config("plant", [&] {
      plant.spec(rc.engine).validate();
      return 0;
    });
    rc.plant = std::move(plant);
  }

  if (const Json* cj = root.raw("capture")) {
    if (cj->is_string() && cj->get<std::string>() == "all") {
      rc.capture_all = true;
    } else if (cj->is_array()) {
      rc.capture_all = false;
      for (const auto& e : *cj) {
        if (!e.is_array() || e.size() != 3 || !e[0].is_number_integer() ||
            !e[1].is_number_integer() || !e[2].is_string()) {
          fail(ErrorKind::kConfig, "config.capture: entries must be [layer, timestep, stream]");
        }
        const PointKey key{e[0].get<int>(), e[1].get<int>(),
                           rethrow_as_config("config.capture",
                                             [&] { return parse_stream(e[2].get<std::string>()); })};
        if (key.layer < 0 || key.layer >= rc.engine.depth || key.timestep < 0 ||
            key.timestep >= rc.engine.steps) {
          fail(ErrorKind::kConfig, "config.capture: point " + describe(key) + " out of range");
        }
        rc.capture.insert(key);
      }
    } else {
      fail(ErrorKind::kConfig, "config.capture: expected \"all\" or a list");
    }
  }

  if (const Json* dj = root.raw("disrupt")) {
    Section s(*dj, "disrupt");
    auto& spec = rc.disrupt.spec;
    if (auto v = s.opt<std::string>("stream")) {
      spec.target = rethrow_as_config(s.path("stream"), [&] { return parse_stream_target(*v); });
    }
    if (auto v = s.opt<std::string>("criterion")) {
      spec.criterion = rethrow_as_config(s.path("criterion"), [&] { return parse_channel_criterion(*v); });
    }
    spec.k = s.get("k", spec.k);
    spec.layers = index_set(s, "layers");
    spec.timesteps = index_set(s, "timesteps");
    spec.seed = s.get<std::uint64_t>("seed", spec.seed);
    rc.disrupt.ks = s.get("ks", std::vector<int>{});
    rc.disrupt.criteria = enum_list<ChannelCriterion>(s, "criteria", parse_channel_criterion);
    s.finish();
    if (rc.disrupt.ks.empty()) rc.disrupt.ks = {spec.k};
    if (rc.disrupt.criteria.empty()) rc.disrupt.criteria = {spec.criterion};
    for (int k : rc.disrupt.ks) {
      if (k < 0 || k > rc.engine.width) {
        fail(ErrorKind::kConfig, "disrupt.ks: k=" + std::to_string(k) + " outside [0, engine.width]");
      }
    }
    check_range(spec.layers, rc.engine.depth, "disrupt.layers");
    check_range(spec.timesteps, rc.engine.steps, "disrupt.timesteps");
  }

  if (const Json* sj = root.raw("segment")) {
    Section s(*sj, "segment");
    auto& seg = rc.segment;
    if (auto p = s.opt<std::string>("dump")) seg.dump = resolve(base_dir, *p);
    if (auto p = s.opt<std::string>("ground_truth")) seg.ground_truth = resolve(base_dir, *p);
    seg.k = s.get("k", seg.k);
    auto criteria = enum_list<ChannelCriterion>(s, "channel_criteria", parse_channel_criterion);
    if (!criteria.empty()) seg.channel_criteria = std::move(criteria);
    if (auto v = s.opt<std::string>("mask_criterion")) {
      seg.mask_criterion = rethrow_as_config(s.path("mask_criterion"), [&] { return parse_mask_criterion(*v); });
    }
    seg.layers = index_set(s, "layers");
    if (const Json* t = s.raw("timestep")) {
      if (t->is_string() && t->get<std::string>() == "last") {
        seg.timestep.reset();
      } else if (t->is_number_integer()) {
        seg.timestep = t->get<int>();
      } else {
        fail(ErrorKind::kConfig, "segment.timestep: expected \"last\" or an integer");
      }
    }
    seg.band_radius = s.get("band_radius", seg.band_radius);
    seg.seed = s.get<std::uint64_t>("seed", seg.seed);
    seg.cluster_on_normalized = s.get("cluster_on_normalized", seg.cluster_on_normalized);
    s.finish();
    if (seg.k < 1 || seg.k > rc.engine.width) {
      fail(ErrorKind::kConfig, "segment.k: must lie in [1, engine.width]");
    }
    if (seg.band_radius < 0) fail(ErrorKind::kConfig, "segment.band_radius: must be >= 0");
    check_range(seg.layers, rc.engine.depth, "segment.layers");
    if (seg.timestep && (*seg.timestep < 0 || *seg.timestep >= rc.engine.steps)) {
      fail(ErrorKind::kConfig, "segment.timestep: outside [0, engine.steps)");
    }
  }

  if (const Json* tj = root.raw("transport")) {
    Section s(*tj, "transport");
    auto& tr = rc.transport;
    read_plan(s, tr.plan);
    tr.source_prompt = s.get("source_prompt", rc.prompt);
    tr.target_prompt = s.get("target_prompt", rc.prompt);
    if (const Json* sw = s.raw("sweep")) {
      Section g(*sw, "transport.sweep");
      std::vector<Regime> regimes;
      for (const auto& name : g.get("regimes", std::vector<std::string>{"lower", "middle", "upper"})) {
        regimes.push_back(rethrow_as_config(g.path("regimes"), [&] { return parse_regime(name); }));
      }
      const auto image_ks = g.get("image_k", std::vector<int>{tr.plan.image_k});
      const auto encoder_ks = g.get("encoder_k", std::vector<int>{tr.plan.encoder_k});
      g.finish();
      for (Regime r : regimes) {
        for (int ik : image_ks) {
          for (int ek : encoder_ks) tr.sweep.push_back({r, ik, ek});
        }
      }
    }
    s.finish();
    check_prompt(tr.source_prompt, rc.engine, "transport.source_prompt");
    check_prompt(tr.target_prompt, rc.engine, "transport.target_prompt");
    rethrow_as_config("transport", [&] {
      resolve_plan(tr.plan, rc.engine);
      for (const auto& p : tr.sweep) {
        TransportPlan plan = tr.plan;
        plan.regime = p.regime;
        plan.all_layers = false;
        plan.image_k = p.image_k;
        plan.encoder_k = p.encoder_k;
        resolve_plan(plan, rc.engine);
      }
      return 0;
    });
  }

  root.finish();
  return rc;
}

RunConfig load_run_config(const std::filesystem::path& path, std::optional<std::string> preset_name,
                          std::optional<std::uint64_t> seed_override) {
  const std::string text = io::read_text(path);
  Json doc;
  try {
    doc = Json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    fail(ErrorKind::kConfig, path.string() + ": parse error: " + e.what());
  }
  return parse_run_config(doc, std::move(preset_name), seed_override, path.parent_path());
}

}  // namespace massact::config
