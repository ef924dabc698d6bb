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

#include "massact/disrupt.hpp"

#include <algorithm>
#include <cmath>
#include <future>
#include <sstream>

#include "massact/error.hpp"
#include "massact/rng.hpp"

namespace massact {
namespace {

std::vector<double> channel_energy(const Matrix& x) {
  std::vector<double> e(x.cols(), 0.0);
  for (std::size_t n = 0; n < x.rows(); ++n) {
    auto row = x.row(n);
    for (std::size_t c = 0; c < row.size(); ++c) e[c] += static_cast<double>(row[c]) * row[c];
  }
  for (double& v : e) v /= static_cast<double>(std::max<std::size_t>(x.rows(), 1));
  return e;
}

double percent(double value, double reference) {
  if (reference == 0.0) return value == 0.0 ? 100.0 : INFINITY;
  return 100.0 * (value / reference);
}

DisruptionReport assemble_report(const DisruptionSpec& spec, const Matrix& baseline_final,
                                 const Matrix& disrupted_final) {
  DisruptionReport report;
  report.spec = spec;
  report.baseline_final = baseline_final;
  report.disrupted_final = disrupted_final;
  report.latent_rmse =
      baseline_final.bit_equal(disrupted_final) ? 0.0 : rmse(baseline_final, disrupted_final);

  const auto eb = channel_energy(baseline_final);
  const auto ed = channel_energy(disrupted_final);
  double sum_b = 0.0, sum_d = 0.0, change = 0.0;
  for (std::size_t c = 0; c < eb.size(); ++c) {
    sum_b += eb[c];
    sum_d += ed[c];
    change += std::abs(ed[c] - eb[c]);
  }
  report.metrics["energy_ratio"] = percent(sum_d, sum_b);
  report.metrics["rms_ratio"] = percent(std::sqrt(sum_d), std::sqrt(sum_b));
  report.metrics["channel_energy_change"] =
      eb.empty() ? 0.0 : change / static_cast<double>(eb.size());
  return report;
}

}  // namespace

std::string_view to_string(StreamTarget target) {
  switch (target) {
    case StreamTarget::kImage: return "image";
    case StreamTarget::kEncoder: return "encoder";
    case StreamTarget::kBoth: return "both";
  }
  return "both";
}

StreamTarget parse_stream_target(std::string_view name) {
  if (name == "image") return StreamTarget::kImage;
  if (name == "encoder") return StreamTarget::kEncoder;
  if (name == "both") return StreamTarget::kBoth;
  fail(ErrorKind::kConfig, "unknown stream target '" + std::string(name) + "'");
}

bool DisruptionSpec::matches(const PointKey& key) const {
  if (target == StreamTarget::kImage && key.stream != Stream::kImage) return false;
  if (target == StreamTarget::kEncoder && key.stream != Stream::kEncoder) return false;
  if (layers && !layers->contains(key.layer)) return false;
  if (timesteps && !timesteps->contains(key.timestep)) return false;
  return true;
}

void DisruptionSpec::validate(const EngineConfig& config) const {
  if (k < 0 || k > config.width) {
    fail(ErrorKind::kRange, "disruption k=" + std::to_string(k) + " outside [0, width]");
  }
  if (layers) {
    for (int l : *layers) {
      if (l < 0 || l >= config.depth) fail(ErrorKind::kRange, "disruption layer out of range");
    }
  }
  if (timesteps) {
    for (int t : *timesteps) {
      if (t < 0 || t >= config.steps) fail(ErrorKind::kRange, "disruption timestep out of range");
    }
  }
}

HookFn disrupt_hook(const DisruptionSpec& spec, ScoreProvider provider) {
  if (!provider) provider = [](const ActivationTensor& x) { return channel_means(x); };
  return [spec, provider = std::move(provider)](ActivationTensor x) {
    if (spec.k == 0 || x.data.rows() == 0 || !spec.matches(x.key())) return x;
    const ChannelScore score = provider(x);
    std::optional<std::uint64_t> seed;
    if (spec.criterion == ChannelCriterion::kRandom) {
      seed = derive_seed(spec.seed, {static_cast<std::uint64_t>(x.layer),
                                     static_cast<std::uint64_t>(x.timestep),
                                     static_cast<std::uint64_t>(x.stream)});
    }
    const ChannelSelection sel = select_channels(score, spec.k, spec.criterion, seed);
    const ChannelIndicator m =
        make_indicator(sel, static_cast<int>(x.data.cols()), Polarity::kZeroSelected);
    for (std::size_t n = 0; n < x.data.rows(); ++n) {
      auto row = x.data.row(n);
      for (std::size_t c = 0; c < row.size(); ++c) {
        if (!m.bits[c]) row[c] = 0.0f;
      }
    }
    return x;
  };
}

DisruptionReport run_disruption(const Engine& engine, const Trajectory& baseline,
                                const DisruptionSpec& spec) {
  spec.validate(engine.config());
  const std::vector<HookFn> hooks{disrupt_hook(spec)};
  const Trajectory disrupted = engine.sample(baseline.prompt, CaptureSpec::nothing(), hooks);
  return assemble_report(spec, baseline.final_latent, disrupted.final_latent);
}

DisruptionReport run_disruption(const Engine& engine, const std::vector<int>& prompt,
                                const DisruptionSpec& spec) {
  spec.validate(engine.config());
  auto baseline = std::async(std::launch::async,
                             [&] { return engine.sample(prompt, CaptureSpec::nothing()); });
  const std::vector<HookFn> hooks{disrupt_hook(spec)};
  const Trajectory disrupted = engine.sample(prompt, CaptureSpec::nothing(), hooks);
  return assemble_report(spec, baseline.get().final_latent, disrupted.final_latent);
}

std::string format_index_set(const std::optional<std::set<int>>& set) {
  if (!set) return "all";
  std::string out;
  for (int v : *set) {
    if (!out.empty()) out += ';';
    out += std::to_string(v);
  }
  return out;
}

std::string disruption_csv(const std::vector<DisruptionReport>& reports) {
  std::ostringstream os;
  os.precision(17);
  os << "k,criterion,stream,layers,timesteps,latent_rmse,energy_ratio\n";
  for (const auto& r : reports) {
    os << r.spec.k << ',' << to_string(r.spec.criterion) << ',' << to_string(r.spec.target) << ','
       << format_index_set(r.spec.layers) << ',' << format_index_set(r.spec.timesteps) << ','
       << r.latent_rmse << ',' << r.metrics.at("energy_ratio") << '\n';
  }
  return os.str();
}

}  // namespace massact
