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

#include "massact/cli.hpp"

#include <cmath>
#include <filesystem>
#include <iostream>
#include <memory>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "massact/disrupt.hpp"
#include "massact/io.hpp"
#include "massact/rng.hpp"
#include "massact/spatial.hpp"
#include "massact/transport.hpp"

namespace massact::cli {
namespace {

namespace fs = std::filesystem;
using config::Json;
using config::RunConfig;

std::string dump_json(const Json& j) { return j.dump(2) + "\n"; }

void ensure_dir(const fs::path& out) {
  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec) fail(ErrorKind::kIo, out.string() + ": cannot create directory: " + ec.message());
}

CaptureSpec capture_of(const RunConfig& rc) {
  return rc.capture_all ? CaptureSpec::everything() : CaptureSpec{false, rc.capture};
}

// Planted configs run the plant-carrying engine; synthetic generation skips
// the transformer entirely.
Engine engine_of(const RunConfig& rc) {
  if (rc.plant) return planted_engine(rc.plant->spec(rc.engine));
  return init_engine(rc.engine);
}

Trajectory generate_trajectory(const RunConfig& rc) {
  if (rc.plant && rc.plant->synthetic) return planted_sample(rc.plant->spec(rc.engine));
  return engine_of(rc).sample(rc.prompt, capture_of(rc));
}

std::vector<std::uint8_t> plant_mask(const RunConfig& rc) {
  std::vector<std::uint8_t> mask(static_cast<std::size_t>(rc.engine.image_tokens()), 0);
  for (int n : rc.plant->foreground) mask[static_cast<std::size_t>(n)] = 1;
  return mask;
}

// Per-token RMS over channels.
std::vector<double> token_rms(const Matrix& latent) {
  std::vector<double> out(latent.rows(), 0.0);
  for (std::size_t n = 0; n < latent.rows(); ++n) {
    double acc = 0.0;
    for (float v : latent.row(n)) acc += static_cast<double>(v) * v;
    out[n] = latent.cols() ? std::sqrt(acc / static_cast<double>(latent.cols())) : 0.0;
  }
  return out;
}

void print_warnings(const std::vector<std::string>& warnings) {
  for (const auto& w : warnings) std::cerr << Json{{"warning", w}}.dump() << "\n";
}

std::string criterion_tag(ChannelCriterion c) { return std::string(to_string(c)); }

}  // namespace

int exit_code(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::kConfig:
      return kExitConfig;
    case ErrorKind::kIo:
    case ErrorKind::kCrc:
    case ErrorKind::kVersion:
      return kExitIo;
    default:
      return kExitRuntime;
  }
}

std::vector<fs::path> cmd_generate(const RunConfig& rc, const fs::path& out) {
  ensure_dir(out);
  const Trajectory traj = generate_trajectory(rc);
  std::vector<fs::path> written{out / "trajectory.madf", out / "final_latent.pgm"};
  io::write_dump(traj, written[0]);
  const GridShape grid = GridShape::of(rc.engine);
  io::write_graymap(io::heatmap_graymap(token_rms(traj.final_latent), grid), written[1]);
  if (rc.plant) {
    written.push_back(out / "gt_mask.pgm");
    io::write_graymap(io::mask_graymap(plant_mask(rc), grid), written.back());
  }
  written.push_back(out / "run.json");
  Json run{{"command", "generate"},
           {"engine", config::to_json(rc.engine)},
           {"prompt", rc.prompt},
           {"planted", rc.plant.has_value()},
           {"latents", traj.latents.size()},
           {"captured_points", traj.captured.size()}};
  io::write_text(written.back(), dump_json(run));
  return written;
}

std::vector<fs::path> cmd_disrupt(const RunConfig& rc, const fs::path& out) {
  ensure_dir(out);
  const Engine engine = engine_of(rc);
  const Trajectory baseline = engine.sample(rc.prompt, CaptureSpec::nothing());
  std::vector<DisruptionReport> reports;
  for (ChannelCriterion criterion : rc.disrupt.criteria) {
    for (int k : rc.disrupt.ks) {
      DisruptionSpec spec = rc.disrupt.spec;
      spec.criterion = criterion;
      spec.k = k;
      reports.push_back(run_disruption(engine, baseline, spec));
    }
  }
  Json list = Json::array();
  for (const auto& r : reports) list.push_back(config::to_json(r));
  const Json report{{"engine", config::to_json(rc.engine)},
                    {"prompt", rc.prompt},
                    {"planted", rc.plant.has_value()},
                    {"reports", list}};
  std::vector<fs::path> written{out / "report.json", out / "sweep.csv"};
  io::write_text(written[0], dump_json(report));
  io::write_text(written[1], disruption_csv(reports));
  return written;
}

std::vector<fs::path> cmd_segment(const RunConfig& rc, const fs::path& out) {
  ensure_dir(out);
  const auto& seg = rc.segment;
  const Trajectory traj = seg.dump
                              ? io::trajectory_from_records(io::read_dump(*seg.dump), rc.engine)
                              : generate_trajectory(rc);
  const GridShape grid = GridShape::of(rc.engine);

  std::optional<std::vector<std::uint8_t>> truth;
  if (seg.ground_truth) {
    const io::Graymap gt = io::read_graymap(*seg.ground_truth);
    if (gt.grid.height != grid.height || gt.grid.width != grid.width) {
      fail(ErrorKind::kShape, seg.ground_truth->string() + ": ground truth is " +
                                  std::to_string(gt.grid.width) + "x" + std::to_string(gt.grid.height) +
                                  ", latent grid is " + std::to_string(grid.width) + "x" +
                                  std::to_string(grid.height));
    }
    truth = io::graymap_to_mask(gt);
  } else if (rc.plant) {
    truth = plant_mask(rc);
  }

  const int timestep = seg.timestep.value_or(rc.engine.steps - 1);
  std::vector<fs::path> written;
  Json rows = Json::array();
  for (int layer = 0; layer < rc.engine.depth; ++layer) {
    if (seg.layers && !seg.layers->contains(layer)) continue;
    const ActivationTensor& image = traj.at({layer, timestep, Stream::kImage});
    for (ChannelCriterion criterion : seg.channel_criteria) {
      MaskOptions options;
      options.k = seg.k;
      options.channel_criterion = criterion;
      options.mask_criterion = seg.mask_criterion;
      options.channel_seed = derive_seed(seg.seed, {static_cast<std::uint64_t>(layer), 0});
      options.mask_seed = derive_seed(seg.seed, {static_cast<std::uint64_t>(layer), 1});
      options.cluster_on_normalized = seg.cluster_on_normalized;
      const MaskExtraction ex = extract_mask_details(image, grid, options);

      const std::string stem = "L" + std::to_string(layer) + "_" + criterion_tag(criterion);
      written.push_back(out / ("mask_" + stem + ".pgm"));
      io::write_graymap(io::mask_graymap(ex.mask.p, grid), written.back());
      written.push_back(out / ("heatmap_" + stem + ".pgm"));
      io::write_graymap(io::heatmap_graymap(ex.scores.s, grid), written.back());

      Json row{{"layer", layer},
               {"k", seg.k},
               {"channel_criterion", criterion_tag(criterion)},
               {"mask_criterion", std::string(to_string(seg.mask_criterion))}};
      if (truth) {
        const SegMetrics m = seg_metrics(ex.mask, *truth, grid, seg.band_radius);
        row = config::to_json(config::MetricRow{layer, seg.k, criterion, seg.mask_criterion, m});
      } else {
        for (const char* key : {"iou", "miou", "mae", "biou"}) row[key] = nullptr;
      }
      row["channels"] = ex.selection.indices;
      row["foreground_tokens"] =
          static_cast<int>(std::count(ex.mask.p.begin(), ex.mask.p.end(), std::uint8_t{1}));
      rows.push_back(std::move(row));
    }
  }
  const Json metrics{{"timestep", timestep},
                     {"band_radius", seg.band_radius},
                     {"ground_truth", truth.has_value()},
                     {"rows", rows}};
  written.push_back(out / "metrics.json");
  io::write_text(written.back(), dump_json(metrics));
  return written;
}

std::vector<fs::path> cmd_transport(const RunConfig& rc, const fs::path& out) {
  ensure_dir(out);
  const auto& tr = rc.transport;
  const Engine engine = engine_of(rc);
  const ResolvedPlan resolved = resolve_plan(tr.plan, rc.engine);
  print_warnings(resolved.warnings);
  const TransportResult result = run_transport(engine, tr.source_prompt, tr.target_prompt, tr.plan);

  std::vector<fs::path> written{out / "merged.madf", out / "source.madf", out / "target.madf"};
  io::write_dump(result.merged, written[0]);
  io::write_dump(result.source, written[1]);
  io::write_dump(result.target, written[2]);

  std::vector<SweepRow> rows;
  if (tr.sweep.empty()) {
    SweepRow row;
    row.regime = tr.plan.layers_label();
    row.image_k = resolved.image_k;
    row.encoder_k = resolved.encoder_k;
    row.mask_criterion = tr.plan.mask_criterion;
    row.delta_source = rmse(result.merged.final_latent, result.source.final_latent);
    row.delta_target = rmse(result.merged.final_latent, result.target.final_latent);
    row.delta_diff = row.delta_source - row.delta_target;
    rows.push_back(row);
  } else {
    rows = sweep_transport(engine, {{tr.source_prompt, tr.target_prompt}}, tr.sweep, tr.plan);
  }
  written.push_back(out / "sweep.csv");
  io::write_text(written.back(), sweep_csv(rows));

  Json list = Json::array();
  for (const auto& r : rows) list.push_back(config::to_json(r));
  Json layers = Json::array();
  for (int l : resolved.layers) layers.push_back(l);
  const Json summary{{"engine", config::to_json(rc.engine)},
                     {"plan", config::to_json(tr.plan)},
                     {"resolved_layers", layers},
                     {"resolved_image_k", resolved.image_k},
                     {"resolved_mask_k", resolved.mask_k},
                     {"warnings", resolved.warnings},
                     {"source_prompt", tr.source_prompt},
                     {"target_prompt", tr.target_prompt},
                     {"rows", list}};
  written.push_back(out / "sweep.json");
  io::write_text(written.back(), dump_json(summary));
  return written;
}

std::vector<fs::path> cmd_eval_mask(const fs::path& mask, const fs::path& truth, int band,
                                    const fs::path& out) {
  if (band < 0) fail(ErrorKind::kConfig, "--band: must be >= 0");
  ensure_dir(out);
  const io::Graymap pred = io::read_graymap(mask);
  const io::Graymap gt = io::read_graymap(truth);
  if (pred.grid.height != gt.grid.height || pred.grid.width != gt.grid.width) {
    fail(ErrorKind::kShape, "mask and ground truth dimensions differ");
  }
  const SegMetrics m = seg_metrics(io::graymap_to_mask(pred), io::graymap_to_mask(gt), gt.grid, band);
  const Json j{{"mask", mask.filename().string()},
               {"ground_truth", truth.filename().string()},
               {"band_radius", band},
               {"iou", m.iou},
               {"miou", m.miou},
               {"mae", m.mae},
               {"biou", m.biou}};
  std::vector<fs::path> written{out / "metrics.json"};
  io::write_text(written[0], dump_json(j));
  return written;
}

int run(int argc, const char* const* argv) {
  CLI::App app{"Massive-activation probes on a miniature dual-stream diffusion transformer", "massact"};
  app.require_subcommand(1);

  struct Common {
    std::string config;
    std::string out = "out";
    std::optional<std::uint64_t> seed;
    std::optional<std::string> preset;
  };
  Common common;
  const auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", common.config, "Run configuration (JSON)")->required();
    sub->add_option("--out", common.out, "Output directory")->capture_default_str();
    sub->add_option("--seed", common.seed, "Override engine.seed");
    sub->add_option("--preset", common.preset, "Named preset applied before the config file")
        ->check(CLI::IsMember(config::preset_names()));
  };
  CLI::App* generate = app.add_subcommand("generate", "Sample a trajectory and dump it");
  CLI::App* disrupt = app.add_subcommand("disrupt", "Zero selected channels and compare to baseline");
  CLI::App* segment = app.add_subcommand("segment", "Extract spatial masks from activations");
  CLI::App* transport = app.add_subcommand("transport", "Transport activations from a source run");
  for (CLI::App* sub : {generate, disrupt, segment, transport}) add_common(sub);

  CLI::App* eval = app.add_subcommand("eval-mask", "Score a mask graymap against ground truth");
  std::string mask_path, gt_path;
  int band = kDefaultBandRadius;
  std::string eval_out = "out";
  eval->add_option("--mask", mask_path, "Predicted mask (P2)")->required();
  eval->add_option("--gt", gt_path, "Ground-truth mask (P2)")->required();
  eval->add_option("--band", band, "Boundary band radius")->capture_default_str();
  eval->add_option("--out", eval_out, "Output directory")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << Json{{"error", "config"}, {"message", e.what()}}.dump() << "\n";
    return kExitConfig;
  }

  try {
    std::vector<fs::path> written;
    if (eval->parsed()) {
      written = cmd_eval_mask(mask_path, gt_path, band, eval_out);
    } else {
      const RunConfig rc = config::load_run_config(common.config, common.preset, common.seed);
      if (generate->parsed()) written = cmd_generate(rc, common.out);
      if (disrupt->parsed()) written = cmd_disrupt(rc, common.out);
      if (segment->parsed()) written = cmd_segment(rc, common.out);
      if (transport->parsed()) written = cmd_transport(rc, common.out);
    }
    for (const auto& p : written) std::cout << p.string() << "\n";
    return kExitOk;
  } catch (const Error& e) {
    std::cerr << Json{{"error", std::string(to_string(e.kind()))}, {"message", e.what()}}.dump() << "\n";
    return exit_code(e.kind());
  } catch (const fs::filesystem_error& e) {
    std::cerr << Json{{"error", "io"}, {"message", e.what()}}.dump() << "\n";
    return kExitIo;
  } catch (const std::exception& e) {
    std::cerr << Json{{"error", "runtime"}, {"message", e.what()}}.dump() << "\n";
    return kExitRuntime;
  }
}

}  // namespace massact::cli
