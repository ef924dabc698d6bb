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

#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "massact/config.hpp"
#include "massact/io.hpp"
#include "support.hpp"

namespace massact {
namespace {

namespace fs = std::filesystem;
using config::Json;
using testing::scratch_dir;

struct Outcome {
  int code = -1;
  std::string out;
  std::string err;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

Outcome massact_cli(const fs::path& dir, const std::string& args) {
  const fs::path out = dir / "stdout.txt", err = dir / "stderr.txt";
  const std::string cmd = "cd '" + dir.string() + "' && '" MASSACT_CLI_PATH "' " + args + " >'" + out.string() +
                          "' 2>'" + err.string() + "'";
  const int status = std::system(cmd.c_str());
  Outcome o;
  o.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  o.out = slurp(out);
  o.err = slurp(err);
  return o;
}

Json small_engine() {
  return Json{{"depth", 4}, {"width", 16}, {"heads", 2}, {"latent_h", 4}, {"latent_w", 4},
              {"encoder_len", 4}, {"steps", 3}, {"seed", 21}};
}

fs::path write_config(const fs::path& dir, const std::string& name, const Json& j) {
  const fs::path p = dir / name;
  io::write_text(p, j.dump(2));
  return p;
}

Json read_json(const fs::path& p) { return Json::parse(slurp(p)); }

// Every regular file under `dir`, keyed by relative path.
std::map<std::string, std::string> tree(const fs::path& dir) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(dir))
    if (e.is_regular_file()) out[fs::relative(e.path(), dir).string()] = slurp(e.path());
  return out;
}

Json planted_config() {
  Json engine = small_engine();
  engine["width"] = 32;
  engine["heads"] = 4;
  engine["latent_h"] = 8;
  engine["latent_w"] = 8;
  return Json{{"engine", engine},
              {"plant", {{"foreground", {{"rect", {2, 1, 6, 5}}}},
                         {"channels", {0, 3, 5, 8, 11, 13, 17, 20, 22, 26, 29, 31}},
                         {"amplitude", 100.0},
                         {"noise", 1.0}}},
              {"segment", {{"channel_criteria", {"top"}}}}};
}

TEST(Cli, HelpListsFlagsForEverySubcommand) {
  const auto dir = scratch_dir("cli_help");
  for (const std::string sub : {"generate", "disrupt", "segment", "transport"}) {
    const Outcome o = massact_cli(dir, sub + " --help");
    EXPECT_EQ(o.code, 0) << sub;
    for (const char* flag : {"--config", "--out", "--seed", "--preset"}) EXPECT_NE(o.out.find(flag), std::string::npos) << sub << " " << flag;
  }
  const Outcome eval = massact_cli(dir, "eval-mask --help");
  EXPECT_EQ(eval.code, 0);
  for (const char* flag : {"--mask", "--gt", "--band", "--out"}) EXPECT_NE(eval.out.find(flag), std::string::npos) << flag;
  EXPECT_EQ(massact_cli(dir, "--help").code, 0);
}

TEST(Cli, UsageErrorsExitWithConfigCode) {
  const auto dir = scratch_dir("cli_usage");
  write_config(dir, "c.json", Json{{"engine", small_engine()}});
  EXPECT_EQ(massact_cli(dir, "generate --config c.json --bogus").code, 2);
  EXPECT_EQ(massact_cli(dir, "").code, 2);
  EXPECT_EQ(massact_cli(dir, "generate").code, 2);
  EXPECT_EQ(massact_cli(dir, "frobnicate --config c.json").code, 2);
  EXPECT_EQ(massact_cli(dir, "generate --config c.json --preset nope").code, 2);
}

TEST(Cli, ConfigErrorNamesTheKey) {
  const auto dir = scratch_dir("cli_cfgerr");
  Json engine = small_engine();
  engine["widht"] = 16;
  write_config(dir, "typo.json", Json{{"engine", engine}});
  Outcome o = massact_cli(dir, "generate --config typo.json");
  EXPECT_EQ(o.code, 2);
  EXPECT_NE(o.err.find("engine.widht"), std::string::npos) << o.err;
  const Json err = Json::parse(o.err);
  EXPECT_EQ(err["error"], "config");

  engine = small_engine();
  engine["width"] = 30;
  engine["heads"] = 4;
  write_config(dir, "heads.json", Json{{"engine", engine}});
  o = massact_cli(dir, "generate --config heads.json");
  EXPECT_EQ(o.code, 2);
  EXPECT_NE(o.err.find("width"), std::string::npos) << o.err;

  io::write_text(dir / "broken.json", "{\"engine\": ");
  EXPECT_EQ(massact_cli(dir, "generate --config broken.json").code, 2);

  write_config(dir, "k.json", Json{{"engine", small_engine()}, {"disrupt", {{"k", 17}}}});
  o = massact_cli(dir, "disrupt --config k.json");
  EXPECT_EQ(o.code, 2);
  EXPECT_NE(o.err.find("disrupt"), std::string::npos) << o.err;
}

TEST(Cli, IoErrorsExitWithIoCode) {
  const auto dir = scratch_dir("cli_io");
  EXPECT_EQ(massact_cli(dir, "generate --config missing.json").code, 4);
  write_config(dir, "seg.json", Json{{"engine", small_engine()}, {"segment", {{"dump", "nope.madf"}}}});
  const Outcome o = massact_cli(dir, "segment --config seg.json");
  EXPECT_EQ(o.code, 4);
  EXPECT_NE(o.err.find("nope.madf"), std::string::npos);
  EXPECT_EQ(Json::parse(o.err)["error"], "io");
}

TEST(Cli, CorruptDumpExitsWithIoCode) {
  const auto dir = scratch_dir("cli_crc");
  write_config(dir, "g.json", Json{{"engine", small_engine()}});
  ASSERT_EQ(massact_cli(dir, "generate --config g.json --out g").code, 0);
  std::string bytes = slurp(dir / "g" / "trajectory.madf");
  bytes[bytes.size() / 2] = static_cast<char>(bytes[bytes.size() / 2] ^ 0x01);
  io::write_text(dir / "bad.madf", bytes);
  write_config(dir, "seg.json", Json{{"engine", small_engine()}, {"segment", {{"dump", "bad.madf"}}}});
  const Outcome o = massact_cli(dir, "segment --config seg.json");
  EXPECT_EQ(o.code, 4);
  EXPECT_EQ(Json::parse(o.err)["error"], "crc");
}

TEST(Cli, RuntimeErrorsExitWithRuntimeCode) {
  const auto dir = scratch_dir("cli_runtime");
  // The dump holds a single capture, so the last-step point is missing.
  write_config(dir, "g.json", Json{{"engine", small_engine()}, {"capture", Json::array({Json::array({0, 0, "image"})})}});
  ASSERT_EQ(massact_cli(dir, "generate --config g.json --out g").code, 0);
  write_config(dir, "seg.json", Json{{"engine", small_engine()}, {"segment", {{"dump", "g/trajectory.madf"}}}});
  const Outcome o = massact_cli(dir, "segment --config seg.json");
  EXPECT_EQ(o.code, 3) << o.err;
}

TEST(Cli, GenerateWritesOneLatentPerStepPlusNoise) {
  const auto dir = scratch_dir("cli_gen");
  Json engine = small_engine();
  engine["steps"] = 1;
  engine["depth"] = 3;
  write_config(dir, "c.json", Json{{"engine", engine}});
  const Outcome o = massact_cli(dir, "generate --config c.json --out g");
  ASSERT_EQ(o.code, 0) << o.err;
  EXPECT_NE(o.out.find("trajectory.madf"), std::string::npos);
  const Json run = read_json(dir / "g" / "run.json");
  EXPECT_EQ(run["latents"], 2);
  EXPECT_EQ(run["captured_points"], 6);
  std::size_t latents = 0;
  for (const auto& r : io::read_dump(dir / "g" / "trajectory.madf")) latents += r.stream == io::kStreamLatent;
  EXPECT_EQ(latents, 2u);
  EXPECT_TRUE(fs::exists(dir / "g" / "final_latent.pgm"));
}

TEST(Cli, DisruptZeroKReportsFullEnergy) {
  const auto dir = scratch_dir("cli_disrupt");
  write_config(dir, "c.json", Json{{"engine", small_engine()}, {"disrupt", {{"ks", {0, 4}}}}});
  ASSERT_EQ(massact_cli(dir, "disrupt --config c.json --out d").code, 0);
  const Json report = read_json(dir / "d" / "report.json");
  ASSERT_EQ(report["reports"].size(), 2u);
  EXPECT_EQ(report["reports"][0]["metrics"]["energy_ratio"], 100.0);
  EXPECT_EQ(report["reports"][0]["latent_rmse"], 0.0);
  EXPECT_GT(report["reports"][1]["latent_rmse"].get<double>(), 0.0);
}

TEST(Cli, SegmentRecoversPlantedMask) {
  const auto dir = scratch_dir("cli_segment");
  write_config(dir, "c.json", planted_config());
  const Outcome o = massact_cli(dir, "segment --config c.json --out s");
  ASSERT_EQ(o.code, 0) << o.err;
  const Json metrics = read_json(dir / "s" / "metrics.json");
  ASSERT_EQ(metrics["rows"].size(), 4u);
  for (const auto& row : metrics["rows"]) EXPECT_EQ(row["miou"], 1.0) << row.dump();
  // The written mask scores perfectly against the written ground truth.
  ASSERT_EQ(massact_cli(dir, "generate --config c.json --out g").code, 0);
  const Outcome eval = massact_cli(dir, "eval-mask --mask s/mask_L0_top.pgm --gt g/gt_mask.pgm --out e");
  ASSERT_EQ(eval.code, 0) << eval.err;
  EXPECT_EQ(read_json(dir / "e" / "metrics.json")["miou"], 1.0);
}

TEST(Cli, SegmentFromDumpMatchesDirectRun) {
  const auto dir = scratch_dir("cli_segdump");
  Json cfg = planted_config();
  write_config(dir, "c.json", cfg);
  ASSERT_EQ(massact_cli(dir, "generate --config c.json --out g").code, 0);
  cfg["segment"]["dump"] = "g/trajectory.madf";
  cfg["segment"]["ground_truth"] = "g/gt_mask.pgm";
  write_config(dir, "d.json", cfg);
  ASSERT_EQ(massact_cli(dir, "segment --config c.json --out direct").code, 0);
  ASSERT_EQ(massact_cli(dir, "segment --config d.json --out fromdump").code, 0);
  EXPECT_EQ(read_json(dir / "direct" / "metrics.json")["rows"], read_json(dir / "fromdump" / "metrics.json")["rows"]);
}

TEST(Cli, EvalMaskHandExample) {
  const auto dir = scratch_dir("cli_eval");
  std::vector<std::uint8_t> g(16, 0), p(16, 0);
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 4; ++c) {
      g[static_cast<std::size_t>(r * 4 + c)] = c < 2;
      p[static_cast<std::size_t>(r * 4 + c)] = c < 3;
    }
  io::write_graymap(io::mask_graymap(p, {4, 4}), dir / "p.pgm");
  io::write_graymap(io::mask_graymap(g, {4, 4}), dir / "g.pgm");
  ASSERT_EQ(massact_cli(dir, "eval-mask --mask p.pgm --gt g.pgm --band 2 --out e").code, 0);
  const Json m = read_json(dir / "e" / "metrics.json");
  EXPECT_DOUBLE_EQ(m["iou"].get<double>(), 8.0 / 12.0);
  EXPECT_DOUBLE_EQ(m["mae"].get<double>(), 0.25);
  EXPECT_EQ(massact_cli(dir, "eval-mask --mask p.pgm --gt g.pgm --band -1").code, 2);
  EXPECT_EQ(massact_cli(dir, "eval-mask --mask missing.pgm --gt g.pgm").code, 4);
}

TEST(Cli, PresetsAndSeedOverride) {
  const auto dir = scratch_dir("cli_preset");
  write_config(dir, "c.json", Json{{"engine", small_engine()}, {"transport", {{"source_prompt", {1, 2, 3, 4}}}}});
  Outcome o = massact_cli(dir, "transport --config c.json --preset sana-transport --out t");
  ASSERT_EQ(o.code, 0) << o.err;
  Json sweep = read_json(dir / "t" / "sweep.json");
  EXPECT_EQ(sweep["plan"]["image_k"], 512);
  EXPECT_EQ(sweep["resolved_image_k"], 16);
  EXPECT_NE(o.err.find("clamped"), std::string::npos);

  // The document overlays the preset.
  write_config(dir, "o.json", Json{{"preset", "paper-default-transport"},
                                   {"engine", small_engine()},
                                   {"transport", {{"image_k", 4}}}});
  ASSERT_EQ(massact_cli(dir, "transport --config o.json --out o").code, 0);
  sweep = read_json(dir / "o" / "sweep.json");
  EXPECT_EQ(sweep["plan"]["image_k"], 4);
  EXPECT_EQ(sweep["plan"]["layers"], "middle");

  ASSERT_EQ(massact_cli(dir, "generate --config c.json --seed 99 --out s99").code, 0);
  ASSERT_EQ(massact_cli(dir, "generate --config c.json --out s21").code, 0);
  EXPECT_EQ(read_json(dir / "s99" / "run.json")["engine"]["seed"], 99);
  EXPECT_NE(slurp(dir / "s99" / "trajectory.madf"), slurp(dir / "s21" / "trajectory.madf"));
}

TEST(Cli, TransportSweepRows) {
  const auto dir = scratch_dir("cli_sweep");
  write_config(dir, "c.json", Json{{"engine", small_engine()},
                                   {"transport", {{"source_prompt", {5, 6, 7, 8}},
                                                  {"sweep", {{"regimes", {"lower", "upper"}},
                                                             {"image_k", {0, 8}},
                                                             {"encoder_k", {0}}}}}}});
  const Outcome o = massact_cli(dir, "transport --config c.json --out t");
  ASSERT_EQ(o.code, 0) << o.err;
  const Json sweep = read_json(dir / "t" / "sweep.json");
  ASSERT_EQ(sweep["rows"].size(), 4u);
  const std::string csv = slurp(dir / "t" / "sweep.csv");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 5);
  for (const char* f : {"merged.madf", "source.madf", "target.madf"}) EXPECT_TRUE(fs::exists(dir / "t" / f));
}

TEST(Cli, EveryCommandIsByteDeterministic) {
  const auto dir = scratch_dir("cli_det");
  Json cfg = planted_config();
  cfg["disrupt"] = {{"ks", {0, 6}}, {"criteria", {"top", "random"}}, {"seed", 5}};
  cfg["segment"] = {{"channel_criteria", {"top", "random", "bottom"}}, {"seed", 3}};
  cfg["transport"] = {{"source_prompt", {9, 8, 7, 6}}, {"image_k", 8}, {"encoder_k", 4}};
  write_config(dir, "c.json", cfg);
  for (const std::string cmd : {"generate", "disrupt", "segment", "transport"}) {
    ASSERT_EQ(massact_cli(dir, cmd + " --config c.json --out " + cmd + "_a").code, 0) << cmd;
    ASSERT_EQ(massact_cli(dir, cmd + " --config c.json --out " + cmd + "_b").code, 0) << cmd;
    const auto a = tree(dir / (cmd + "_a")), b = tree(dir / (cmd + "_b"));
    EXPECT_FALSE(a.empty());
    EXPECT_EQ(a, b) << cmd;
  }
}

}  // namespace
}  // namespace massact
