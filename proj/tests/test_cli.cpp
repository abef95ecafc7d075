// SPDX-License-Identifier: Apache-2.0
// Config parsing, checkpoint persistence and end-to-end command smoke tests.
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "dlf/checkpoint.hpp"
#include "dlf/commands.hpp"
#include "dlf/config.hpp"
#include "support.hpp"

using namespace dlf;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  auto p = fs::temp_directory_path() / ("dlf_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

config::RunConfig quick_config(const fs::path& out) {
  config::RunConfig c;
  c.synth_length = 160;
  c.lookback = 16;
  c.horizon = 4;
  c.d_model = 8;
  c.layers = 2;
  c.heads = 2;
  c.align_heads = 2;
  c.rank = 2;
  c.top_n = 3;
  c.epochs = 2;
  c.out_dir = out.string();
  return c;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(DLF_CLI_PATH) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WEXITSTATUS(status);
}

}  // namespace

TEST_CASE("config parse, serialize, round trip") {
  auto c = config::parse(
      "# comment\n[data]\nlookback = 64\nhorizon=16\n; another\n[model]\nvariant = v4_frozen\n[train]\nlr = 0.005\n");
  CHECK(c.lookback == 64);
  CHECK(c.horizon == 16);
  CHECK(c.variant == "v4_frozen");
  CHECK(c.lr == 0.005);
  auto back = config::parse(config::serialize(c));
  CHECK(config::serialize(back) == config::serialize(c));
  CHECK(back.lr == c.lr);
}

TEST_CASE("unknown config key lists the valid keys") {
  try {
    config::parse("[data]\nlookbak = 3\n");
    FAIL("expected ConfigError");
  } catch (const config::ConfigError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("lookbak") != std::string::npos);
    CHECK(msg.find("lookback") != std::string::npos);
    CHECK(msg.find("top_n") != std::string::npos);
  }
  CHECK_THROWS_AS(config::parse("[model]\nlookback = 3\n"), config::ConfigError);
  CHECK_THROWS_AS(config::parse("[data]\nlookback = abc\n"), config::ConfigError);
}

TEST_CASE("config defaults and validation") {
  config::RunConfig c;
  CHECK(c.align_heads == 8);
  CHECK(c.top_n == 4);
  CHECK(c.rank == 8);
  CHECK_NOTHROW(config::validate(c));
  config::set(c, "lora_preset", "main_text");
  CHECK(c.rank == 4);
  c.top_n = 8;
  CHECK_THROWS_AS(config::validate(c), config::ConfigError);
  c.top_n = 4;
  c.variant = "v9";
  CHECK_THROWS_AS(config::validate(c), config::ConfigError);
  c.variant = "full";
  c.align_heads = 7;
  CHECK_THROWS_AS(config::validate(c), config::ConfigError);
  auto m = config::model_config(config::RunConfig{});
  CHECK(m.backbone.d_ffn == 256);
  CHECK(config::prompt_text(config::RunConfig{}) == "forecast sine_mixture horizon 96 frequency hourly");
}

TEST_CASE("checkpoint round trip is bit-exact") {
  const auto dir = scratch("ckpt");
  auto cfg = quick_config(dir);
  cfg.backbone_mode = "pretrain_then_freeze";
  ForecastModel model(config::model_config(cfg), config::prompt_text(cfg), cfg.seed);
  Rng rng(3);
  for (auto& layer : model.adapters())
    for (auto& a : layer)
      if (a) a->b = testing::random_tensor(a->b.shape(), rng, 0.2, true);
  ckpt::write(dir / "m.ckpt", ckpt::capture(model, cfg, 42, "state-text"));
  auto loaded = ckpt::load(dir / "m.ckpt");
  CHECK(loaded.step == 42);
  CHECK(loaded.rng_state == "state-text");
  CHECK(nn::checksum(loaded.model->parameters()) == nn::checksum(model.parameters()));

  auto x = testing::random_tensor({2 * 3, 16}, rng, 1.0, false);
  ad::NoGradScope no_grad;
  auto a = model.forward(x, 2, 3).forecast, b = loaded.model->forward(x, 2, 3).forecast;
  CHECK(testing::max_abs_diff(a.data(), b.data()) == 0.0);
}

TEST_CASE("checkpoint errors are descriptive") {
  const auto dir = scratch("ckpt_err");
  auto cfg = quick_config(dir);
  ForecastModel model(config::model_config(cfg), config::prompt_text(cfg), cfg.seed);
  auto c = ckpt::capture(model, cfg, 0, "");
  ckpt::write(dir / "ok.ckpt", c);
  const auto bytes = slurp(dir / "ok.ckpt");

  auto write_bytes = [&](const std::string& name, const std::string& b) {
    std::ofstream(dir / name, std::ios::binary) << b;
    return dir / name;
  };
  auto msg = [](const fs::path& p) {
    try {
      ckpt::load(p);
    } catch (const ckpt::CheckpointError& e) {
      return std::string(e.what());
    }
    return std::string();
  };
  CHECK(msg(write_bytes("trunc.ckpt", bytes.substr(0, bytes.size() / 2))).find("truncated") != std::string::npos);
  auto bad_version = bytes;
  bad_version[4] = 9;
  CHECK(msg(write_bytes("ver.ckpt", bad_version)).find("version") != std::string::npos);
  CHECK(msg(write_bytes("magic.ckpt", "XXXX" + bytes.substr(4))).find("magic") != std::string::npos);

  auto renamed = c;
  renamed.tensors[0].name = "mystery.weight";
  ckpt::write(dir / "unknown.ckpt", renamed);
  CHECK(msg(dir / "unknown.ckpt").find("mystery.weight") != std::string::npos);

  auto reshaped = c;
  reshaped.tensors[0].shape = {reshaped.tensors[0].values.size(), 1};
  ckpt::write(dir / "shape.ckpt", reshaped);
  CHECK(msg(dir / "shape.ckpt").find("shape") != std::string::npos);
}

TEST_CASE("train command writes its artifacts and is deterministic") {
  const auto d1 = scratch("train1"), d2 = scratch("train2");
  std::ostringstream log;
  CHECK(cli::cmd_train(quick_config(d1), log) == 0);
  CHECK(cli::cmd_train(quick_config(d2), log) == 0);
  for (const char* f : {cli::kCheckpointFile, cli::kHistoryFile, cli::kRoutingFile, "synthetic.json"})
    CHECK(fs::exists(d1 / f));
  CHECK(slurp(d1 / cli::kHistoryFile) == slurp(d2 / cli::kHistoryFile));
  auto t1 = ckpt::read(d1 / cli::kCheckpointFile).tensors, t2 = ckpt::read(d2 / cli::kCheckpointFile).tensors;
  REQUIRE(t1.size() == t2.size());
  for (std::size_t i = 0; i < t1.size(); ++i) CHECK(t1[i].values == t2[i].values);

  auto routing = nlohmann::json::parse(slurp(d1 / cli::kRoutingFile));
  for (const auto& layer : routing["layers"]) {
    double s = 0.0;
    for (double v : layer["activation_share"]) s += v;
    CHECK(std::abs(s - 1.0) <= 1e-10);
  }
}

TEST_CASE("eval and forecast commands") {
  const auto dir = scratch("eval");
  std::ostringstream log;
  REQUIRE(cli::cmd_train(quick_config(dir), log) == 0);
  CHECK(cli::cmd_eval(dir / cli::kCheckpointFile, {}, dir / "ev", log) == 0);
  auto metrics = nlohmann::json::parse(slurp(dir / "ev" / "metrics.json"));
  CHECK(metrics["model"]["horizon"] == 4);
  CHECK(fs::exists(dir / "ev" / "metrics.txt"));
  CHECK_THROWS_AS(cli::cmd_eval(dir / cli::kCheckpointFile, {{"horizon", "8"}}, dir / "ev2", log),
                  config::ConfigError);

  CHECK(cli::cmd_synth(quick_config(dir), dir / "in.csv", log) == 0);
  CHECK(fs::exists(dir / "in.json"));
  CHECK(cli::cmd_forecast(dir / cli::kCheckpointFile, dir / "in.csv", dir / "out.csv", log) == 0);
  auto out = data::load_csv(dir / "out.csv");
  CHECK(out.steps == 4);
  CHECK(out.channels == 3);
}

TEST_CASE("ablate covers every variant with shared initialization") {
  const auto dir = scratch("ablate");
  auto cfg = quick_config(dir);
  cfg.epochs = 1;
  std::ostringstream log;
  REQUIRE(cli::cmd_ablate(cfg, 1, log) == 0);
  std::ifstream in(dir / "ablation.csv");
  std::string line;
  std::getline(in, line);
  std::map<std::string, std::vector<std::string>> rows;
  while (std::getline(in, line)) {
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    rows[cells[0]] = cells;
  }
  REQUIRE(rows.size() == 5);
  CHECK(rows["v4_frozen"][4] == "0");               // adapter params
  CHECK(rows["v2_prefix_prompt"][5] != rows["full"][5]);  // backbone sequence length N + P
  CHECK(rows["v3_static_lora"][6] == "0");          // routing entropy
  for (const auto& [name, cells] : rows) CHECK(cells[7] == rows["full"][7]);  // shared init checksum

  // Concurrent variants give identical numbers.
  auto cfg2 = cfg;
  cfg2.out_dir = (dir / "par").string();
  REQUIRE(cli::cmd_ablate(cfg2, 3, log) == 0);
  CHECK(slurp(dir / "ablation.csv") == slurp(dir / "par" / "ablation.csv"));
}

TEST_CASE("sweep-n exports per-n routing distributions") {
  const auto dir = scratch("sweep");
  auto cfg = quick_config(dir);
  cfg.epochs = 1;
  std::ostringstream log;
  REQUIRE(cli::cmd_sweep_n(cfg, {1, 7}, log) == 0);
  CHECK(fs::exists(dir / "sweep_n.csv"));
  for (int n : {1, 7}) {
    auto j = nlohmann::json::parse(slurp(dir / ("routing_n" + std::to_string(n) + ".json")));
    for (const auto& layer : j["layers"]) {
      double s = 0.0;
      for (double v : layer["activation_share"]) s += v;
      CHECK(std::abs(s - 1.0) <= 1e-10);
    }
  }
}

TEST_CASE("CLI binary: exit codes") {
  const auto dir = scratch("cli");
  const std::string small = " --synth-length 160 --lookback 16 --horizon 4 --d_model 8 --layers 1 --heads 2"
                            " --align_heads 2 --rank 2 --epochs 1 --out-dir " + dir.string();
  CHECK(run_cli("train --synthetic sine" + small) == 0);
  CHECK(fs::exists(dir / "model.ckpt"));
  CHECK(run_cli("train --not-a-key 3" + small) == 2);
  CHECK(run_cli("train --top_n 9" + small) == 2);
  CHECK(run_cli("train --few-shot 0.05" + small) == 3);
  CHECK(run_cli("train --csv /nonexistent.csv" + small) == 3);
  CHECK(run_cli("eval --checkpoint " + (dir / "model.ckpt").string() + " --horizon 8") == 2);
  CHECK(run_cli("eval --checkpoint " + (dir / "missing.ckpt").string()) == 3);
  CHECK(run_cli("frobnicate") == 2);
}
