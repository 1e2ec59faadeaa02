// Copyright 2026 The carat Authors
// Licensed under the Apache License, Version 2.0

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>
#include <sys/wait.h>

#include <doctest.h>

#include "carat/checkpoint.hpp"
#include "carat/checkpoint_file.hpp"
#include "carat/commands.hpp"
#include "carat/config.hpp"
#include "carat/error.hpp"
#include "carat/fileio.hpp"

using namespace carat;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / ("carat_cli_test_" + name)) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

/// Three optimizer steps per epoch, four epochs.
RunConfig small_config() {
  RunConfig cfg = tiny_gradcheck_config();
  cfg.precision = Precision::standard;
  cfg.synth.n_train = 12;
  cfg.synth.n_val = 6;
  cfg.synth.n_test = 6;
  cfg.train.batch = 4;
  cfg.train.epochs = 4;
  cfg.optim.lr = 1e-3;
  cfg.seed = 3;
  return cfg;
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(CARAT_BIN) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string field_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const ConfigError& e) {
    return e.field();
  }
  return "<no error>";
}

}  // namespace

TEST_CASE("config text: sections, comments and overrides") {
  const auto kv = parse_config_text("# comment\npreset = desk\n[model]\nd = 16 ; trailing\nheads=2\n\n[loss]\ngamma_s = 0.5\n");
  REQUIRE(kv.size() == 4);
  CHECK(kv[1] == std::pair<std::string, std::string>{"model.d", "16"});
  CHECK(kv[3] == std::pair<std::string, std::string>{"loss.gamma_s", "0.5"});
  CHECK_THROWS_AS(parse_config_text("[model\n"), ConfigError);
  CHECK_THROWS_AS(parse_config_text("just words\n"), ConfigError);

  TempDir dir("config");
  write_atomic(dir.path / "run.cfg", "preset = paper\n[train]\nepochs = 3\n");
  const RunConfig paper = load_run_config(dir.path / "run.cfg");
  CHECK(paper.preset == "paper");
  CHECK(paper.model.d == 256);
  CHECK(paper.train.epochs == 3);
  const RunConfig desk = load_run_config(dir.path / "run.cfg", "desk");
  CHECK(desk.model.d == 32);
  CHECK(desk.train.epochs == 3);
}

TEST_CASE("config: errors name the offending field") {
  RunConfig cfg = RunConfig::from_preset("desk");
  CHECK(field_of([&] { cfg.apply("model.d", "abc"); }) == "model.d");
  CHECK(field_of([&] { cfg.apply("no.such.key", "1"); }) == "no.such.key");
  CHECK(field_of([] { RunConfig::from_preset("huge"); }) == "preset");
  CHECK(field_of([] { load_run_config("/nonexistent/run.cfg"); }) == "--config");
  RunConfig unseeded = RunConfig::from_preset("desk");
  CHECK_THROWS_AS(unseeded.require_seed(), ConfigError);
  RunConfig bad_paths = RunConfig::from_preset("desk");
  bad_paths.data.dir = "/nonexistent/data";
  CHECK_THROWS_AS(bad_paths.validate(), ConfigError);
}

TEST_CASE("config: JSON and entry round trips") {
  RunConfig cfg = RunConfig::from_preset("paper");
  cfg.seed = 42;
  cfg.ablation.disable_mws = true;
  cfg.loss.gamma_sf = 0.25;
  const RunConfig back = RunConfig::from_json(cfg.to_json());
  CHECK(back.to_json() == cfg.to_json());
  RunConfig replay = RunConfig::from_preset("desk");
  replay.apply(cfg.entries());
  CHECK(replay.to_json() == cfg.to_json());
}

TEST_CASE("checkpoint container: encode, decode and record-indexed errors") {
  CheckpointFile f;
  f.header = {{"arrays", nlohmann::json::array()}, {"note", "x"}};
  f.payload = std::string("\x01\x02\x00\x03", 4);
  const std::string bytes = encode_checkpoint(f);
  CHECK(bytes.rfind("CARAT1\n", 0) == 0);
  const CheckpointFile back = decode_checkpoint(bytes);
  CHECK(back.header == f.header);
  CHECK(back.payload == f.payload);

  auto record_of = [](const std::string& b) -> std::size_t {
    try {
      decode_checkpoint(b);
    } catch (const FormatError& e) {
      return e.record();
    }
    return 0;
  };
  CHECK(record_of("CARAT2\n" + bytes.substr(7)) == 1);
  CHECK(record_of("CARAT1\nlots\n{}") == 2);
  CHECK(record_of("CARAT1\n100\n{}") == 3);
  CHECK(record_of("CARAT1\n3\n{x}") == 3);
}

TEST_CASE("checkpoint: named arrays survive a save and load") {
  Checkpoint ck;
  ck.meta = {{"step", 7}};
  ck.add("w", {2, 3}, {1, 2, 3, 4, 5, 6.5f});
  ck.add("b", {3}, {-1, 0, 1});
  TempDir dir("ckpt");
  save_checkpoint(ck, dir.path / "a.ckpt");
  const Checkpoint back = load_checkpoint(dir.path / "a.ckpt");
  CHECK(back.meta.at("step") == 7);
  REQUIRE(back.arrays.size() == 2);
  CHECK(back.at("w").shape == Shape{2, 3});
  CHECK(back.at("w").values == ck.at("w").values);
  CHECK(back.at("b").values == ck.at("b").values);
  CHECK(back.find("missing") == nullptr);
  CHECK_THROWS_AS(back.at("missing"), CheckpointError);
  CHECK(read_checkpoint_header(dir.path / "a.ckpt").value("dtype", std::string()) == std::string(dtype_name()));

  // A payload shorter than the header claims is rejected.
  std::string bytes = serialize_checkpoint(ck);
  bytes.pop_back();
  CHECK_THROWS_AS(parse_checkpoint(bytes), Error);
}

TEST_CASE("train: same config and seed give identical logs") {
  CommandOptions opt;
  opt.config = small_config();
  const TrainOutcome a = cmd_f32::train(opt);
  const TrainOutcome b = cmd_f32::train(opt);
  REQUIRE(a.log_lines.size() == 5);
  CHECK(a.log_lines == b.log_lines);
  CHECK(a.steps == 12);
  opt.config.seed = 4;
  CHECK(cmd_f32::train(opt).log_lines != a.log_lines);
}

TEST_CASE("train: resuming mid-epoch matches uninterrupted training bitwise") {
  TempDir whole("whole"), first("first"), second("second");
  CommandOptions opt;
  opt.config = small_config();
  opt.out = whole.path;
  const TrainOutcome full = cmd_f32::train(opt);

  opt.out = first.path;
  opt.max_steps = 5;
  const TrainOutcome part = cmd_f32::train(opt);
  CHECK(part.steps == 5);
  REQUIRE(fs::exists(first.path / "last.ckpt"));

  opt.out = second.path;
  opt.max_steps = 0;
  opt.resume = first.path / "last.ckpt";
  const TrainOutcome rest = cmd_f32::train(opt);
  CHECK(rest.steps == full.steps);
  CHECK(rest.best_val_f1 == full.best_val_f1);
  CHECK(rest.test.micro_f1 == full.test.micro_f1);
  CHECK(rest.log_lines == full.log_lines);

  const Checkpoint x = load_checkpoint(whole.path / "last.ckpt");
  const Checkpoint y = load_checkpoint(second.path / "last.ckpt");
  REQUIRE(x.arrays.size() == y.arrays.size());
  for (std::size_t k = 0; k < x.arrays.size(); ++k) {
    INFO(x.arrays[k].name);
    CHECK(x.arrays[k].name == y.arrays[k].name);
    CHECK(x.arrays[k].values == y.arrays[k].values);
  }
  CHECK(read_file(whole.path / "metrics.jsonl") == read_file(second.path / "metrics.jsonl"));
}

TEST_CASE("eval: the best checkpoint reproduces the logged validation score") {
  TempDir dir("eval");
  CommandOptions opt;
  opt.config = small_config();
  opt.out = dir.path;
  const TrainOutcome r = cmd_f32::train(opt);
  gen_data(opt.config.synth, dir.path / "data");
  const MetricsReport m = cmd_f32::eval(dir.path / "best.ckpt", dir.path / "data" / "val.jsonl", dir.path, nullptr);
  CHECK(m.micro_f1 == r.best_val_f1);
  CHECK(fs::exists(dir.path / "eval_report.json"));
  for (const char* f : {"metrics.jsonl", "config.txt", "test_report.json", "test_report.txt", "test_embeddings.tsv"}) {
    CHECK_MESSAGE(fs::exists(dir.path / f), f);
  }
  // Every artifact echoes the configuration.
  const auto report = nlohmann::json::parse(read_file(dir.path / "test_report.json"));
  CHECK(report.contains("config"));
  const auto first_line = read_file(dir.path / "metrics.jsonl").substr(0, read_file(dir.path / "metrics.jsonl").find('\n'));
  CHECK(nlohmann::json::parse(first_line).at("type") == "config");
}

TEST_CASE("ablate and fusion-bench: table shapes") {
  CommandOptions opt;
  opt.config = small_config();
  opt.config.train.epochs = 1;
  const ComparisonTable ab = cmd_f32::ablate(opt);
  REQUIRE(ab.rows.size() == 13);
  CHECK(ab.rows.front().label == "(1) MRM + AGG");
  CHECK(ab.rows.back().label == "(13) full model");
  CHECK(ab.row("(12) w/o shf").runs.size() == 1);
  const std::string csv = ab.to_csv();
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 14);

  const ComparisonTable fb = cmd_f32::fusion_bench(opt);
  CHECK(fb.rows.size() == 3);
  for (const auto& row : fb.rows) CHECK(row.runs.size() == 1);
}

TEST_CASE("carat executable: exit codes") {
  TempDir dir("exit");
  CHECK(run_cli("--help") == 0);
  CHECK(run_cli("") == 2);
  CHECK(run_cli("train --set no.such.key=1") == 2);
  CHECK(run_cli("train --set model.d=abc") == 2);
  CHECK(run_cli("train --preset huge") == 2);
  CHECK(run_cli("gen-data --set synth.priors=0,1.5 --out " + dir.path.string()) == 2);
  CHECK(run_cli("gen-data --set synth.n_train=8 --set synth.n_val=2 --set synth.n_test=2 --seed 1 --out " +
                dir.path.string()) == 0);
  CHECK(fs::exists(dir.path / "train.jsonl"));
  std::ofstream(dir.path / "broken.ckpt") << "not a checkpoint";
  CHECK(run_cli("eval --checkpoint " + (dir.path / "broken.ckpt").string() + " --data " +
                (dir.path / "val.jsonl").string()) == 1);
  // A divergent learning rate ends in a numeric failure.
  CHECK(run_cli("train --seed 1 --set synth.n_train=16 --set synth.n_val=4 --set synth.n_test=4 --set train.epochs=2 "
                "--set optim.lr=1e30 --set optim.warmup_frac=0") == 3);
}
