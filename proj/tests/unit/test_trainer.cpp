#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "vad/stcpipe.hpp"
#include "vad/trainer.hpp"

using namespace vad;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

ArchConfig tiny_arch() {
  ArchConfig a;
  a.levels = 3;
  a.channels = {4, 6, 8};
  a.input_size = 32;
  return a;
}

TrainConfig tiny_train(std::uint64_t seed) {
  TrainConfig c;
  c.arch = tiny_arch();
  c.memory_sizes = {4, 4};
  c.batch_size = 8;
  c.epochs = 1;
  c.seed = seed;
  return c;
}

std::vector<Stc> tiny_dataset(int n_sequences, std::uint64_t seed) {
  SceneConfig cfg;
  cfg.frame_h = 64;
  cfg.frame_w = 64;
  cfg.clip_len = 8;
  cfg.rng_seed = seed;
  cfg.sprites_per_sequence = 1;
  cfg.max_speed = 4;
  cfg.fast_speed = 4;
  std::vector<Stc> all;
  for (int i = 0; i < n_sequences; ++i) {
    cfg.rng_seed = Rng::mix(seed, static_cast<std::uint64_t>(i));
    const VideoSequence seq = generate_sequence(cfg, false);
    auto stcs = build_sequence_stcs(seq, BoxMode::kGroundTruth, FlowSource::kGroundTruth);
    all.insert(all.end(), stcs.begin(), stcs.end());
  }
  return all;
}

std::vector<json> parse_log(const std::string& text) {
  std::vector<json> lines;
  std::istringstream ss(text);
  std::string line;
  while (std::getline(ss, line))
    if (!line.empty()) lines.push_back(json::parse(line));
  return lines;
}

}  // namespace

TEST_CASE("fill_model_inputs lays out the cubes") {
  const auto data = tiny_dataset(1, 5);
  REQUIRE(!data.empty());
  const ArchConfig arch = tiny_arch();
  Tensor app, flow, target;
  fill_model_inputs(arch, {&data[0], &data[1]}, &app, &flow, &target);
  CHECK(app.shape() == std::vector<int>{2, 4, 32, 32});
  CHECK(flow.shape() == std::vector<int>{2, 8, 32, 32});
  CHECK(target.shape() == std::vector<int>{2, 1, 32, 32});
  // Target is the 5th appearance slice.
  CHECK(target[0] == data[0].appearance[4 * 32 * 32]);
  // Flow channel 0 is the u component of the first flow slice.
  CHECK(flow[0] == data[0].flow[0]);
  CHECK(flow[32 * 32] == data[0].flow[1]);  // channel 1 = v component

  // Motion-only: 3 flow fields in, the 4th as a 2-channel target.
  ArchConfig motion = tiny_arch();
  motion.appearance_enabled = false;
  motion.align_enabled = false;
  motion.mgsm_enabled = false;
  motion.skip_variant = SkipVariant::kNoSC;
  motion.in_channels_motion = 6;
  motion.out_channels = 2;
  motion.final_activation = FinalActivation::kIdentity;
  Tensor app2, flow2, target2;
  fill_model_inputs(motion, {&data[0]}, &app2, &flow2, &target2);
  CHECK(app2.empty());
  CHECK(flow2.shape() == std::vector<int>{1, 6, 32, 32});
  CHECK(target2.shape() == std::vector<int>{1, 2, 32, 32});
  CHECK(target2[0] == data[0].flow[3 * 32 * 32 * 2]);
}

TEST_CASE("train: step bookkeeping and lr decay boundary") {
  auto data = tiny_dataset(5, 7);
  REQUIRE(data.size() >= 20);
  data.resize(20);
  TrainConfig cfg = tiny_train(1);
  cfg.batch_size = 8;
  cfg.epochs = 11;
  cfg.lr_init = 2e-4f;
  cfg.lr_decay = 0.8f;
  cfg.lr_decay_every_epochs = 10;

  std::ostringstream log;
  Checkpoint ckpt = train(data, cfg, &log);
  const auto lines = parse_log(log.str());
  // ceil(20/8) = 3 steps per epoch.
  REQUIRE(lines.size() == static_cast<std::size_t>(3 * 11));
  CHECK(lines[0]["epoch"] == 1);
  CHECK(lines[0]["lr"].get<double>() == doctest::Approx(2e-4));
  // Epochs 1..10 at the initial rate; epoch 11 decayed by 0.8.
  CHECK(lines[3 * 9]["lr"].get<double>() == doctest::Approx(2e-4));
  CHECK(lines[3 * 10]["epoch"] == 11);
  CHECK(lines[3 * 10]["lr"].get<double>() == doctest::Approx(1.6e-4));
  CHECK(ckpt.epoch == 11);
  for (const auto& l : lines) CHECK(std::isfinite(l["total"].get<double>()));
}

TEST_CASE("train rejects empty and anomalous data") {
  TrainConfig cfg = tiny_train(2);
  CHECK_THROWS_AS(train({}, cfg, nullptr), ConfigError);

  auto data = tiny_dataset(1, 9);
  data[0].is_anomalous = true;
  CHECK_THROWS_AS(train(data, cfg, nullptr), ConfigError);
}

TEST_CASE("training is deterministic given seed") {
  auto data = tiny_dataset(3, 11);
  REQUIRE(data.size() >= 12);
  data.resize(12);
  TrainConfig cfg = tiny_train(3);
  cfg.epochs = 2;
  std::ostringstream log1, log2;
  train(data, cfg, &log1);
  train(data, cfg, &log2);
  CHECK(log1.str() == log2.str());
}

TEST_CASE("fit_score_stats: moments, floor, and persistence") {
  auto data = tiny_dataset(6, 13);
  REQUIRE(data.size() >= 24);
  data.resize(24);
  TrainConfig cfg = tiny_train(4);
  cfg.epochs = 2;
  Checkpoint ckpt = train(data, cfg, nullptr);
  const ScoreStats stats = fit_score_stats(ckpt, data);
  CHECK(stats.fitted);
  CHECK(stats.d_p >= kStdFloor);
  CHECK(stats.d_f >= kStdFloor);
  CHECK(std::isfinite(stats.fused_min));
  CHECK(ckpt.stats.fitted);

  // Constant scores collapse to the floor; z-scores become 0.
  ScoreStats c;
  c.u_p = 0.5f;
  c.d_p = kStdFloor;
  c.u_f = 0.1f;
  c.d_f = kStdFloor;
  CHECK(fuse(0.5f, 0.1f, c, 0.2f, 0.8f) == doctest::Approx(0.f));
}

TEST_CASE("mean/std worked example via fit path") {
  // Scores {0, 2}: mean 1, population std 1. Exercised through fuse.
  ScoreStats s;
  s.u_p = 1.f;
  s.d_p = 1.f;
  s.u_f = 0.f;
  s.d_f = 1.f;
  CHECK(fuse(1.f + 1.f, 0.f, s, 1.f, 0.f) == doctest::Approx(1.f));  // unit z-score
}

TEST_CASE("checkpoint round trip reproduces eval outputs bit-exactly") {
  auto data = tiny_dataset(3, 17);
  REQUIRE(data.size() >= 10);
  data.resize(10);
  TrainConfig cfg = tiny_train(5);
  Checkpoint ckpt = train(data, cfg, nullptr);
  fit_score_stats(ckpt, data);

  Tensor app, flow, target;
  std::vector<const Stc*> ptrs;
  for (const auto& s : data) ptrs.push_back(&s);
  fill_model_inputs(cfg.arch, ptrs, &app, &flow, &target);
  const Tensor before = forward(ckpt.model, app, flow, false).prediction->value;

  const fs::path path = fs::temp_directory_path() / "vad_test_ckpt.bin";
  save_checkpoint(ckpt, path.string());
  Checkpoint loaded = load_checkpoint(path.string());
  fs::remove(path);

  const Tensor after = forward(loaded.model, app, flow, false).prediction->value;
  CHECK(before.vec() == after.vec());
  CHECK(loaded.stats.fitted);
  CHECK(loaded.stats.u_p == ckpt.stats.u_p);
  CHECK(loaded.adam_t == ckpt.adam_t);
  CHECK(loaded.config.arch.channels == cfg.arch.channels);
}

TEST_CASE("load_checkpoint validates the container") {
  const fs::path path = fs::temp_directory_path() / "vad_test_badckpt.bin";
  {
    std::ofstream f(path, std::ios::binary);
    f << "NOPE";
  }
  CHECK_THROWS_AS(load_checkpoint(path.string()), FormatError);
  fs::remove(path);
}

TEST_CASE("score_sequence emits per-frame maxima with floor for empty frames") {
  auto data = tiny_dataset(2, 19);
  TrainConfig cfg = tiny_train(6);
  Checkpoint ckpt = train(data, cfg, nullptr);
  fit_score_stats(ckpt, data);

  SceneConfig scene;
  scene.frame_h = 64;
  scene.frame_w = 64;
  scene.clip_len = 8;
  scene.rng_seed = 555;
  scene.sprites_per_sequence = 1;
  scene.max_speed = 4;
  scene.fast_speed = 4;
  const VideoSequence seq = generate_sequence(scene, true);
  const SequenceScores ss = score_sequence(ckpt, seq, BoxMode::kGroundTruth,
                                           FlowSource::kGroundTruth);
  REQUIRE(ss.frames.score.size() == static_cast<std::size_t>(seq.clip_len));
  // Frames before the first STC carry the floor.
  const float floor = floor_score(ckpt.stats);
  for (int t = 0; t < 4; ++t) CHECK(ss.frames.score[static_cast<std::size_t>(t)] == floor);
  // Scored frames hold the max over that frame's records.
  for (const auto& r : ss.records) {
    CHECK(ss.frames.score[static_cast<std::size_t>(r.frame_index)] >= r.s);
  }
  // Fused scores recombine from the parts.
  for (const auto& r : ss.records)
    CHECK(r.s == doctest::Approx(fuse(r.s_p, r.s_f, ckpt.stats, cfg.score_w_p, cfg.score_w_f)));
}

TEST_CASE("adam updates parameters and weight decay touches only conv weights") {
  Var w = make_leaf(Tensor({2, 2}, {1.f, 1.f, 1.f, 1.f}), true);
  Var b = make_leaf(Tensor({2}, {1.f, 1.f}), true);
  Adam adam({w, b}, {true, false}, 0.1f, 0.5f);
  // Zero gradient: only decay moves the decayed parameter.
  w->grad = Tensor({2, 2});
  w->has_grad = true;
  b->grad = Tensor({2});
  b->has_grad = true;
  adam.step();
  CHECK(w->value[0] == doctest::Approx(1.f - 0.1f * 0.5f * 1.f));
  CHECK(b->value[0] == doctest::Approx(1.f));
}
