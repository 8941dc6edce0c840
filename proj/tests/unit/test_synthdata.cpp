#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "vad/common.hpp"
#include "vad/synthdata.hpp"

using namespace vad;
namespace fs = std::filesystem;

namespace {

SceneConfig small_config(std::uint64_t seed) {
  SceneConfig cfg;
  cfg.frame_h = 64;
  cfg.frame_w = 64;
  cfg.clip_len = 10;
  cfg.rng_seed = seed;
  cfg.sprites_per_sequence = 1;
  cfg.min_sprite_px = 8;
  cfg.max_sprite_px = 10;
  cfg.max_speed = 4;
  cfg.fast_speed = 4;
  return cfg;
}

fs::path temp_dir(const char* name) {
  fs::path p = fs::temp_directory_path() / name;
  fs::remove_all(p);
  return p;
}

}  // namespace

TEST_CASE("generation is deterministic") {
  SceneConfig cfg = small_config(42);
  const VideoSequence a = generate_sequence(cfg, false);
  const VideoSequence b = generate_sequence(cfg, false);
  CHECK(a == b);
  const VideoSequence c = generate_sequence(cfg, true);
  const VideoSequence d = generate_sequence(cfg, true);
  CHECK(c == d);
  CHECK_FALSE(a == c);
}

TEST_CASE("static sprite produces all-zero flow") {
  SceneConfig cfg = small_config(1);
  cfg.normal_rules = {{ShapeKind::kSquare, {{0, 0}}}};
  const VideoSequence seq = generate_sequence(cfg, false);
  for (float v : seq.gt_flows) CHECK(v == 0.f);
}

TEST_CASE("flow equals sprite velocity inside every box") {
  SceneConfig cfg = small_config(7);
  cfg.sprites_per_sequence = 2;
  const VideoSequence seq = generate_sequence(cfg, false);
  REQUIRE(!seq.boxes[0].empty());
  for (int t = 0; t + 1 < seq.clip_len; ++t) {
    for (const auto& box : seq.boxes[static_cast<std::size_t>(t)]) {
      // Velocity recovered from the box trajectory itself.
      const Box* next_box = nullptr;
      for (const auto& nb : seq.boxes[static_cast<std::size_t>(t + 1)])
        if (nb.object_id == box.object_id) next_box = &nb;
      REQUIRE(next_box != nullptr);
      const float vx = static_cast<float>(next_box->x - box.x);
      const float vy = static_cast<float>(next_box->y - box.y);
      for (int y = box.y; y < box.y + box.h; ++y)
        for (int x = box.x; x < box.x + box.w; ++x) {
          CHECK(seq.flow(t)[(y * seq.w + x) * 2 + 0] == vx);
          CHECK(seq.flow(t)[(y * seq.w + x) * 2 + 1] == vy);
        }
    }
  }
}

TEST_CASE("background flow is zero") {
  SceneConfig cfg = small_config(3);
  const VideoSequence seq = generate_sequence(cfg, false);
  for (int t = 0; t + 1 < seq.clip_len; ++t) {
    std::vector<std::uint8_t> inside(static_cast<std::size_t>(seq.h) * seq.w, 0);
    for (const auto& box : seq.boxes[static_cast<std::size_t>(t)])
      for (int y = box.y; y < box.y + box.h; ++y)
        for (int x = box.x; x < box.x + box.w; ++x)
          inside[static_cast<std::size_t>(y) * seq.w + x] = 1;
    for (int i = 0; i < seq.h * seq.w; ++i)
      if (!inside[static_cast<std::size_t>(i)]) {
        CHECK(seq.flow(t)[i * 2 + 0] == 0.f);
        CHECK(seq.flow(t)[i * 2 + 1] == 0.f);
      }
  }
}

TEST_CASE("warp oracle: flow transports sprite pixels exactly") {
  // Integer velocities translate sprites rigidly, so warping frame k by the
  // flow must reproduce frame k+1 on sprite interiors. A flat background
  // makes the sprite support recoverable from pixel values alone: sprites
  // render at >= 0.47 intensity, the background at 0.2.
  SceneConfig cfg = small_config(11);
  cfg.sprites_per_sequence = 2;
  cfg.background = Background::kFlat;
  for (bool anomalous : {false, true}) {
    const VideoSequence seq = generate_sequence(cfg, anomalous);
    int checked = 0;
    for (int t = 0; t + 1 < seq.clip_len; ++t) {
      for (const auto& box : seq.boxes[static_cast<std::size_t>(t)]) {
        bool present_next = false;
        for (const auto& nb : seq.boxes[static_cast<std::size_t>(t + 1)])
          present_next = present_next || nb.object_id == box.object_id;
        if (!present_next) continue;
        for (int y = box.y; y < box.y + box.h; ++y)
          for (int x = box.x; x < box.x + box.w; ++x) {
            if (seq.frame(t)[y * seq.w + x] < 0.4f) continue;  // background inside the box
            const int u = static_cast<int>(seq.flow(t)[(y * seq.w + x) * 2 + 0]);
            const int v = static_cast<int>(seq.flow(t)[(y * seq.w + x) * 2 + 1]);
            const int ny = y + v, nx = x + u;
            REQUIRE(ny >= 0);
            REQUIRE(ny < seq.h);
            REQUIRE(nx >= 0);
            REQUIRE(nx < seq.w);
            CHECK(seq.frame(t)[y * seq.w + x] == seq.frame(t + 1)[ny * seq.w + nx]);
            ++checked;
          }
      }
    }
    CHECK(checked > 100);
  }
}

TEST_CASE("label soundness") {
  SceneConfig cfg = small_config(5);
  const VideoSequence normal = generate_sequence(cfg, false);
  for (auto l : normal.frame_labels) CHECK(l == 0);

  const VideoSequence anom = generate_sequence(cfg, true);
  int count = 0;
  for (int t = 0; t < anom.clip_len; ++t) {
    bool has_anom_box = false;
    for (const auto& b : anom.boxes[static_cast<std::size_t>(t)])
      has_anom_box = has_anom_box || b.is_anomalous;
    CHECK(static_cast<bool>(anom.frame_labels[static_cast<std::size_t>(t)]) == has_anom_box);
    count += anom.frame_labels[static_cast<std::size_t>(t)];
  }
  CHECK(count >= 1);
}

TEST_CASE("anomaly kinds are constructible and violate the rules") {
  SceneConfig cfg = small_config(9);
  for (AnomalyKind kind : {AnomalyKind::kNovelShape, AnomalyKind::kFastMotion,
                           AnomalyKind::kAppearanceMotionMismatch}) {
    cfg.anomaly_kinds = {kind};
    const VideoSequence seq = generate_sequence(cfg, true);
    bool found = false;
    for (const auto& frame_boxes : seq.boxes)
      for (const auto& b : frame_boxes) found = found || b.is_anomalous;
    CHECK(found);
  }
}

TEST_CASE("invalid configs raise ConfigError naming the field") {
  SceneConfig cfg = small_config(1);
  cfg.normal_rules.clear();
  CHECK_THROWS_WITH_AS(generate_sequence(cfg, false),
                       doctest::Contains("normal_rules"), ConfigError);

  SceneConfig cfg2 = small_config(1);
  cfg2.max_sprite_px = 200;
  CHECK_THROWS_AS(generate_sequence(cfg2, false), ConfigError);

  SceneConfig cfg3 = small_config(1);
  cfg3.normal_rules = {{ShapeKind::kSquare, {{2, 0}}},
                       {ShapeKind::kCircle, {{0, 2}}},
                       {ShapeKind::kTriangle, {{1, 0}}}};
  cfg3.anomaly_kinds = {AnomalyKind::kNovelShape};
  CHECK_THROWS_AS(generate_sequence(cfg3, true), ConfigError);  // every shape is normal
}

TEST_CASE("dataset round trip is exact") {
  SceneConfig cfg = small_config(21);
  std::vector<VideoSequence> seqs = {generate_sequence(cfg, false), generate_sequence(cfg, true)};
  const fs::path dir = temp_dir("vad_test_roundtrip");
  write_dataset(seqs, {false, true}, dir.string(), cfg.rng_seed, "{}");

  DatasetManifest man;
  const auto loaded = read_dataset(dir.string(), &man);
  REQUIRE(loaded.size() == seqs.size());
  CHECK(man.count == 2);
  CHECK(man.anomalous[1]);
  for (std::size_t i = 0; i < seqs.size(); ++i) CHECK(loaded[i] == seqs[i]);
  fs::remove_all(dir);
}

TEST_CASE("empty dataset round trips with count 0") {
  const fs::path dir = temp_dir("vad_test_empty");
  write_dataset({}, {}, dir.string(), 0, "");
  DatasetManifest man;
  const auto loaded = read_dataset(dir.string(), &man);
  CHECK(loaded.empty());
  CHECK(man.count == 0);
  fs::remove_all(dir);
}

TEST_CASE("manifest count mismatch is a format error") {
  SceneConfig cfg = small_config(31);
  const fs::path dir = temp_dir("vad_test_badcount");
  write_dataset({generate_sequence(cfg, false)}, {false}, dir.string(), 0, "");
  // Remove the sequence file the manifest references.
  fs::remove(dir / "seq_0000.bin");
  CHECK_THROWS_AS(read_dataset(dir.string()), FormatError);
  fs::remove_all(dir);
}

TEST_CASE("corrupt header reports the byte offset") {
  SceneConfig cfg = small_config(33);
  const fs::path dir = temp_dir("vad_test_corrupt");
  write_dataset({generate_sequence(cfg, false)}, {false}, dir.string(), 0, "");
  {
    std::fstream f(dir / "seq_0000.bin", std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(0);
    f.write("XXXX", 4);
  }
  try {
    read_dataset(dir.string());
    FAIL("expected FormatError");
  } catch (const FormatError& e) {
    CHECK(e.byte_offset() == 0);
  }
  fs::remove_all(dir);
}

TEST_CASE("truncated file is a format error") {
  SceneConfig cfg = small_config(35);
  const fs::path dir = temp_dir("vad_test_trunc");
  write_dataset({generate_sequence(cfg, false)}, {false}, dir.string(), 0, "");
  fs::resize_file(dir / "seq_0000.bin", 40);
  CHECK_THROWS_AS(read_dataset(dir.string()), FormatError);
  fs::remove_all(dir);
}

TEST_CASE("sprite masks cover plausible areas") {
  for (ShapeKind k : {ShapeKind::kSquare, ShapeKind::kCircle, ShapeKind::kTriangle}) {
    const auto m = sprite_mask(k, 9);
    int on = 0;
    for (auto v : m) on += v;
    CHECK(on > 9);          // more than a sliver
    CHECK(on <= 81);
    if (k == ShapeKind::kSquare) CHECK(on == 81);
  }
}
