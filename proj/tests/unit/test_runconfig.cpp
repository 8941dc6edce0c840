#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "vad/runconfig.hpp"

using namespace vad;
using nlohmann::json;
namespace fs = std::filesystem;

TEST_CASE("flat keys round trip the defaults") {
  RunConfig c;
  const json flat = to_flat_json(c);
  CHECK(flat.contains("train.lr_init"));
  CHECK(flat.contains("scene.clip_len"));
  CHECK(flat.contains("train.arch.channels"));
  RunConfig back = run_config_from_flat_json(flat);
  CHECK(to_flat_json(back) == flat);
}

TEST_CASE("paper-setting defaults are pinned") {
  RunConfig c;
  CHECK(c.train.lr_init == doctest::Approx(2e-4f));
  CHECK(c.train.lr_decay == doctest::Approx(0.8f));
  CHECK(c.train.lr_decay_every_epochs == 10);
  CHECK(c.train.batch_size == 128);
  CHECK(c.train.epochs == 60);
  CHECK(c.train.memory_sizes == std::vector<int>{40, 40, 40});
  CHECK(c.train.weights.intensity == 1.f);
  CHECK(c.train.weights.gradient == 1.f);
  CHECK(c.train.weights.align == 1.f);
  CHECK(c.train.weights.compact == doctest::Approx(5e-3f));
  CHECK(c.train.weights.diversity == doctest::Approx(1e-4f));
  CHECK(c.train.score_w_p == doctest::Approx(0.2f));
  CHECK(c.train.score_w_f == doctest::Approx(0.8f));
  CHECK(c.train.arch.channels == std::vector<int>{64, 128, 256, 512});
}

TEST_CASE("apply_flat_key routes values and rejects unknown keys") {
  RunConfig c;
  apply_flat_key(c, "train.lr_init", json(1e-3));
  CHECK(c.train.lr_init == doctest::Approx(1e-3f));
  apply_flat_key(c, "scene.clip_len", json(12));
  CHECK(c.scene.clip_len == 12);
  apply_flat_key(c, "train.arch.skip_variant", json("sc2"));
  CHECK(c.train.arch.skip_variant == SkipVariant::kSC2);
  apply_flat_key(c, "train.arch.channels", json::array({8, 16, 32}));
  CHECK(c.train.arch.channels == std::vector<int>{8, 16, 32});

  CHECK_THROWS_AS(apply_flat_key(c, "train.nope", json(1)), ConfigError);
  CHECK_THROWS_AS(apply_flat_key(c, "", json(1)), ConfigError);
}

TEST_CASE("override strings parse JSON values with bare-word fallback") {
  RunConfig c;
  apply_override(c, "train.epochs=5");
  CHECK(c.train.epochs == 5);
  apply_override(c, "scene.background=gradient");
  CHECK(c.scene.background == Background::kGradient);
  CHECK_THROWS_AS(apply_override(c, "no_equals_sign"), ConfigError);
  CHECK_THROWS_AS(apply_override(c, "scene.background=purple"), ConfigError);
}

TEST_CASE("config file loads with unknown-key errors") {
  const fs::path path = fs::temp_directory_path() / "vad_test_cfg.json";
  {
    std::ofstream f(path);
    f << R"({"train.batch_size": 16, "scene.frame_h": 96, "scene.frame_w": 96})";
  }
  RunConfig c = load_run_config(path.string());
  CHECK(c.train.batch_size == 16);
  CHECK(c.scene.frame_h == 96);
  {
    std::ofstream f(path);
    f << R"({"bogus.key": 1})";
  }
  CHECK_THROWS_AS(load_run_config(path.string()), ConfigError);
  {
    std::ofstream f(path);
    f << "not json";
  }
  CHECK_THROWS_AS(load_run_config(path.string()), ConfigError);
  fs::remove(path);
}

TEST_CASE("nested train config round trips through JSON") {
  TrainConfig t;
  t.arch.skip_variant = SkipVariant::kSC1;
  t.arch.mgsm_enabled = false;
  t.memory_sizes = {10, 20, 30};
  t.weights.compact = 0.25f;
  t.epochs = 3;
  t.seed = 999;
  const json j = to_json(t);
  TrainConfig back;
  from_json_into(j, back);
  CHECK(back.arch.skip_variant == SkipVariant::kSC1);
  CHECK_FALSE(back.arch.mgsm_enabled);
  CHECK(back.memory_sizes == std::vector<int>{10, 20, 30});
  CHECK(back.weights.compact == doctest::Approx(0.25f));
  CHECK(back.epochs == 3);
  CHECK(back.seed == 999);
}
