#include "vad/synthdata.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "vad/rng.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace vad {

const char* to_string(ShapeKind k) {
  switch (k) {
    case ShapeKind::kSquare: return "square";
    case ShapeKind::kCircle: return "circle";
    case ShapeKind::kTriangle: return "triangle";
  }
  return "?";
}
const char* to_string(Background b) {
  switch (b) {
    case Background::kFlat: return "flat";
    case Background::kGradient: return "gradient";
    case Background::kTextured: return "textured";
  }
  return "?";
}
const char* to_string(AnomalyKind a) {
  switch (a) {
    case AnomalyKind::kNovelShape: return "novel_shape";
    case AnomalyKind::kFastMotion: return "fast_motion";
    case AnomalyKind::kAppearanceMotionMismatch: return "appearance_motion_mismatch";
  }
  return "?";
}

ShapeKind shape_kind_from_string(const std::string& s) {
  if (s == "square") return ShapeKind::kSquare;
  if (s == "circle") return ShapeKind::kCircle;
  if (s == "triangle") return ShapeKind::kTriangle;
  throw ConfigError("unknown shape_kind '" + s + "'");
}
Background background_from_string(const std::string& s) {
  if (s == "flat") return Background::kFlat;
  if (s == "gradient") return Background::kGradient;
  if (s == "textured") return Background::kTextured;
  throw ConfigError("unknown background '" + s + "'");
}
AnomalyKind anomaly_kind_from_string(const std::string& s) {
  if (s == "novel_shape") return AnomalyKind::kNovelShape;
  if (s == "fast_motion") return AnomalyKind::kFastMotion;
  if (s == "appearance_motion_mismatch") return AnomalyKind::kAppearanceMotionMismatch;
  throw ConfigError("unknown anomaly_kind '" + s + "'");
}

std::vector<VelocityRule> SceneConfig::default_rules() {
  // Squares move horizontally, circles vertically; the pairing is what a
  // mismatch anomaly violates.
  return {
      {ShapeKind::kSquare, {{2, 0}, {-2, 0}}},
      {ShapeKind::kCircle, {{0, 2}, {0, -2}}},
  };
}

void SceneConfig::validate() const {
  if (frame_h < 16 || frame_w < 16) throw ConfigError("frame_size: must be at least 16x16");
  if (clip_len < 2) throw ConfigError("clip_len: must be >= 2");
  if (normal_rules.empty()) throw ConfigError("normal_rules: must be non-empty");
  if (sprites_per_sequence < 1) throw ConfigError("sprites_per_sequence: must be >= 1");
  if (min_sprite_px < 4) throw ConfigError("min_sprite_px: must be >= 4");
  if (max_sprite_px < min_sprite_px) throw ConfigError("max_sprite_px: below min_sprite_px");
  if (max_sprite_px >= std::min(frame_h, frame_w))
    throw ConfigError("max_sprite_px: sprite larger than frame");
  if (max_speed < 1) throw ConfigError("max_speed: must be >= 1");
  if (fast_speed > max_speed) throw ConfigError("fast_speed: exceeds max_speed");
  for (const auto& rule : normal_rules) {
    if (rule.velocities.empty()) throw ConfigError("normal_rules: rule with empty velocity set");
    for (const auto& v : rule.velocities)
      if (std::abs(v[0]) > max_speed || std::abs(v[1]) > max_speed)
        throw ConfigError("normal_rules: velocity exceeds max_speed");
  }
  // Slowest-case spawn feasibility: the fastest allowed sprite must still fit
  // a full-clip trajectory inside the frame.
  const int travel = max_speed * (clip_len - 1);
  if (travel + max_sprite_px >= std::min(frame_h, frame_w))
    throw ConfigError("max_speed: trajectory of length clip_len cannot stay inside frame");
  if (anomaly_start_frame >= clip_len)
    throw ConfigError("anomaly_start_frame: beyond clip_len");
}

int SceneConfig::resolved_anomaly_start() const {
  return anomaly_start_frame >= 0 ? anomaly_start_frame : clip_len / 3;
}

std::vector<std::uint8_t> sprite_mask(ShapeKind shape, int s) {
  std::vector<std::uint8_t> m(static_cast<std::size_t>(s) * s, 0);
  const float c = (s - 1) / 2.f;
  for (int i = 0; i < s; ++i)
    for (int j = 0; j < s; ++j) {
      bool on = false;
      switch (shape) {
        case ShapeKind::kSquare:
          on = true;
          break;
        case ShapeKind::kCircle: {
          const float dy = i - c, dx = j - c;
          const float r = s / 2.f - 0.25f;
          on = dy * dy + dx * dx <= r * r;
          break;
        }
        case ShapeKind::kTriangle: {
          // Downward-growing isoceles: apex on the top row, base on the bottom.
          const float half_width = 0.5f + (s / 2.f - 0.5f) * i / std::max(1, s - 1);
          on = std::abs(j - c) <= half_width;
          break;
        }
      }
      if (on) m[static_cast<std::size_t>(i) * s + j] = 1;
    }
  return m;
}

namespace {

struct PlacedSprite {
  SpriteSpec spec;
  int first_frame = 0;  // visible from here to end of clip
  bool is_anomalous = false;
  int object_id = 0;
  std::vector<std::uint8_t> mask;

  std::array<int, 2> pos_at(int t) const {
    return {spec.spawn_pos[0] + spec.velocity[0] * (t - first_frame),
            spec.spawn_pos[1] + spec.velocity[1] * (t - first_frame)};
  }
  bool visible_at(int t) const { return t >= first_frame; }
};

bool boxes_overlap(int ax, int ay, int as, int bx, int by, int bs) {
  return ax < bx + bs && bx < ax + as && ay < by + bs && by < ay + as;
}

// True if the two sprites' boxes intersect at any frame where both are visible.
bool trajectories_collide(const PlacedSprite& a, const PlacedSprite& b, int clip_len) {
  for (int t = std::max(a.first_frame, b.first_frame); t < clip_len; ++t) {
    const auto pa = a.pos_at(t);
    const auto pb = b.pos_at(t);
    if (boxes_overlap(pa[0], pa[1], a.spec.size_px, pb[0], pb[1], b.spec.size_px)) return true;
  }
  return false;
}

float quantize(float v) {
  return std::round(std::clamp(v, 0.f, 1.f) * 255.f) / 255.f;
}

// Sample a spawn position such that the whole trajectory [first_frame, clip_len)
// stays inside the frame. Returns false if no position exists.
bool sample_spawn(Rng& rng, const SceneConfig& cfg, const SpriteSpec& spec, int first_frame,
                  std::array<int, 2>* out) {
  const int frames_moving = cfg.clip_len - 1 - first_frame;
  const int dx = spec.velocity[0] * frames_moving;
  const int dy = spec.velocity[1] * frames_moving;
  const int x_lo = std::max(0, -dx);
  const int x_hi = std::min(cfg.frame_w - spec.size_px, cfg.frame_w - spec.size_px - dx);
  const int y_lo = std::max(0, -dy);
  const int y_hi = std::min(cfg.frame_h - spec.size_px, cfg.frame_h - spec.size_px - dy);
  if (x_lo > x_hi || y_lo > y_hi) return false;
  (*out)[0] = rng.uniform_int(x_lo, x_hi);
  (*out)[1] = rng.uniform_int(y_lo, y_hi);
  return true;
}

std::vector<std::array<int, 2>> all_normal_velocities(const SceneConfig& cfg) {
  std::vector<std::array<int, 2>> out;
  for (const auto& r : cfg.normal_rules)
    for (const auto& v : r.velocities) out.push_back(v);
  return out;
}

bool velocity_allowed(const SceneConfig& cfg, ShapeKind shape, const std::array<int, 2>& v) {
  for (const auto& r : cfg.normal_rules)
    if (r.shape == shape)
      for (const auto& rv : r.velocities)
        if (rv == v) return true;
  return false;
}

SpriteSpec sample_normal_sprite(Rng& rng, const SceneConfig& cfg) {
  SpriteSpec s;
  const auto& rule = cfg.normal_rules[static_cast<std::size_t>(
      rng.uniform_int(0, static_cast<int>(cfg.normal_rules.size()) - 1))];
  s.shape = rule.shape;
  s.velocity = rule.velocities[static_cast<std::size_t>(
      rng.uniform_int(0, static_cast<int>(rule.velocities.size()) - 1))];
  s.size_px = rng.uniform_int(cfg.min_sprite_px, cfg.max_sprite_px);
  s.intensity = rng.uniform(0.55f, 0.95f);
  return s;
}

SpriteSpec sample_anomalous_sprite(Rng& rng, const SceneConfig& cfg, AnomalyKind kind) {
  SpriteSpec s;
  s.size_px = rng.uniform_int(cfg.min_sprite_px, cfg.max_sprite_px);
  s.intensity = rng.uniform(0.55f, 0.95f);
  switch (kind) {
    case AnomalyKind::kNovelShape: {
      // A shape no rule covers, moving at a perfectly normal velocity.
      std::vector<ShapeKind> all = {ShapeKind::kSquare, ShapeKind::kCircle, ShapeKind::kTriangle};
      std::vector<ShapeKind> novel;
      for (ShapeKind k : all) {
        bool used = false;
        for (const auto& r : cfg.normal_rules) used = used || r.shape == k;
        if (!used) novel.push_back(k);
      }
      if (novel.empty())
        throw ConfigError("anomaly_kinds: novel_shape requested but normal_rules cover every shape");
      s.shape = novel[static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(novel.size()) - 1))];
      const auto vels = all_normal_velocities(cfg);
      s.velocity = vels[static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(vels.size()) - 1))];
      break;
    }
    case AnomalyKind::kFastMotion: {
      const auto& rule = cfg.normal_rules[static_cast<std::size_t>(
          rng.uniform_int(0, static_cast<int>(cfg.normal_rules.size()) - 1))];
      s.shape = rule.shape;
      auto v = rule.velocities[static_cast<std::size_t>(
          rng.uniform_int(0, static_cast<int>(rule.velocities.size()) - 1))];
      // Scale the direction up to fast_speed.
      const float mag = std::sqrt(static_cast<float>(v[0] * v[0] + v[1] * v[1]));
      if (mag == 0.f) throw ConfigError("normal_rules: fast_motion needs a moving normal velocity");
      s.velocity = {static_cast<int>(std::round(v[0] / mag * cfg.fast_speed)),
                    static_cast<int>(std::round(v[1] / mag * cfg.fast_speed))};
      if (velocity_allowed(cfg, s.shape, s.velocity))
        throw ConfigError("fast_speed: scaled velocity is still a normal velocity");
      break;
    }
    case AnomalyKind::kAppearanceMotionMismatch: {
      // Shape and velocity each normal on their own; the pairing is not.
      std::vector<std::pair<ShapeKind, std::array<int, 2>>> candidates;
      for (const auto& ra : cfg.normal_rules)
        for (const auto& rb : cfg.normal_rules) {
          if (ra.shape == rb.shape) continue;
          for (const auto& v : rb.velocities)
            if (!velocity_allowed(cfg, ra.shape, v)) candidates.push_back({ra.shape, v});
        }
      if (candidates.empty())
        throw ConfigError(
            "normal_rules: appearance_motion_mismatch requires two shapes with distinct velocity sets");
      const auto& pick = candidates[static_cast<std::size_t>(
          rng.uniform_int(0, static_cast<int>(candidates.size()) - 1))];
      s.shape = pick.first;
      s.velocity = pick.second;
      break;
    }
  }
  return s;
}

void render_frame(const SceneConfig& cfg, const std::vector<PlacedSprite>& sprites, int t,
                  float* frame) {
  const int h = cfg.frame_h, w = cfg.frame_w;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      float v = 0.2f;
      switch (cfg.background) {
        case Background::kFlat: break;
        case Background::kGradient:
          v = 0.1f + 0.3f * (static_cast<float>(x + y) / static_cast<float>(h + w - 2));
          break;
        case Background::kTextured:
          v = 0.15f + 0.2f * hash01(static_cast<std::uint64_t>(x), static_cast<std::uint64_t>(y),
                                    cfg.rng_seed);
          break;
      }
      frame[y * w + x] = quantize(v);
    }
  for (const auto& sp : sprites) {
    if (!sp.visible_at(t)) continue;
    const auto pos = sp.pos_at(t);
    const int s = sp.spec.size_px;
    for (int i = 0; i < s; ++i)
      for (int j = 0; j < s; ++j) {
        if (!sp.mask[static_cast<std::size_t>(i) * s + j]) continue;
        const int y = pos[1] + i, x = pos[0] + j;
        float v = sp.spec.intensity;
        if (cfg.textured_sprites)
          // Texture lives in sprite-local coordinates so it translates rigidly.
          v *= 0.85f + 0.3f * hash01(static_cast<std::uint64_t>(i), static_cast<std::uint64_t>(j),
                                     cfg.rng_seed ^ static_cast<std::uint64_t>(sp.object_id + 1));
        frame[y * cfg.frame_w + x] = quantize(v);
      }
  }
}

}  // namespace

VideoSequence generate_sequence(const SceneConfig& config, bool anomalous) {
  config.validate();
  Rng rng(Rng::mix(config.rng_seed, anomalous ? 0xA50A50A5ULL : 0x5A05A05AULL));

  std::vector<PlacedSprite> sprites;
  int next_id = 0;
  const int max_retries = 200;

  auto place = [&](const SpriteSpec& base, int first_frame, bool is_anom) {
    for (int attempt = 0; attempt < max_retries; ++attempt) {
      PlacedSprite p;
      p.spec = base;
      p.first_frame = first_frame;
      p.is_anomalous = is_anom;
      if (!sample_spawn(rng, config, p.spec, first_frame, &p.spec.spawn_pos))
        throw ConfigError("max_speed: sprite trajectory cannot fit inside frame");
      bool collides = false;
      for (const auto& other : sprites)
        collides = collides || trajectories_collide(p, other, config.clip_len);
      if (collides) continue;
      p.object_id = next_id++;
      p.mask = sprite_mask(p.spec.shape, p.spec.size_px);
      sprites.push_back(std::move(p));
      return;
    }
    throw ConfigError("sprites_per_sequence: could not place sprites without overlap");
  };

  for (int i = 0; i < config.sprites_per_sequence; ++i)
    place(sample_normal_sprite(rng, config), 0, false);

  if (anomalous) {
    if (config.anomaly_kinds.empty())
      throw ConfigError("anomaly_kinds: empty but anomalous sequence requested");
    const AnomalyKind kind = config.anomaly_kinds[static_cast<std::size_t>(
        rng.uniform_int(0, static_cast<int>(config.anomaly_kinds.size()) - 1))];
    place(sample_anomalous_sprite(rng, config, kind), config.resolved_anomaly_start(), true);
  }

  VideoSequence seq;
  seq.clip_len = config.clip_len;
  seq.h = config.frame_h;
  seq.w = config.frame_w;
  seq.frames.assign(static_cast<std::size_t>(config.clip_len) * config.frame_h * config.frame_w, 0.f);
  seq.gt_flows.assign(
      static_cast<std::size_t>(config.clip_len - 1) * config.frame_h * config.frame_w * 2, 0.f);
  seq.frame_labels.assign(static_cast<std::size_t>(config.clip_len), 0);
  seq.boxes.resize(static_cast<std::size_t>(config.clip_len));

  for (int t = 0; t < config.clip_len; ++t) {
    render_frame(config, sprites, t, seq.frame(t));
    for (const auto& sp : sprites) {
      if (!sp.visible_at(t)) continue;
      const auto pos = sp.pos_at(t);
      seq.boxes[static_cast<std::size_t>(t)].push_back(
          {sp.object_id, pos[0], pos[1], sp.spec.size_px, sp.spec.size_px, sp.is_anomalous});
      if (sp.is_anomalous) seq.frame_labels[static_cast<std::size_t>(t)] = 1;
    }
  }

  // Ground-truth flow: the sprite's velocity over its whole box, zero elsewhere.
  for (int t = 0; t + 1 < config.clip_len; ++t) {
    float* fl = seq.flow(t);
    for (const auto& sp : sprites) {
      if (!sp.visible_at(t) || !sp.visible_at(t + 1)) continue;
      const auto pos = sp.pos_at(t);
      for (int i = 0; i < sp.spec.size_px; ++i)
        for (int j = 0; j < sp.spec.size_px; ++j) {
          const int y = pos[1] + i, x = pos[0] + j;
          fl[(y * config.frame_w + x) * 2 + 0] = static_cast<float>(sp.spec.velocity[0]);
          fl[(y * config.frame_w + x) * 2 + 1] = static_cast<float>(sp.spec.velocity[1]);
        }
    }
  }

  return seq;
}

// ---------------------------------------------------------------------------
// dataset io
// ---------------------------------------------------------------------------

namespace {

constexpr char kMagic[4] = {'V', 'A', 'D', 'S'};
constexpr std::uint32_t kVersion = 1;

void write_u32(std::ofstream& f, std::uint32_t v) {
  f.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

std::uint32_t read_u32(std::ifstream& f, const std::string& what, long long offset) {
  std::uint32_t v = 0;
  f.read(reinterpret_cast<char*>(&v), sizeof(v));
  if (!f) throw FormatError("truncated file while reading " + what, offset);
  return v;
}

std::string seq_file_name(int i) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "seq_%04d.bin", i);
  return buf;
}

void write_sequence(const VideoSequence& seq, const fs::path& bin_path, const fs::path& boxes_path) {
  std::ofstream f(bin_path, std::ios::binary);
  if (!f) throw FormatError("cannot open " + bin_path.string() + " for writing");
  f.write(kMagic, 4);
  write_u32(f, kVersion);
  write_u32(f, static_cast<std::uint32_t>(seq.clip_len));
  write_u32(f, static_cast<std::uint32_t>(seq.h));
  write_u32(f, static_cast<std::uint32_t>(seq.w));
  std::vector<std::uint8_t> bytes(seq.frames.size());
  for (std::size_t i = 0; i < seq.frames.size(); ++i)
    bytes[i] = static_cast<std::uint8_t>(std::lround(std::clamp(seq.frames[i], 0.f, 1.f) * 255.f));
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  f.write(reinterpret_cast<const char*>(seq.gt_flows.data()),
          static_cast<std::streamsize>(seq.gt_flows.size() * sizeof(float)));
  f.write(reinterpret_cast<const char*>(seq.frame_labels.data()),
          static_cast<std::streamsize>(seq.frame_labels.size()));
  if (!f) throw FormatError("short write to " + bin_path.string());

  json jb = json::array();
  for (const auto& frame_boxes : seq.boxes) {
    json jf = json::array();
    for (const auto& b : frame_boxes)
      jf.push_back({{"id", b.object_id},
                    {"x", b.x},
                    {"y", b.y},
                    {"w", b.w},
                    {"h", b.h},
                    {"anomalous", b.is_anomalous}});
    jb.push_back(std::move(jf));
  }
  std::ofstream bf(boxes_path);
  if (!bf) throw FormatError("cannot open " + boxes_path.string() + " for writing");
  bf << jb.dump(0) << "\n";
}

VideoSequence read_sequence(const fs::path& bin_path, const fs::path& boxes_path) {
  std::ifstream f(bin_path, std::ios::binary);
  if (!f) throw FormatError("cannot open " + bin_path.string());
  char magic[4];
  f.read(magic, 4);
  if (!f || std::memcmp(magic, kMagic, 4) != 0)
    throw FormatError("bad magic in " + bin_path.string(), 0);
  const std::uint32_t version = read_u32(f, "version", 4);
  if (version != kVersion)
    throw FormatError("unsupported version " + std::to_string(version) + " in " + bin_path.string(), 4);
  VideoSequence seq;
  seq.clip_len = static_cast<int>(read_u32(f, "clip_len", 8));
  seq.h = static_cast<int>(read_u32(f, "height", 12));
  seq.w = static_cast<int>(read_u32(f, "width", 16));
  if (seq.clip_len < 2 || seq.h < 1 || seq.w < 1 || seq.clip_len > 100000 || seq.h > 65536 ||
      seq.w > 65536)
    throw FormatError("implausible dimensions in " + bin_path.string(), 8);

  const std::size_t npix = static_cast<std::size_t>(seq.clip_len) * seq.h * seq.w;
  std::vector<std::uint8_t> bytes(npix);
  f.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(npix));
  if (!f) throw FormatError("truncated frame data in " + bin_path.string(), 20);
  seq.frames.resize(npix);
  for (std::size_t i = 0; i < npix; ++i) seq.frames[i] = static_cast<float>(bytes[i]) / 255.f;

  const std::size_t nflow = static_cast<std::size_t>(seq.clip_len - 1) * seq.h * seq.w * 2;
  seq.gt_flows.resize(nflow);
  f.read(reinterpret_cast<char*>(seq.gt_flows.data()),
         static_cast<std::streamsize>(nflow * sizeof(float)));
  if (!f)
    throw FormatError("truncated flow data in " + bin_path.string(),
                      20 + static_cast<long long>(npix));

  seq.frame_labels.resize(static_cast<std::size_t>(seq.clip_len));
  f.read(reinterpret_cast<char*>(seq.frame_labels.data()),
         static_cast<std::streamsize>(seq.frame_labels.size()));
  if (!f)
    throw FormatError("truncated labels in " + bin_path.string(),
                      20 + static_cast<long long>(npix + nflow * sizeof(float)));

  std::ifstream bf(boxes_path);
  if (!bf) throw FormatError("missing boxes sidecar " + boxes_path.string());
  json jb;
  try {
    bf >> jb;
  } catch (const json::exception& e) {
    throw FormatError("invalid boxes JSON in " + boxes_path.string() + ": " + e.what());
  }
  if (!jb.is_array() || static_cast<int>(jb.size()) != seq.clip_len)
    throw FormatError("boxes sidecar frame count mismatch in " + boxes_path.string());
  seq.boxes.resize(static_cast<std::size_t>(seq.clip_len));
  for (int t = 0; t < seq.clip_len; ++t)
    for (const auto& j : jb[static_cast<std::size_t>(t)])
      seq.boxes[static_cast<std::size_t>(t)].push_back({j.at("id").get<int>(), j.at("x").get<int>(),
                                                        j.at("y").get<int>(), j.at("w").get<int>(),
                                                        j.at("h").get<int>(),
                                                        j.at("anomalous").get<bool>()});
  return seq;
}

}  // namespace

DatasetManifest write_dataset(const std::vector<VideoSequence>& sequences,
                              const std::vector<bool>& anomalous, const std::string& dir,
                              std::uint64_t seed, const std::string& config_json) {
  if (anomalous.size() != sequences.size())
    throw ConfigError("write_dataset: anomalous flags count mismatch");
  fs::create_directories(dir);
  DatasetManifest man;
  man.seed = seed;
  man.count = static_cast<int>(sequences.size());
  man.config_json = config_json;

  json jseqs = json::array();
  for (std::size_t i = 0; i < sequences.size(); ++i) {
    const std::string name = seq_file_name(static_cast<int>(i));
    const std::string boxes = name.substr(0, name.size() - 4) + ".boxes.json";
    write_sequence(sequences[i], fs::path(dir) / name, fs::path(dir) / boxes);
    man.files.push_back(name);
    man.anomalous.push_back(anomalous[i]);
    jseqs.push_back({{"file", name},
                     {"boxes", boxes},
                     {"anomalous", static_cast<bool>(anomalous[i])},
                     {"clip_len", sequences[i].clip_len},
                     {"height", sequences[i].h},
                     {"width", sequences[i].w}});
  }

  json jman = {{"format", "vad-dataset"},
               {"version", 1},
               {"seed", seed},
               {"count", man.count},
               {"sequences", std::move(jseqs)}};
  if (!config_json.empty()) jman["config"] = json::parse(config_json);
  std::ofstream mf(fs::path(dir) / "manifest.json");
  if (!mf) throw FormatError("cannot write manifest in " + dir);
  mf << jman.dump(2) << "\n";
  return man;
}

std::vector<VideoSequence> read_dataset(const std::string& dir, DatasetManifest* manifest) {
  std::ifstream mf(fs::path(dir) / "manifest.json");
  if (!mf) throw FormatError("missing manifest.json in " + dir);
  json jman;
  try {
    mf >> jman;
  } catch (const json::exception& e) {
    throw FormatError(std::string("invalid manifest.json: ") + e.what());
  }
  if (jman.value("format", "") != "vad-dataset")
    throw FormatError("manifest.json is not a vad-dataset manifest");
  const int count = jman.at("count").get<int>();
  const auto& jseqs = jman.at("sequences");
  if (static_cast<int>(jseqs.size()) != count)
    throw FormatError("manifest count " + std::to_string(count) + " does not match sequence list (" +
                      std::to_string(jseqs.size()) + ")");

  DatasetManifest man;
  man.seed = jman.value("seed", 0ULL);
  man.count = count;
  if (jman.contains("config")) man.config_json = jman["config"].dump();

  std::vector<VideoSequence> out;
  for (const auto& js : jseqs) {
    const std::string file = js.at("file").get<std::string>();
    const std::string boxes = js.at("boxes").get<std::string>();
    if (!fs::exists(fs::path(dir) / file))
      throw FormatError("manifest lists missing file " + file);
    out.push_back(read_sequence(fs::path(dir) / file, fs::path(dir) / boxes));
    man.files.push_back(file);
    man.anomalous.push_back(js.at("anomalous").get<bool>());
  }
  if (manifest) *manifest = std::move(man);
  return out;
}

}  // namespace vad
