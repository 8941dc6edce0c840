// vadctl: command-line surface for the synthetic video anomaly detection
// pipeline: dataset generation, training, scoring, evaluation, the ablation
// matrix, and memory-bank inspection.

#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include "vad/common.hpp"
#include "vad/runconfig.hpp"
#include "vad/scoring.hpp"
#include "vad/stcpipe.hpp"
#include "vad/trainer.hpp"

using namespace vad;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct CommonOpts {
  std::string config_file;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
};

RunConfig resolve_config(const CommonOpts& opts) {
  RunConfig cfg;
  if (!opts.config_file.empty()) cfg = load_run_config(opts.config_file);
  for (const auto& kv : opts.overrides) apply_override(cfg, kv);
  if (opts.seed) {
    cfg.scene.rng_seed = *opts.seed;
    cfg.train.seed = *opts.seed;
  }
  return cfg;
}

void write_provenance(const RunConfig& cfg, const fs::path& path) {
  std::ofstream f(path);
  if (!f) throw FormatError("cannot write " + path.string());
  f << to_flat_json(cfg).dump(2) << "\n";
}

void add_common(CLI::App* cmd, CommonOpts* opts) {
  cmd->add_option("--config", opts->config_file, "JSON config file with flat dotted keys");
  cmd->add_option("--set", opts->overrides, "Override a config key, e.g. --set train.epochs=5");
  cmd->add_option("--seed", opts->seed, "Seed for both data generation and training");
}

std::vector<Stc> load_training_stcs(const std::string& dir, FlowSource flow_source) {
  DatasetManifest man;
  const auto seqs = read_dataset(dir, &man);
  std::vector<VideoSequence> normal;
  for (std::size_t i = 0; i < seqs.size(); ++i)
    if (!man.anomalous[i]) normal.push_back(seqs[i]);
  if (normal.empty()) throw ConfigError("training data in " + dir + " has no normal sequences");
  return build_dataset_stcs(normal, BoxMode::kGroundTruth, flow_source);
}

std::string seq_csv_name(int i) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "seq_%04d.csv", i);
  return buf;
}

// ---- gen-data ----

int cmd_gen_data(const CommonOpts& common, const std::string& out_dir, int n_normal,
                 int n_anomalous, const std::vector<std::string>& kinds) {
  RunConfig cfg = resolve_config(common);
  if (!kinds.empty()) {
    cfg.scene.anomaly_kinds.clear();
    for (const auto& k : kinds) cfg.scene.anomaly_kinds.push_back(anomaly_kind_from_string(k));
  }
  if (n_normal < 0 || n_anomalous < 0) throw ConfigError("--normal/--anomalous: must be >= 0");

  std::vector<VideoSequence> seqs;
  std::vector<bool> anomalous;
  for (int i = 0; i < n_normal + n_anomalous; ++i) {
    const bool anom = i >= n_normal;
    SceneConfig sc = cfg.scene;
    sc.rng_seed = Rng::mix(cfg.scene.rng_seed, static_cast<std::uint64_t>(i));
    seqs.push_back(generate_sequence(sc, anom));
    anomalous.push_back(anom);
  }
  write_dataset(seqs, anomalous, out_dir, cfg.scene.rng_seed, to_flat_json(cfg).dump());
  std::cout << "wrote " << seqs.size() << " sequences to " << out_dir << "\n";
  return kExitOk;
}

// ---- train ----

int cmd_train(const CommonOpts& common, const std::string& data_dir, const std::string& out_ckpt,
              const std::string& log_path, const std::string& flow_source_name) {
  RunConfig cfg = resolve_config(common);
  const FlowSource src =
      flow_source_name == "estimated" ? FlowSource::kEstimated : FlowSource::kGroundTruth;
  const auto stcs = load_training_stcs(data_dir, src);

  std::ofstream log;
  if (!log_path.empty()) {
    log.open(log_path);
    if (!log) throw FormatError("cannot open log file " + log_path);
    log << json{{"config", to_flat_json(cfg)}}.dump() << "\n";
  }
  Checkpoint ckpt = train(stcs, cfg.train, log.is_open() ? &log : nullptr);
  fit_score_stats(ckpt, stcs);
  save_checkpoint(ckpt, out_ckpt);
  write_provenance(cfg, out_ckpt + ".config.json");
  std::cout << "trained on " << stcs.size() << " STCs; checkpoint at " << out_ckpt << "\n";
  return kExitOk;
}

// ---- score ----

int cmd_score(const std::string& ckpt_path, const std::string& data_dir,
              const std::string& out_dir, const std::string& box_mode_name,
              const std::string& flow_source_name) {
  Checkpoint ckpt = load_checkpoint(ckpt_path);
  const BoxMode box_mode =
      box_mode_name == "bg_subtract" ? BoxMode::kBgSubtract : BoxMode::kGroundTruth;
  const FlowSource src =
      flow_source_name == "estimated" ? FlowSource::kEstimated : FlowSource::kGroundTruth;

  DatasetManifest man;
  const auto seqs = read_dataset(data_dir, &man);
  fs::create_directories(out_dir);

  json meta = {{"stats",
                {{"u_p", ckpt.stats.u_p},
                 {"d_p", ckpt.stats.d_p},
                 {"u_f", ckpt.stats.u_f},
                 {"d_f", ckpt.stats.d_f},
                 {"fused_min", ckpt.stats.fused_min}}},
               {"weights", {{"w_p", ckpt.config.score_w_p}, {"w_f", ckpt.config.score_w_f}}},
               {"config", to_json(ckpt.config)},
               {"sequences", json::array()}};

  for (std::size_t i = 0; i < seqs.size(); ++i) {
    const SequenceScores ss = score_sequence(ckpt, seqs[i], box_mode, src);
    const std::string name = seq_csv_name(static_cast<int>(i));
    export_curve(ss.frames, (fs::path(out_dir) / name).string());
    meta["sequences"].push_back({{"file", name}, {"anomalous", static_cast<bool>(man.anomalous[i])}});
  }
  std::ofstream mf(fs::path(out_dir) / "scoring_meta.json");
  mf << meta.dump(2) << "\n";
  std::cout << "scored " << seqs.size() << " sequences into " << out_dir << "\n";
  return kExitOk;
}

// ---- eval ----

int cmd_eval(const std::string& scores_dir, const std::string& out_path) {
  std::vector<float> scores;
  std::vector<std::uint8_t> labels;
  std::vector<std::string> files;
  for (const auto& entry : fs::directory_iterator(scores_dir))
    if (entry.path().extension() == ".csv") files.push_back(entry.path().string());
  std::sort(files.begin(), files.end());
  if (files.empty()) throw FormatError("no score curves (*.csv) in " + scores_dir);
  for (const auto& f : files) {
    const FrameScores fs = import_curve(f);
    scores.insert(scores.end(), fs.score.begin(), fs.score.end());
    labels.insert(labels.end(), fs.label.begin(), fs.label.end());
  }
  const double auc = roc_auc(scores, labels);

  json summary = {{"auc", auc},
                  {"n_frames", scores.size()},
                  {"n_anomalous", std::count(labels.begin(), labels.end(), 1)},
                  {"n_sequences", files.size()}};
  const fs::path meta_path = fs::path(scores_dir) / "scoring_meta.json";
  if (fs::exists(meta_path)) {
    std::ifstream mf(meta_path);
    json meta;
    mf >> meta;
    summary["weights"] = meta.value("weights", json::object());
    summary["stats"] = meta.value("stats", json::object());
    summary["config"] = meta.value("config", json::object());
  }
  if (out_path.empty()) {
    std::cout << summary.dump(2) << "\n";
  } else {
    std::ofstream f(out_path);
    if (!f) throw FormatError("cannot write " + out_path);
    f << summary.dump(2) << "\n";
    std::cout << "auc " << auc << " over " << scores.size() << " frames -> " << out_path << "\n";
  }
  return kExitOk;
}

// ---- ablate ----

struct AblationRow {
  std::string label;
  TrainConfig config;
};

TrainConfig row_config(const TrainConfig& base, bool app, bool mot, bool ffrp, bool align,
                       bool mgsm, SkipVariant skip) {
  TrainConfig c = base;
  c.arch.appearance_enabled = app;
  c.arch.motion_enabled = mot;
  c.arch.ffrp_enabled = ffrp;
  c.arch.align_enabled = align;
  c.arch.mgsm_enabled = mgsm;
  c.arch.skip_variant = skip;
  if (!app) {
    // Motion-only: predict the last flow field from the first three.
    c.arch.skip_variant = SkipVariant::kNoSC;
    c.arch.mgsm_enabled = false;
    c.arch.in_channels_motion = 2 * (kStcFlows - 1);
    c.arch.out_channels = 2;
    c.arch.final_activation = FinalActivation::kIdentity;
  }
  if (!mot) {
    c.arch.ffrp_enabled = false;
    c.arch.align_enabled = false;
  }
  if (!(app && mot)) {
    c.score_w_p = 1.f;
    c.score_w_f = 0.f;
  }
  if (!c.arch.mgsm_enabled) c.memory_sizes.clear();
  return c;
}

std::vector<AblationRow> ablation_matrix(const TrainConfig& base) {
  std::vector<AblationRow> rows;
  rows.push_back({"appearance_only",
                  row_config(base, true, false, false, false, false, SkipVariant::kFull)});
  rows.push_back({"motion_only",
                  row_config(base, false, true, true, false, false, SkipVariant::kNoSC)});
  rows.push_back({"two_stream_ffrp",
                  row_config(base, true, true, true, false, false, SkipVariant::kFull)});
  rows.push_back({"two_stream_ffrp_align",
                  row_config(base, true, true, true, true, false, SkipVariant::kFull)});
  rows.push_back({"appearance_mgsm",
                  row_config(base, true, false, false, false, true, SkipVariant::kFull)});
  rows.push_back({"full", row_config(base, true, true, true, true, true, SkipVariant::kFull)});
  rows.push_back({"skip_full", row_config(base, true, true, true, true, true, SkipVariant::kFull)});
  rows.push_back({"skip_nosc", row_config(base, true, true, true, true, true, SkipVariant::kNoSC)});
  rows.push_back({"skip_sc2", row_config(base, true, true, true, true, true, SkipVariant::kSC2)});
  rows.push_back({"skip_sc1", row_config(base, true, true, true, true, true, SkipVariant::kSC1)});
  return rows;
}

int cmd_ablate(const CommonOpts& common, const std::string& data_dir, const std::string& out_dir) {
  RunConfig cfg = resolve_config(common);
  const std::string train_dir = (fs::path(data_dir) / "train").string();
  const std::string test_dir = (fs::path(data_dir) / "test").string();
  if (!fs::exists(train_dir) || !fs::exists(test_dir))
    throw ConfigError("--data: expected " + data_dir + " to contain train/ and test/ datasets");

  const auto train_stcs = load_training_stcs(train_dir, FlowSource::kGroundTruth);
  DatasetManifest test_man;
  const auto test_seqs = read_dataset(test_dir, &test_man);

  fs::create_directories(out_dir);
  std::ofstream csv(fs::path(out_dir) / "ablation.csv");
  if (!csv) throw FormatError("cannot write ablation.csv in " + out_dir);
  csv << "index,label,appearance,motion,ffrp,align,mgsm,skip_variant,auc,status\n";

  bool any_failed = false;
  const auto rows = ablation_matrix(cfg.train);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& row = rows[i];
    std::string status = "ok";
    double auc = 0.0;
    try {
      Checkpoint ckpt = train(train_stcs, row.config, nullptr);
      fit_score_stats(ckpt, train_stcs);
      std::vector<float> scores;
      std::vector<std::uint8_t> labels;
      for (const auto& seq : test_seqs) {
        const SequenceScores ss =
            score_sequence(ckpt, seq, BoxMode::kGroundTruth, FlowSource::kGroundTruth);
        scores.insert(scores.end(), ss.frames.score.begin(), ss.frames.score.end());
        labels.insert(labels.end(), ss.frames.label.begin(), ss.frames.label.end());
      }
      auc = roc_auc(scores, labels);
    } catch (const std::exception& e) {
      status = "failed";
      any_failed = true;
      std::cerr << "row " << row.label << " failed: " << e.what() << "\n";
    }
    const auto& a = row.config.arch;
    csv << i + 1 << "," << row.label << "," << (a.appearance_enabled ? 1 : 0) << ","
        << (a.motion_enabled ? 1 : 0) << "," << (a.ffrp_enabled ? 1 : 0) << ","
        << (a.align_enabled ? 1 : 0) << "," << (a.mgsm_enabled ? 1 : 0) << ","
        << to_string(a.skip_variant) << ",";
    csv.precision(6);
    csv << auc << "," << status << "\n";
    std::cout << "ablation " << row.label << ": auc=" << auc << " (" << status << ")\n";
  }
  write_provenance(cfg, fs::path(out_dir) / "ablation.config.json");
  return any_failed ? kExitNumeric : kExitOk;
}

// ---- inspect-memory ----

int cmd_inspect_memory(const std::string& ckpt_path, const std::string& out_csv) {
  Checkpoint ckpt = load_checkpoint(ckpt_path);
  if (ckpt.model.mgsm.empty())
    throw ConfigError("inspect-memory: checkpoint has no memory banks (mgsm disabled)");
  std::ofstream f(out_csv);
  if (!f) throw FormatError("cannot write " + out_csv);
  f.precision(7);
  f << "level,item,norm,cosines\n";
  for (std::size_t l = 0; l < ckpt.model.mgsm.size(); ++l) {
    const Tensor& m = ckpt.model.mgsm[l].bank->value;
    const int n = m.dim(0), d = m.dim(1);
    std::vector<double> norms(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
      double s = 0.0;
      for (int k = 0; k < d; ++k) s += static_cast<double>(m.at(i, k)) * m.at(i, k);
      norms[static_cast<std::size_t>(i)] = std::sqrt(s);
    }
    for (int i = 0; i < n; ++i) {
      f << (l + 1) << "," << i << "," << norms[static_cast<std::size_t>(i)];
      for (int j = 0; j < n; ++j) {
        double dot = 0.0;
        for (int k = 0; k < d; ++k) dot += static_cast<double>(m.at(i, k)) * m.at(j, k);
        f << "," << dot / (norms[static_cast<std::size_t>(i)] * norms[static_cast<std::size_t>(j)]);
      }
      f << "\n";
    }
  }
  std::cout << "memory diagnostics -> " << out_csv << "\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Synthetic-video anomaly detection pipeline"};
  app.require_subcommand(1);

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "Generate a synthetic dataset directory");
  CommonOpts gen_common;
  std::string gen_out;
  int gen_normal = 0, gen_anomalous = 0;
  std::vector<std::string> gen_kinds;
  gen->add_option("--out", gen_out, "Output dataset directory")->required();
  gen->add_option("--normal", gen_normal, "Number of normal sequences")->required();
  gen->add_option("--anomalous", gen_anomalous, "Number of anomalous sequences")->required();
  gen->add_option("--anomaly-kinds", gen_kinds,
                  "Subset of {novel_shape,fast_motion,appearance_motion_mismatch}");
  add_common(gen, &gen_common);

  // train
  auto* tr = app.add_subcommand("train", "Train on the normal sequences of a dataset");
  CommonOpts tr_common;
  std::string tr_data, tr_out, tr_log, tr_flow = "gt";
  tr->add_option("--data", tr_data, "Training dataset directory")->required();
  tr->add_option("--out", tr_out, "Checkpoint output path")->required();
  tr->add_option("--log", tr_log, "JSON-lines training log path");
  tr->add_option("--flow-source", tr_flow, "gt|estimated")->check(CLI::IsMember({"gt", "estimated"}));
  add_common(tr, &tr_common);

  // score
  auto* sc = app.add_subcommand("score", "Score a dataset with a checkpoint");
  std::string sc_ckpt, sc_data, sc_out, sc_box = "ground_truth", sc_flow = "gt";
  sc->add_option("--ckpt", sc_ckpt, "Checkpoint path")->required();
  sc->add_option("--data", sc_data, "Dataset directory to score")->required();
  sc->add_option("--out", sc_out, "Output directory for score curves")->required();
  sc->add_option("--box-mode", sc_box, "ground_truth|bg_subtract")
      ->check(CLI::IsMember({"ground_truth", "bg_subtract"}));
  sc->add_option("--flow-source", sc_flow, "gt|estimated")->check(CLI::IsMember({"gt", "estimated"}));

  // eval
  auto* ev = app.add_subcommand("eval", "Frame-level AUC over exported score curves");
  std::string ev_scores, ev_out;
  ev->add_option("--scores", ev_scores, "Directory of score curves")->required();
  ev->add_option("--out", ev_out, "Summary JSON path (stdout when omitted)");

  // ablate
  auto* ab = app.add_subcommand("ablate", "Run the component and skip-variant ablation matrix");
  CommonOpts ab_common;
  std::string ab_data, ab_out;
  ab->add_option("--data", ab_data, "Directory containing train/ and test/ datasets")->required();
  ab->add_option("--out", ab_out, "Output directory for the ablation table")->required();
  add_common(ab, &ab_common);

  // inspect-memory
  auto* im = app.add_subcommand("inspect-memory", "Dump memory item norms and cosine matrix");
  std::string im_ckpt, im_out;
  im->add_option("--ckpt", im_ckpt, "Checkpoint path")->required();
  im->add_option("--out", im_out, "Output CSV path")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (gen->parsed())
      return cmd_gen_data(gen_common, gen_out, gen_normal, gen_anomalous, gen_kinds);
    if (tr->parsed()) return cmd_train(tr_common, tr_data, tr_out, tr_log, tr_flow);
    if (sc->parsed()) return cmd_score(sc_ckpt, sc_data, sc_out, sc_box, sc_flow);
    if (ev->parsed()) return cmd_eval(ev_scores, ev_out);
    if (ab->parsed()) return cmd_ablate(ab_common, ab_data, ab_out);
    if (im->parsed()) return cmd_inspect_memory(im_ckpt, im_out);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const FormatError& e) {
    std::cerr << "format error: " << e.what() << "\n";
    return kExitFormat;
  } catch (const ShapeError& e) {
    std::cerr << "shape error: " << e.what() << "\n";
    return kExitFormat;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitNumeric;
  }
  return kExitUsage;
}
