// evlt: data generation, event synthesis, two-stage training, inference,
// evaluation and self-checks.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <regex>
#include <string>

#include <CLI11.hpp>

#include "evlt/checks/suites.hpp"
#include "evlt/events/events.hpp"
#include "evlt/io/dataset.hpp"
#include "evlt/io/formats.hpp"
#include "evlt/metrics/metrics.hpp"
#include "evlt/train/synth.hpp"
#include "evlt/train/trainer.hpp"

namespace fs = std::filesystem;
using namespace evlt;

namespace {

void parse_res(const std::string& res, int& h, int& w) {
  static const std::regex re(R"((\d+)x(\d+))");
  std::smatch m;
  if (!std::regex_match(res, m, re)) throw CLI::ValidationError("--res", "expected HxW, got '" + res + "'");
  h = std::stoi(m[1]);
  w = std::stoi(m[2]);
}

// A clip directory is either a bare frame directory or a generated pair, in
// which case `sub` ("low" or "normal") is used.
VideoClip read_clip(const fs::path& dir, const char* sub) {
  if (fs::is_directory(dir / sub)) return io::read_frames(dir / sub);
  return io::read_frames(dir);
}

train::TrainConfig load_train_config(const std::string& path, int stage, std::optional<std::uint64_t> seed) {
  io::Config c = path.empty() ? io::Config{} : io::Config::load(path);
  c.set("stage", std::to_string(stage));
  if (seed) c.set("seed", std::to_string(*seed));
  return train::TrainConfig::from_config(c);
}

train::ProgressFn progress_printer(int stage) {
  return [stage](const train::LossRecord& r) {
    std::fprintf(stderr, "stage%d iter %d %s=%.6f %s=%.6f total=%.6f\n", stage, r.iteration,
                 stage == 1 ? "L_m" : "L1", r.first, stage == 1 ? "L_v" : "L_feat", r.second, r.total);
  };
}

std::vector<train::Window> windows_from(const std::string& data, int frames) {
  const auto pairs = train::load_dataset(data);
  if (pairs.empty()) throw ContractError("no clip pairs under " + data);
  return train::make_windows(pairs, frames);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Event-guided low-light video enhancement toolkit"};
  app.require_subcommand(1);

  // gen-data
  std::string gd_out, gd_res = "64x64";
  int gd_clips = 8, gd_frames = 5;
  std::uint64_t gd_seed = 0;
  bool gd_test = false;
  auto* gen = app.add_subcommand("gen-data", "Generate paired normal/low-light synthetic clips");
  gen->add_option("--out", gd_out, "Output directory")->required();
  gen->add_option("--clips", gd_clips, "Number of clips")->check(CLI::PositiveNumber);
  gen->add_option("--frames", gd_frames, "Frames per clip")->check(CLI::Range(2, 1000));
  gen->add_option("--res", gd_res, "Resolution HxW");
  gen->add_option("--seed", gd_seed, "Base seed");
  gen->add_flag("--test-preset", gd_test, "Use the fixed evaluation degradation");

  // synth-events
  std::string se_clip, se_out;
  double se_threshold = events::kLowLightThreshold;
  int se_factor = events::kDefaultInterpFactor;
  auto* synth = app.add_subcommand("synth-events", "Frame-difference events of a clip");
  synth->add_option("--clip", se_clip, "Clip directory (frames, or a pair directory: low/ is used)")->required();
  synth->add_option("--threshold", se_threshold, "Event threshold on the 0-255 scale")->check(CLI::PositiveNumber);
  synth->add_option("--interp-factor", se_factor, "Temporal upsampling factor")->check(CLI::Range(1, 64));
  synth->add_option("--out", se_out, "EVST output file")->required();

  // train-stage1 / train-stage2
  std::string t1_data, t1_config, t1_out;
  std::optional<std::uint64_t> t1_seed;
  auto* t1 = app.add_subcommand("train-stage1", "Train the event restoration network");
  t1->add_option("--data", t1_data, "Dataset root from gen-data")->required();
  t1->add_option("--config", t1_config, "key=value training config");
  t1->add_option("--out", t1_out, "Checkpoint path")->required();
  t1->add_option("--seed", t1_seed, "Overrides the config seed");

  std::string t2_data, t2_stage1, t2_config, t2_out;
  std::optional<std::uint64_t> t2_seed;
  auto* t2 = app.add_subcommand("train-stage2", "Train the enhancer on frozen restoration weights");
  t2->add_option("--data", t2_data, "Dataset root from gen-data")->required();
  t2->add_option("--stage1", t2_stage1, "Stage-1 checkpoint")->required();
  t2->add_option("--config", t2_config, "key=value training config");
  t2->add_option("--out", t2_out, "Checkpoint path")->required();
  t2->add_option("--seed", t2_seed, "Overrides the config seed");

  // enhance
  std::string en_ckpt, en_clip, en_out, en_config;
  auto* enh = app.add_subcommand("enhance", "Enhance a low-light clip");
  enh->add_option("--ckpt", en_ckpt, "Stage-2 checkpoint")->required();
  enh->add_option("--clip", en_clip, "Clip directory (frames, or a pair directory: low/ is used)")->required();
  enh->add_option("--out", en_out, "Output directory")->required();
  enh->add_option("--config", en_config, "Model config (default: CKPT.cfg if present)");

  // eval
  std::string ev_pred, ev_gt, ev_out;
  auto* eval = app.add_subcommand("eval", "PSNR/SSIM of predicted frames against ground truth");
  eval->add_option("--pred", ev_pred, "Predicted frames directory")->required();
  eval->add_option("--gt", ev_gt, "Ground-truth frames (or a pair directory: normal/ is used)")->required();
  eval->add_option("--out", ev_out, "CSV report")->required();

  // check
  std::string ck_suite = "all";
  std::uint64_t ck_seed = 1;
  auto* check = app.add_subcommand("check", "Run oracle and gradient suites");
  check->add_option("--suite", ck_suite, "Suite")->check(CLI::IsMember({"grad", "voxel", "all"}));
  check->add_option("--seed", ck_seed, "Seed for random cases");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*gen) {
      train::SynthOptions opt;
      opt.clips = gd_clips;
      opt.frames = gd_frames;
      parse_res(gd_res, opt.height, opt.width);
      opt.seed = gd_seed;
      opt.test_preset = gd_test;
      for (const auto& p : train::synth_pairs(opt)) io::write_clip_pair(fs::path(gd_out) / p.name, p);
      std::cout << "wrote " << gd_clips << " clip pairs to " << gd_out << "\n";
    } else if (*synth) {
      const auto clip = read_clip(se_clip, "low");
      const auto ev = events::generate_events(events::interpolate_frames(clip, se_factor), se_threshold);
      io::write_events(se_out, ev);
      std::cout << ev.size() << " events -> " << se_out << "\n";
    } else if (*t1) {
      const auto cfg = load_train_config(t1_config, 1, t1_seed);
      const auto data = train::build_stage1_data(windows_from(t1_data, cfg.model.frames), cfg);
      const auto res = train::train_stage1(data, cfg, progress_printer(1));
      train::save_training_output(t1_out, res, cfg);
      std::cout << "stage 1: " << res.history.size() << " iterations in " << res.seconds << " s -> " << t1_out
                << "\n";
    } else if (*t2) {
      const auto cfg = load_train_config(t2_config, 2, t2_seed);
      const auto stage1 = io::read_checkpoint<float>(t2_stage1);
      const auto data = train::build_stage2_data(windows_from(t2_data, cfg.model.frames), stage1, cfg);
      const auto res = train::train_stage2(data, stage1, cfg, progress_printer(2));
      train::save_training_output(t2_out, res, cfg);
      std::cout << "stage 2: " << res.history.size() << " iterations in " << res.seconds << " s -> " << t2_out
                << "\n";
    } else if (*enh) {
      std::string cfg_path = en_config;
      if (cfg_path.empty() && fs::exists(en_ckpt + ".cfg")) cfg_path = en_ckpt + ".cfg";
      const auto cfg = load_train_config(cfg_path, 2, std::nullopt);
      const auto params = io::read_checkpoint<float>(en_ckpt);
      const auto out = train::enhance_clip(read_clip(en_clip, "low"), params, cfg);
      fs::create_directories(en_out);
      io::write_frames(en_out, out.frames);
      for (std::size_t k = 0; k < out.masks.size(); ++k) {
        char name[32];
        std::snprintf(name, sizeof name, "mask_%03zu.pgm", k);
        io::write_pgm(fs::path(en_out) / name, out.masks[k]);
      }
      std::cout << out.frames.size() << " frames -> " << en_out << "\n";
    } else if (*eval) {
      const auto pred = io::read_frames(ev_pred);
      const auto gt = read_clip(ev_gt, "normal");
      if (pred.size() != gt.size() || pred.size() == 0)
        throw ContractError("eval: " + std::to_string(pred.size()) + " predicted vs " + std::to_string(gt.size()) +
                            " ground-truth frames");
      metrics::MetricReport rep;
      for (std::size_t k = 0; k < pred.size(); ++k) {
        char name[32];
        std::snprintf(name, sizeof name, "frame_%03zu", k);
        rep.add(name, pred.frames[k], gt.frames[k]);
      }
      std::ofstream os(ev_out);
      if (!os) throw io::FormatError(io::FormatErrorCode::open_failed, ev_out);
      rep.write_csv(os);
      std::cout << "mean PSNR " << rep.mean_psnr() << " dB, mean SSIM " << rep.mean_ssim() << "\n";
    } else if (*check) {
      bool ok = true;
      if (ck_suite == "grad" || ck_suite == "all") ok &= checks::report(std::cout, checks::run_grad_suite(ck_seed));
      if (ck_suite == "voxel" || ck_suite == "all") ok &= checks::report(std::cout, checks::run_voxel_suite(ck_seed));
      if (ck_suite == "all") {
        ok &= checks::report(std::cout, checks::run_fusion_suite(ck_seed));
        ok &= checks::report(std::cout, checks::run_gate_suite(ck_seed));
        ok &= checks::report(std::cout, checks::run_threshold_suite(ck_seed));
      }
      std::cout << (ok ? "all checks passed" : "some checks FAILED") << "\n";
      return ok ? 0 : 1;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
