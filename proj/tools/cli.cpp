#include "cli.hpp"

#include <fmt/format.h>
#include <fmt/ostream.h>

#include <CLI11.hpp>
#include <algorithm>
#include <filesystem>

#include "mdepth/checkpoint.hpp"
#include "mdepth/config.hpp"
#include "mdepth/gradcheck.hpp"
#include "mdepth/image_io.hpp"
#include "mdepth/metrics.hpp"
#include "mdepth/synthetic.hpp"
#include "mdepth/trainer.hpp"

namespace mdepth::cli {

namespace fs = std::filesystem;

namespace {

struct TrainArgs {
  std::string config;
  std::uint64_t seed = 0;
  bool seed_set = false;
  std::string out = "run";
  bool synthetic = false;
  std::string dataset;
};

struct InferArgs {
  std::string checkpoint, image, out;
};

struct EvalArgs {
  std::string pred_dir, gt_dir;
  bool disparity = false;
};

struct ScanArgs {
  std::uint64_t seeds = 100;
  std::size_t cases = 10;
};

struct SyntheticArgs {
  std::string out;
  std::size_t frames = 20;
  std::size_t width = 64, height = 64;
  std::uint64_t seed = 0;
  bool low_texture = false;
  bool static_camera = false;
};

int train(const TrainArgs& a, std::ostream& out) {
  RunConfig cfg;
  if (!a.config.empty()) cfg = RunConfig::from_ini(IniFile::load(a.config));
  if (a.seed_set) cfg.train.seed = a.seed;
  if (a.synthetic) cfg.data.synthetic = true;
  if (!a.dataset.empty()) cfg.data.dataset = a.dataset;
  cfg.validate();

  std::vector<FrameTriplet> data;
  if (cfg.data.synthetic) {
    SyntheticOptions opt;
    opt.width = cfg.data.width;
    opt.height = cfg.data.height;
    opt.frames = cfg.data.frames;
    opt.seed = cfg.train.seed;
    opt.low_texture_patch = cfg.data.low_texture_patch;
    data = make_triplets(make_synthetic_scene(opt).sequence);
  } else if (!cfg.data.dataset.empty()) {
    data = make_triplets(load_sequence(cfg.data.dataset));
  } else {
    throw DataError("no training data: pass --synthetic or --dataset, or set [data] in the config");
  }
  const std::size_t divisor = cfg.net.input_divisor();
  check_input_dims(data.front().camera.height, data.front().camera.width, divisor);

  DepthNet depth(cfg.net, cfg.train.seed);
  PoseNet pose(cfg.train.seed + 1);
  TrainOptions opt;
  opt.out_dir = a.out;
  opt.log = &out;
  fmt::print(out, "training on {} triplets, {} depth + {} pose parameters\n", data.size(),
             depth.parameters().scalar_count(), pose.parameters().scalar_count());
  train_loop(data, depth, pose, cfg, opt);
  fmt::print(out, "wrote {}\n", (fs::path(a.out) / "final.ckpt").string());
  return kOk;
}

int infer(const InferArgs& a, std::ostream& out) {
  const Model model = load_model(a.checkpoint);
  Tensor image;
  try {
    image = read_ppm(a.image);
  } catch (const ImageIoError& e) {
    throw DataError(e.what());
  }
  check_input_dims(image.dim(0), image.dim(1), model.config.input_divisor());
  NoGradGuard no_grad;
  const DepthOutputs outputs = model.depth.forward(image);
  const Tensor depth = disparity_to_depth(outputs.upsampled_disparities.front(), model.config.min_depth,
                                          model.config.max_depth);
  std::vector<double> inverse(depth.numel());
  for (std::size_t i = 0; i < inverse.size(); ++i) inverse[i] = 1.0 / depth[i];
  const Tensor disparity = Tensor::from(depth.shape(), std::move(inverse));
  const fs::path pfm = a.out;
  fs::path png = pfm;
  png.replace_extension(".png");
  write_pfm(pfm, disparity);
  write_colormap_png(png, disparity);
  fmt::print(out, "wrote {} and {}\n", pfm.string(), png.string());
  return kOk;
}

std::vector<fs::path> pfm_files(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw DataError("'" + dir.string() + "' is not a directory");
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".pfm") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  return files;
}

int eval(const EvalArgs& a, std::ostream& out) {
  const auto preds = pfm_files(a.pred_dir), gts = pfm_files(a.gt_dir);
  if (preds.size() != gts.size()) {
    throw DataError(fmt::format("{} predictions but {} ground-truth maps", preds.size(), gts.size()));
  }
  if (preds.empty()) throw DataError("no .pfm files to evaluate");
  std::vector<EvalReport> reports;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    Tensor pred, gt;
    try {
      pred = read_pfm(preds[i]);
      gt = read_pfm(gts[i]);
    } catch (const ImageIoError& e) {
      throw DataError(e.what());
    }
    if (pred.shape() != gt.shape()) {
      throw DataError(fmt::format("'{}' and '{}' differ in size", preds[i].string(), gts[i].string()));
    }
    std::vector<double> p(pred.data().begin(), pred.data().end());
    if (a.disparity)
      for (auto& v : p) v = 1.0 / v;
    try {
      reports.push_back(evaluate_depth(p, gt.data()));
    } catch (const std::invalid_argument& e) {
      throw DataError(fmt::format("'{}': {}", gts[i].string(), e.what()));
    }
  }
  out << EvalReport::csv_header() << '\n' << average_reports(reports).csv_row() << '\n';
  return kOk;
}

int gradcheck(std::ostream& out) {
  bool ok = true;
  for (const auto& r : run_gradient_suites()) {
    fmt::print(out, "{:<28} max_rel_err {:.3e}  tol {:.0e}  {}\n", r.name, r.max_rel_error, r.tolerance,
               r.passed() ? "ok" : "FAIL");
    ok = ok && r.passed();
  }
  return ok ? kOk : kFailure;
}

int scancheck(const ScanArgs& a, std::ostream& out) {
  constexpr double kTolerance = 1e-10;
  const ScanCheckReport r = run_scan_check(0, a.seeds, a.cases);
  fmt::print(out, "cases {}  max_abs_diff {:.3e}\n", r.cases, r.max_abs_diff);
  return r.max_abs_diff < kTolerance ? kOk : kFailure;
}

int make_synthetic(const SyntheticArgs& a, std::ostream& out) {
  SyntheticOptions opt;
  opt.width = a.width;
  opt.height = a.height;
  opt.frames = a.frames;
  opt.seed = a.seed;
  opt.low_texture_patch = a.low_texture;
  opt.static_camera = a.static_camera;
  const SyntheticScene scene = make_synthetic_scene(opt);
  save_sequence(a.out, scene.sequence);
  fmt::print(out, "wrote {} frames to {}\n", a.frames, a.out);
  return kOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Self-supervised monocular depth with selective-scan networks", "mdepth"};
  app.require_subcommand(1);

  TrainArgs ta;
  auto* train_cmd = app.add_subcommand("train", "Train DepthNet and PoseNet");
  train_cmd->add_option("--config", ta.config, "Config file ([train], [loss], [net], [data] sections)");
  train_cmd->add_option("--seed", ta.seed, "Seed for initialization, shuffling, augmentation and synthetic data");
  train_cmd->add_option("--out", ta.out, "Output directory for checkpoints and loss.csv")->capture_default_str();
  train_cmd->add_flag("--synthetic", ta.synthetic, "Train on the built-in synthetic scene");
  train_cmd->add_option("--dataset", ta.dataset, "Directory of frame_NNN.ppm files with intrinsics.txt");

  InferArgs ia;
  auto* infer_cmd = app.add_subcommand("infer", "Predict inverse depth for one image");
  infer_cmd->add_option("--checkpoint", ia.checkpoint)->required();
  infer_cmd->add_option("--image", ia.image, "Binary PPM (P6)")->required();
  infer_cmd->add_option("--out", ia.out, "Output PFM; a colormapped PNG is written beside it")->required();

  EvalArgs ea;
  auto* eval_cmd = app.add_subcommand("eval", "Depth metrics over matching PFM files");
  eval_cmd->add_option("--pred-dir", ea.pred_dir)->required();
  eval_cmd->add_option("--gt-dir", ea.gt_dir)->required();
  eval_cmd->add_flag("--disp", ea.disparity, "Predictions are inverse depth");

  auto* grad_cmd = app.add_subcommand("gradcheck", "Finite-difference checks of every differentiable op");

  ScanArgs sa;
  auto* scan_cmd = app.add_subcommand("scancheck", "Sequential versus parallel scan equivalence");
  scan_cmd->add_option("--seeds", sa.seeds, "Seeds 0..N-1")->capture_default_str();
  scan_cmd->add_option("--cases", sa.cases, "Random cases per seed")->capture_default_str();

  SyntheticArgs ya;
  auto* syn_cmd = app.add_subcommand("make-synthetic", "Write the synthetic scene to disk");
  syn_cmd->add_option("--out", ya.out)->required();
  syn_cmd->add_option("--frames", ya.frames)->capture_default_str();
  syn_cmd->add_option("--width", ya.width)->capture_default_str();
  syn_cmd->add_option("--height", ya.height)->capture_default_str();
  syn_cmd->add_option("--seed", ya.seed)->capture_default_str();
  syn_cmd->add_flag("--low-texture", ya.low_texture, "Replace the middle band with a flat color");
  syn_cmd->add_flag("--static", ya.static_camera, "Keep the camera still");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::ParseError& e) {
    fmt::print(err, "error: {}\n", e.what());
    return kConfigError;
  }
  ta.seed_set = train_cmd->count("--seed") > 0;

  try {
    if (*train_cmd) return train(ta, out);
    if (*infer_cmd) return infer(ia, out);
    if (*eval_cmd) return eval(ea, out);
    if (*grad_cmd) return gradcheck(out);
    if (*scan_cmd) return scancheck(sa, out);
    if (*syn_cmd) return make_synthetic(ya, out);
  } catch (const ConfigError& e) {
    fmt::print(err, "config error: {}\n", e.what());
    return kConfigError;
  } catch (const ShapeError& e) {
    fmt::print(err, "shape error: {}\n", e.what());
    return kShapeError;
  } catch (const DataError& e) {
    fmt::print(err, "data error: {}\n", e.what());
    return kDataError;
  } catch (const CheckpointError& e) {
    fmt::print(err, "checkpoint error: {}\n", e.what());
    return kDataError;
  } catch (const ImageIoError& e) {
    fmt::print(err, "data error: {}\n", e.what());
    return kDataError;
  } catch (const std::exception& e) {
    fmt::print(err, "error: {}\n", e.what());
    return kFailure;
  }
  return kFailure;
}

}  // namespace mdepth::cli
