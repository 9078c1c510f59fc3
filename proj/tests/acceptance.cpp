// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any failure.
#include <fmt/core.h>

#include <CLI11.hpp>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>

#include "cli.hpp"
#include "mdepth/adam.hpp"
#include "mdepth/checkpoint.hpp"
#include "mdepth/config.hpp"
#include "mdepth/dataset.hpp"
#include "mdepth/gradcheck.hpp"
#include "mdepth/image_io.hpp"
#include "mdepth/losses.hpp"
#include "mdepth/metrics.hpp"
#include "mdepth/ops.hpp"
#include "mdepth/parallel.hpp"
#include "mdepth/synthetic.hpp"

using namespace mdepth;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

int run_cli(const std::vector<std::string>& args, std::string* err_text = nullptr) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  if (err_text) *err_text = err.str();
  return code;
}

Outcome gradient_suites() {
  const auto t0 = Clock::now();
  const auto reports = run_gradient_suites(0);
  const double elapsed = seconds_since(t0);
  double worst = 0.0;
  std::vector<std::string> failed;
  for (const auto& r : reports) {
    worst = std::max(worst, r.max_rel_error);
    if (!r.passed()) failed.push_back(r.name);
  }
  const bool ok = failed.empty() && elapsed < 120.0;
  std::string detail = fmt::format("{} checks, worst rel err {:.2e}, {:.1f} s", reports.size(), worst, elapsed);
  for (const auto& f : failed) detail += ", failed " + f;
  return {ok, detail};
}

Outcome scan_equivalence() {
  const auto t0 = Clock::now();
  const ScanCheckReport r = run_scan_check(0, 100, 10);
  const double elapsed = seconds_since(t0);
  return {r.cases == 1000 && r.max_abs_diff < 1e-10 && elapsed < 60.0,
          fmt::format("{} cases, max abs diff {:.2e}, {:.1f} s", r.cases, r.max_abs_diff, elapsed)};
}

Outcome geometry_round_trip() {
  CameraModel cam;
  cam.width = 64;
  cam.height = 48;
  cam.fx = 52.0;
  cam.fy = 50.0;
  cam.cx = 31.5;
  cam.cy = 23.5;
  const std::size_t n = cam.width * cam.height;
  Rng rng(0);
  double round_trip = 0.0, pose_round_trip = 0.0;
  std::size_t inexact_identity = 0;
  for (int draw = 0; draw < 100; ++draw) {
    std::vector<double> d(n);
    for (auto& v : d) v = rng.uniform(0.1, 100.0);
    const Tensor depth = Tensor::from({cam.height, cam.width, 1}, d);
    const Tensor points = backproject(depth, cam);
    const PixelCoords direct = project(points, cam);

    // A random rigid motion and its inverse bring every point back.
    const Tensor aa = Tensor::from({3}, {rng.uniform(-0.3, 0.3), rng.uniform(-0.3, 0.3), rng.uniform(-0.3, 0.3)});
    const Tensor r = axis_angle_to_rotation(aa);
    const Tensor t = Tensor::from({3}, {rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)});
    const PoseTransform fwd{r, t};
    const PoseTransform inv{transpose(r), neg(matmul(reshape(t, {1, 3}), r))};
    const Tensor back = transform_points(transform_points(points, fwd), inv);
    const PixelCoords via_pose = project(reshape(back, {cam.height, cam.width, 3}), cam);

    const PixelCoords identity = warp_coords(depth, PoseTransform::identity(), cam);
    for (std::size_t i = 0; i < n; ++i) {
      const double u = static_cast<double>(i % cam.width), v = static_cast<double>(i / cam.width);
      round_trip = std::max({round_trip, std::abs(direct.coords[i * 2] - u), std::abs(direct.coords[i * 2 + 1] - v)});
      pose_round_trip =
          std::max({pose_round_trip, std::abs(via_pose.coords[i * 2] - u), std::abs(via_pose.coords[i * 2 + 1] - v)});
      if (identity.coords[i * 2] != u || identity.coords[i * 2 + 1] != v) ++inexact_identity;
    }
  }
  return {round_trip < 1e-10 && pose_round_trip < 1e-10 && inexact_identity == 0,
          fmt::format("max error {:.2e} direct, {:.2e} through pose and inverse; identity warp off on {} pixels",
                      round_trip, pose_round_trip, inexact_identity)};
}

Outcome synthetic_reconstruction() {
  const SyntheticScene scene = make_synthetic_scene({});
  double worst = 0.0;
  std::size_t valid = 0, total = 0;
  for (const FrameTriplet& t : make_triplets(scene.sequence)) {
    for (std::size_t k = 0; k < 2; ++k) {
      const Sampled s = synthesize_view(t.frames[k == 0 ? 0 : 2], t.depth, (*t.poses)[k], t.camera);
      const Tensor pe = photometric_error(t.frames[1], s.image);
      // SSIM looks at a 3x3 window, so only pixels whose window is valid count.
      const Tensor inner = erode_mask(s.valid);
      for (std::size_t i = 0; i < pe.numel(); ++i) {
        ++total;
        if (inner[i] == 0.0) continue;
        ++valid;
        worst = std::max(worst, pe[i]);
      }
    }
  }
  return {worst < 1e-6 && valid > total / 2,
          fmt::format("max photometric error {:.2e} over {} valid of {} pixels", worst, valid, total)};
}

Outcome overfit(const fs::path& work) {
  const auto t0 = Clock::now();
  const fs::path dir = work / "overfit";
  fs::remove_all(dir);
  fs::create_directories(dir);
  // Desk network, 64x64, 20 frames, 20 epochs. The learning rate is raised
  // tenfold over the default schedule; see the README.
  std::ofstream(dir / "overfit.ini") << "[train]\nlr_initial = 1e-3\nlr_after = 1e-4\nepochs = 20\n"
                                        "[data]\nsynthetic = true\nframes = 20\nwidth = 64\nheight = 64\n";
  std::string err;
  if (run_cli({"train", "--config", (dir / "overfit.ini").string(), "--seed", "0", "--out", (dir / "run").string()},
              &err) != cli::kOk) {
    return {false, "training failed: " + err};
  }

  // Epoch-mean photometric loss from the CSV.
  std::ifstream csv(dir / "run" / "loss.csv");
  std::string line;
  std::getline(csv, line);
  std::map<std::size_t, std::pair<double, std::size_t>> per_epoch;
  while (std::getline(csv, line)) {
    std::istringstream row(line);
    std::string field;
    std::vector<std::string> f;
    while (std::getline(row, field, ',')) f.push_back(field);
    auto& e = per_epoch[std::stoul(f.at(0))];
    e.first += std::stod(f.at(3));
    e.second += 1;
  }
  if (per_epoch.size() != 20) return {false, fmt::format("expected 20 epochs in loss.csv, got {}", per_epoch.size())};
  const double first = per_epoch.begin()->second.first / per_epoch.begin()->second.second;
  const double last = per_epoch.rbegin()->second.first / per_epoch.rbegin()->second.second;

  // Inverse depth from `infer` on every training frame against ground truth,
  // after per-image median scaling (monocular depth has no absolute scale).
  SyntheticOptions opt;
  opt.seed = 0;
  const SyntheticScene scene = make_synthetic_scene(opt);
  std::size_t within = 0, count = 0;
  for (std::size_t f = 0; f < scene.sequence.frames.size(); ++f) {
    const fs::path img = dir / fmt::format("frame_{:03d}.ppm", f), pred = dir / fmt::format("pred_{:03d}.pfm", f);
    write_ppm(img, scene.sequence.frames[f]);
    if (run_cli({"infer", "--checkpoint", (dir / "run" / "final.ckpt").string(), "--image", img.string(), "--out",
                 pred.string()},
                &err) != cli::kOk) {
      return {false, "infer failed: " + err};
    }
    const FloatMap m = read_pfm_raw(pred);
    std::vector<double> p(m.values.begin(), m.values.end()), g;
    for (double z : scene.sequence.depths[f].data()) g.push_back(1.0 / z);
    const auto scaled = median_scale(p, g, std::vector<bool>(g.size(), true));
    for (std::size_t i = 0; i < g.size(); ++i) {
      ++count;
      within += std::abs(scaled[i] - g[i]) <= 0.2 * g[i];
    }
  }
  const double ratio = last / first, fraction = static_cast<double>(within) / static_cast<double>(count);
  const double elapsed = seconds_since(t0);
  return {ratio <= 0.5 && fraction >= 0.9 && elapsed < 1800.0,
          fmt::format("photometric {:.4f} -> {:.4f} (ratio {:.3f}), {:.1f}% of pixels within 20%, {:.0f} s", first,
                      last, ratio, 100.0 * fraction, elapsed)};
}

Outcome parameter_count() {
  const DepthNet net(NetConfig{}, 0);
  const std::size_t n = net.parameters().scalar_count();
  return {n >= 24'000'000 && n <= 36'000'000, fmt::format("{} trainable parameters at C = 96", n)};
}

Outcome metric_oracle() {
  Rng rng(0);
  double worst = 0.0;
  for (int pair = 0; pair < 100; ++pair) {
    const std::size_t n = 16 + static_cast<std::size_t>(rng.uniform(0, 200));
    std::vector<double> p(n), g(n);
    std::vector<bool> valid(n);
    for (std::size_t i = 0; i < n; ++i) {
      g[i] = rng.uniform(0.5, 80.0);
      p[i] = rng.uniform(1e-4, 100.0);
      valid[i] = i == 0 || rng.bernoulli(0.85);
    }
    const EvalReport r = compute_metrics(p, g, valid);
    double abs_rel = 0, sq_rel = 0, se = 0, sle = 0, d1 = 0, d2 = 0, d3 = 0, cnt = 0;
    for (std::size_t i = 0; i < n; ++i) {
      if (!valid[i]) continue;
      const double pi = std::clamp(p[i], 1e-3, 80.0), gi = g[i], ratio = std::max(pi / gi, gi / pi);
      cnt += 1;
      abs_rel += std::abs(pi - gi) / gi;
      sq_rel += (pi - gi) * (pi - gi) / gi;
      se += (pi - gi) * (pi - gi);
      sle += std::pow(std::log(pi) - std::log(gi), 2);
      d1 += ratio < 1.25;
      d2 += ratio < 1.5625;
      d3 += ratio < 1.953125;
    }
    for (auto [a, b] : {std::pair{r.abs_rel, abs_rel / cnt}, {r.sq_rel, sq_rel / cnt}, {r.rmse, std::sqrt(se / cnt)},
                        {r.rmse_log, std::sqrt(sle / cnt)}, {r.delta1, d1 / cnt}, {r.delta2, d2 / cnt},
                        {r.delta3, d3 / cnt}}) {
      worst = std::max(worst, std::abs(a - b));
    }
  }
  std::vector<double> g(50);
  for (auto& v : g) v = rng.uniform(1.0, 70.0);
  const EvalReport same = compute_metrics(g, g, std::vector<bool>(g.size(), true));
  const bool exact = same.abs_rel == 0 && same.sq_rel == 0 && same.rmse == 0 && same.rmse_log == 0 &&
                     same.delta1 == 1 && same.delta2 == 1 && same.delta3 == 1;
  return {worst < 1e-12 && exact,
          fmt::format("max deviation {:.2e} over 100 pairs; pred == gt gives {}", worst, same.csv_row())};
}

Outcome determinism(const fs::path& work) {
  const fs::path dir = work / "determinism";
  fs::remove_all(dir);
  std::string err;
  for (const char* run : {"a", "b"}) {
    if (run_cli({"train", "--synthetic", "--seed", "7", "--out", (dir / run).string()}, &err) != cli::kOk) {
      return {false, "training failed: " + err};
    }
  }
  std::size_t files = 0;
  std::vector<std::string> differing;
  for (const auto& entry : fs::directory_iterator(dir / "a")) {
    ++files;
    const fs::path other = dir / "b" / entry.path().filename();
    if (!fs::exists(other) || slurp(entry.path()) != slurp(other)) differing.push_back(entry.path().filename().string());
  }
  std::string detail = fmt::format("{} output files compared", files);
  for (const auto& d : differing) detail += ", differs: " + d;
  return {differing.empty() && files >= 3, detail};
}

Outcome auto_mask_behavior() {
  SyntheticOptions still;
  still.static_camera = true;
  const SyntheticScene s0 = make_synthetic_scene(still);
  std::size_t zero = 0, n0 = 0;
  for (const FrameTriplet& t : make_triplets(s0.sequence)) {
    const PhotometricTerm p = masked_photometric(t.frames[1], {t.frames[0], t.frames[2]}, t.depth,
                                                 {(*t.poses)[0], (*t.poses)[1]}, t.camera);
    for (double m : p.mask.mask.data()) {
      ++n0;
      zero += m == 0.0;
    }
  }

  SyntheticOptions moving;
  moving.low_texture_patch = true;
  const SyntheticScene s1 = make_synthetic_scene(moving);
  const auto triplets = make_triplets(s1.sequence);
  std::size_t one = 0, textured = 0;
  for (std::size_t k = 0; k < triplets.size(); ++k) {
    const FrameTriplet& t = triplets[k];
    const PhotometricTerm p = masked_photometric(t.frames[1], {t.frames[0], t.frames[2]}, t.depth,
                                                 {(*t.poses)[0], (*t.poses)[1]}, t.camera);
    const Tensor& tex = s1.textured[k + 1];
    for (std::size_t i = 0; i < tex.numel(); ++i) {
      if (tex[i] == 0.0) continue;
      ++textured;
      one += p.mask.mask[i] == 1.0;
    }
  }
  const double f0 = static_cast<double>(zero) / static_cast<double>(n0);
  const double f1 = static_cast<double>(one) / static_cast<double>(textured);
  return {f0 >= 0.99 && f1 >= 0.9,
          fmt::format("static camera: mu = 0 on {:.2f}%; moving camera: mu = 1 on {:.2f}% of textured pixels",
                      100.0 * f0, 100.0 * f1)};
}

Outcome hyperparameters() {
  const RunConfig cfg = RunConfig::from_ini(IniFile{});
  const AdamOptions adam;
  const bool ok = cfg.loss.alpha == 0.85 && cfg.loss.smoothness_weight == 1e-3 && cfg.train.beta1 == 0.9 &&
                  cfg.train.beta2 == 0.999 && adam.beta1 == 0.9 && adam.beta2 == 0.999 && cfg.train.lr_at(0) == 1e-4 &&
                  cfg.train.lr_at(14) == 1e-4 && cfg.train.lr_at(15) == 1e-5 && cfg.train.lr_at(16) == 1e-5;
  return {ok, fmt::format("alpha {}, lambda {}, betas ({}, {}), lr {} until epoch {} then {}", cfg.loss.alpha,
                          cfg.loss.smoothness_weight, cfg.train.beta1, cfg.train.beta2, cfg.train.lr_initial,
                          cfg.train.lr_drop_epoch, cfg.train.lr_after)};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app("Acceptance checks");
  std::string workdir = (fs::temp_directory_path() / "mdepth_acceptance").string();
  std::vector<int> only;
  app.add_option("--workdir", workdir, "Scratch directory for training runs")->capture_default_str();
  app.add_option("--only", only, "Run only these criteria (1-10)");
  CLI11_PARSE(app, argc, argv);

  set_thread_override(1);  // strict single-threaded mode
  const fs::path work(workdir);
  fs::create_directories(work);

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"gradient suites", gradient_suites},
      {"scan equivalence", scan_equivalence},
      {"geometry round trip", geometry_round_trip},
      {"synthetic reconstruction", synthetic_reconstruction},
      {"overfit", [&] { return overfit(work); }},
      {"parameter count", parameter_count},
      {"metric oracle", metric_oracle},
      {"determinism", [&] { return determinism(work); }},
      {"auto-mask", auto_mask_behavior},
      {"hyperparameters", hyperparameters},
  };
  const std::set<int> selected(only.begin(), only.end());
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (!selected.empty() && !selected.count(id)) continue;
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failures += !o.pass;
    fmt::print("{} {:2d} {}: {}\n", o.pass ? "PASS" : "FAIL", id, criteria[i].first, o.detail);
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
