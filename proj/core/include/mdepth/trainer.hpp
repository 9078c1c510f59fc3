#pragma once

#include <cstddef>
#include <filesystem>
#include <ostream>
#include <string>
#include <vector>

#include "mdepth/adam.hpp"
#include "mdepth/config.hpp"
#include "mdepth/dataset.hpp"

namespace mdepth {

struct LossRecord {
  std::size_t epoch = 0;
  std::size_t step = 0;  // global, 0-based
  double total = 0.0;
  double photometric = 0.0;
  double smoothness = 0.0;
  double mask_coverage = 0.0;
};

std::string loss_csv_header();
std::string loss_csv_row(const LossRecord& r);

struct TrainResult {
  std::vector<LossRecord> steps;
  std::vector<double> epoch_total;        // mean over the epoch's steps
  std::vector<double> epoch_photometric;
};

struct TrainOptions {
  std::filesystem::path out_dir;  // empty: no checkpoints or CSV
  std::ostream* log = nullptr;    // progress and warnings
  ScanExecutor executor = ScanExecutor::kParallel;
};

/// Both networks plus the optimizer state.
struct TrainState {
  DepthNet& depth;
  PoseNet& pose;
  ParamSet params;  // depth.* then pose.*
  Adam adam;

  TrainState(DepthNet& depth, PoseNet& pose, const TrainConfig& cfg);
};

/// Forward, backward and one Adam update on a batch; returns the batch means.
LossRecord train_step(TrainState& state, const std::vector<const FrameTriplet*>& batch, double lr, Rng& augment_rng,
                      const RunConfig& cfg, ScanExecutor executor = ScanExecutor::kParallel);

/// Runs cfg.train.epochs epochs over `data`, shuffled per epoch. A final
/// partial batch is dropped with a warning. With an output directory, writes
/// loss.csv, epoch_NNN.ckpt after each epoch and final.ckpt.
TrainResult train_loop(const std::vector<FrameTriplet>& data, DepthNet& depth, PoseNet& pose, const RunConfig& cfg,
                       const TrainOptions& options = {});

}  // namespace mdepth
