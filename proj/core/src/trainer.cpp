#include "mdepth/trainer.hpp"

#include <fmt/format.h>
#include <fmt/ostream.h>

#include <algorithm>
#include <fstream>
#include <numeric>

#include "mdepth/augment.hpp"
#include "mdepth/checkpoint.hpp"
#include "mdepth/ops.hpp"

namespace mdepth {

std::string loss_csv_header() { return "epoch,step,loss_total,loss_photo,loss_smooth,mask_coverage"; }

std::string loss_csv_row(const LossRecord& r) {
  return fmt::format("{},{},{:.17g},{:.17g},{:.17g},{:.17g}", r.epoch, r.step, r.total, r.photometric, r.smoothness,
                     r.mask_coverage);
}

TrainState::TrainState(DepthNet& d, PoseNet& p, const TrainConfig& cfg)
    : depth(d), pose(p), adam(AdamOptions{cfg.beta1, cfg.beta2, 1e-8}) {
  params.append("depth.", depth.parameters());
  params.append("pose.", pose.parameters());
}

LossRecord train_step(TrainState& state, const std::vector<const FrameTriplet*>& batch, double lr, Rng& augment_rng,
                      const RunConfig& cfg, ScanExecutor executor) {
  LossRecord rec;
  const double inv = 1.0 / static_cast<double>(batch.size());
  state.params.zero_grad();
  {
    Tape tape;
    Tensor total;
    for (const FrameTriplet* tr : batch) {
      const AugmentDraw draw = cfg.train.augment ? AugmentDraw::sample(augment_rng) : AugmentDraw{};
      const AugmentedTriplet aug = augment(tr->frames, tr->camera, draw);
      const auto& in = aug.network_frames;
      const DepthOutputs out = state.depth.forward(in[1], executor);
      const std::vector<PoseTransform> poses{state.pose.forward(in[1], in[0]), state.pose.forward(in[1], in[2])};
      const LossTerms terms = total_loss(aug.loss_frames[1], {aug.loss_frames[0], aug.loss_frames[2]}, out, poses,
                                         aug.camera, cfg.net, cfg.loss);
      total = total.defined() ? add(total, terms.total) : terms.total;
      rec.photometric += terms.photometric * inv;
      rec.smoothness += terms.smoothness * inv;
      rec.mask_coverage += terms.mask_coverage * inv;
    }
    total = mul_scalar(total, inv);
    rec.total = total.item();
    tape.backward(total);
  }
  NoGradGuard no_grad;
  state.adam.step(state.params, lr);
  return rec;
}

TrainResult train_loop(const std::vector<FrameTriplet>& data, DepthNet& depth, PoseNet& pose, const RunConfig& cfg,
                       const TrainOptions& options) {
  cfg.train.validate();
  const std::size_t batch = cfg.train.batch_size;
  const std::size_t steps_per_epoch = data.size() / batch;
  if (cfg.train.epochs > 0 && steps_per_epoch == 0) {
    throw DataError(fmt::format("dataset has {} triplets, fewer than one batch of {}", data.size(), batch));
  }
  if (options.log && data.size() % batch != 0) {
    fmt::print(*options.log, "warning: epoch truncated, {} of {} triplets do not fill a batch and are skipped\n",
               data.size() % batch, data.size());
  }

  std::ofstream csv;
  if (!options.out_dir.empty()) {
    std::filesystem::create_directories(options.out_dir);
    csv.open(options.out_dir / "loss.csv");
    if (!csv) throw DataError("cannot write '" + (options.out_dir / "loss.csv").string() + "'");
    csv << loss_csv_header() << '\n';
  }

  TrainState state(depth, pose, cfg.train);
  Rng shuffle_rng(cfg.train.seed ^ 0x5eedf00dULL);
  Rng augment_rng(cfg.train.seed ^ 0xa0c3e7ULL);
  std::vector<std::size_t> order(data.size());
  TrainResult result;
  std::size_t global_step = 0;
  for (std::size_t epoch = 0; epoch < cfg.train.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), shuffle_rng.engine());
    const double lr = cfg.train.lr_at(epoch);
    double sum_total = 0.0, sum_photo = 0.0;
    for (std::size_t s = 0; s < steps_per_epoch; ++s) {
      std::vector<const FrameTriplet*> items;
      for (std::size_t b = 0; b < batch; ++b) items.push_back(&data[order[s * batch + b]]);
      LossRecord rec = train_step(state, items, lr, augment_rng, cfg, options.executor);
      rec.epoch = epoch;
      rec.step = global_step++;
      sum_total += rec.total;
      sum_photo += rec.photometric;
      if (csv.is_open()) csv << loss_csv_row(rec) << '\n';
      result.steps.push_back(rec);
    }
    result.epoch_total.push_back(sum_total / static_cast<double>(steps_per_epoch));
    result.epoch_photometric.push_back(sum_photo / static_cast<double>(steps_per_epoch));
    if (options.log) {
      fmt::print(*options.log, "epoch {:3d}  lr {:.0e}  loss {:.6f}  photo {:.6f}\n", epoch, lr, result.epoch_total.back(),
                 result.epoch_photometric.back());
    }
    if (!options.out_dir.empty()) {
      csv.flush();
      save_model(options.out_dir / fmt::format("epoch_{:03d}.ckpt", epoch), depth, pose);
    }
  }
  if (!options.out_dir.empty()) save_model(options.out_dir / "final.ckpt", depth, pose);
  return result;
}

}  // namespace mdepth
