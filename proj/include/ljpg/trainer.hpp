// Copyright 2026 The learnjpeg Authors
//
// Licensed under the Apache License, Version 2.0 (the "License"); you
// may not use this file except in compliance with the License.  You
// may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or
// implied.  See the License for the specific language governing
// permissions and limitations under the License.

// Patch loading, Adam with polynomial decay, the training loop,
// checkpoints and evaluation sweeps.

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "ljpg/losses.hpp"
#include "ljpg/pipeline.hpp"

namespace ljpg {

/// Receives warnings and per-step log lines.
using LogFn = std::function<void(const std::string&)>;

struct TrainConfig {
  int patch_size = 256;
  int batch_size = 32;
  int patches = 256;  // size of the cropped patch pool
  int steps = 1000;
  double lr_start = 1e-3;
  double lr_end = 1e-8;
  double decay_power = 1.0;
  std::uint64_t seed = 0;
  LossConfig loss;
  ModelConfig model;

  /// Throws InvalidArgument naming the offending field.
  void validate() const;
  /// JSON text; unknown keys are rejected, missing keys keep defaults.
  std::string to_json() const;
  static TrainConfig from_json(const std::string& text);
  bool operator==(const TrainConfig&) const;
};

/// Seeded uniform crops from the PPM files in `dir` (sorted by name).
/// Unreadable or undersized files are skipped with a warning; throws
/// InvalidArgument when nothing usable remains.
std::vector<RgbImage> load_patches(const std::filesystem::path& dir, int patch, int count,
                                   std::uint64_t seed, const LogFn& warn = {});

/// (lr0 - lr_end) (1 - step/total)^power + lr_end; lr_end once step >= total.
double poly_decay(double lr0, double lr_end, long step, long total, double power);

struct AdamState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  long step = 0;
  std::map<std::string, std::vector<double>> m;
  std::map<std::string, std::vector<double>> v;

  bool operator==(const AdamState&) const = default;
};

struct ParamBounds {
  std::function<bool(const std::string&)> applies;
  double lo = 0.0;
  double hi = 0.0;
};

/// One bias-corrected Adam update of every named parameter from its
/// accumulated gradient, then clamps the parameters selected by `bounds`.
/// A non-finite gradient throws NumericError naming the parameter, before
/// anything is modified.
void adam_step(const std::vector<std::pair<std::string, Tensor>>& params, AdamState& state,
               double lr, const std::optional<ParamBounds>& bounds = std::nullopt);

struct Checkpoint {
  TrainConfig config;
  long step = 0;
  std::vector<ad::NamedTensor> params;
  AdamState adam;
};

std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint& ckpt);
Checkpoint deserialize_checkpoint(std::span<const std::uint8_t> bytes);
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Rebuilds the model from checkpoint tensors; every parameter must be present.
Model model_from_checkpoint(const Checkpoint& ckpt);

struct LossBreakdown {
  Tensor total, d, r, al;
};

/// Total loss of one image through the soft-rounded pipeline.
LossBreakdown sample_loss(const Model& model, const PreparedImage& img, const LossConfig& cfg);

struct StepStats {
  long step = 0;  // 1-based index of the step just taken
  double loss = 0.0, d = 0.0, r = 0.0, al = 0.0, lr = 0.0;
};

/// "step,loss,d,r,al,lr"
std::string format_step(const StepStats& s);

class Trainer {
 public:
  Trainer(TrainConfig config, std::vector<RgbImage> patches);
  /// Continues from a checkpoint; `patches` must be the pool the run used.
  Trainer(const Checkpoint& ckpt, std::vector<RgbImage> patches);

  StepStats step();
  long current_step() const { return adam_.step; }
  bool done() const { return adam_.step >= config_.steps; }
  const Model& model() const { return model_; }
  const TrainConfig& config() const { return config_; }
  Checkpoint checkpoint() const;

 private:
  std::vector<std::size_t> batch_indices(long step) const;

  TrainConfig config_;
  Model model_;
  AdamState adam_;
  std::vector<PreparedImage> pool_;
};

/// Loads patches, trains for config.steps, logs one line per step and
/// writes the checkpoint to `out`.
Checkpoint train(const TrainConfig& config, const std::filesystem::path& data_dir,
                 const std::filesystem::path& out, const LogFn& log = {});

struct EvalRow {
  std::string image_id;
  double bpp = 0.0;
  double psnr_db = 0.0;
  double ssim = 0.0;
  double msssim = 0.0;
  double msssim_db = 0.0;
  double mse = 0.0;
};

inline constexpr const char* kEvalCsvHeader = "image_id,bpp,psnr_db,ssim,msssim,msssim_db,mse";

/// Metrics of `decoded` against `original` at the given bpp.  MS-SSIM is NaN
/// for images below the metric's minimum size.
EvalRow measure(const std::string& id, const RgbImage& original, const RgbImage& decoded,
                double bpp);

/// Baseline quality whose bpp is closest to `target_bpp` (ties favour the
/// higher quality).
int matching_quality(const RgbImage& img, double target_bpp);

/// For every PPM in `data_dir`: one neural row and one baseline JPEG row
/// (at `baseline_quality`, or the bpp-matched quality when absent).
std::vector<EvalRow> evaluate(const Model& model, const std::filesystem::path& data_dir,
                              const std::filesystem::path& csv_out,
                              std::optional<int> baseline_quality = std::nullopt,
                              const LogFn& warn = {});

std::string format_csv_row(const EvalRow& row);

}  // namespace ljpg
