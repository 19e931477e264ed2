// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "snerv/model.hpp"
#include "snerv/objectives.hpp"

namespace snerv {

using Frames = std::vector<Tensor<float>>;

enum class Task { kRegression, kInterpolation, kInpainting };

std::string to_string(Task task);
Task parse_task(const std::string& text);

/// In-painting box layout.
struct MaskSpec {
  enum class Kind { kFixed5, kRandom10 };
  Kind kind = Kind::kFixed5;
  Index box_h = 0;  // 0: scale 50x50 from a 480x960 reference frame
  Index box_w = 0;
  std::uint64_t seed = 0;

  /// (top, left) of every box on frame `index` of an H x W clip. random10
  /// boxes depend only on (seed, index).
  std::vector<std::pair<Index, Index>> boxes(Index height, Index width, Index index) const;
  Index box_height(Index height) const;
  Index box_width(Index width) const;
};

std::string to_string(MaskSpec::Kind kind);
MaskSpec::Kind parse_mask_kind(const std::string& text);

struct MaskedFrame {
  Tensor<float> frame;  // masked pixels set to 0
  Tensor<float> mask;   // [1,H,W], 1 on valid pixels
};

/// Zeroes every box of `spec` on frame `index`. Throws InputError when a box
/// leaves the frame.
MaskedFrame apply_inpaint_mask(const Tensor<float>& frame, const MaskSpec& spec, Index index = 0);

struct CurvePoint {
  int epoch = 0;
  double loss = 0;
  double frame_psnr = 0;
  double ll_psnr = 0;
  double hf_psnr = 0;
};

struct TrainRun {
  ModelConfig cfg;
  int epochs = 200;
  std::uint64_t seed = 0;  // overrides cfg.seed
  Task task = Task::kRegression;
  std::optional<MaskSpec> mask;
  double lr = 1e-3;
  long warmup_steps = 0;
  double alpha = kDefaultAlpha;
  bool coeff_loss = true;
  double clip_norm = 0;  // 0 disables clipping
  std::vector<CurvePoint> curve_log;
};

/// Raised when the loss turns non-finite.
class NumericalError : public Error {
 public:
  using Error::Error;
};

struct Split {
  std::vector<Index> train;
  std::vector<Index> test;
};

/// Odd indices train, even indices test. Needs at least four frames.
Split split_interpolation(Index frame_count);

/// Frames a model is trained on and evaluated against for one task.
struct TaskData {
  std::vector<Index> train;
  std::vector<Index> test;
  Frames inputs;   // what the encoder sees, indexed like the clip
  Frames targets;  // training targets, indexed like the clip
};

TaskData prepare_task(const Frames& clip, Task task, const std::optional<MaskSpec>& mask);

/// (prev, next) neighbour indices of frame `t` within `pool`, replicated at
/// the ends. `t` need not belong to `pool`.
std::pair<Index, Index> temporal_neighbors(const std::vector<Index>& pool, Index t);

struct FitResult {
  std::unique_ptr<SnervModel<float>> model;
  TrainRun run;  // with curve_log filled
};

/// Called once per epoch with the point just logged.
using EpochHook = std::function<void(const CurvePoint&)>;
/// Called before NumericalError is thrown, with the model in its failing state.
using NanHook = std::function<void(const SnervModel<float>&, const std::string& diagnostic)>;

/// Adam + cosine schedule, batch 1, frames in index order each epoch.
FitResult fit(const Frames& clip, TrainRun run, const EpochHook& on_epoch = {},
              const NanHook& on_nan = {});

struct FrameMetric {
  Index index = 0;
  double psnr = 0;
  double ssim = 0;
};

struct MetricsTable {
  std::vector<FrameMetric> frames;
  double mean_psnr = 0;
  double mean_ssim = 0;
};

/// Per-frame PSNR/SSIM against the original clip on the task's evaluation
/// frames (all frames, or the even frames for interpolation).
MetricsTable eval_task(const SnervModel<float>& model, const Frames& clip, Task task,
                       const std::optional<MaskSpec>& mask = std::nullopt);

/// Stored per-frame embeddings of a clip.
struct EmbeddingSet {
  std::vector<Tensor<float>> e_t, e_b, e_f;
  std::size_t size() const { return e_t.size(); }
};

/// Embeddings of every frame of the clip, with the neighbour rule of `task`.
EmbeddingSet compute_embeddings(const SnervModel<float>& model, const Frames& clip, Task task,
                                const std::optional<MaskSpec>& mask = std::nullopt);

/// Decodes stored embeddings to clamped-free frames.
Frames reconstruct(const SnervModel<float>& model, const EmbeddingSet& embeddings);

/// Metrics of `decoded` against `clip` over `indices`.
MetricsTable score(const Frames& decoded, const Frames& clip, const std::vector<Index>& indices);

/// CSV text `epoch,ll_psnr,hf_psnr`.
std::string log_frequency_curves(const TrainRun& run);

/// CSV text `epoch,loss,frame_psnr,ll_psnr,hf_psnr`.
std::string curve_csv(const TrainRun& run);

/// CSV text `frame_index,psnr,ssim`.
std::string metrics_csv(const MetricsTable& table);

}  // namespace snerv
