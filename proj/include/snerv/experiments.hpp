// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "snerv/trainer.hpp"

namespace snerv {

/// One MFU/HFR combination of the ablation grid.
struct Variant {
  std::string name;
  bool mfu = true;
  bool hfr = true;
};

/// full, mfu_only, hfr_only, none.
std::vector<Variant> ablation_variants();

struct AblationRow {
  std::string variant;
  std::uint64_t seed = 0;
  double psnr = 0;         // regression PSNR of the trained model
  double final_hf_psnr = 0;
  std::vector<CurvePoint> curve;
};

/// Runs `jobs` (callables that write their own outputs) with at most
/// `parallel` child processes at a time. parallel <= 1 runs them in order in
/// this process. Throws Error naming the first failing job.
void run_jobs(const std::vector<std::function<void()>>& jobs, int parallel);

/// Trains every (variant, seed) on the clip. Each run writes
/// `<out>/<variant>_s<seed>/` (model.snrv, model.snrv.curves.csv, metrics.csv)
/// and the rows are read back from those files.
std::vector<AblationRow> run_ablation(const Frames& clip, const TrainRun& base,
                                      const std::vector<std::uint64_t>& seeds, int parallel,
                                      const std::filesystem::path& out);

/// Reads an `epoch,loss,frame_psnr,ll_psnr,hf_psnr` CSV.
std::vector<CurvePoint> parse_curve_csv(const std::string& text);

/// Mean PSNR of `frame_index,psnr,ssim` rows.
MetricsTable parse_metrics_csv(const std::string& text);

/// Result of the ordering checks on an ablation grid.
struct OrderingCheck {
  bool holds = true;
  std::vector<std::string> lines;  // one per (seed, comparison)
};

/// full > mfu_only > none and full > hfr_only > none per seed, every gap
/// above `min_gap` dB.
OrderingCheck check_ablation_order(const std::vector<AblationRow>& rows, double min_gap = 0.1);

/// Full model's HF-band curve at or above the HFR-ablated one from
/// half-training onward, per seed.
OrderingCheck check_hf_dominance(const std::vector<AblationRow>& rows);

std::string ablation_csv(const std::vector<AblationRow>& rows);

}  // namespace snerv
