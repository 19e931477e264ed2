// SPDX-License-Identifier: Apache-2.0
#include "snerv/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include "snerv/optim.hpp"

namespace snerv {

std::string to_string(Task task) {
  switch (task) {
    case Task::kRegression: return "regression";
    case Task::kInterpolation: return "interpolation";
    case Task::kInpainting: return "inpainting";
  }
  return "regression";
}

Task parse_task(const std::string& text) {
  if (text == "regression") return Task::kRegression;
  if (text == "interpolation") return Task::kInterpolation;
  if (text == "inpainting") return Task::kInpainting;
  throw ConfigError("task: unknown value '" + text + "' (regression|interpolation|inpainting)");
}

std::string to_string(MaskSpec::Kind kind) {
  return kind == MaskSpec::Kind::kFixed5 ? "fixed5" : "random10";
}

MaskSpec::Kind parse_mask_kind(const std::string& text) {
  if (text == "fixed5") return MaskSpec::Kind::kFixed5;
  if (text == "random10") return MaskSpec::Kind::kRandom10;
  throw ConfigError("mask: unknown value '" + text + "' (fixed5|random10)");
}

Index MaskSpec::box_height(Index height) const {
  if (box_h > 0) return box_h;
  return std::max<Index>(1, std::llround(50.0 * static_cast<double>(height) / 480.0));
}

Index MaskSpec::box_width(Index width) const {
  if (box_w > 0) return box_w;
  return std::max<Index>(1, std::llround(50.0 * static_cast<double>(width) / 960.0));
}

std::vector<std::pair<Index, Index>> MaskSpec::boxes(Index height, Index width,
                                                     Index index) const {
  const Index bh = box_height(height), bw = box_width(width);
  std::vector<std::pair<Index, Index>> out;
  if (kind == Kind::kFixed5) {
    const Index cy[] = {height / 4, height / 4, 3 * height / 4, 3 * height / 4, height / 2};
    const Index cx[] = {width / 4, 3 * width / 4, width / 4, 3 * width / 4, width / 2};
    for (int i = 0; i < 5; ++i) out.emplace_back(cy[i] - bh / 2, cx[i] - bw / 2);
    return out;
  }
  if (bh > height || bw > width) {
    throw InputError("mask box " + std::to_string(bh) + "x" + std::to_string(bw) +
                     " does not fit a " + std::to_string(height) + "x" + std::to_string(width) +
                     " frame");
  }
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(index)};
  std::mt19937_64 engine(seq);
  for (int i = 0; i < 10; ++i) {
    const Index top = static_cast<Index>(engine() % static_cast<std::uint64_t>(height - bh + 1));
    const Index left = static_cast<Index>(engine() % static_cast<std::uint64_t>(width - bw + 1));
    out.emplace_back(top, left);
  }
  return out;
}

MaskedFrame apply_inpaint_mask(const Tensor<float>& frame, const MaskSpec& spec, Index index) {
  const Index h = frame.height(), w = frame.width();
  const Index bh = spec.box_height(h), bw = spec.box_width(w);
  MaskedFrame out{frame, Tensor<float>::constant({1, h, w}, 1.0f)};
  for (const auto& [top, left] : spec.boxes(h, w, index)) {
    if (top < 0 || left < 0 || top + bh > h || left + bw > w) {
      throw InputError("mask box at (" + std::to_string(top) + ", " + std::to_string(left) +
                       ") leaves the frame");
    }
    out.mask.plane(0).block(top, left, bh, bw).setZero();
    for (Index c = 0; c < frame.channels(); ++c) {
      out.frame.plane(c).block(top, left, bh, bw).setZero();
    }
  }
  return out;
}

Split split_interpolation(Index frame_count) {
  if (frame_count < 4) {
    throw InputError("interpolation split needs at least 4 frames, got " +
                     std::to_string(frame_count));
  }
  Split s;
  for (Index i = 0; i < frame_count; ++i) (i % 2 ? s.train : s.test).push_back(i);
  return s;
}

namespace {

void check_clip(const Frames& clip) {
  if (clip.empty()) throw InputError("empty clip");
  for (std::size_t i = 0; i < clip.size(); ++i) {
    if (clip[i].shape != clip[0].shape) {
      throw InputError("frame " + std::to_string(i) + " has shape " + to_string(clip[i].shape) +
                       ", expected " + to_string(clip[0].shape));
    }
  }
}

std::vector<Index> all_indices(Index n) {
  std::vector<Index> out(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) out[static_cast<std::size_t>(i)] = i;
  return out;
}

// Pool the neighbour lookup draws from for frame t.
const std::vector<Index>& neighbour_pool(const TaskData& data, const std::vector<Index>& everything,
                                         Index t) {
  const bool trained = std::binary_search(data.train.begin(), data.train.end(), t);
  return trained ? data.train : everything;
}

double hf_mean(const BandPsnr& b) { return b.hf(); }

}  // namespace

TaskData prepare_task(const Frames& clip, Task task, const std::optional<MaskSpec>& mask) {
  check_clip(clip);
  const Index n = static_cast<Index>(clip.size());
  TaskData d;
  d.inputs = clip;
  d.targets = clip;
  switch (task) {
    case Task::kRegression:
      d.train = d.test = all_indices(n);
      break;
    case Task::kInterpolation: {
      Split s = split_interpolation(n);
      d.train = std::move(s.train);
      d.test = std::move(s.test);
      break;
    }
    case Task::kInpainting: {
      const MaskSpec spec = mask.value_or(MaskSpec{});
      d.train = d.test = all_indices(n);
      for (Index i = 0; i < n; ++i) {
        d.inputs[i] = apply_inpaint_mask(clip[i], spec, i).frame;
        d.targets[i] = d.inputs[i];
      }
      break;
    }
  }
  return d;
}

std::pair<Index, Index> temporal_neighbors(const std::vector<Index>& pool, Index t) {
  if (pool.empty()) throw UsageError("empty neighbour pool");
  // Nearest pool entries strictly before and after t; t itself at the ends.
  auto lo = std::lower_bound(pool.begin(), pool.end(), t);
  auto hi = std::upper_bound(pool.begin(), pool.end(), t);
  const Index prev = lo == pool.begin() ? t : *std::prev(lo);
  const Index next = hi == pool.end() ? t : *hi;
  return {prev, next};
}

FitResult fit(const Frames& clip, TrainRun run, const EpochHook& on_epoch, const NanHook& on_nan) {
  if (run.epochs < 1) throw ConfigError("epochs must be >= 1");
  run.cfg.seed = run.seed;
  run.curve_log.clear();
  const TaskData data = prepare_task(clip, run.task, run.mask);
  const std::vector<Index> everything = all_indices(static_cast<Index>(clip.size()));
  auto model = std::make_unique<SnervModel<float>>(run.cfg);
  auto& params = model->params();

  std::vector<Subbands<float>> truth_bands(clip.size());
  for (Index t : data.train) truth_bands[t] = dwt2_haar(data.targets[t]);

  const long total = static_cast<long>(run.epochs) * static_cast<long>(data.train.size());
  OptimState<float> state(params, run.lr, total);

  for (int epoch = 1; epoch <= run.epochs; ++epoch) {
    CurvePoint point;
    point.epoch = epoch;
    for (Index t : data.train) {
      const auto [p, n] = temporal_neighbors(neighbour_pool(data, everything, t), t);
      const Embedding<float> e = model->embed(data.inputs[p], data.inputs[t], data.inputs[n]);
      const DecodeOutput<float> out = model->decode(e);
      const LossTerms<float> terms = total_loss(out.frame, data.targets[t], out.bands,
                                                truth_bands[t], run.alpha, run.coeff_loss);
      if (!std::isfinite(terms.breakdown.total)) {
        std::ostringstream msg;
        msg << "non-finite loss at epoch " << epoch << ", frame " << t << " (step "
            << state.step << "): frame_loss=" << terms.breakdown.frame_loss
            << " coeff_loss=" << terms.breakdown.coeff_loss
            << " param_hash=" << parameter_hash(params);
        if (on_nan) on_nan(*model, msg.str());
        throw NumericalError(msg.str());
      }
      backward(terms.total);
      if (run.clip_norm > 0) clip_grad_norm(params, run.clip_norm);
      adam_step(state, params, cosine_lr(state.step, total, run.lr, run.warmup_steps));

      const BandPsnr bp = subband_psnr(out.bands.values(), truth_bands[t]);
      point.loss += terms.breakdown.total;
      point.frame_psnr += psnr(out.frame.value(), data.targets[t]);
      point.ll_psnr += bp.ll;
      point.hf_psnr += hf_mean(bp);
    }
    const double k = 1.0 / static_cast<double>(data.train.size());
    point.loss *= k;
    point.frame_psnr *= k;
    point.ll_psnr *= k;
    point.hf_psnr *= k;
    run.curve_log.push_back(point);
    if (on_epoch) on_epoch(point);
  }
  return {std::move(model), std::move(run)};
}

EmbeddingSet compute_embeddings(const SnervModel<float>& model, const Frames& clip, Task task,
                                const std::optional<MaskSpec>& mask) {
  NoGradGuard guard;
  const TaskData data = prepare_task(clip, task, mask);
  const std::vector<Index> everything = all_indices(static_cast<Index>(clip.size()));
  EmbeddingSet out;
  for (Index t = 0; t < static_cast<Index>(clip.size()); ++t) {
    const auto [p, n] = temporal_neighbors(neighbour_pool(data, everything, t), t);
    const Embedding<float> e = model.embed(data.inputs[p], data.inputs[t], data.inputs[n]);
    out.e_t.push_back(e.e_t.value());
    if (e.temporal()) {
      out.e_b.push_back(e.e_b.value());
      out.e_f.push_back(e.e_f.value());
    }
  }
  return out;
}

Frames reconstruct(const SnervModel<float>& model, const EmbeddingSet& embeddings) {
  NoGradGuard guard;
  Frames out;
  const bool temporal = model.config().temporal;
  for (std::size_t i = 0; i < embeddings.size(); ++i) {
    Embedding<float> e;
    e.e_t = Var<float>::constant(embeddings.e_t[i]);
    if (temporal) {
      e.e_b = Var<float>::constant(embeddings.e_b.at(i));
      e.e_f = Var<float>::constant(embeddings.e_f.at(i));
    }
    out.push_back(model.decode(e).frame.value());
  }
  return out;
}

MetricsTable score(const Frames& decoded, const Frames& clip, const std::vector<Index>& indices) {
  MetricsTable table;
  for (Index t : indices) {
    FrameMetric m{t, psnr(decoded.at(t), clip.at(t)), frame_ssim(decoded.at(t), clip.at(t))};
    table.mean_psnr += m.psnr;
    table.mean_ssim += m.ssim;
    table.frames.push_back(m);
  }
  if (!indices.empty()) {
    table.mean_psnr /= static_cast<double>(indices.size());
    table.mean_ssim /= static_cast<double>(indices.size());
  }
  return table;
}

MetricsTable eval_task(const SnervModel<float>& model, const Frames& clip, Task task,
                       const std::optional<MaskSpec>& mask) {
  const TaskData data = prepare_task(clip, task, mask);
  return score(reconstruct(model, compute_embeddings(model, clip, task, mask)), clip, data.test);
}

namespace {

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(9);
  os << v;
  return os.str();
}

}  // namespace

std::string log_frequency_curves(const TrainRun& run) {
  std::string out = "epoch,ll_psnr,hf_psnr\n";
  for (const auto& p : run.curve_log) {
    out += std::to_string(p.epoch) + ',' + fmt(p.ll_psnr) + ',' + fmt(p.hf_psnr) + '\n';
  }
  return out;
}

std::string curve_csv(const TrainRun& run) {
  std::string out = "epoch,loss,frame_psnr,ll_psnr,hf_psnr\n";
  for (const auto& p : run.curve_log) {
    out += std::to_string(p.epoch) + ',' + fmt(p.loss) + ',' + fmt(p.frame_psnr) + ',' +
           fmt(p.ll_psnr) + ',' + fmt(p.hf_psnr) + '\n';
  }
  return out;
}

std::string metrics_csv(const MetricsTable& table) {
  std::string out = "frame_index,psnr,ssim\n";
  for (const auto& m : table.frames) {
    out += std::to_string(m.index) + ',' + fmt(m.psnr) + ',' + fmt(m.ssim) + '\n';
  }
  return out;
}

}  // namespace snerv
