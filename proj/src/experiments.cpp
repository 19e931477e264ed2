// SPDX-License-Identifier: Apache-2.0
#include "snerv/experiments.hpp"

#include <sys/wait.h>
#include <unistd.h>

#include <cstdio>
#include <iostream>
#include <map>
#include <sstream>

#include "snerv/text.hpp"
#include "snerv/video_io.hpp"

namespace fs = std::filesystem;

namespace snerv {

std::vector<Variant> ablation_variants() {
  return {{"full", true, true}, {"mfu_only", true, false}, {"hfr_only", false, true},
          {"none", false, false}};
}

void run_jobs(const std::vector<std::function<void()>>& jobs, int parallel) {
  if (parallel <= 1) {
    for (const auto& job : jobs) job();
    return;
  }
  std::map<pid_t, std::size_t> running;
  std::size_t next = 0;
  std::string failure;
  auto reap = [&] {
    int status = 0;
    const pid_t pid = ::waitpid(-1, &status, 0);
    if (pid < 0) throw Error("waitpid failed");
    const std::size_t idx = running.at(pid);
    running.erase(pid);
    if (!(WIFEXITED(status) && WEXITSTATUS(status) == 0) && failure.empty()) {
      failure = "job " + std::to_string(idx) + " failed";
    }
  };
  std::cout.flush();
  std::cerr.flush();
  while (next < jobs.size() || !running.empty()) {
    if (next < jobs.size() && static_cast<int>(running.size()) < parallel && failure.empty()) {
      const pid_t pid = ::fork();
      if (pid < 0) throw Error("fork failed");
      if (pid == 0) {
        int code = 0;
        try {
          jobs[next]();
        } catch (const std::exception& e) {
          std::cerr << "job " << next << ": " << e.what() << '\n';
          code = 1;
        }
        std::cout.flush();
        std::cerr.flush();
        ::_exit(code);
      }
      running[pid] = next++;
      continue;
    }
    if (running.empty()) break;
    reap();
  }
  if (!failure.empty()) throw Error(failure);
}

std::vector<CurvePoint> parse_curve_csv(const std::string& text) {
  std::vector<CurvePoint> out;
  std::istringstream is(text);
  std::string line;
  std::getline(is, line);
  if (trim(line) != "epoch,loss,frame_psnr,ll_psnr,hf_psnr") {
    throw InputError("not a curve CSV (header '" + line + "')");
  }
  while (std::getline(is, line)) {
    if (trim(line).empty()) continue;
    CurvePoint p;
    char c;
    std::istringstream ls(line);
    ls >> p.epoch >> c >> p.loss >> c >> p.frame_psnr >> c >> p.ll_psnr >> c >> p.hf_psnr;
    if (!ls) throw InputError("malformed curve row '" + line + "'");
    out.push_back(p);
  }
  return out;
}

MetricsTable parse_metrics_csv(const std::string& text) {
  MetricsTable t;
  std::istringstream is(text);
  std::string line;
  std::getline(is, line);
  if (trim(line) != "frame_index,psnr,ssim") {
    throw InputError("not a metrics CSV (header '" + line + "')");
  }
  while (std::getline(is, line)) {
    if (trim(line).empty()) continue;
    FrameMetric m;
    char c;
    std::istringstream ls(line);
    ls >> m.index >> c >> m.psnr >> c >> m.ssim;
    if (!ls) throw InputError("malformed metrics row '" + line + "'");
    t.frames.push_back(m);
    t.mean_psnr += m.psnr;
    t.mean_ssim += m.ssim;
  }
  if (!t.frames.empty()) {
    t.mean_psnr /= static_cast<double>(t.frames.size());
    t.mean_ssim /= static_cast<double>(t.frames.size());
  }
  return t;
}

std::vector<AblationRow> run_ablation(const Frames& clip, const TrainRun& base,
                                      const std::vector<std::uint64_t>& seeds, int parallel,
                                      const fs::path& out) {
  struct Spec {
    Variant variant;
    std::uint64_t seed;
    fs::path dir;
  };
  std::vector<Spec> specs;
  for (const auto& v : ablation_variants()) {
    for (auto s : seeds) specs.push_back({v, s, out / (v.name + "_s" + std::to_string(s))});
  }
  std::vector<std::function<void()>> jobs;
  for (const auto& spec : specs) {
    jobs.emplace_back([&clip, &base, spec] {
      TrainRun run = base;
      run.cfg.use_mfu = spec.variant.mfu;
      run.cfg.use_hfr = spec.variant.hfr;
      run.seed = spec.seed;
      FitResult r = fit(clip, run);
      const fs::path ckpt = spec.dir / "model.snrv";
      save_checkpoint(*r.model, ckpt);
      write_file_atomic(fs::path(ckpt.string() + ".curves.csv"), curve_csv(r.run));
      write_file_atomic(spec.dir / "metrics.csv",
                        metrics_csv(eval_task(*r.model, clip, run.task, run.mask)));
    });
  }
  run_jobs(jobs, parallel);

  std::vector<AblationRow> rows;
  for (const auto& spec : specs) {
    AblationRow row;
    row.variant = spec.variant.name;
    row.seed = spec.seed;
    row.psnr = parse_metrics_csv(read_file(spec.dir / "metrics.csv")).mean_psnr;
    row.curve = parse_curve_csv(read_file(spec.dir / "model.snrv.curves.csv"));
    row.final_hf_psnr = row.curve.empty() ? 0.0 : row.curve.back().hf_psnr;
    rows.push_back(std::move(row));
  }
  return rows;
}

namespace {

const AblationRow* find_row(const std::vector<AblationRow>& rows, const std::string& variant,
                            std::uint64_t seed) {
  for (const auto& r : rows) {
    if (r.variant == variant && r.seed == seed) return &r;
  }
  return nullptr;
}

std::vector<std::uint64_t> seeds_of(const std::vector<AblationRow>& rows) {
  std::vector<std::uint64_t> seeds;
  for (const auto& r : rows) {
    if (std::find(seeds.begin(), seeds.end(), r.seed) == seeds.end()) seeds.push_back(r.seed);
  }
  return seeds;
}

std::string fixed(double v, int digits = 2) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
  return buf;
}

}  // namespace

OrderingCheck check_ablation_order(const std::vector<AblationRow>& rows, double min_gap) {
  OrderingCheck check;
  const std::pair<const char*, const char*> pairs[] = {
      {"full", "mfu_only"}, {"mfu_only", "none"}, {"full", "hfr_only"}, {"hfr_only", "none"}};
  for (auto seed : seeds_of(rows)) {
    for (const auto& [hi, lo] : pairs) {
      const AblationRow* a = find_row(rows, hi, seed);
      const AblationRow* b = find_row(rows, lo, seed);
      if (!a || !b) {
        check.holds = false;
        check.lines.push_back("seed " + std::to_string(seed) + ": missing " + hi + " or " + lo);
        continue;
      }
      const double gap = a->psnr - b->psnr;
      const bool ok = gap > min_gap;
      check.holds = check.holds && ok;
      check.lines.push_back("seed " + std::to_string(seed) + ": " + hi + " " + fixed(a->psnr) +
                            " > " + lo + " " + fixed(b->psnr) + " (gap " + fixed(gap, 3) +
                            " dB) " + (ok ? "ok" : "VIOLATED"));
    }
  }
  return check;
}

OrderingCheck check_hf_dominance(const std::vector<AblationRow>& rows) {
  OrderingCheck check;
  for (auto seed : seeds_of(rows)) {
    const AblationRow* full = find_row(rows, "full", seed);
    const AblationRow* ablated = find_row(rows, "mfu_only", seed);
    if (!full || !ablated || full->curve.size() != ablated->curve.size() ||
        full->curve.empty()) {
      check.holds = false;
      check.lines.push_back("seed " + std::to_string(seed) + ": curves missing or misaligned");
      continue;
    }
    const std::size_t n = full->curve.size();
    std::size_t violations = 0;
    double worst = 1e300;
    for (std::size_t i = n / 2; i < n; ++i) {
      const double gap = full->curve[i].hf_psnr - ablated->curve[i].hf_psnr;
      worst = std::min(worst, gap);
      if (gap < 0) ++violations;
    }
    const bool ok = violations == 0;
    check.holds = check.holds && ok;
    check.lines.push_back("seed " + std::to_string(seed) + ": full HF curve vs HFR-ablated over epochs " +
                          std::to_string(n / 2 + 1) + ".." + std::to_string(n) +
                          ", smallest gap " + fixed(worst, 3) + " dB, " +
                          std::to_string(violations) + " epochs below " + (ok ? "ok" : "VIOLATED"));
  }
  return check;
}

std::string ablation_csv(const std::vector<AblationRow>& rows) {
  std::ostringstream os;
  os.precision(9);
  os << "variant,seed,psnr,final_hf_psnr\n";
  for (const auto& r : rows) {
    os << r.variant << ',' << r.seed << ',' << r.psnr << ',' << r.final_hf_psnr << '\n';
  }
  return os.str();
}

}  // namespace snerv
