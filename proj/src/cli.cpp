// SPDX-License-Identifier: Apache-2.0
#include "snerv/cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <filesystem>
#include <list>
#include <sstream>

#include "snerv/compression.hpp"
#include "snerv/experiments.hpp"
#include "snerv/text.hpp"
#include "snerv/video_io.hpp"

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace snerv {
namespace {

// Fully resolved settings of one invocation.
struct Settings {
  ModelConfig model = desk_config();
  int epochs = 200;
  std::uint64_t seed = 0;
  Task task = Task::kRegression;
  double lr = 1e-3;
  long warmup = 0;
  double alpha = kDefaultAlpha;
  bool coeff_loss = true;
  double clip_norm = 0;
  std::optional<MaskSpec> mask;
  CompressOptions compress;
  SynthParams gen;
  std::string input;
  std::vector<std::uint64_t> seeds{0, 1, 2};
  int jobs = 1;

  TrainRun train_run() const {
    TrainRun run;
    run.cfg = model;
    run.epochs = epochs;
    run.seed = seed;
    run.task = task;
    run.mask = mask;
    run.lr = lr;
    run.warmup_steps = warmup;
    run.alpha = alpha;
    run.coeff_loss = coeff_loss;
    run.clip_norm = clip_norm;
    return run;
  }

  std::string text() const {
    std::ostringstream os;
    os.precision(17);
    os << "[model]\n" << model.to_text();
    os << "\n[train]\n"
       << "epochs=" << epochs << '\n'
       << "seed=" << seed << '\n'
       << "task=" << to_string(task) << '\n'
       << "lr=" << lr << '\n'
       << "warmup=" << warmup << '\n'
       << "alpha=" << alpha << '\n'
       << "coeff_loss=" << (coeff_loss ? "true" : "false") << '\n'
       << "clip_norm=" << clip_norm << '\n'
       << "mask=" << (mask ? to_string(mask->kind) : std::string("none")) << '\n'
       << "mask_seed=" << (mask ? mask->seed : 0) << '\n'
       << "mask_box=" << (mask ? mask->box_h : 0) << 'x' << (mask ? mask->box_w : 0) << '\n';
    os << "\n[compress]\n"
       << "prune=" << compress.prune_fraction << '\n'
       << "bits_decoder=" << compress.bits_decoder << '\n'
       << "bits_embed=" << compress.bits_embed << '\n';
    os << "\n[gen]\n"
       << "kind=" << to_string(gen.kind) << '\n'
       << "frames=" << gen.frames << '\n'
       << "seed=" << gen.seed << '\n'
       << "hf_amplitude=" << gen.hf_amplitude << '\n'
       << "velocity=" << gen.velocity << '\n';
    os << "\n[data]\n"
       << "input=" << input << '\n';
    std::vector<int> s(seeds.begin(), seeds.end());
    os << "\n[ablate]\n"
       << "seeds=" << join_ints(s) << '\n'
       << "jobs=" << jobs << '\n';
    return os.str();
  }
};

[[noreturn]] void unknown_key(const std::string& section, const std::string& key) {
  throw ConfigError("unknown config field '" + section + "." + key + "'");
}

Settings resolve(const SectionedConfig& raw, const ModelConfig& base, bool check_model) {
  Settings s;
  s.model = base;
  for (const auto& [section, kv] : raw) {
    if (section == "model") {
      s.model = ModelConfig::from_map(kv, s.model);
      continue;
    }
    std::string mask_kind, mask_box;
    std::optional<std::uint64_t> mask_seed;
    for (const auto& [key, value] : kv) {
      const std::string field = section + "." + key;
      if (section == "train") {
        if (key == "epochs") s.epochs = parse_int(value, field);
        else if (key == "seed") s.seed = static_cast<std::uint64_t>(parse_int64(value, field));
        else if (key == "task") {
          try {
            s.task = parse_task(value);
          } catch (const Error&) {
            throw ConfigError("invalid config field '" + field + "': '" + value + "'");
          }
        } else if (key == "lr") s.lr = parse_double(value, field);
        else if (key == "warmup") s.warmup = parse_int64(value, field);
        else if (key == "alpha") s.alpha = parse_double(value, field);
        else if (key == "coeff_loss") s.coeff_loss = parse_bool(value, field);
        else if (key == "clip_norm") s.clip_norm = parse_double(value, field);
        else if (key == "mask") mask_kind = value;
        else if (key == "mask_seed") mask_seed = static_cast<std::uint64_t>(parse_int64(value, field));
        else if (key == "mask_box") mask_box = value;
        else unknown_key(section, key);
      } else if (section == "compress") {
        if (key == "prune") s.compress.prune_fraction = parse_double(value, field);
        else if (key == "bits_decoder") s.compress.bits_decoder = parse_int(value, field);
        else if (key == "bits_embed") s.compress.bits_embed = parse_int(value, field);
        else unknown_key(section, key);
      } else if (section == "gen") {
        if (key == "kind") {
          try {
            s.gen.kind = parse_synth_kind(value);
          } catch (const Error&) {
            throw ConfigError("invalid config field '" + field + "': '" + value + "'");
          }
        } else if (key == "frames") s.gen.frames = parse_int(value, field);
        else if (key == "seed") s.gen.seed = static_cast<std::uint64_t>(parse_int64(value, field));
        else if (key == "hf_amplitude") s.gen.hf_amplitude = parse_double(value, field);
        else if (key == "velocity") s.gen.velocity = parse_double(value, field);
        else unknown_key(section, key);
      } else if (section == "data") {
        if (key == "input") s.input = value;
        else unknown_key(section, key);
      } else if (section == "ablate") {
        if (key == "seeds") {
          s.seeds.clear();
          for (int v : parse_int_list(value, field)) {
            if (v < 0) throw ConfigError("invalid config field '" + field + "': negative seed");
            s.seeds.push_back(static_cast<std::uint64_t>(v));
          }
        } else if (key == "jobs") s.jobs = parse_int(value, field);
        else unknown_key(section, key);
      } else {
        throw ConfigError("unknown config section [" + section + "]");
      }
    }
    if (section == "train") {
      if (!mask_kind.empty() && mask_kind != "none") {
        MaskSpec m;
        try {
          m.kind = parse_mask_kind(mask_kind);
        } catch (const Error&) {
          throw ConfigError("invalid config field 'train.mask': '" + mask_kind + "'");
        }
        s.mask = m;
      }
      if (s.mask && mask_seed) s.mask->seed = *mask_seed;
      if (s.mask && !mask_box.empty()) {
        const auto dims = parse_dims(mask_box, "train.mask_box");
        if (dims.size() != 2) throw ConfigError("invalid config field 'train.mask_box'");
        s.mask->box_h = dims[0];
        s.mask->box_w = dims[1];
      }
    }
  }
  if (s.task == Task::kInpainting && !s.mask) s.mask = MaskSpec{};
  if (s.epochs < 1) throw ConfigError("invalid config field 'train.epochs': must be >= 1");
  if (!(s.lr > 0)) throw ConfigError("invalid config field 'train.lr': must be positive");
  if (s.alpha < 0 || s.alpha > 1) throw ConfigError("invalid config field 'train.alpha': outside [0,1]");
  if (s.gen.frames < 1) throw ConfigError("invalid config field 'gen.frames': must be >= 1");
  if (s.jobs < 1) throw ConfigError("invalid config field 'ablate.jobs': must be >= 1");
  if (s.seeds.empty()) throw ConfigError("invalid config field 'ablate.seeds': empty");
  if (check_model) {
    s.model.validate();
  } else if (s.model.height % 2 || s.model.width % 2 || s.model.height < 2 || s.model.width < 2) {
    throw ConfigError("invalid config field 'resolution': height and width must be even");
  }
  return s;
}

// One flag that overrides `section.key` of the config file.
struct Binding {
  CLI::Option* opt = nullptr;
  std::string section, key;
  std::string value;
  std::string flag_value;  // set for value-less flags
};

class Command {
 public:
  Command(CLI::App& app, const std::string& name, const std::string& help)
      : sub_(app.add_subcommand(name, help)) {
    sub_->add_option("--config", config_path_, "settings file with [section] key=value lines");
    sub_->add_option("--out", out_, "output directory")->capture_default_str();
  }

  CLI::App* app() { return sub_; }
  bool parsed() const { return sub_->parsed(); }
  const std::string& out() const { return out_; }
  const std::string& config_path() const { return config_path_; }

  void bind(const std::string& flag, const std::string& section, const std::string& key,
            const std::string& help) {
    auto& b = bindings_.emplace_back();
    b.section = section;
    b.key = key;
    b.opt = sub_->add_option(flag, b.value, help);
  }
  void bind_flag(const std::string& flag, const std::string& section, const std::string& key,
                 const std::string& value, const std::string& help) {
    auto& b = bindings_.emplace_back();
    b.section = section;
    b.key = key;
    b.flag_value = value;
    b.opt = sub_->add_flag(flag, help);
  }

  void model_flags() {
    bind("--resolution", "model", "resolution", "frame size HxW");
    bind("--c0", "model", "c0", "channels of the first up-sampling block");
    bind("--strides", "model", "strides", "five decoder strides a,b,c,d,e");
    bind("--n-rb", "model", "n_rb", "residual blocks per fusion block");
    bind("--embed", "model", "embed", "embedding CxHxW");
    bind_flag("--temporal", "model", "temporal", "true", "temporal model (TUB decoder)");
    bind("--temporal-block", "model", "temporal_block", "tub2d | tub3d | nerv");
    bind_flag("--no-mfu", "model", "mfu", "false", "disable the fusion unit");
    bind_flag("--no-hfr", "model", "hfr", "false", "disable the detail restorer");
  }
  void task_flags() {
    bind("--task", "train", "task", "regression | interpolation | inpainting");
    bind("--mask", "train", "mask", "fixed5 | random10");
    bind("--mask-seed", "train", "mask_seed", "seed of random10 boxes");
  }
  void train_flags() {
    task_flags();
    bind("--seed", "train", "seed", "training seed");
    bind("--epochs", "train", "epochs", "training epochs");
    bind("--lr", "train", "lr", "peak learning rate");
    bind("--warmup", "train", "warmup", "linear warmup steps");
    bind("--alpha", "train", "alpha", "weight of the frame term against the coefficient term");
  }
  void compress_flags() {
    bind("--prune", "compress", "prune", "fraction of decoder weights to zero");
    bind("--bits-decoder", "compress", "bits_decoder", "decoder weight bit width");
    bind("--bits-embed", "compress", "bits_embed", "embedding bit width");
  }
  void clip_flags(const std::string& seed_flag) {
    bind("--input", "data", "input", "frame directory or dir/prefix*suffix pattern");
    bind("--kind", "gen", "kind", "synthetic clip: smooth | textured | moving");
    bind("--frames", "gen", "frames", "synthetic clip length");
    bind(seed_flag, "gen", "seed", "synthetic clip seed");
    bind("--hf-amplitude", "gen", "hf_amplitude", "grating amplitude of textured/moving clips");
    bind("--velocity", "gen", "velocity", "px/frame of the moving clip");
  }

  /// Config file merged with the flags that were given.
  SectionedConfig raw_settings() const {
    SectionedConfig raw;
    if (!config_path_.empty()) raw = parse_sectioned(read_file(config_path_));
    for (const auto& b : bindings_) {
      if (b.opt->count() == 0) continue;
      raw[b.section][b.key] = b.flag_value.empty() ? b.value : b.flag_value;
    }
    return raw;
  }

 private:
  CLI::App* sub_;
  std::string config_path_;
  std::string out_ = "out";
  std::list<Binding> bindings_;
};

ordered_json file_entry(const fs::path& path, const fs::path& base = {}) {
  const std::string contents = read_file(path);
  ordered_json e;
  e["path"] = base.empty() ? path.generic_string() : fs::relative(path, base).generic_string();
  e["bytes"] = contents.size();
  e["git_blob"] = git_blob_hash(contents);
  return e;
}

struct Manifest {
  std::string command;
  std::vector<std::string> args;
  std::vector<fs::path> inputs;
  std::vector<fs::path> outputs;
  std::optional<SynthParams> synthetic;

  void write(const fs::path& out, const Settings& s) const {
    const std::string text = s.text();
    ordered_json j;
    j["command"] = command;
    j["args"] = args;
    j["config"] = text;
    j["config_sha1"] = sha1_hex(text);
    j["seed"] = s.seed;
    j["inputs"] = ordered_json::array();
    for (const auto& p : inputs) j["inputs"].push_back(file_entry(p));
    if (synthetic) {
      j["synthetic_input"] = {{"kind", to_string(synthetic->kind)},
                              {"height", synthetic->height},
                              {"width", synthetic->width},
                              {"frames", synthetic->frames},
                              {"seed", synthetic->seed},
                              {"hf_amplitude", synthetic->hf_amplitude},
                              {"velocity", synthetic->velocity}};
    }
    j["outputs"] = ordered_json::array();
    for (const auto& p : outputs) j["outputs"].push_back(file_entry(p, out));
    write_file_atomic(out / "manifest.json", j.dump(2) + "\n");
  }
};

// Frames from --input, or the synthetic clip at the given resolution.
VideoClip acquire_clip(const Settings& s, Index height, Index width, Manifest& m) {
  if (!s.input.empty()) {
    VideoClip clip = load_frames(s.input);
    if (clip.height() != height || clip.width() != width) {
      throw InputError("input frames are " + std::to_string(clip.height()) + "x" +
                       std::to_string(clip.width()) + ", model expects " +
                       std::to_string(height) + "x" + std::to_string(width));
    }
    m.inputs.insert(m.inputs.end(), clip.files.begin(), clip.files.end());
    return clip;
  }
  SynthParams p = s.gen;
  p.height = height;
  p.width = width;
  m.synthetic = p;
  return synth_video(p);
}

std::string fmt(double v, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
  return buf;
}

void print_metrics(std::ostream& out, const MetricsTable& t) {
  out << "frame psnr ssim\n";
  for (const auto& f : t.frames) {
    out << f.index << ' ' << fmt(f.psnr) << ' ' << fmt(f.ssim, 6) << '\n';
  }
  out << "mean psnr " << fmt(t.mean_psnr) << " dB, ssim " << fmt(t.mean_ssim, 6) << " over "
      << t.frames.size() << " frames\n";
}

void write_output(const fs::path& path, const std::string& contents, Manifest& m) {
  write_file_atomic(path, contents);
  m.outputs.push_back(path);
}

int cmd_gen(const Settings& s, bool ppm, const fs::path& out, Manifest& m, std::ostream& os) {
  SynthParams p = s.gen;
  p.height = s.model.height;
  p.width = s.model.width;
  m.synthetic = p;
  const VideoClip clip = synth_video(p);
  save_frames(clip, out, ppm);
  for (const auto& e : fs::directory_iterator(out)) {
    const auto ext = e.path().extension();
    if (ext == (ppm ? ".ppm" : ".rgb") || (!ppm && e.path().filename() == "dims.txt")) {
      m.outputs.push_back(e.path());
    }
  }
  std::sort(m.outputs.begin(), m.outputs.end());
  os << "wrote " << clip.count() << " frames " << clip.height() << "x" << clip.width() << " ("
     << to_string(p.kind) << ") to " << out.string() << "\n"
     << "hf energy fraction " << fmt(hf_energy_fraction(clip.frames), 6) << "\n";
  return kExitOk;
}

int cmd_train(const Settings& s, const fs::path& out, Manifest& m, std::ostream& os,
              std::ostream& es) {
  const VideoClip clip = acquire_clip(s, s.model.height, s.model.width, m);
  const TrainRun run = s.train_run();
  const int every = std::max(1, run.epochs / 10);
  auto on_epoch = [&](const CurvePoint& p) {
    if (p.epoch % every == 0 || p.epoch == 1) {
      os << "epoch " << p.epoch << "/" << run.epochs << " loss " << fmt(p.loss, 6) << " psnr "
         << fmt(p.frame_psnr, 2) << " ll " << fmt(p.ll_psnr, 2) << " hf " << fmt(p.hf_psnr, 2)
         << "\n";
      os.flush();
    }
  };
  auto on_nan = [&](const SnervModel<float>& model, const std::string& diag) {
    save_checkpoint(model, out / "nan_state.snrv");
    es << diag << "\nfailing state written to " << (out / "nan_state.snrv").string() << "\n";
  };
  const auto pc = SnervModel<float>(s.model).param_count();
  os << "training " << to_string(run.task) << " on " << clip.count() << " frames "
     << clip.height() << "x" << clip.width() << ", decoder " << pc.decoder << " params, encoder "
     << pc.encoder << "\n";
  FitResult r = fit(clip.frames, run, on_epoch, on_nan);
  const fs::path ckpt = out / "model.snrv";
  save_checkpoint(*r.model, ckpt);
  m.outputs.push_back(ckpt);
  write_output(fs::path(ckpt.string() + ".curves.csv"), curve_csv(r.run), m);
  write_output(out / "frequency_curves.csv", log_frequency_curves(r.run), m);
  const MetricsTable t = eval_task(*r.model, clip.frames, run.task, run.mask);
  write_output(out / "metrics.csv", metrics_csv(t), m);
  if (run.task == Task::kInterpolation) os << "held-out (even) frames only\n";
  print_metrics(os, t);
  return kExitOk;
}

std::unique_ptr<SnervModel<float>> load_model(const std::string& path, Manifest& m) {
  if (path.empty()) throw UsageError("--checkpoint is required");
  auto model = load_checkpoint(path);
  m.inputs.push_back(path);
  return model;
}

int cmd_eval(Settings& s, const std::string& checkpoint, const fs::path& out, Manifest& m,
             std::ostream& os) {
  auto model = load_model(checkpoint, m);
  s.model = model->config();
  const VideoClip clip = acquire_clip(s, s.model.height, s.model.width, m);
  const MetricsTable t = eval_task(*model, clip.frames, s.task, s.mask);
  write_output(out / "metrics.csv", metrics_csv(t), m);
  if (s.task == Task::kInterpolation) os << "held-out (even) frames only\n";
  print_metrics(os, t);
  return kExitOk;
}

int cmd_compress(Settings& s, const std::string& checkpoint, const fs::path& out, Manifest& m,
                 std::ostream& os) {
  auto model = load_model(checkpoint, m);
  s.model = model->config();
  const VideoClip clip = acquire_clip(s, s.model.height, s.model.width, m);
  std::string container;
  const RoundtripReport r = roundtrip(*model, clip.frames, s.task, s.compress, s.mask, &container);
  write_output(out / "model.snvc", container, m);

  std::ostringstream frames;
  frames.precision(9);
  frames << "frame_index,psnr_original,psnr_compressed,delta_psnr\n";
  for (std::size_t i = 0; i < r.original.size(); ++i) {
    frames << r.original[i].index << ',' << r.original[i].psnr << ',' << r.compressed[i].psnr
           << ',' << r.original[i].psnr - r.compressed[i].psnr << '\n';
  }
  write_output(out / "compression_frames.csv", frames.str(), m);

  std::ostringstream summary;
  summary.precision(9);
  summary << "key,value\n"
          << "prune_candidates," << r.prune.candidates << '\n'
          << "prune_zeroed," << r.prune.zeroed << '\n'
          << "header_bytes," << r.bits.header_bytes << '\n'
          << "payload_bits," << r.bits.payload_bits << '\n'
          << "decoder_value_bits," << r.bits.decoder_value_bits << '\n'
          << "bitmap_bits," << r.bits.bitmap_bits << '\n'
          << "embedding_bits," << r.bits.embedding_bits << '\n'
          << "total_bits," << r.bits.total_bits() << '\n'
          << "file_bytes," << r.file_bytes << '\n'
          << "bpp," << r.bpp << '\n'
          << "entropy_bpp," << r.entropy_bpp << '\n'
          << "mean_psnr_original," << r.mean_psnr_original << '\n'
          << "mean_psnr_compressed," << r.mean_psnr_compressed << '\n'
          << "delta_psnr," << r.delta_psnr << '\n';
  write_output(out / "compression.csv", summary.str(), m);

  os << "pruned " << r.prune.zeroed << " of " << r.prune.candidates << " decoder weights\n"
     << "container " << r.file_bytes << " bytes (header " << r.bits.header_bytes
     << ", payload bits " << r.bits.payload_bits << ")\n"
     << "bpp " << fmt(r.bpp, 6) << " (entropy estimate " << fmt(r.entropy_bpp, 6) << ")\n"
     << "psnr " << fmt(r.mean_psnr_original) << " -> " << fmt(r.mean_psnr_compressed)
     << " dB (delta " << fmt(r.delta_psnr) << ")\n";
  return kExitOk;
}

int cmd_curves(const std::vector<std::string>& checkpoints, const fs::path& out, Manifest& m,
               std::ostream& os) {
  if (checkpoints.empty()) throw UsageError("curves needs at least one checkpoint");
  std::ostringstream csv;
  csv.precision(9);
  csv << "checkpoint,epoch,ll_psnr,hf_psnr\n";
  for (const auto& path : checkpoints) {
    load_checkpoint(path);
    m.inputs.push_back(path);
    const fs::path curves = path + ".curves.csv";
    const auto points = parse_curve_csv(read_file(curves));
    m.inputs.push_back(curves);
    for (const auto& p : points) {
      csv << path << ',' << p.epoch << ',' << p.ll_psnr << ',' << p.hf_psnr << '\n';
    }
    if (!points.empty()) {
      os << path << ": " << points.size() << " epochs, final ll " << fmt(points.back().ll_psnr, 2)
         << " hf " << fmt(points.back().hf_psnr, 2) << " dB\n";
    }
  }
  write_output(out / "curves.csv", csv.str(), m);
  return kExitOk;
}

int cmd_info(const Settings& s, const fs::path& out, Manifest& m, std::ostream& os) {
  const ModelConfig& cfg = s.model;
  std::ostringstream text;
  text << "resolution " << cfg.height << "x" << cfg.width << ", strides "
       << join_ints(cfg.strides) << ", c0 " << cfg.c0 << ", r " << cfg.reduction << ", n_rb "
       << cfg.n_rb << ", mfu " << (cfg.use_mfu ? "on" : "off") << ", hfr "
       << (cfg.use_hfr ? "on" : "off") << ", temporal " << (cfg.temporal ? to_string(cfg.temporal_block) : "off")
       << "\n";
  const auto sched = channel_schedule(cfg);
  text << "schedule";
  for (std::size_t i = 0; i < sched.size(); ++i) {
    text << " ub" << i << " " << sched[i].first << "->" << sched[i].second << " x"
         << cfg.strides[i];
  }
  text << "\n";
  const SnervModel<float> model(cfg);
  const ParamCount pc = model.param_count();
  text << "decoder parameters " << pc.decoder << "\n"
       << "encoder parameters " << pc.encoder << "\n"
       << "embedding floats per frame " << pc.embedding_floats_per_frame << "\n"
       << "checkpoint bytes " << serialize_checkpoint(model).size() << "\n";

  std::vector<CompressOptions> grid{{0.0, 16, 16}, {0.0, 8, 6}, {0.1, 8, 6}, {0.1, 6, 6},
                                    {0.2, 8, 6}};
  if (std::find_if(grid.begin(), grid.end(), [&](const CompressOptions& o) {
        return o.prune_fraction == s.compress.prune_fraction &&
               o.bits_decoder == s.compress.bits_decoder && o.bits_embed == s.compress.bits_embed;
      }) == grid.end()) {
    grid.push_back(s.compress);
  }
  std::ostringstream csv;
  csv.precision(9);
  csv << "prune,bits_decoder,bits_embed,frames,bpp\n";
  text << "expected bpp for " << s.gen.frames << " frames\n"
       << "prune bits_decoder bits_embed bpp\n";
  for (const auto& o : grid) {
    const double v = expected_bpp(cfg, s.gen.frames, o);
    text << fmt(o.prune_fraction, 2) << ' ' << o.bits_decoder << ' ' << o.bits_embed << ' '
         << fmt(v, 6) << "\n";
    csv << o.prune_fraction << ',' << o.bits_decoder << ',' << o.bits_embed << ','
        << s.gen.frames << ',' << v << '\n';
  }
  os << text.str();
  write_output(out / "info.txt", text.str(), m);
  write_output(out / "bpp.csv", csv.str(), m);
  return kExitOk;
}

int cmd_ablate(const Settings& s, const fs::path& out, Manifest& m, std::ostream& os) {
  const VideoClip clip = acquire_clip(s, s.model.height, s.model.width, m);
  TrainRun base = s.train_run();
  base.task = Task::kRegression;
  base.mask.reset();
  os << "ablation grid: 4 variants x " << s.seeds.size() << " seeds, " << base.epochs
     << " epochs, " << s.jobs << " parallel jobs\n";
  os.flush();
  const auto rows = run_ablation(clip.frames, base, s.seeds, s.jobs, out);
  for (const auto& v : ablation_variants()) {
    for (auto seed : s.seeds) {
      const fs::path dir = out / (v.name + "_s" + std::to_string(seed));
      for (const char* f : {"model.snrv", "model.snrv.curves.csv", "metrics.csv"}) {
        m.outputs.push_back(dir / f);
      }
    }
  }
  write_output(out / "ablation.csv", ablation_csv(rows), m);

  os << "variant seed psnr final_hf_psnr\n";
  for (auto seed : s.seeds) {
    for (const auto& v : ablation_variants()) {
      for (const auto& r : rows) {
        if (r.variant == v.name && r.seed == seed) {
          os << r.variant << ' ' << r.seed << ' ' << fmt(r.psnr) << ' ' << fmt(r.final_hf_psnr)
             << '\n';
        }
      }
    }
  }
  const OrderingCheck order = check_ablation_order(rows);
  const OrderingCheck hf = check_hf_dominance(rows);
  std::ostringstream report;
  for (const auto& l : order.lines) report << l << '\n';
  report << "ordering full > single-module > none: " << (order.holds ? "holds" : "violated")
         << '\n';
  for (const auto& l : hf.lines) report << l << '\n';
  report << "hf dominance of full over hfr-ablated: " << (hf.holds ? "holds" : "violated")
         << '\n';
  os << report.str();
  write_output(out / "ordering.txt", report.str(), m);
  return kExitOk;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Wavelet-domain neural video representation: train, evaluate, compress"};
  app.name("snerv");
  app.set_help_all_flag("--help-all", "help for every subcommand");
  app.require_subcommand(1);

  Command gen(app, "gen", "write a synthetic clip");
  gen.bind("--resolution", "model", "resolution", "frame size HxW");
  gen.clip_flags("--seed");
  bool ppm = false;
  gen.app()->add_flag("--ppm", ppm, "write .ppm instead of raw .rgb");

  Command train(app, "train", "fit a model to a clip");
  train.model_flags();
  train.train_flags();
  train.clip_flags("--clip-seed");

  std::string eval_ckpt, compress_ckpt, preset = "desk";
  Command eval(app, "eval", "score a checkpoint on a clip");
  eval.app()->add_option("--checkpoint", eval_ckpt, "model.snrv")->required();
  eval.task_flags();
  eval.clip_flags("--clip-seed");

  Command comp(app, "compress", "prune, quantize and pack a checkpoint");
  comp.app()->add_option("--checkpoint", compress_ckpt, "model.snrv")->required();
  comp.compress_flags();
  comp.task_flags();
  comp.clip_flags("--clip-seed");

  std::vector<std::string> curve_ckpts;
  Command curves(app, "curves", "LL and HF PSNR per epoch for one or more checkpoints");
  curves.app()->add_option("checkpoints", curve_ckpts, "model.snrv files")->required();

  Command info(app, "info", "parameter counts and expected bpp");
  info.app()
      ->add_option("--preset", preset, "desk | paper640")
      ->check(CLI::IsMember({"desk", "paper640"}))
      ->capture_default_str();
  info.model_flags();
  info.compress_flags();
  info.bind("--frames", "gen", "frames", "clip length for the bpp table");

  Command ablate(app, "ablate", "MFU/HFR 2x2 grid and its ordering");
  ablate.model_flags();
  ablate.train_flags();
  ablate.clip_flags("--clip-seed");
  ablate.bind("--seeds", "ablate", "seeds", "comma-separated seeds");
  ablate.bind("--jobs", "ablate", "jobs", "parallel training processes");

  std::vector<Command*> commands{&gen, &train, &eval, &comp, &curves, &info, &ablate};

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n";
    CLI::App* shown = &app;
    for (Command* c : commands) {
      if (c->parsed()) shown = c->app();
    }
    err << shown->help();
    return kExitUsage;
  }

  Command* cmd = nullptr;
  for (Command* c : commands) {
    if (c->parsed()) cmd = c;
  }
  const std::string name = cmd->app()->get_name();
  try {
    SectionedConfig raw = cmd->raw_settings();
    if (name == "ablate") {
      // defaults of the grid: a capacity-limited model on a 16-frame textured clip
      if (!raw["gen"].count("kind")) raw["gen"]["kind"] = "textured";
      if (!raw["gen"].count("frames")) raw["gen"]["frames"] = "16";
      if (!raw["model"].count("c0")) raw["model"]["c0"] = "24";
      if (!raw["train"].count("epochs")) raw["train"]["epochs"] = "300";
    }
    const ModelConfig base = preset == "paper640" ? paper_backbone_640x1280() : desk_config();
    Settings s = resolve(raw, base, name != "gen" && name != "curves");

    const fs::path out_dir = cmd->out();
    fs::create_directories(out_dir);
    Manifest m;
    m.command = name;
    for (int i = 1; i < argc; ++i) m.args.emplace_back(argv[i]);
    if (!cmd->config_path().empty()) m.inputs.push_back(cmd->config_path());

    int code = kExitOk;
    if (name == "gen") {
      code = cmd_gen(s, ppm, out_dir, m, out);
    } else if (name == "train") {
      code = cmd_train(s, out_dir, m, out, err);
    } else if (name == "eval") {
      code = cmd_eval(s, eval_ckpt, out_dir, m, out);
    } else if (name == "compress") {
      code = cmd_compress(s, compress_ckpt, out_dir, m, out);
    } else if (name == "curves") {
      code = cmd_curves(curve_ckpts, out_dir, m, out);
    } else if (name == "info") {
      code = cmd_info(s, out_dir, m, out);
    } else {
      code = cmd_ablate(s, out_dir, m, out);
    }
    m.write(out_dir, s);
    return code;
  } catch (const ConfigError& e) {
    err << "configuration error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << "\n\n" << cmd->app()->help();
    return kExitUsage;
  } catch (const InputError& e) {
    err << "input error: " << e.what() << "\n";
    return kExitInput;
  } catch (const IoError& e) {
    err << "i/o error: " << e.what() << "\n";
    return kExitInput;
  } catch (const CorruptionError& e) {
    err << "corrupt file: " << e.what() << "\n";
    return kExitInput;
  } catch (const VersionError& e) {
    err << "unsupported version: " << e.what() << "\n";
    return kExitInput;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  }
}

}  // namespace snerv
