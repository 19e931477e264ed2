// SPDX-License-Identifier: Apache-2.0
#include "snerv/video_io.hpp"

#include <openssl/evp.h>
#include <unistd.h>
#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <regex>
#include <sstream>

#include "snerv/bytes.hpp"
#include "snerv/rng.hpp"
#include "snerv/text.hpp"

namespace fs = std::filesystem;

namespace snerv {

std::string to_string(SynthKind kind) {
  switch (kind) {
    case SynthKind::kSmooth: return "smooth";
    case SynthKind::kTextured: return "textured";
    case SynthKind::kMoving: return "moving";
  }
  return "smooth";
}

SynthKind parse_synth_kind(const std::string& text) {
  if (text == "smooth") return SynthKind::kSmooth;
  if (text == "textured") return SynthKind::kTextured;
  if (text == "moving") return SynthKind::kMoving;
  throw ConfigError("kind: unknown value '" + text + "' (smooth|textured|moving)");
}

namespace {

struct Blob {
  double cx, cy, sigma, vx, vy;
  double color[3];
};

struct Grating {
  double kx, ky, phase, amp[3];
};

// Periodic content on the H x W torus, so shifted copies wrap seamlessly.
struct Scene {
  double base[3];
  std::vector<Blob> blobs;
  std::vector<Grating> gratings;
  double height, width;

  static double wrap(double d, double period) {
    d = std::fmod(std::abs(d), period);
    return std::min(d, period - d);
  }

  double value(int c, double x, double y, double t, double hf) const {
    double v = base[c];
    for (const auto& b : blobs) {
      const double dx = wrap(x - (b.cx + b.vx * t), width);
      const double dy = wrap(y - (b.cy + b.vy * t), height);
      v += b.color[c] * std::exp(-(dx * dx + dy * dy) / (2.0 * b.sigma * b.sigma));
    }
    if (hf != 0.0) {
      for (const auto& g : gratings) {
        const double arg = 2.0 * std::numbers::pi * (g.kx * x / width + g.ky * y / height);
        v += hf * g.amp[c] * std::sin(arg + g.phase);
      }
    }
    return std::clamp(v, 0.0, 1.0);
  }
};

Scene make_scene(const SynthParams& p) {
  Rng rng(p.seed);
  Scene s;
  s.height = static_cast<double>(p.height);
  s.width = static_cast<double>(p.width);
  for (double& b : s.base) b = rng.uniform(0.25, 0.55);
  const double side = std::min(s.height, s.width);
  for (int i = 0; i < 5; ++i) {
    Blob b;
    b.cx = rng.uniform(0, s.width);
    b.cy = rng.uniform(0, s.height);
    b.sigma = rng.uniform(0.1, 0.22) * side;
    b.vx = rng.uniform(-1.0, 1.0);
    b.vy = rng.uniform(-0.5, 0.5);
    for (double& c : b.color) c = rng.uniform(-0.3, 0.45);
    s.blobs.push_back(b);
  }
  // Integer cycles per frame keep the gratings periodic; periods of 2.5 to 5 px.
  for (int i = 0; i < 3; ++i) {
    Grating g;
    g.kx = std::round(rng.uniform(s.width / 5.0, s.width / 2.5));
    g.ky = std::round(rng.uniform(-s.height / 5.0, s.height / 5.0));
    g.phase = rng.uniform(0, 2.0 * std::numbers::pi);
    for (double& a : g.amp) a = rng.uniform(0.6, 1.0) / 3.0;
    s.gratings.push_back(g);
  }
  return s;
}

}  // namespace

VideoClip synth_video(const SynthParams& p) {
  if (p.height <= 0 || p.width <= 0 || p.height % 2 || p.width % 2) {
    throw InputError("synthetic video dimensions must be positive and even, got " +
                     std::to_string(p.height) + "x" + std::to_string(p.width));
  }
  if (p.frames < 1) throw InputError("synthetic video needs at least one frame");
  const Scene scene = make_scene(p);
  VideoClip clip;
  clip.source = "synth:" + to_string(p.kind) + ":seed=" + std::to_string(p.seed);
  const double hf = p.kind == SynthKind::kSmooth ? 0.0 : p.hf_amplitude;
  for (Index t = 0; t < p.frames; ++t) {
    Tensor<float> f({3, p.height, p.width});
    const double td = static_cast<double>(t);
    for (int c = 0; c < 3; ++c) {
      for (Index y = 0; y < p.height; ++y) {
        for (Index x = 0; x < p.width; ++x) {
          double v;
          if (p.kind == SynthKind::kMoving) {
            v = scene.value(c, static_cast<double>(x) - p.velocity * td,
                            static_cast<double>(y) - 0.5 * p.velocity * td, 0.0, hf);
          } else {
            v = scene.value(c, static_cast<double>(x), static_cast<double>(y), td, hf);
          }
          f(c, y, x) = static_cast<float>(v);
        }
      }
    }
    clip.frames.push_back(std::move(f));
  }
  return clip;
}

double hf_energy_fraction(const Frames& frames) {
  double detail = 0, all = 0;
  for (const auto& f : frames) {
    const Subbands<float> sb = dwt2_haar(f);
    for (int i = 0; i < 4; ++i) {
      const double e = sb.band(i).data.cast<double>().squaredNorm();
      all += e;
      if (i > 0) detail += e;
    }
  }
  return all > 0 ? detail / all : 0.0;
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) throw IoError("failed reading '" + path.string() + "'");
  return ss.str();
}

void write_file_atomic(const fs::path& path, const std::string& contents) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp." + std::to_string(::getpid());
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write '" + tmp.string() + "'");
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    out.flush();
    if (!out) throw IoError("failed writing '" + tmp.string() + "'");
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) {
    fs::remove(tmp);
    throw IoError("cannot rename into '" + path.string() + "': " + ec.message());
  }
}

namespace {

float to_unit(unsigned char v) { return static_cast<float>(v) / 255.0f; }

unsigned char to_byte(float v) {
  return static_cast<unsigned char>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f));
}

Tensor<float> read_rgb(const fs::path& file, Index h, Index w) {
  const std::string bytes = read_file(file);
  if (static_cast<Index>(bytes.size()) != 3 * h * w) {
    throw IoError("'" + file.string() + "' has " + std::to_string(bytes.size()) +
                  " bytes, expected " + std::to_string(3 * h * w));
  }
  Tensor<float> f({3, h, w});
  for (Index i = 0; i < f.size(); ++i) f.data[i] = to_unit(static_cast<unsigned char>(bytes[i]));
  return f;
}

std::string ppm_token(std::istream& in) {
  std::string tok;
  while (in >> tok) {
    if (tok[0] != '#') return tok;
    std::string rest;
    std::getline(in, rest);
  }
  return {};
}

// Last run of digits in a file name, or -1.
long frame_number(const std::string& name) {
  static const std::regex digits("([0-9]+)[^0-9]*$");
  std::smatch m;
  if (std::regex_search(name, m, digits)) return std::stol(m[1].str());
  return -1;
}

bool glob_match(const std::string& pattern, const std::string& name) {
  const auto star = pattern.find('*');
  if (star == std::string::npos) return pattern == name;
  const std::string pre = pattern.substr(0, star), post = pattern.substr(star + 1);
  return name.size() >= pre.size() + post.size() && name.compare(0, pre.size(), pre) == 0 &&
         name.compare(name.size() - post.size(), post.size(), post) == 0;
}

}  // namespace

Tensor<float> read_ppm(const fs::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw IoError("cannot open '" + file.string() + "'");
  if (ppm_token(in) != "P6") throw IoError("'" + file.string() + "' is not a binary PPM (P6)");
  Index w = 0, h = 0;
  int maxval = 0;
  try {
    w = std::stol(ppm_token(in));
    h = std::stol(ppm_token(in));
    maxval = std::stoi(ppm_token(in));
  } catch (const std::logic_error&) {
    throw IoError("'" + file.string() + "' has a malformed PPM header");
  }
  if (maxval != 255 || w <= 0 || h <= 0) {
    throw IoError("'" + file.string() + "' must be an 8-bit PPM");
  }
  in.get();
  std::string raw(static_cast<std::size_t>(3 * h * w), '\0');
  in.read(raw.data(), static_cast<std::streamsize>(raw.size()));
  if (in.gcount() != static_cast<std::streamsize>(raw.size())) {
    throw IoError("'" + file.string() + "' is truncated");
  }
  Tensor<float> f({3, h, w});
  for (Index y = 0; y < h; ++y) {
    for (Index x = 0; x < w; ++x) {
      for (int c = 0; c < 3; ++c) {
        f(c, y, x) = to_unit(static_cast<unsigned char>(raw[(y * w + x) * 3 + c]));
      }
    }
  }
  return f;
}

void write_ppm(const Tensor<float>& frame, const fs::path& file) {
  const Index h = frame.height(), w = frame.width();
  std::string out = "P6\n" + std::to_string(w) + " " + std::to_string(h) + "\n255\n";
  for (Index y = 0; y < h; ++y) {
    for (Index x = 0; x < w; ++x) {
      for (int c = 0; c < 3; ++c) out.push_back(static_cast<char>(to_byte(frame(c, y, x))));
    }
  }
  write_file_atomic(file, out);
}

VideoClip load_frames(const std::string& path) {
  fs::path dir = path;
  std::string pattern = "*";
  if (!fs::is_directory(dir)) {
    pattern = dir.filename().string();
    dir = dir.has_parent_path() ? dir.parent_path() : fs::path(".");
  }
  if (!fs::is_directory(dir)) throw IoError("frame directory '" + dir.string() + "' not found");
  std::vector<std::pair<long, fs::path>> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    const std::string name = entry.path().filename().string();
    const std::string ext = entry.path().extension().string();
    if (!entry.is_regular_file() || (ext != ".rgb" && ext != ".ppm")) continue;
    if (!glob_match(pattern, name)) continue;
    files.emplace_back(frame_number(name), entry.path());
  }
  if (files.empty()) throw IoError("no .rgb or .ppm frames match '" + path + "'");
  std::sort(files.begin(), files.end());

  Index h = 0, w = 0;
  const bool any_rgb = std::any_of(files.begin(), files.end(),
                                   [](const auto& f) { return f.second.extension() == ".rgb"; });
  if (any_rgb) {
    const fs::path sidecar = dir / "dims.txt";
    if (!fs::exists(sidecar)) throw IoError("raw frames need '" + sidecar.string() + "'");
    const auto dims = parse_dims(trim(read_file(sidecar)), "dims.txt");
    if (dims.size() != 2) throw IoError("'" + sidecar.string() + "' must hold HxW");
    h = dims[0];
    w = dims[1];
  }
  VideoClip clip;
  clip.source = path;
  if (any_rgb) clip.files.push_back(dir / "dims.txt");
  for (std::size_t i = 0; i < files.size(); ++i) {
    const fs::path& f = files[i].second;
    Tensor<float> frame;
    try {
      frame = f.extension() == ".rgb" ? read_rgb(f, h, w) : read_ppm(f);
    } catch (const IoError& e) {
      throw IoError("frame " + std::to_string(i) + ": " + e.what());
    }
    if (!clip.frames.empty() && frame.shape != clip.frames[0].shape) {
      throw InputError("frame " + std::to_string(i) + " ('" + f.filename().string() +
                       "') has resolution " + to_string(frame.shape) + ", expected " +
                       to_string(clip.frames[0].shape));
    }
    if (frame.height() % 2 != 0 || frame.width() % 2 != 0) {
      throw InputError("frame " + std::to_string(i) + " has odd resolution " +
                       to_string(frame.shape) + "; pad it to even height and width");
    }
    clip.frames.push_back(std::move(frame));
    clip.files.push_back(f);
  }
  return clip;
}

void save_frames(const VideoClip& clip, const fs::path& dir, bool ppm) {
  fs::create_directories(dir);
  char name[32];
  for (std::size_t i = 0; i < clip.frames.size(); ++i) {
    const auto& f = clip.frames[i];
    std::snprintf(name, sizeof(name), "frame_%04zu.%s", i, ppm ? "ppm" : "rgb");
    if (ppm) {
      write_ppm(f, dir / name);
      continue;
    }
    std::string raw(static_cast<std::size_t>(f.size()), '\0');
    for (Index k = 0; k < f.size(); ++k) raw[k] = static_cast<char>(to_byte(f.data[k]));
    write_file_atomic(dir / name, raw);
  }
  if (!ppm && !clip.frames.empty()) {
    write_file_atomic(dir / "dims.txt", std::to_string(clip.height()) + "x" +
                                            std::to_string(clip.width()) + "\n");
  }
}

std::string serialize_checkpoint(const SnervModel<float>& model) {
  ByteWriter payload;
  payload.str32(model.config().to_text());
  const auto state = model.state();
  payload.u32(static_cast<std::uint32_t>(state.size()));
  for (const auto& [name, t] : state) {
    payload.str16(name);
    payload.u8(static_cast<std::uint8_t>(t.shape.size()));
    for (Index d : t.shape) payload.u32(static_cast<std::uint32_t>(d));
    for (Index i = 0; i < t.size(); ++i) payload.f32(t.data[i]);
  }
  const std::string& body = payload.buffer();
  ByteWriter out;
  out.bytes("SNRV");
  out.u16(kCheckpointVersion);
  out.u32(static_cast<std::uint32_t>(body.size()));
  out.bytes(body);
  out.u32(static_cast<std::uint32_t>(
      crc32(0L, reinterpret_cast<const Bytef*>(body.data()), static_cast<uInt>(body.size()))));
  return out.buffer();
}

std::unique_ptr<SnervModel<float>> deserialize_checkpoint(const std::string& bytes) {
  ByteReader in(bytes, "checkpoint");
  if (in.bytes(4) != "SNRV") throw CorruptionError("checkpoint: bad magic");
  const std::uint16_t version = in.u16();
  if (version != kCheckpointVersion) {
    throw VersionError("checkpoint version " + std::to_string(version) + " is not supported (" +
                       std::to_string(kCheckpointVersion) + " expected)");
  }
  const std::uint32_t size = in.u32();
  const std::string body = in.bytes(size);
  const std::uint32_t crc = in.u32();
  if (in.remaining() != 0) throw CorruptionError("checkpoint: trailing bytes");
  const auto actual = static_cast<std::uint32_t>(
      crc32(0L, reinterpret_cast<const Bytef*>(body.data()), static_cast<uInt>(body.size())));
  if (crc != actual) throw CorruptionError("checkpoint: checksum mismatch");

  ByteReader p(body, "checkpoint payload");
  const ModelConfig cfg = ModelConfig::from_text(p.str32());
  auto model = std::make_unique<SnervModel<float>>(cfg);
  const std::uint32_t count = p.u32();
  std::vector<std::pair<std::string, Tensor<float>>> state;
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string name = p.str16();
    Shape shape(p.u8());
    for (auto& d : shape) d = p.u32();
    Tensor<float> t(shape);
    for (Index k = 0; k < t.size(); ++k) t.data[k] = p.f32();
    state.emplace_back(std::move(name), std::move(t));
  }
  if (p.remaining() != 0) throw CorruptionError("checkpoint: payload has trailing bytes");
  try {
    model->set_state(state);
  } catch (const ConfigError& e) {
    throw CorruptionError(std::string("checkpoint tensors do not match config: ") + e.what());
  }
  return model;
}

void save_checkpoint(const SnervModel<float>& model, const fs::path& path) {
  write_file_atomic(path, serialize_checkpoint(model));
}

std::unique_ptr<SnervModel<float>> load_checkpoint(const fs::path& path) {
  return deserialize_checkpoint(read_file(path));
}

std::string sha1_hex(const std::string& contents) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(contents.data(), contents.size(), md, &len, EVP_sha1(), nullptr) != 1) {
    throw Error("SHA-1 digest failed");
  }
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(hex[md[i] >> 4]);
    out.push_back(hex[md[i] & 15]);
  }
  return out;
}

std::string git_blob_hash(const std::string& contents) {
  std::string obj = "blob " + std::to_string(contents.size());
  obj.push_back('\0');
  return sha1_hex(obj + contents);
}

}  // namespace snerv
