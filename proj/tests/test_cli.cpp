// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "snerv/cli.hpp"
#include "snerv/compression.hpp"
#include "snerv/experiments.hpp"
#include "snerv/video_io.hpp"

using namespace snerv;
namespace fs = std::filesystem;

namespace {

struct Result {
  int code = 0;
  std::string out, err;
};

Result run(std::vector<std::string> args) {
  args.insert(args.begin(), "snerv");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  Result r;
  r.code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("snerv_cli_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

const std::vector<std::string> kTiny{"--resolution", "32x64", "--c0", "12", "--embed", "16x1x2",
                                     "--n-rb", "1"};

std::vector<std::string> with_tiny(std::vector<std::string> args) {
  args.insert(args.end(), kTiny.begin(), kTiny.end());
  return args;
}

}  // namespace

TEST_CASE("usage and configuration errors") {
  CHECK(run({}).code == kExitUsage);
  CHECK(run({"--help"}).code == kExitOk);
  const Result unknown = run({"train", "--bogus", "1"});
  CHECK(unknown.code == kExitUsage);
  CHECK(unknown.err.find("--epochs") != std::string::npos);  // help text follows the error

  const fs::path dir = scratch("config");
  std::ofstream(dir / "bad.cfg") << "[model]\nc0=32\n[train]\nepoch=5\n";
  const Result bad_key = run({"info", "--config", (dir / "bad.cfg").string(), "--out", (dir / "o").string()});
  CHECK(bad_key.code == kExitConfig);
  CHECK(bad_key.err.find("train.epoch") != std::string::npos);

  std::ofstream(dir / "bad_section.cfg") << "[modle]\nc0=32\n";
  CHECK(run({"info", "--config", (dir / "bad_section.cfg").string(), "--out", (dir / "o").string()}).code ==
        kExitConfig);

  const Result bad_value = run({"info", "--strides", "2,2,2", "--out", (dir / "o").string()});
  CHECK(bad_value.code == kExitConfig);
  CHECK(bad_value.err.find("strides") != std::string::npos);

  CHECK(run({"eval", "--checkpoint", (dir / "none.snrv").string(), "--out", (dir / "o").string()}).code ==
        kExitInput);
}

TEST_CASE("flags override the config file") {
  const fs::path dir = scratch("override");
  std::ofstream(dir / "a.cfg") << "[gen]\nframes=3\nkind=textured\n";
  const Result r = run({"gen", "--config", (dir / "a.cfg").string(), "--frames", "5", "--resolution",
                        "16x32", "--out", (dir / "clip").string()});
  REQUIRE(r.code == kExitOk);
  const VideoClip clip = load_frames((dir / "clip").string());
  CHECK(clip.count() == 5);
  CHECK(clip.height() == 16);
  const auto manifest = nlohmann::json::parse(read_file(dir / "clip" / "manifest.json"));
  CHECK(manifest["command"] == "gen");
  CHECK(manifest["config"].get<std::string>().find("kind=textured") != std::string::npos);
  CHECK(manifest["synthetic_input"]["kind"] == "textured");
  CHECK(manifest["synthetic_input"]["frames"] == 5);
}

TEST_CASE("train, eval, compress and curves share one checkpoint") {
  const fs::path dir = scratch("pipeline");
  const std::string clip = (dir / "clip").string();
  REQUIRE(run({"gen", "--resolution", "32x64", "--frames", "6", "--out", clip}).code == kExitOk);

  const std::string out = (dir / "train").string();
  const Result t = run(with_tiny({"train", "--input", clip, "--epochs", "3", "--task", "interpolation",
                                  "--out", out}));
  REQUIRE(t.code == kExitOk);
  CHECK(t.out.find("held-out (even) frames only") != std::string::npos);
  const MetricsTable m = parse_metrics_csv(read_file(fs::path(out) / "metrics.csv"));
  REQUIRE(m.frames.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) CHECK(m.frames[i].index == static_cast<Index>(2 * i));
  CHECK(parse_curve_csv(read_file(fs::path(out) / "model.snrv.curves.csv")).size() == 3);

  const auto manifest = nlohmann::json::parse(read_file(fs::path(out) / "manifest.json"));
  CHECK(manifest["seed"] == 0);
  CHECK(manifest["config_sha1"].get<std::string>().size() == 40);
  REQUIRE(manifest["inputs"].size() == 7);  // dims.txt + six frames
  const auto first = manifest["inputs"][1];
  CHECK(first["git_blob"] == git_blob_hash(read_file(first["path"].get<std::string>())));
  CHECK(sha1_hex(manifest["config"].get<std::string>()) == manifest["config_sha1"]);

  // a second identical run reproduces every output byte
  const std::string again = (dir / "again").string();
  REQUIRE(run(with_tiny({"train", "--input", clip, "--epochs", "3", "--task", "interpolation",
                         "--out", again})).code == kExitOk);
  for (const char* f : {"model.snrv", "model.snrv.curves.csv", "metrics.csv", "frequency_curves.csv"}) {
    CHECK(read_file(fs::path(out) / f) == read_file(fs::path(again) / f));
  }

  const std::string ckpt = (fs::path(out) / "model.snrv").string();
  const Result e = run({"eval", "--checkpoint", ckpt, "--input", clip, "--task", "interpolation",
                        "--out", (dir / "eval").string()});
  REQUIRE(e.code == kExitOk);
  CHECK(read_file(dir / "eval" / "metrics.csv") == read_file(fs::path(out) / "metrics.csv"));

  const Result c = run({"compress", "--checkpoint", ckpt, "--input", clip, "--out", (dir / "comp").string()});
  REQUIRE(c.code == kExitOk);
  CHECK(fs::exists(dir / "comp" / "model.snvc"));
  CHECK(deserialize_compressed(read_file(dir / "comp" / "model.snvc")).frames == 6);

  const Result k = run({"curves", ckpt, (fs::path(again) / "model.snrv").string(), "--out",
                        (dir / "curves").string()});
  REQUIRE(k.code == kExitOk);
  const std::string csv = read_file(dir / "curves" / "curves.csv");
  CHECK(csv.rfind("checkpoint,epoch,ll_psnr,hf_psnr\n", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 1 + 2 * 3);
}

TEST_CASE("info on the 640x1280 configuration") {
  const fs::path dir = scratch("info");
  const Result r = run({"info", "--preset", "paper640", "--out", dir.string()});
  REQUIRE(r.code == kExitOk);
  const std::string key = "decoder parameters ";
  const auto at = r.out.find(key);
  REQUIRE(at != std::string::npos);
  const double count = std::stod(r.out.substr(at + key.size()));
  CHECK(std::abs(count - 3.0e6) <= 0.15 * 3.0e6);
  CHECK(fs::exists(dir / "bpp.csv"));
}
