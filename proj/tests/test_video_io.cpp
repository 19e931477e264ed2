// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "oracles.hpp"
#include "snerv/video_io.hpp"

using namespace snerv;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("snerv_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

ModelConfig tiny_config() {
  ModelConfig c = desk_config();
  c.height = 32;
  c.width = 64;
  c.embed_h = 1;
  c.embed_w = 2;
  c.c0 = 12;
  c.n_rb = 1;
  return c;
}

}  // namespace

TEST_CASE("checkpoint round trip is bitwise") {
  for (bool temporal : {false, true}) {
    ModelConfig c = tiny_config();
    c.temporal = temporal;
    c.temporal_h = 4;
    c.temporal_w = 8;
    c.seed = 3;
    SnervModel<float> m(c);
    const std::string bytes = serialize_checkpoint(m);
    const auto back = deserialize_checkpoint(bytes);
    CHECK(back->config() == m.config());
    CHECK(parameter_hash(back->params()) == parameter_hash(m.params()));
    CHECK(serialize_checkpoint(*back) == bytes);

    const fs::path dir = scratch("ckpt");
    save_checkpoint(m, dir / "m.snrv");
    CHECK(read_file(dir / "m.snrv") == bytes);
    CHECK(parameter_hash(load_checkpoint(dir / "m.snrv")->params()) == parameter_hash(m.params()));
  }
}

TEST_CASE("damaged checkpoints are rejected") {
  SnervModel<float> m(tiny_config());
  const std::string bytes = serialize_checkpoint(m);
  CHECK_THROWS_AS(deserialize_checkpoint(bytes.substr(0, bytes.size() / 2)), CorruptionError);
  CHECK_THROWS_AS(deserialize_checkpoint(bytes.substr(0, 5)), CorruptionError);
  std::string flipped = bytes;
  flipped[bytes.size() / 2] ^= 0x10;
  CHECK_THROWS_AS(deserialize_checkpoint(flipped), CorruptionError);
  std::string magic = bytes;
  magic[0] = 'X';
  CHECK_THROWS_AS(deserialize_checkpoint(magic), CorruptionError);
  std::string version = bytes;
  version[4] = static_cast<char>(kCheckpointVersion + 1);
  CHECK_THROWS_AS(deserialize_checkpoint(version), VersionError);
  CHECK_THROWS_AS(load_checkpoint(scratch("missing") / "none.snrv"), IoError);
}

TEST_CASE("frame files round trip") {
  SynthParams p;
  p.height = 16;
  p.width = 24;
  p.frames = 3;
  const VideoClip clip = synth_video(p);
  for (bool ppm : {false, true}) {
    const fs::path dir = scratch(ppm ? "ppm" : "rgb");
    save_frames(clip, dir, ppm);
    const VideoClip back = load_frames(dir.string());
    REQUIRE(back.count() == 3);
    CHECK(back.height() == 16);
    CHECK(back.width() == 24);
    for (Index t = 0; t < 3; ++t) {
      CHECK((back.frames[t].data - clip.frames[t].data).cwiseAbs().maxCoeff() <= 0.5f / 255 + 1e-6f);
    }
    CHECK(back.files.size() == (ppm ? 3u : 4u));
  }

  Tensor<float> white = Tensor<float>::constant({3, 2, 2}, 1.0f);
  white(0, 0, 0) = 0.0f;
  const fs::path dir = scratch("white");
  write_ppm(white, dir / "f.ppm");
  const auto w = read_ppm(dir / "f.ppm");
  CHECK(w(1, 1, 1) == 1.0f);
  CHECK(w(0, 0, 0) == 0.0f);
}

TEST_CASE("frame loading errors") {
  const fs::path dir = scratch("mixed");
  write_ppm(Tensor<float>::constant({3, 4, 4}, 0.5f), dir / "frame_0000.ppm");
  write_ppm(Tensor<float>::constant({3, 4, 6}, 0.5f), dir / "frame_0001.ppm");
  CHECK_THROWS_AS(load_frames(dir.string()), InputError);

  const fs::path odd = scratch("odd");
  write_ppm(Tensor<float>::constant({3, 5, 4}, 0.5f), odd / "frame_0000.ppm");
  CHECK_THROWS_AS(load_frames(odd.string()), InputError);

  CHECK_THROWS_AS(load_frames(scratch("empty").string()), IoError);
  CHECK_THROWS_AS(load_frames((scratch("gone") / "nothing").string()), IoError);

  const fs::path bad = scratch("bad");
  std::ofstream(bad / "frame_0000.ppm") << "P6\n4 4\n255\nxx";
  CHECK_THROWS(load_frames(bad.string()));
}

TEST_CASE("frames are ordered by their last number") {
  const fs::path dir = scratch("order");
  for (int i : {10, 2, 1}) {
    write_ppm(Tensor<float>::constant({3, 2, 2}, static_cast<float>(i) / 255), dir / ("f" + std::to_string(i) + ".ppm"));
  }
  const VideoClip c = load_frames(dir.string());
  REQUIRE(c.count() == 3);
  CHECK(c.frames[0](0, 0, 0) == doctest::Approx(1.0 / 255));
  CHECK(c.frames[1](0, 0, 0) == doctest::Approx(2.0 / 255));
  CHECK(c.frames[2](0, 0, 0) == doctest::Approx(10.0 / 255));
}

TEST_CASE("synthetic clips") {
  SynthParams p;
  p.frames = 6;
  const VideoClip a = synth_video(p);
  const VideoClip b = synth_video(p);
  CHECK(a.count() == 6);
  CHECK(a.height() == 64);
  CHECK(a.width() == 128);
  for (Index t = 0; t < 6; ++t) {
    CHECK(a.frames[t].data == b.frames[t].data);
    CHECK(a.frames[t].data.minCoeff() >= 0.0f);
    CHECK(a.frames[t].data.maxCoeff() <= 1.0f);
  }

  SynthParams textured = p;
  textured.kind = SynthKind::kTextured;
  const double smooth_hf = hf_energy_fraction(a.frames);
  CHECK(hf_energy_fraction(synth_video(textured).frames) >= 3 * smooth_hf);
  textured.hf_amplitude = 0;
  const VideoClip flat = synth_video(textured);
  for (Index t = 0; t < 6; ++t) CHECK(flat.frames[t].data == a.frames[t].data);

  SynthParams moving = p;
  moving.kind = SynthKind::kMoving;
  moving.velocity = 0;
  const VideoClip still = synth_video(moving);
  for (Index t = 1; t < 6; ++t) CHECK(still.frames[t].data == still.frames[0].data);
  moving.velocity = 2;
  const VideoClip moved = synth_video(moving);
  CHECK(moved.frames[1].data != moved.frames[0].data);

  SynthParams other = p;
  other.seed = 1;
  CHECK(synth_video(other).frames[0].data != a.frames[0].data);
}

TEST_CASE("hashing helpers") {
  CHECK(sha1_hex("abc") == "a9993e364706816aba3e25717850c26c9cd0d89d");
  // git hash-object of an empty file
  CHECK(git_blob_hash("") == "e69de29bb2d1d6434b8b29ae775ad8c2e48c5391");
  const fs::path dir = scratch("atomic");
  write_file_atomic(dir / "x.txt", "one");
  write_file_atomic(dir / "x.txt", "two");
  CHECK(read_file(dir / "x.txt") == "two");
  CHECK(std::distance(fs::directory_iterator(dir), fs::directory_iterator()) == 1);
}
