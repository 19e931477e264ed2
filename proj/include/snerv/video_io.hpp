// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "snerv/model.hpp"
#include "snerv/trainer.hpp"

namespace snerv {

struct VideoClip {
  Frames frames;  // [3,H,W] in [0,1]
  double fps = 30.0;
  std::string source;
  std::vector<std::filesystem::path> files;  // files read by load_frames, in order

  Index height() const { return frames.empty() ? 0 : frames[0].height(); }
  Index width() const { return frames.empty() ? 0 : frames[0].width(); }
  Index count() const { return static_cast<Index>(frames.size()); }
};

enum class SynthKind { kSmooth, kTextured, kMoving };

std::string to_string(SynthKind kind);
SynthKind parse_synth_kind(const std::string& text);

struct SynthParams {
  SynthKind kind = SynthKind::kSmooth;
  Index height = 64;
  Index width = 128;
  Index frames = 12;
  std::uint64_t seed = 0;
  double hf_amplitude = 0.3;
  double velocity = 2.0;  // px/frame, horizontal; vertical drift is half of it
};

/// Deterministic synthetic clip. smooth: drifting Gaussian blobs. textured:
/// smooth plus high-frequency gratings. moving: the frame-0 textured pattern
/// translated by velocity * t with wraparound.
VideoClip synth_video(const SynthParams& params);

/// Fraction of one-level Haar energy in the three detail bands, over a clip.
double hf_energy_fraction(const Frames& frames);

/// Loads every `.rgb` (with `dims.txt` alongside holding `HxW`) or `.ppm`
/// frame. `path` is a directory or a directory/prefix*suffix pattern. Frames
/// are ordered by the last integer in the file name.
VideoClip load_frames(const std::string& path);

/// Writes frame_0000.rgb... plus dims.txt (or frame_0000.ppm... when `ppm`).
void save_frames(const VideoClip& clip, const std::filesystem::path& dir, bool ppm = false);

Tensor<float> read_ppm(const std::filesystem::path& file);
void write_ppm(const Tensor<float>& frame, const std::filesystem::path& file);

/// Checkpoint layout: "SNRV", u16 version, u32 payload size, payload, u32 CRC-32
/// of the payload. Payload: config text, then (name, dims, f32 data) records.
inline constexpr std::uint16_t kCheckpointVersion = 1;

std::string serialize_checkpoint(const SnervModel<float>& model);
std::unique_ptr<SnervModel<float>> deserialize_checkpoint(const std::string& bytes);
void save_checkpoint(const SnervModel<float>& model, const std::filesystem::path& path);
std::unique_ptr<SnervModel<float>> load_checkpoint(const std::filesystem::path& path);

std::string read_file(const std::filesystem::path& path);
/// Writes to a temporary sibling and renames it into place.
void write_file_atomic(const std::filesystem::path& path, const std::string& contents);

/// Hex SHA-1 of "blob <size>\0" + contents (the git object id).
std::string git_blob_hash(const std::string& contents);
std::string sha1_hex(const std::string& contents);

}  // namespace snerv
