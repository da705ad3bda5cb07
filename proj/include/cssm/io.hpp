// Copyright 2026 The cssmamba Authors
// SPDX-License-Identifier: Apache-2.0
//
// File formats:
//
//   HSIB v1 container (all integers little-endian)
//     0   "HSIB"
//     4   u16 version = 1
//     6   u32 height, u32 width, u32 bands
//     18  u16 num_classes
//     20  16 reserved bytes (zero)
//     36  bands*height*width f32, band-major
//         height*width u16 labels, 0 = unlabeled
//         num_classes x (u32 byte length, UTF-8 name)
//
//   Classification maps: binary PPM (P6) and PGM (P5), maxval 255.
//
//   Checkpoint: "CSMK", u32 version, u64 payload length, payload, u32 CRC-32
//   of the payload.

#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "cssm/data.hpp"
#include "cssm/train.hpp"

namespace cssm {

struct FormatError : std::runtime_error {
  FormatError(const std::string& what, std::uint64_t offset)
      : std::runtime_error(what + " (at byte " + std::to_string(offset) + ")"), offset(offset) {}
  std::uint64_t offset;
};

// Writes through a temporary sibling file and renames it into place.
void write_file_atomic(const std::filesystem::path& path, std::string_view bytes);
std::string read_file(const std::filesystem::path& path);

// ---- container ---------------------------------------------------------------

inline constexpr std::uint16_t kContainerVersion = 1;
inline constexpr std::size_t kContainerHeaderSize = 36;

std::string encode_container(const Dataset& data);
Dataset decode_container(std::string_view bytes);

void save_container(const std::filesystem::path& path, const Dataset& data);
// Raw values exactly as stored.
Dataset read_container(const std::filesystem::path& path);
// read_container followed by normalize_bands.
Dataset load_container(const std::filesystem::path& path);

// Per-band min-max scaling to [0, 1]; constant bands become 0.
void normalize_bands(HsiCube& cube);

// ---- maps ----------------------------------------------------------------------

using Rgb = std::array<std::uint8_t, 3>;
// Entry 0 is black (unlabeled); entries 1..16 are class colors.
std::vector<Rgb> default_palette();

// classes: raster order, 0 = unlabeled. Throws if a class has no color.
std::string encode_ppm(std::span<const int> classes, std::size_t height, std::size_t width,
                       const std::vector<Rgb>& palette);
std::string encode_pgm(std::span<const int> values, std::size_t height, std::size_t width);

struct GrayImage {
  std::size_t height = 0, width = 0;
  std::vector<int> values;
};
GrayImage decode_pgm(std::string_view bytes);

// ---- run configuration -----------------------------------------------------------

struct RunConfig {
  std::string container;
  std::string out_dir = "out";
  ModelConfig model;  // bands / num_classes come from the container
  TrainConfig train;
};

// key = value lines, '#' starts a comment. Unknown keys and malformed values
// throw ConfigError naming the line.
RunConfig parse_run_config(std::string_view text);
RunConfig load_run_config(const std::filesystem::path& path);
std::string format_run_config(const RunConfig& cfg);

// ---- checkpoint ------------------------------------------------------------------

inline constexpr std::uint32_t kCheckpointVersion = 1;

std::string encode_checkpoint(const Trainer& trainer);
// The returned trainer references `data`, which must outlive it.
std::unique_ptr<Trainer> decode_checkpoint(std::string_view bytes, const Dataset& data);

void save_checkpoint(const std::filesystem::path& path, const Trainer& trainer);
std::unique_ptr<Trainer> load_checkpoint(const std::filesystem::path& path, const Dataset& data);

// ---- synthetic data --------------------------------------------------------------

struct SynthConfig {
  std::size_t height = 24, width = 24, bands = 8, classes = 4;
  std::size_t block = 6;  // side of the square class tiles
  double noise = 0.05;    // per-band Gaussian noise sigma
  double gain = 0.6;      // per-pixel illumination gain drawn from [1 - gain, 1 + gain]
  std::uint64_t seed = 0;
};

// Square tiles laid out as a Latin square so every class covers the same
// area. Each class has a bell-shaped mean spectrum centered on its own band
// range; each pixel scales it by a random illumination gain and adds i.i.d.
// Gaussian noise.
Dataset generate_synthetic(const SynthConfig& cfg);

}  // namespace cssm
