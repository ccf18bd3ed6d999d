/* Copyright 2026 The hbnet Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "hbnet/bench.hpp"
#include "hbnet/complexity.hpp"
#include "hbnet/descriptor.hpp"
#include "hbnet/hbds.hpp"
#include "hbnet/vpr.hpp"

namespace hbnet {

// ---------------------------------------------------------------------------
// Network specs (JSON)
// ---------------------------------------------------------------------------

/// {"input": [h, w, c], "layers": [{"type": "hbds", ...}, ...], "tap": i}
std::string spec_to_json(const NetworkSpec& spec);
/// Throws FormatError on malformed documents and ShapeError on bad geometry.
NetworkSpec spec_from_json(const std::string& text);
NetworkSpec load_spec_file(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Weight files
// ---------------------------------------------------------------------------

inline constexpr char kWeightMagic[4] = {'H', 'B', 'D', 'S'};
inline constexpr std::uint32_t kWeightVersion = 1;

/// Serializes spec and weights. Layout (all integers little-endian):
///   0  "HBDS"            4 bytes
///   4  version           u32
///   8  payload length    u64
///   16 payload CRC-32    u32
///   20 reserved (0)      u32
///   24 payload:
///        u32 spec length, spec JSON bytes
///        u32 record count
///        per record: u32 kind tag, u32 layer index, u32 float blobs, u32 bit blobs,
///          float blob: u64 count, count x f32
///          bit blob:   u32 h, u32 w, u32 c, u64 valid bits per pixel, u64 words, words x u64
std::vector<std::uint8_t> save_weights(const Network& net);

/// Throws FormatError (bad magic / structure), VersionError, ChecksumError
/// (length or CRC mismatch, truncation) or ShapeError (records vs spec).
Network load_weights(std::span<const std::uint8_t> bytes);

void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> read_file(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Descriptor files
// ---------------------------------------------------------------------------

/// "HBDD", u32 version, u64 count, u64 dim, then per descriptor
/// u32 id length, id bytes, dim x f32 (little-endian).
std::vector<std::uint8_t> save_descriptors(std::span<const Descriptor> descriptors);
std::vector<Descriptor> load_descriptors(std::span<const std::uint8_t> bytes);

// ---------------------------------------------------------------------------
// Images and dataset manifests
// ---------------------------------------------------------------------------

struct Preprocess {
  int height = 227;
  int width = 227;
  /// Applied to 8-bit pixel values first.
  float scale = 1.0f / 255.0f;
  /// Optional per-channel (RGB) normalization after scaling.
  std::vector<float> mean;
  std::vector<float> stddev;
};

/// Decodes PNG/JPEG, replicates grayscale to RGB, resizes and scales.
/// Throws IoError for unreadable files.
FloatTensor load_image(const std::filesystem::path& path, const Preprocess& pre);

/// Applies the scale/mean/std part of Preprocess to an already-sized 8-bit RGB buffer.
FloatTensor preprocess_rgb(std::span<const std::uint8_t> rgb, int height, int width,
                           const Preprocess& pre);

enum class TruthMode { kTolerance, kPairs };

struct DatasetManifest {
  std::string name = "dataset";
  std::vector<std::filesystem::path> references;
  std::vector<std::filesystem::path> queries;
  TruthMode truth_mode = TruthMode::kTolerance;
  int tolerance = 0;
  /// Tolerance mode: reference frame aligned with each query (identity if empty).
  std::vector<int> alignment;
  /// Pairs mode: correct reference indices for each query.
  std::vector<std::vector<int>> pairs;
  Preprocess preprocess;

  GroundTruth ground_truth() const;
};

/// Parses a manifest; relative image paths resolve against `base_dir`.
///
/// {"name": "...", "references": [...], "queries": [...],
///  "ground_truth": {"mode": "tolerance", "frames": 2, "alignment": [...]}
///               | {"mode": "pairs", "pairs": [[0, 1], [2], ...]},
///  "preprocess": {"height": 227, "width": 227, "scale": 0.00392,
///                 "mean": [...], "std": [...]}}
DatasetManifest parse_manifest(const std::string& text, const std::filesystem::path& base_dir);
DatasetManifest load_manifest(const std::filesystem::path& path);
std::string manifest_to_json(const DatasetManifest& m);

/// Decodes every image; ids are the manifest paths as written.
PlaceDataset<FloatTensor> load_dataset(const DatasetManifest& manifest);

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

enum class OutputFormat { kCsv, kJson };

std::string format_complexity(const ComplexityReport& r, OutputFormat fmt);
std::string format_matches(std::span<const MatchResult> results,
                           std::span<const std::string> query_ids,
                           std::span<const std::string> reference_ids, OutputFormat fmt);
std::string format_metrics(const MetricsReport& m, OutputFormat fmt);
std::string format_bench(const BenchReport& r, OutputFormat fmt);
std::string format_sweep(std::span<const SweepRow> rows, OutputFormat fmt);

}  // namespace hbnet
