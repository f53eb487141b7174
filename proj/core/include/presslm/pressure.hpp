#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "presslm/tensor.hpp"

namespace presslm {

/// Physical layout of the seat mat: grid size, sensel pitch, sampling
/// interval, and the raw value range used for min-max normalization at load.
struct SensorGeometry {
  std::size_t rows = 32;
  std::size_t cols = 32;
  double spacing_mm = 10.0;
  double sampling_interval_ms = 100.0;
  double value_min = 0.0;
  double value_max = 1023.0;

  void validate() const;

  static SensorGeometry load_json(const std::string& path);
  void save_json(const std::string& path) const;
};

/// H x W grid of normalized pressure readings in [0, 1].
struct PressureMap {
  std::size_t height = 0;
  std::size_t width = 0;
  Tensor values;  // shape {H, W}

  double at(std::size_t r, std::size_t c) const { return values[r * width + c]; }
  double& at(std::size_t r, std::size_t c) { return values[r * width + c]; }
};

struct PressureStats {
  double max = 0.0;
  double min = 0.0;
  double mean = 0.0;
  double variance = 0.0;  // population variance
};

/// One Gaussian contact blob of a synthetic posture.
struct PostureBlob {
  double center_row = 0.0;  // cell units
  double center_col = 0.0;
  double amplitude = 0.0;  // [0, 1]
  double radial_std = 1.0;  // cells; 0 means a single-cell delta
};

/// Stand-in for collected human postures: a labeled sum of contact blobs
/// plus a uniform noise floor.
struct SyntheticPostureSpec {
  std::string posture_label;
  std::vector<PostureBlob> blobs;
  double noise_floor = 0.0;
};

enum class PressureFormat { csv, binary };

/// Parses a raw map from `in` and min-max normalizes it against
/// geometry.value_range. Raw values above value_max clamp to 1 (saturated
/// sensel); raws below value_min are a parse error.
PressureMap load_pressure_map(std::istream& in, PressureFormat format,
                              const SensorGeometry& geometry);
PressureMap load_pressure_map_file(const std::string& path, const SensorGeometry& geometry);

/// Writes raw (denormalized) values in the requested format.
void save_pressure_map(const PressureMap& map, std::ostream& out, PressureFormat format,
                       const SensorGeometry& geometry);
void save_pressure_map_file(const PressureMap& map, const std::string& path,
                            const SensorGeometry& geometry);

PressureStats compute_stats(const PressureMap& map);

/// Deterministic synthesis: sum of isotropic Gaussian bumps plus uniform
/// noise in [0, noise_floor), clamped to [0, 1]. Blobs are accumulated in a
/// canonical sort order so the output is invariant under blob-list
/// permutation.
PressureMap synth_posture(const SyntheticPostureSpec& spec, const SensorGeometry& geometry,
                          std::uint64_t seed);

/// Deterministic natural-language description of a map: dominant quadrants
/// ranked by summed pressure plus the left/right half pressure ratio.
std::string template_annotation(const PressureMap& map, const SyntheticPostureSpec& spec,
                                const PressureStats& stats);

/// Left/right half pressure sums; exposed for the annotation oracle.
std::pair<double, double> half_pressure_sums(const PressureMap& map);

/// Draws a random posture spec (1-3 blobs, varied lean) for corpus synthesis.
SyntheticPostureSpec random_posture_spec(const SensorGeometry& geometry, CounterRng& rng);

}  // namespace presslm
