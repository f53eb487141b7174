#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "presslm/pressure.hpp"
#include "presslm/transformer.hpp"

namespace presslm {

struct EmbeddingConfig {
  std::size_t patch_size = 8;
  std::size_t embed_dim = 64;
  double noise_std = 0.05;
  std::size_t encoder_depth = 2;
  std::size_t encoder_heads = 4;
  std::size_t ff_multiplier = 4;
  Activation activation = Activation::gelu;
  double init_std = 0.02;
  double norm_eps = 1e-5;

  void validate() const;
};

/// Non-overlapping s x s tiles in row-major tile order, each flattened
/// row-major. Maps whose sides are not multiples of s are zero-padded on the
/// bottom/right.
struct PatchGrid {
  Tensor patches;  // [N x s*s]
  std::size_t patch_size = 0;
  std::size_t tile_rows = 0;
  std::size_t tile_cols = 0;
  std::size_t padded_height = 0;
  std::size_t padded_width = 0;

  std::size_t count() const { return tile_rows * tile_cols; }
};

PatchGrid patchify(const PressureMap& map, std::size_t patch_size);

/// Inverse tiling; returns the padded map the grid was cut from.
Tensor unpatchify(const PatchGrid& grid);

/// Training-time robustness noise: adds N(0, sigma^2) element-wise. Identity
/// when training is false or sigma is 0; output is not re-clamped to [0, 1].
PatchGrid perturb(const PatchGrid& grid, double sigma, bool training, CounterRng& rng);

/// Patch projection + learnable positional table + small pre-norm
/// transformer stack.
class SensorEncoder {
 public:
  SensorEncoder() = default;
  SensorEncoder(EmbeddingConfig cfg, std::size_t grid_rows, std::size_t grid_cols,
                std::uint64_t seed);

  const EmbeddingConfig& config() const { return cfg_; }
  std::size_t token_count() const { return token_count_; }

  /// Tokens = patches . W_patch + bias + E_pos, then the encoder stack.
  /// Output is [N x d] on the caller's tape.
  Value encode(Tape& tape, const PatchGrid& grid);

  /// Pre-encoder tokens (projection + positional rows); exposed for tests of
  /// the positional-encoding contract.
  Value project_tokens(Tape& tape, const PatchGrid& grid);

  std::vector<std::pair<std::string, Parameter*>> named_params();

  Parameter& positional_table() { return pos_; }

 private:
  EmbeddingConfig cfg_;
  std::size_t token_count_ = 0;
  Parameter patch_proj_;  // [s*s x d]; tokens = patches . W
  Parameter patch_bias_;  // [d]
  Parameter pos_;         // [N x d]
  std::vector<TransformerBlockWeights> blocks_;
};

}  // namespace presslm
