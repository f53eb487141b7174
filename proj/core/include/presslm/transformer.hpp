#pragma once

#include <string>
#include <vector>

#include "presslm/autograd.hpp"

namespace presslm {

enum class Activation { gelu, relu };

/// Low-rank adapter for a frozen [out x in] weight: effective weight is
/// base + (alpha/rank) * B * A, with A Gaussian-initialized and B zero so the
/// adapted layer starts exactly at the base layer.
struct LoraAdapter {
  Parameter a;  // [rank x in]
  Parameter b;  // [out x rank]
  std::size_t rank = 0;
  double alpha = 0.0;

  double scaling() const { return alpha / static_cast<double>(rank); }

  static LoraAdapter init(std::size_t in, std::size_t out, std::size_t rank, double alpha,
                          double init_std, CounterRng& rng);
};

/// y = x . W^T for W stored [out x in] (optionally plus bias over rows).
Value linear(const Value& x, Parameter& w);
Value linear(const Value& x, Parameter& w, Parameter& bias);

/// x . baseW^T + (alpha/r) . x . A^T . B^T  ==  x . (baseW + (alpha/r) B A)^T
Value lora_forward(const Value& x, Parameter& base_w, LoraAdapter& adapter);

struct NormWeights {
  Parameter gain;  // [d], ones
  Parameter bias;  // [d], zeros
  static NormWeights init(std::size_t d);
};

struct AttentionWeights {
  Parameter wq, wk, wv, wo;  // each [d x d], stored [out x in]
  static AttentionWeights init(std::size_t d, double init_std, CounterRng& rng);
};

struct FeedForwardWeights {
  Parameter w1;  // [ff x d]
  Parameter b1;  // [ff]
  Parameter w2;  // [d x ff]
  Parameter b2;  // [d]
  static FeedForwardWeights init(std::size_t d, std::size_t ff, double init_std, CounterRng& rng);
};

/// Pre-norm block: x + Attn(LN1(x)), then x + FF(LN2(x)).
struct TransformerBlockWeights {
  NormWeights norm1;
  AttentionWeights attn;
  NormWeights norm2;
  FeedForwardWeights ff;
  static TransformerBlockWeights init(std::size_t d, std::size_t ff_mult, double init_std,
                                      CounterRng& rng);

  void register_params(const std::string& prefix,
                       std::vector<std::pair<std::string, Parameter*>>& out);
};

struct BlockLora {
  LoraAdapter q;
  LoraAdapter v;
};

/// Multi-head self-attention + feed-forward, pre-norm residual wiring.
/// Causal masking zeroes attention above the diagonal. When `lora` is given,
/// its adapters apply to the Q and V projections.
Value transformer_block(const Value& x, TransformerBlockWeights& w, std::size_t heads,
                        bool causal, Activation act, double norm_eps, BlockLora* lora);

/// Multi-head scaled-dot attention over explicit q/k/v inputs. `scale_dim`
/// is the dimension under the square root. Softmax weights per head are
/// appended to *attn_out when it is non-null.
Value multihead_attention(const Value& q_in, const Value& k_in, const Value& v_in,
                          std::size_t heads, double scale_dim, bool causal,
                          std::vector<Tensor>* attn_out);

const char* activation_name(Activation a);
Activation activation_from_name(const std::string& name);

}  // namespace presslm
