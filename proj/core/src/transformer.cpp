#include "presslm/transformer.hpp"

#include <cmath>

#include "presslm/errors.hpp"

namespace presslm {

namespace {
// Large negative score; exp() underflows to exactly zero after the softmax
// max-shift, which keeps causality exact.
constexpr double kMaskValue = -1e30;
}  // namespace

LoraAdapter LoraAdapter::init(std::size_t in, std::size_t out, std::size_t rank, double alpha,
                              double init_std, CounterRng& rng) {
  if (rank == 0 || rank > std::min(in, out)) {
    throw ConfigError("lora: rank " + std::to_string(rank) + " invalid for " +
                      std::to_string(out) + "x" + std::to_string(in) + " layer");
  }
  LoraAdapter ad;
  ad.rank = rank;
  ad.alpha = alpha;
  ad.a = Parameter(Tensor::gaussian({rank, in}, init_std, rng));
  ad.b = Parameter(Tensor::zeros({out, rank}));
  return ad;
}

Value linear(const Value& x, Parameter& w) {
  Tape& t = *x.tape();
  return matmul(x, transpose(t.watch(w)));
}

Value linear(const Value& x, Parameter& w, Parameter& bias) {
  Tape& t = *x.tape();
  return add_row_broadcast(linear(x, w), t.watch(bias));
}

Value lora_forward(const Value& x, Parameter& base_w, LoraAdapter& adapter) {
  Tape& t = *x.tape();
  const Value base = matmul(x, transpose(t.watch(base_w)));
  const Value down = matmul(x, transpose(t.watch(adapter.a)));      // [T x r]
  const Value up = matmul(down, transpose(t.watch(adapter.b)));     // [T x out]
  return add(base, scale(up, adapter.scaling()));
}

NormWeights NormWeights::init(std::size_t d) {
  NormWeights n;
  n.gain = Parameter(Tensor::full({d}, 1.0));
  n.bias = Parameter(Tensor::zeros({d}));
  return n;
}

AttentionWeights AttentionWeights::init(std::size_t d, double init_std, CounterRng& rng) {
  AttentionWeights w;
  w.wq = Parameter(Tensor::gaussian({d, d}, init_std, rng));
  w.wk = Parameter(Tensor::gaussian({d, d}, init_std, rng));
  w.wv = Parameter(Tensor::gaussian({d, d}, init_std, rng));
  w.wo = Parameter(Tensor::gaussian({d, d}, init_std, rng));
  return w;
}

FeedForwardWeights FeedForwardWeights::init(std::size_t d, std::size_t ff, double init_std,
                                            CounterRng& rng) {
  FeedForwardWeights w;
  w.w1 = Parameter(Tensor::gaussian({ff, d}, init_std, rng));
  w.b1 = Parameter(Tensor::zeros({ff}));
  w.w2 = Parameter(Tensor::gaussian({d, ff}, init_std, rng));
  w.b2 = Parameter(Tensor::zeros({d}));
  return w;
}

TransformerBlockWeights TransformerBlockWeights::init(std::size_t d, std::size_t ff_mult,
                                                      double init_std, CounterRng& rng) {
  TransformerBlockWeights w;
  w.norm1 = NormWeights::init(d);
  w.attn = AttentionWeights::init(d, init_std, rng);
  w.norm2 = NormWeights::init(d);
  w.ff = FeedForwardWeights::init(d, d * ff_mult, init_std, rng);
  return w;
}

void TransformerBlockWeights::register_params(
    const std::string& prefix, std::vector<std::pair<std::string, Parameter*>>& out) {
  out.emplace_back(prefix + ".norm1.gain", &norm1.gain);
  out.emplace_back(prefix + ".norm1.bias", &norm1.bias);
  out.emplace_back(prefix + ".attn.wq", &attn.wq);
  out.emplace_back(prefix + ".attn.wk", &attn.wk);
  out.emplace_back(prefix + ".attn.wv", &attn.wv);
  out.emplace_back(prefix + ".attn.wo", &attn.wo);
  out.emplace_back(prefix + ".norm2.gain", &norm2.gain);
  out.emplace_back(prefix + ".norm2.bias", &norm2.bias);
  out.emplace_back(prefix + ".ff.w1", &ff.w1);
  out.emplace_back(prefix + ".ff.b1", &ff.b1);
  out.emplace_back(prefix + ".ff.w2", &ff.w2);
  out.emplace_back(prefix + ".ff.b2", &ff.b2);
}

Value multihead_attention(const Value& q_in, const Value& k_in, const Value& v_in,
                          std::size_t heads, double scale_dim, bool causal,
                          std::vector<Tensor>* attn_out) {
  const std::size_t d = q_in.cols();
  if (heads == 0 || d % heads != 0) {
    throw ConfigError("attention: head count " + std::to_string(heads) +
                      " does not divide width " + std::to_string(d));
  }
  if (k_in.cols() != d || v_in.cols() != d) {
    throw ShapeError("attention: q/k/v widths disagree");
  }
  Tape& t = *q_in.tape();
  const std::size_t dh = d / heads;
  const std::size_t tq = q_in.rows();
  const std::size_t tk = k_in.rows();

  Value mask;
  if (causal) {
    if (tq != tk) {
      throw ShapeError("attention: causal mask requires square score matrix");
    }
    Tensor m({tq, tk});
    for (std::size_t i = 0; i < tq; ++i) {
      for (std::size_t j = i + 1; j < tk; ++j) {
        m[i * tk + j] = kMaskValue;
      }
    }
    mask = t.constant(std::move(m));
  }

  std::vector<Value> head_outputs;
  head_outputs.reserve(heads);
  const double inv_scale = 1.0 / std::sqrt(scale_dim);
  for (std::size_t h = 0; h < heads; ++h) {
    const Value qh = slice_cols(q_in, h * dh, dh);
    const Value kh = slice_cols(k_in, h * dh, dh);
    const Value vh = slice_cols(v_in, h * dh, dh);
    Value scores = scale(matmul(qh, transpose(kh)), inv_scale);
    if (causal) {
      scores = add(scores, mask);
    }
    const Value weights = softmax_rows(scores);
    if (attn_out != nullptr) {
      attn_out->push_back(weights.tensor());
    }
    head_outputs.push_back(matmul(weights, vh));
  }
  return concat_cols(head_outputs);
}

Value transformer_block(const Value& x, TransformerBlockWeights& w, std::size_t heads,
                        bool causal, Activation act, double norm_eps, BlockLora* lora) {
  Tape& t = *x.tape();
  const std::size_t d = x.cols();

  const Value normed = layer_norm(x, t.watch(w.norm1.gain), t.watch(w.norm1.bias), norm_eps);
  const Value q = lora ? lora_forward(normed, w.attn.wq, lora->q) : linear(normed, w.attn.wq);
  const Value k = linear(normed, w.attn.wk);
  const Value v = lora ? lora_forward(normed, w.attn.wv, lora->v) : linear(normed, w.attn.wv);
  const Value attn =
      multihead_attention(q, k, v, heads, static_cast<double>(d / heads), causal, nullptr);
  const Value x1 = add(x, linear(attn, w.attn.wo));

  const Value normed2 = layer_norm(x1, t.watch(w.norm2.gain), t.watch(w.norm2.bias), norm_eps);
  const Value h1 = linear(normed2, w.ff.w1, w.ff.b1);
  const Value h2 = act == Activation::gelu ? gelu(h1) : relu(h1);
  return add(x1, linear(h2, w.ff.w2, w.ff.b2));
}

const char* activation_name(Activation a) { return a == Activation::gelu ? "gelu" : "relu"; }

Activation activation_from_name(const std::string& name) {
  if (name == "gelu") return Activation::gelu;
  if (name == "relu") return Activation::relu;
  throw ConfigError("unknown activation '" + name + "' (expected gelu or relu)");
}

}  // namespace presslm
