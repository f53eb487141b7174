#pragma once

#include <cstdint>
#include <functional>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "presslm/rng.hpp"
#include "presslm/tensor.hpp"

namespace presslm {

/// A model weight: value plus a same-shape gradient buffer that optimizer
/// steps consume. Frozen parameters keep trainable=false and their grad
/// buffer stays zero through any number of backward passes.
struct Parameter {
  Parameter() = default;
  explicit Parameter(Tensor v, bool trainable_flag = true)
      : value(std::move(v)), grad(value.shape()), trainable(trainable_flag) {}

  Tensor value;
  Tensor grad;
  bool trainable = true;

  void zero_grad() { grad.fill(0.0); }
};

class Tape;

/// Handle to a node on a tape. Cheap to copy; valid while the tape lives.
class Value {
 public:
  Value() = default;
  bool defined() const { return tape_ != nullptr; }
  const Tensor& tensor() const;
  const Tensor& grad() const;
  bool requires_grad() const;
  std::size_t rows() const { return tensor().rows(); }
  std::size_t cols() const { return tensor().cols(); }
  Tape* tape() const { return tape_; }

 private:
  friend class Tape;
  Value(Tape* t, std::size_t i) : tape_(t), idx_(i) {}
  Tape* tape_ = nullptr;
  std::size_t idx_ = 0;
};

/// Define-by-run tape: forward ops append entries; backward() replays the
/// recorded rules once each, in reverse order. A tape is rebuilt per forward
/// pass and is confined to one execution context.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Leaf with no gradient flow.
  Value constant(Tensor t);

  /// Leaf bound to a parameter. Watching the same parameter twice returns the
  /// same node, so tied weights accumulate one gradient. After backward(),
  /// the node gradient is added into p.grad for trainable parameters.
  Value watch(Parameter& p);

  /// Reverse pass from a scalar root. Single use per tape.
  void backward(const Value& root);

  std::size_t op_count() const { return ops_.size(); }
  std::size_t backward_visits() const { return visits_; }

  // Internals for op implementations.
  Value make_node(Tensor value, bool requires_grad);
  const Tensor& value_of(const Value& v) const { return nodes_[v.idx_].value; }
  Tensor& grad_of(const Value& v) { return nodes_[v.idx_].grad; }
  bool needs_grad(const Value& v) const { return nodes_[v.idx_].requires_grad; }
  void record(std::string_view name, std::function<void()> backward_rule);

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
  };
  struct OpRecord {
    std::string_view name;
    std::function<void()> backward;
  };

  friend class Value;
  std::vector<Node> nodes_;
  std::vector<OpRecord> ops_;
  std::vector<std::pair<Parameter*, std::size_t>> watched_;
  std::unordered_map<const Parameter*, std::size_t> watch_index_;
  std::size_t visits_ = 0;
  bool backward_done_ = false;
};

// ---- differentiable ops -------------------------------------------------

/// Row indices into either a token table or a soft-embedding matrix; the
/// building block for mixed hard/soft input sequences.
struct MixedRow {
  bool soft = false;
  std::size_t index = 0;
};

Value matmul(const Value& a, const Value& b);
Value transpose(const Value& a);
Value add(const Value& a, const Value& b);
Value sub(const Value& a, const Value& b);
Value mul(const Value& a, const Value& b);
Value scale(const Value& a, double c);
/// x[m x n] + bias[n], broadcast over rows (the only broadcast supported).
Value add_row_broadcast(const Value& x, const Value& bias);
Value softmax_rows(const Value& x);
Value layer_norm(const Value& x, const Value& gain, const Value& bias, double eps);
Value dropout(const Value& x, double rate, bool training, CounterRng& rng);
Value gelu(const Value& x);
Value relu(const Value& x);
Value concat_cols(const std::vector<Value>& parts);
Value slice_cols(const Value& x, std::size_t first, std::size_t count);
Value slice_rows(const Value& x, std::size_t first, std::size_t count);
Value sum_all(const Value& x);
Value mean_all(const Value& x);

/// Gathers rows from `table` (hard items) and `soft` (soft items) into one
/// [T x D] matrix; backward scatters into both.
Value mixed_rows(const Value& table, const Value* soft, const std::vector<MixedRow>& rows);

/// Mean cross-entropy over positions where answer_mask is set. targets at
/// unmasked positions are ignored (may be -1).
Value masked_cross_entropy(const Value& logits, const std::vector<int>& targets,
                           const std::vector<std::uint8_t>& answer_mask);

}  // namespace presslm
