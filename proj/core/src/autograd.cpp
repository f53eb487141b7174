#include "presslm/autograd.hpp"

#include <cmath>
#include <cstring>
#include <numbers>

#include "presslm/errors.hpp"

namespace presslm {

namespace {

void require_rank2(const Tensor& t, const char* op) {
  if (t.rank() != 2) {
    throw ShapeError(std::string(op) + ": expected rank-2 tensor, got " + t.shape_str());
  }
}

void require_finite(const Tensor& t, const char* op) {
  for (double v : t.data()) {
    if (!std::isfinite(v)) {
      throw NumericError(std::string(op) + ": non-finite input value");
    }
  }
}

// C[m x n] (+)= A[m x k] * B[k x n], row-major, ikj order.
void matmul_into(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
                 std::size_t n, bool accumulate) {
  if (!accumulate) {
    std::memset(c, 0, m * n * sizeof(double));
  }
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = a + i * k;
    double* crow = c + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = arow[p];
      if (av == 0.0) continue;
      const double* brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) {
        crow[j] += av * brow[j];
      }
    }
  }
}

// dA[m x k] += dC[m x n] * B^T  (row-row dot products)
void matmul_nt_acc(const double* dc, const double* b, double* da, std::size_t m, std::size_t k,
                   std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* dcrow = dc + i * n;
    double* darow = da + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const double* brow = b + p * n;
      double acc = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        acc += dcrow[j] * brow[j];
      }
      darow[p] += acc;
    }
  }
}

// dB[k x n] += A^T * dC[m x n]
void matmul_tn_acc(const double* a, const double* dc, double* db, std::size_t m, std::size_t k,
                   std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = a + i * k;
    const double* dcrow = dc + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = arow[p];
      if (av == 0.0) continue;
      double* dbrow = db + p * n;
      for (std::size_t j = 0; j < n; ++j) {
        dbrow[j] += av * dcrow[j];
      }
    }
  }
}

constexpr double kGeluCoeff = 0.044715;

}  // namespace

// ---- Value ----------------------------------------------------------------

const Tensor& Value::tensor() const { return tape_->value_of(*this); }
const Tensor& Value::grad() const { return tape_->nodes_[idx_].grad; }
bool Value::requires_grad() const { return tape_->needs_grad(*this); }

// ---- Tape -------------------------------------------------------------------

Value Tape::constant(Tensor t) { return make_node(std::move(t), false); }

Value Tape::watch(Parameter& p) {
  auto it = watch_index_.find(&p);
  if (it != watch_index_.end()) {
    return Value(this, it->second);
  }
  Value v = make_node(p.value, p.trainable);
  watch_index_.emplace(&p, v.idx_);
  watched_.emplace_back(&p, v.idx_);
  return v;
}

Value Tape::make_node(Tensor value, bool requires_grad) {
  Node n;
  n.grad = Tensor::zeros(value.shape());
  n.value = std::move(value);
  n.requires_grad = requires_grad;
  nodes_.push_back(std::move(n));
  return Value(this, nodes_.size() - 1);
}

void Tape::record(std::string_view name, std::function<void()> backward_rule) {
  ops_.push_back({name, std::move(backward_rule)});
}

void Tape::backward(const Value& root) {
  if (root.tape_ != this) {
    throw ConfigError("backward: root value belongs to a different tape");
  }
  if (backward_done_) {
    throw ConfigError("backward: tape already replayed");
  }
  backward_done_ = true;
  if (nodes_[root.idx_].value.size() != 1) {
    throw ShapeError("backward: root must be scalar, got " + nodes_[root.idx_].value.shape_str());
  }
  nodes_[root.idx_].grad[0] += 1.0;
  for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) {
    it->backward();
    ++visits_;
  }
  for (const auto& [param, idx] : watched_) {
    if (!param->trainable) continue;
    const Tensor& g = nodes_[idx].grad;
    for (std::size_t i = 0; i < g.size(); ++i) {
      param->grad[i] += g[i];
    }
  }
}

// ---- op helpers ----------------------------------------------------------

namespace {

Tape* tape_of(const Value& a, const char* op) {
  if (!a.defined()) {
    throw ConfigError(std::string(op) + ": undefined value");
  }
  return a.tape();
}

void same_tape(const Value& a, const Value& b, const char* op) {
  if (a.tape() != b.tape()) {
    throw ConfigError(std::string(op) + ": values from different tapes");
  }
}

}  // namespace

// ---- ops -------------------------------------------------------------------

Value matmul(const Value& a, const Value& b) {
  Tape* t = tape_of(a, "matmul");
  same_tape(a, b, "matmul");
  const Tensor& A = a.tensor();
  const Tensor& B = b.tensor();
  require_rank2(A, "matmul");
  require_rank2(B, "matmul");
  if (A.cols() != B.rows()) {
    throw ShapeError("matmul: inner dimensions disagree: " + A.shape_str() + " x " +
                     B.shape_str());
  }
  const std::size_t m = A.rows(), k = A.cols(), n = B.cols();
  Tensor C({m, n});
  matmul_into(A.data().data(), B.data().data(), C.data().data(), m, k, n, false);
  C.quantize();
  const bool needs = a.requires_grad() || b.requires_grad();
  Value out = t->make_node(std::move(C), needs);
  if (needs) {
    t->record("matmul", [t, a, b, out, m, k, n]() {
      const Tensor& dC = t->grad_of(const_cast<Value&>(out));
      if (a.requires_grad()) {
        matmul_nt_acc(dC.data().data(), b.tensor().data().data(),
                      t->grad_of(const_cast<Value&>(a)).data().data(), m, k, n);
      }
      if (b.requires_grad()) {
        matmul_tn_acc(a.tensor().data().data(), dC.data().data(),
                      t->grad_of(const_cast<Value&>(b)).data().data(), m, k, n);
      }
    });
  }
  return out;
}

Value transpose(const Value& a) {
  Tape* t = tape_of(a, "transpose");
  const Tensor& A = a.tensor();
  require_rank2(A, "transpose");
  const std::size_t m = A.rows(), n = A.cols();
  Tensor C({n, m});
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      C[j * m + i] = A[i * n + j];
    }
  }
  const bool needs = a.requires_grad();
  Value out = t->make_node(std::move(C), needs);
  if (needs) {
    t->record("transpose", [t, a, out, m, n]() {
      const Tensor& dC = t->grad_of(const_cast<Value&>(out));
      Tensor& dA = t->grad_of(const_cast<Value&>(a));
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
          dA[i * n + j] += dC[j * m + i];
        }
      }
    });
  }
  return out;
}

namespace {

template <typename Fwd, typename Bwd>
Value binary_same_shape(const Value& a, const Value& b, const char* name, Fwd fwd, Bwd bwd) {
  Tape* t = tape_of(a, name);
  same_tape(a, b, name);
  const Tensor& A = a.tensor();
  const Tensor& B = b.tensor();
  if (!same_shape(A, B)) {
    throw ShapeError(std::string(name) + ": shape mismatch " + A.shape_str() + " vs " +
                     B.shape_str());
  }
  Tensor C(A.shape());
  for (std::size_t i = 0; i < A.size(); ++i) {
    C[i] = fwd(A[i], B[i]);
  }
  C.quantize();
  const bool needs = a.requires_grad() || b.requires_grad();
  Value out = t->make_node(std::move(C), needs);
  if (needs) {
    t->record(name, [t, a, b, out, bwd]() {
      const Tensor& dC = t->grad_of(const_cast<Value&>(out));
      const bool ga = a.requires_grad(), gb = b.requires_grad();
      Tensor* dA = ga ? &t->grad_of(const_cast<Value&>(a)) : nullptr;
      Tensor* dB = gb ? &t->grad_of(const_cast<Value&>(b)) : nullptr;
      for (std::size_t i = 0; i < dC.size(); ++i) {
        bwd(i, dC[i], a.tensor()[i], b.tensor()[i], dA, dB);
      }
    });
  }
  return out;
}

}  // namespace

Value add(const Value& a, const Value& b) {
  return binary_same_shape(
      a, b, "add", [](double x, double y) { return x + y; },
      [](std::size_t i, double g, double, double, Tensor* dA, Tensor* dB) {
        if (dA) (*dA)[i] += g;
        if (dB) (*dB)[i] += g;
      });
}

Value sub(const Value& a, const Value& b) {
  return binary_same_shape(
      a, b, "sub", [](double x, double y) { return x - y; },
      [](std::size_t i, double g, double, double, Tensor* dA, Tensor* dB) {
        if (dA) (*dA)[i] += g;
        if (dB) (*dB)[i] -= g;
      });
}

Value mul(const Value& a, const Value& b) {
  return binary_same_shape(
      a, b, "mul", [](double x, double y) { return x * y; },
      [](std::size_t i, double g, double x, double y, Tensor* dA, Tensor* dB) {
        if (dA) (*dA)[i] += g * y;
        if (dB) (*dB)[i] += g * x;
      });
}

Value scale(const Value& a, double c) {
  Tape* t = tape_of(a, "scale");
  const Tensor& A = a.tensor();
  Tensor C(A.shape());
  for (std::size_t i = 0; i < A.size(); ++i) {
    C[i] = A[i] * c;
  }
  C.quantize();
  const bool needs = a.requires_grad();
  Value out = t->make_node(std::move(C), needs);
  if (needs) {
    t->record("scale", [t, a, out, c]() {
      const Tensor& dC = t->grad_of(const_cast<Value&>(out));
      Tensor& dA = t->grad_of(const_cast<Value&>(a));
      for (std::size_t i = 0; i < dC.size(); ++i) {
        dA[i] += dC[i] * c;
      }
    });
  }
  return out;
}

Value add_row_broadcast(const Value& x, const Value& bias) {
  Tape* t = tape_of(x, "add_row_broadcast");
  same_tape(x, bias, "add_row_broadcast");
  const Tensor& X = x.tensor();
  const Tensor& B = bias.tensor();
  require_rank2(X, "add_row_broadcast");
  if (B.rank() != 1 || B.size() != X.cols()) {
    throw ShapeError("add_row_broadcast: bias " + B.shape_str() + " does not match last dim of " +
                     X.shape_str());
  }
  const std::size_t m = X.rows(), n = X.cols();
  Tensor C({m, n});
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      C[i * n + j] = X[i * n + j] + B[j];
    }
  }
  C.quantize();
  const bool needs = x.requires_grad() || bias.requires_grad();
  Value out = t->make_node(std::move(C), needs);
  if (needs) {
    t->record("add_row_broadcast", [t, x, bias, out, m, n]() {
      const Tensor& dC = t->grad_of(const_cast<Value&>(out));
      if (x.requires_grad()) {
        Tensor& dX = t->grad_of(const_cast<Value&>(x));
        for (std::size_t i = 0; i < dC.size(); ++i) {
          dX[i] += dC[i];
        }
      }
      if (bias.requires_grad()) {
        Tensor& dB = t->grad_of(const_cast<Value&>(bias));
        for (std::size_t i = 0; i < m; ++i) {
          for (std::size_t j = 0; j < n; ++j) {
            dB[j] += dC[i * n + j];
          }
        }
      }
    });
  }
  return out;
}

Value softmax_rows(const Value& x) {
  Tape* t = tape_of(x, "softmax_rows");
  const Tensor& X = x.tensor();
  require_rank2(X, "softmax_rows");
  require_finite(X, "softmax_rows");
  const std::size_t m = X.rows(), n = X.cols();
  Tensor Y({m, n});
  for (std::size_t i = 0; i < m; ++i) {
    const double* row = X.data().data() + i * n;
    double* yrow = Y.data().data() + i * n;
    double mx = row[0];
    for (std::size_t j = 1; j < n; ++j) {
      mx = std::max(mx, row[j]);
    }
    double sum = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      yrow[j] = std::exp(row[j] - mx);
      sum += yrow[j];
    }
    for (std::size_t j = 0; j < n; ++j) {
      yrow[j] /= sum;
    }
  }
  Y.quantize();
  const bool needs = x.requires_grad();
  Value out = t->make_node(std::move(Y), needs);
  if (needs) {
    t->record("softmax_rows", [t, x, out, m, n]() {
      const Tensor& dY = t->grad_of(const_cast<Value&>(out));
      const Tensor& Yv = out.tensor();
      Tensor& dX = t->grad_of(const_cast<Value&>(x));
      for (std::size_t i = 0; i < m; ++i) {
        const double* y = Yv.data().data() + i * n;
        const double* dy = dY.data().data() + i * n;
        double dot = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
          dot += dy[j] * y[j];
        }
        double* dx = dX.data().data() + i * n;
        for (std::size_t j = 0; j < n; ++j) {
          dx[j] += (dy[j] - dot) * y[j];
        }
      }
    });
  }
  return out;
}

Value layer_norm(const Value& x, const Value& gain, const Value& bias, double eps) {
  Tape* t = tape_of(x, "layer_norm");
  same_tape(x, gain, "layer_norm");
  same_tape(x, bias, "layer_norm");
  const Tensor& X = x.tensor();
  require_rank2(X, "layer_norm");
  const std::size_t m = X.rows(), d = X.cols();
  const Tensor& G = gain.tensor();
  const Tensor& B = bias.tensor();
  if (G.rank() != 1 || G.size() != d || B.rank() != 1 || B.size() != d) {
    throw ShapeError("layer_norm: gain/bias must be rank-1 of size " + std::to_string(d));
  }
  Tensor Y({m, d});
  Tensor xhat({m, d});
  std::vector<double> inv_sigma(m);
  for (std::size_t i = 0; i < m; ++i) {
    const double* row = X.data().data() + i * d;
    double mean = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      mean += row[j];
    }
    mean /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      const double c = row[j] - mean;
      var += c * c;
    }
    var /= static_cast<double>(d);
    const double inv = 1.0 / std::sqrt(var + eps);
    inv_sigma[i] = inv;
    for (std::size_t j = 0; j < d; ++j) {
      const double xh = (row[j] - mean) * inv;
      xhat[i * d + j] = xh;
      Y[i * d + j] = G[j] * xh + B[j];
    }
  }
  Y.quantize();
  const bool needs = x.requires_grad() || gain.requires_grad() || bias.requires_grad();
  Value out = t->make_node(std::move(Y), needs);
  if (needs) {
    auto xh = std::make_shared<Tensor>(std::move(xhat));
    auto is = std::make_shared<std::vector<double>>(std::move(inv_sigma));
    t->record("layer_norm", [t, x, gain, bias, out, m, d, xh, is]() {
      const Tensor& dY = t->grad_of(const_cast<Value&>(out));
      const Tensor& G = gain.tensor();
      if (gain.requires_grad()) {
        Tensor& dG = t->grad_of(const_cast<Value&>(gain));
        for (std::size_t i = 0; i < m; ++i) {
          for (std::size_t j = 0; j < d; ++j) {
            dG[j] += dY[i * d + j] * (*xh)[i * d + j];
          }
        }
      }
      if (bias.requires_grad()) {
        Tensor& dB = t->grad_of(const_cast<Value&>(bias));
        for (std::size_t i = 0; i < m; ++i) {
          for (std::size_t j = 0; j < d; ++j) {
            dB[j] += dY[i * d + j];
          }
        }
      }
      if (x.requires_grad()) {
        Tensor& dX = t->grad_of(const_cast<Value&>(x));
        for (std::size_t i = 0; i < m; ++i) {
          const double* dy = dY.data().data() + i * d;
          const double* xhr = xh->data().data() + i * d;
          double mean_dxh = 0.0, mean_dxh_xh = 0.0;
          for (std::size_t j = 0; j < d; ++j) {
            const double dxh = dy[j] * G[j];
            mean_dxh += dxh;
            mean_dxh_xh += dxh * xhr[j];
          }
          mean_dxh /= static_cast<double>(d);
          mean_dxh_xh /= static_cast<double>(d);
          for (std::size_t j = 0; j < d; ++j) {
            const double dxh = dy[j] * G[j];
            dX[i * d + j] += (*is)[i] * (dxh - mean_dxh - xhr[j] * mean_dxh_xh);
          }
        }
      }
    });
  }
  return out;
}

Value dropout(const Value& x, double rate, bool training, CounterRng& rng) {
  if (rate < 0.0 || rate >= 1.0) {
    throw ConfigError("dropout: rate must be in [0,1), got " + std::to_string(rate));
  }
  Tape* t = tape_of(x, "dropout");
  if (!training) {
    // Inference identity; recorded as a pass-through so graph structure does
    // not depend on mode.
    const bool needs = x.requires_grad();
    Value out = t->make_node(x.tensor(), needs);
    if (needs) {
      t->record("dropout", [t, x, out]() {
        const Tensor& dY = t->grad_of(const_cast<Value&>(out));
        Tensor& dX = t->grad_of(const_cast<Value&>(x));
        for (std::size_t i = 0; i < dY.size(); ++i) {
          dX[i] += dY[i];
        }
      });
    }
    return out;
  }
  const Tensor& X = x.tensor();
  const double keep_scale = 1.0 / (1.0 - rate);
  auto mask = std::make_shared<std::vector<double>>(X.size());
  Tensor Y(X.shape());
  for (std::size_t i = 0; i < X.size(); ++i) {
    const double m = (rng.uniform() >= rate) ? keep_scale : 0.0;
    (*mask)[i] = m;
    Y[i] = X[i] * m;
  }
  Y.quantize();
  const bool needs = x.requires_grad();
  Value out = t->make_node(std::move(Y), needs);
  if (needs) {
    t->record("dropout", [t, x, out, mask]() {
      const Tensor& dY = t->grad_of(const_cast<Value&>(out));
      Tensor& dX = t->grad_of(const_cast<Value&>(x));
      for (std::size_t i = 0; i < dY.size(); ++i) {
        dX[i] += dY[i] * (*mask)[i];
      }
    });
  }
  return out;
}

namespace {

inline double gelu_fwd(double v, double& dcache) {
  const double k = std::sqrt(2.0 / std::numbers::pi);
  const double u = k * (v + kGeluCoeff * v * v * v);
  const double th = std::tanh(u);
  const double du = k * (1.0 + 3.0 * kGeluCoeff * v * v);
  dcache = 0.5 * (1.0 + th) + 0.5 * v * (1.0 - th * th) * du;
  return 0.5 * v * (1.0 + th);
}

}  // namespace

Value gelu(const Value& x) {
  Tape* t = tape_of(x, "gelu");
  const Tensor& X = x.tensor();
  Tensor Y(X.shape());
  auto deriv = std::make_shared<std::vector<double>>(X.size());
  for (std::size_t i = 0; i < X.size(); ++i) {
    Y[i] = gelu_fwd(X[i], (*deriv)[i]);
  }
  Y.quantize();
  const bool needs = x.requires_grad();
  Value out = t->make_node(std::move(Y), needs);
  if (needs) {
    t->record("gelu", [t, x, out, deriv]() {
      const Tensor& dY = t->grad_of(const_cast<Value&>(out));
      Tensor& dX = t->grad_of(const_cast<Value&>(x));
      for (std::size_t i = 0; i < dY.size(); ++i) {
        dX[i] += dY[i] * (*deriv)[i];
      }
    });
  }
  return out;
}

Value relu(const Value& x) {
  Tape* t = tape_of(x, "relu");
  const Tensor& X = x.tensor();
  Tensor Y(X.shape());
  for (std::size_t i = 0; i < X.size(); ++i) {
    Y[i] = X[i] > 0.0 ? X[i] : 0.0;
  }
  const bool needs = x.requires_grad();
  Value out = t->make_node(std::move(Y), needs);
  if (needs) {
    t->record("relu", [t, x, out]() {
      const Tensor& dY = t->grad_of(const_cast<Value&>(out));
      Tensor& dX = t->grad_of(const_cast<Value&>(x));
      for (std::size_t i = 0; i < dY.size(); ++i) {
        if (x.tensor()[i] > 0.0) dX[i] += dY[i];
      }
    });
  }
  return out;
}

Value concat_cols(const std::vector<Value>& parts) {
  if (parts.empty()) {
    throw ConfigError("concat_cols: no parts");
  }
  Tape* t = tape_of(parts[0], "concat_cols");
  const std::size_t m = parts[0].tensor().rows();
  std::size_t total = 0;
  bool needs = false;
  for (const Value& p : parts) {
    same_tape(parts[0], p, "concat_cols");
    require_rank2(p.tensor(), "concat_cols");
    if (p.tensor().rows() != m) {
      throw ShapeError("concat_cols: row mismatch " + p.tensor().shape_str());
    }
    total += p.tensor().cols();
    needs = needs || p.requires_grad();
  }
  Tensor C({m, total});
  std::size_t off = 0;
  for (const Value& p : parts) {
    const Tensor& P = p.tensor();
    const std::size_t w = P.cols();
    for (std::size_t i = 0; i < m; ++i) {
      std::memcpy(C.data().data() + i * total + off, P.data().data() + i * w,
                  w * sizeof(double));
    }
    off += w;
  }
  Value out = t->make_node(std::move(C), needs);
  if (needs) {
    auto parts_copy = std::make_shared<std::vector<Value>>(parts);
    t->record("concat_cols", [t, parts_copy, out, m, total]() {
      const Tensor& dC = t->grad_of(const_cast<Value&>(out));
      std::size_t off = 0;
      for (const Value& p : *parts_copy) {
        const std::size_t w = p.tensor().cols();
        if (p.requires_grad()) {
          Tensor& dP = t->grad_of(const_cast<Value&>(p));
          for (std::size_t i = 0; i < m; ++i) {
            for (std::size_t j = 0; j < w; ++j) {
              dP[i * w + j] += dC[i * total + off + j];
            }
          }
        }
        off += w;
      }
    });
  }
  return out;
}

Value slice_cols(const Value& x, std::size_t first, std::size_t count) {
  Tape* t = tape_of(x, "slice_cols");
  const Tensor& X = x.tensor();
  require_rank2(X, "slice_cols");
  const std::size_t m = X.rows(), n = X.cols();
  if (first + count > n || count == 0) {
    throw ShapeError("slice_cols: [" + std::to_string(first) + ", " +
                     std::to_string(first + count) + ") out of " + X.shape_str());
  }
  Tensor C({m, count});
  for (std::size_t i = 0; i < m; ++i) {
    std::memcpy(C.data().data() + i * count, X.data().data() + i * n + first,
                count * sizeof(double));
  }
  const bool needs = x.requires_grad();
  Value out = t->make_node(std::move(C), needs);
  if (needs) {
    t->record("slice_cols", [t, x, out, first, count, m, n]() {
      const Tensor& dC = t->grad_of(const_cast<Value&>(out));
      Tensor& dX = t->grad_of(const_cast<Value&>(x));
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < count; ++j) {
          dX[i * n + first + j] += dC[i * count + j];
        }
      }
    });
  }
  return out;
}

Value slice_rows(const Value& x, std::size_t first, std::size_t count) {
  Tape* t = tape_of(x, "slice_rows");
  const Tensor& X = x.tensor();
  require_rank2(X, "slice_rows");
  const std::size_t m = X.rows(), n = X.cols();
  if (first + count > m || count == 0) {
    throw ShapeError("slice_rows: [" + std::to_string(first) + ", " +
                     std::to_string(first + count) + ") out of " + X.shape_str());
  }
  Tensor C({count, n});
  std::memcpy(C.data().data(), X.data().data() + first * n, count * n * sizeof(double));
  const bool needs = x.requires_grad();
  Value out = t->make_node(std::move(C), needs);
  if (needs) {
    t->record("slice_rows", [t, x, out, first, count, n]() {
      const Tensor& dC = t->grad_of(const_cast<Value&>(out));
      Tensor& dX = t->grad_of(const_cast<Value&>(x));
      for (std::size_t i = 0; i < count; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
          dX[(first + i) * n + j] += dC[i * n + j];
        }
      }
    });
  }
  return out;
}

Value sum_all(const Value& x) {
  Tape* t = tape_of(x, "sum_all");
  const Tensor& X = x.tensor();
  double s = 0.0;
  for (double v : X.data()) {
    s += v;
  }
  const bool needs = x.requires_grad();
  Value out = t->make_node(Tensor::scalar(quantized(s)), needs);
  if (needs) {
    t->record("sum_all", [t, x, out]() {
      const double g = t->grad_of(const_cast<Value&>(out))[0];
      Tensor& dX = t->grad_of(const_cast<Value&>(x));
      for (std::size_t i = 0; i < dX.size(); ++i) {
        dX[i] += g;
      }
    });
  }
  return out;
}

Value mean_all(const Value& x) {
  return scale(sum_all(x), 1.0 / static_cast<double>(x.tensor().size()));
}

Value mixed_rows(const Value& table, const Value* soft, const std::vector<MixedRow>& rows) {
  Tape* t = tape_of(table, "mixed_rows");
  const Tensor& T = table.tensor();
  require_rank2(T, "mixed_rows");
  const std::size_t d = T.cols();
  if (soft != nullptr) {
    same_tape(table, *soft, "mixed_rows");
    require_rank2(soft->tensor(), "mixed_rows");
    if (soft->tensor().cols() != d) {
      throw ShapeError("mixed_rows: soft width " + soft->tensor().shape_str() +
                       " does not match table " + T.shape_str());
    }
  }
  if (rows.empty()) {
    throw ShapeError("mixed_rows: empty row spec");
  }
  Tensor C({rows.size(), d});
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const MixedRow& r = rows[i];
    const Tensor& src = r.soft ? soft->tensor() : T;
    if (r.soft && soft == nullptr) {
      throw ConfigError("mixed_rows: soft row requested but no soft matrix given");
    }
    if (r.index >= src.rows()) {
      throw ShapeError("mixed_rows: row " + std::to_string(r.index) + " out of " +
                       src.shape_str());
    }
    std::memcpy(C.data().data() + i * d, src.data().data() + r.index * d, d * sizeof(double));
  }
  const bool soft_grad = soft != nullptr && soft->requires_grad();
  const bool needs = table.requires_grad() || soft_grad;
  Value out = t->make_node(std::move(C), needs);
  if (needs) {
    Value soft_v = soft ? *soft : Value();
    auto spec = std::make_shared<std::vector<MixedRow>>(rows);
    t->record("mixed_rows", [t, table, soft_v, spec, out, d]() {
      const Tensor& dC = t->grad_of(const_cast<Value&>(out));
      Tensor* dT =
          table.requires_grad() ? &t->grad_of(const_cast<Value&>(table)) : nullptr;
      Tensor* dS = (soft_v.defined() && soft_v.requires_grad())
                       ? &t->grad_of(const_cast<Value&>(soft_v))
                       : nullptr;
      for (std::size_t i = 0; i < spec->size(); ++i) {
        const MixedRow& r = (*spec)[i];
        Tensor* dst = r.soft ? dS : dT;
        if (!dst) continue;
        for (std::size_t j = 0; j < d; ++j) {
          (*dst)[r.index * d + j] += dC[i * d + j];
        }
      }
    });
  }
  return out;
}

Value masked_cross_entropy(const Value& logits, const std::vector<int>& targets,
                           const std::vector<std::uint8_t>& answer_mask) {
  Tape* t = tape_of(logits, "masked_cross_entropy");
  const Tensor& L = logits.tensor();
  require_rank2(L, "masked_cross_entropy");
  const std::size_t T = L.rows(), V = L.cols();
  if (targets.size() != T || answer_mask.size() != T) {
    throw ShapeError("masked_cross_entropy: targets/mask length " +
                     std::to_string(targets.size()) + "/" + std::to_string(answer_mask.size()) +
                     " vs " + std::to_string(T) + " rows");
  }
  std::size_t masked = 0;
  for (std::uint8_t m : answer_mask) {
    masked += m ? 1 : 0;
  }
  if (masked == 0) {
    throw DataError("masked_cross_entropy: empty answer mask");
  }
  // Stable log-softmax per masked row; softmax probabilities cached for the
  // backward rule.
  auto probs = std::make_shared<Tensor>(Tensor::zeros({T, V}));
  double loss = 0.0;
  for (std::size_t i = 0; i < T; ++i) {
    if (!answer_mask[i]) continue;
    const int tgt = targets[i];
    if (tgt < 0 || static_cast<std::size_t>(tgt) >= V) {
      throw DataError("masked_cross_entropy: target id " + std::to_string(tgt) +
                      " outside vocab of " + std::to_string(V));
    }
    const double* row = L.data().data() + i * V;
    double mx = row[0];
    for (std::size_t j = 1; j < V; ++j) {
      mx = std::max(mx, row[j]);
    }
    double sum = 0.0;
    double* prow = probs->data().data() + i * V;
    for (std::size_t j = 0; j < V; ++j) {
      prow[j] = std::exp(row[j] - mx);
      sum += prow[j];
    }
    for (std::size_t j = 0; j < V; ++j) {
      prow[j] /= sum;
    }
    loss += -(row[tgt] - mx - std::log(sum));
  }
  loss /= static_cast<double>(masked);
  const bool needs = logits.requires_grad();
  Value out = t->make_node(Tensor::scalar(quantized(loss)), needs);
  if (needs) {
    auto tgts = std::make_shared<std::vector<int>>(targets);
    auto msk = std::make_shared<std::vector<std::uint8_t>>(answer_mask);
    t->record("masked_cross_entropy", [t, logits, out, probs, tgts, msk, T, V, masked]() {
      const double g = t->grad_of(const_cast<Value&>(out))[0] / static_cast<double>(masked);
      Tensor& dL = t->grad_of(const_cast<Value&>(logits));
      for (std::size_t i = 0; i < T; ++i) {
        if (!(*msk)[i]) continue;
        const double* prow = probs->data().data() + i * V;
        double* drow = dL.data().data() + i * V;
        const std::size_t tgt = static_cast<std::size_t>((*tgts)[i]);
        for (std::size_t j = 0; j < V; ++j) {
          drow[j] += g * (prow[j] - (j == tgt ? 1.0 : 0.0));
        }
      }
    });
  }
  return out;
}

}  // namespace presslm
