// Copyright 2026 The CSN Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "csn/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <string>

#include "csn/errors.hpp"

namespace csn::ad {

namespace {

// Row-major kernels accumulating into a pre-sized C. Each C element is
// accumulated over the inner index in increasing order starting from its
// current value, independent of the other extents.

// C[M,N] += A[M,K] * B[K,N]
void gemm_nn(std::size_t M, std::size_t K, std::size_t N, const double* A,
             const double* B, double* C) {
  for (std::size_t i = 0; i < M; ++i) {
    double* c = C + i * N;
    const double* a = A + i * K;
    for (std::size_t k = 0; k < K; ++k) {
      const double aik = a[k];
      const double* b = B + k * N;
      for (std::size_t j = 0; j < N; ++j) c[j] += aik * b[j];
    }
  }
}

// C[M,N] += A[M,K] * B[N,K]^T
void gemm_nt(std::size_t M, std::size_t K, std::size_t N, const double* A,
             const double* B, double* C) {
  for (std::size_t i = 0; i < M; ++i) {
    const double* a = A + i * K;
    for (std::size_t j = 0; j < N; ++j) {
      const double* b = B + j * K;
      double lane[8] = {0, 0, 0, 0, 0, 0, 0, 0};
      std::size_t k = 0;
      for (; k + 8 <= K; k += 8)
        for (std::size_t l = 0; l < 8; ++l) lane[l] += a[k + l] * b[k + l];
      double acc = ((lane[0] + lane[1]) + (lane[2] + lane[3])) +
                   ((lane[4] + lane[5]) + (lane[6] + lane[7]));
      for (; k < K; ++k) acc += a[k] * b[k];
      C[i * N + j] += acc;
    }
  }
}

// C[M,N] += A[K,M]^T * B[K,N]
void gemm_tn(std::size_t M, std::size_t K, std::size_t N, const double* A,
             const double* B, double* C) {
  for (std::size_t k = 0; k < K; ++k) {
    const double* a = A + k * M;
    const double* b = B + k * N;
    for (std::size_t i = 0; i < M; ++i) {
      const double aki = a[i];
      double* c = C + i * N;
      for (std::size_t j = 0; j < N; ++j) c[j] += aki * b[j];
    }
  }
}

void require_rank(const Tensor& t, std::size_t rank, const char* op) {
  if (t.rank() != rank) {
    throw DimensionError(std::string(op) + ": expected rank " +
                         std::to_string(rank) + ", got " +
                         shape_string(t.shape()));
  }
}

void require_same_tape(Var a, Var b) {
  if (a.tape != b.tape || a.tape == nullptr) {
    throw ContractError("vars belong to different tapes");
  }
}

void accumulate(Tensor* dst, const Tensor& src) {
  if (!dst) return;
  auto d = dst->mutable_data();
  auto s = src.data();
  for (std::size_t i = 0; i < d.size(); ++i) d[i] += s[i];
}

void softmax_row(const double* x, double* y, std::size_t m) {
  double mx = x[0];
  for (std::size_t j = 1; j < m; ++j) mx = std::max(mx, x[j]);
  double total = 0.0;
  for (std::size_t j = 0; j < m; ++j) {
    y[j] = std::exp(x[j] - mx);
    total += y[j];
  }
  for (std::size_t j = 0; j < m; ++j) y[j] /= total;
}

}  // namespace

const Tensor& Var::value() const { return tape->value(id); }

Var Tape::leaf(Tensor value, std::string_view label) {
  nodes_.push_back(Node{label, {}, std::move(value), nullptr, true});
  return Var{this, nodes_.size() - 1};
}

Var Tape::constant(Tensor value, std::string_view label) {
  nodes_.push_back(Node{label, {}, std::move(value), nullptr, false});
  return Var{this, nodes_.size() - 1};
}

Var Tape::record(std::string_view op, Tensor value, std::vector<NodeId> inputs,
                 BackwardFn backward) {
  const NodeId id = nodes_.size();
  bool needs = false;
  for (NodeId in : inputs) {
    if (in >= id) throw ContractError("node input must precede the node");
    needs = needs || nodes_[in].requires_grad;
  }
  if (!value.all_finite()) {
    throw NumericError("non-finite value produced by op '" + std::string(op) +
                       "' at node " + std::to_string(id));
  }
  nodes_.push_back(
      Node{op, std::move(inputs), std::move(value), std::move(backward), needs});
  return Var{this, id};
}

void Tape::backward(Var loss) {
  if (loss.tape != this) throw ContractError("loss belongs to another tape");
  const Tensor& lv = value(loss.id);
  if (lv.size() != 1) {
    throw ContractError("backward requires a scalar loss, got shape " +
                        shape_string(lv.shape()));
  }
  const std::size_t n = loss.id + 1;
  std::vector<bool> reach(n, false);
  reach[loss.id] = true;
  for (std::size_t i = n; i-- > 0;) {
    if (!reach[i] || !nodes_[i].requires_grad) continue;
    for (NodeId in : nodes_[i].inputs) reach[in] = true;
  }
  grads_.assign(nodes_.size(), Tensor());
  has_grad_.assign(nodes_.size(), false);
  for (std::size_t i = 0; i < n; ++i) {
    if (reach[i] && nodes_[i].requires_grad) {
      grads_[i] = Tensor(nodes_[i].value.shape(), 0.0);
      has_grad_[i] = true;
    }
  }
  if (!has_grad_[loss.id]) return;  // loss independent of every leaf
  grads_[loss.id].mutable_data()[0] = 1.0;

  std::vector<Tensor*> slots;
  for (std::size_t i = n; i-- > 0;) {
    const Node& node = nodes_[i];
    if (!has_grad_[i] || !node.backward) continue;
    slots.clear();
    for (NodeId in : node.inputs) {
      slots.push_back(has_grad_[in] ? &grads_[in] : nullptr);
    }
    node.backward(*this, grads_[i], slots);
  }
}

Tensor Tape::grad(NodeId id) const {
  if (id < has_grad_.size() && has_grad_[id]) return grads_[id];
  return Tensor(value(id).shape(), 0.0);
}

// -- ops ---------------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank(a, 2, "matmul");
  require_rank(b, 2, "matmul");
  if (a.dim(1) != b.dim(0)) {
    throw DimensionError("matmul: inner extents differ, " +
                         shape_string(a.shape()) + " vs " +
                         shape_string(b.shape()));
  }
  Tensor out({a.dim(0), b.dim(1)}, 0.0);
  gemm_nn(a.dim(0), a.dim(1), b.dim(1), a.data().data(), b.data().data(),
          out.mutable_data().data());
  return out;
}

Var matmul(Var a, Var b) {
  require_same_tape(a, b);
  Tensor out = matmul(a.value(), b.value());
  return a.tape->record(
      "matmul", std::move(out), {a.id, b.id},
      [a = a.id, b = b.id](const Tape& t, const Tensor& g,
                           std::span<Tensor* const> dx) {
        const Tensor& A = t.value(a);
        const Tensor& B = t.value(b);
        const std::size_t M = A.dim(0), K = A.dim(1), N = B.dim(1);
        if (dx[0]) {  // dA = G * B^T
          gemm_nt(M, N, K, g.data().data(), B.data().data(),
                  dx[0]->mutable_data().data());
        }
        if (dx[1]) {  // dB = A^T * G
          gemm_tn(K, M, N, A.data().data(), g.data().data(),
                  dx[1]->mutable_data().data());
        }
      });
}

Var transpose(Var x) {
  const Tensor& v = x.value();
  require_rank(v, 2, "transpose");
  const std::size_t n = v.dim(0), m = v.dim(1);
  Tensor out({m, n});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) out.at(j, i) = v.at(i, j);
  return x.tape->record("transpose", std::move(out), {x.id},
                        [n, m](const Tape&, const Tensor& g,
                               std::span<Tensor* const> dx) {
                          auto d = dx[0]->mutable_data();
                          for (std::size_t i = 0; i < n; ++i)
                            for (std::size_t j = 0; j < m; ++j)
                              d[i * m + j] += g.at(j, i);
                        });
}

Var reshape(Var x, Shape shape) {
  Tensor out = x.value().reshaped(std::move(shape));
  return x.tape->record(
      "reshape", std::move(out), {x.id},
      [](const Tape&, const Tensor& g, std::span<Tensor* const> dx) {
        accumulate(dx[0], g);
      });
}

Var add(Var a, Var b) {
  require_same_tape(a, b);
  require_same_shape(a.value(), b.value(), "add");
  Tensor out = a.value();
  auto o = out.mutable_data();
  auto bv = b.value().data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] += bv[i];
  return a.tape->record(
      "add", std::move(out), {a.id, b.id},
      [](const Tape&, const Tensor& g, std::span<Tensor* const> dx) {
        accumulate(dx[0], g);
        accumulate(dx[1], g);
      });
}

Var negate(Var x) { return scale(x, -1.0); }

Var scale(Var x, double factor) {
  Tensor out = x.value();
  for (auto& v : out.mutable_data()) v *= factor;
  return x.tape->record(
      factor == -1.0 ? "negate" : "scale", std::move(out), {x.id},
      [factor](const Tape&, const Tensor& g, std::span<Tensor* const> dx) {
        auto d = dx[0]->mutable_data();
        for (std::size_t i = 0; i < d.size(); ++i) d[i] += factor * g[i];
      });
}

Var broadcast_mul(Var map, Var weights) {
  require_same_tape(map, weights);
  const Tensor& M = map.value();
  const Tensor& W = weights.value();
  require_rank(M, 2, "broadcast_mul");
  require_rank(W, 2, "broadcast_mul");
  if (W.dim(0) != M.dim(0) || W.dim(1) != 1) {
    throw DimensionError("broadcast_mul: weights " + shape_string(W.shape()) +
                         " incompatible with map " + shape_string(M.shape()));
  }
  const std::size_t n = M.dim(0), d = M.dim(1);
  Tensor out = M;
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < d; ++c) out.at(r, c) *= W[r];
  return map.tape->record(
      "broadcast_mul", std::move(out), {map.id, weights.id},
      [m = map.id, w = weights.id, n, d](const Tape& t, const Tensor& g,
                                         std::span<Tensor* const> dx) {
        const Tensor& Mv = t.value(m);
        const Tensor& Wv = t.value(w);
        if (dx[0]) {
          auto dm = dx[0]->mutable_data();
          for (std::size_t r = 0; r < n; ++r)
            for (std::size_t c = 0; c < d; ++c)
              dm[r * d + c] += g.at(r, c) * Wv[r];
        }
        if (dx[1]) {
          auto dw = dx[1]->mutable_data();
          for (std::size_t r = 0; r < n; ++r) {
            double acc = 0.0;
            for (std::size_t c = 0; c < d; ++c) acc += g.at(r, c) * Mv.at(r, c);
            dw[r] += acc;
          }
        }
      });
}

Var relu(Var x) {
  Tensor out = x.value();
  for (auto& v : out.mutable_data()) v = v > 0.0 ? v : 0.0;
  return x.tape->record(
      "relu", std::move(out), {x.id},
      [in = x.id](const Tape& t, const Tensor& g, std::span<Tensor* const> dx) {
        const Tensor& xv = t.value(in);
        auto d = dx[0]->mutable_data();
        for (std::size_t i = 0; i < d.size(); ++i)
          if (xv[i] > 0.0) d[i] += g[i];
      });
}

Var log(Var x) {
  Tensor out = x.value();
  for (auto& v : out.mutable_data()) {
    if (!(v > 0.0)) throw ContractError("log: input must be positive");
    v = std::log(v);
  }
  return x.tape->record(
      "log", std::move(out), {x.id},
      [in = x.id](const Tape& t, const Tensor& g, std::span<Tensor* const> dx) {
        const Tensor& xv = t.value(in);
        auto d = dx[0]->mutable_data();
        for (std::size_t i = 0; i < d.size(); ++i) d[i] += g[i] / xv[i];
      });
}

Var mean_over_axis(Var x, std::size_t axis) {
  const Tensor& v = x.value();
  require_rank(v, 2, "mean_over_axis");
  if (axis > 1) throw DimensionError("mean_over_axis: axis must be 0 or 1");
  const std::size_t n = v.dim(0), m = v.dim(1);
  Tensor out(axis == 0 ? Shape{1, m} : Shape{n, 1}, 0.0);
  if (axis == 0) {
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t c = 0; c < m; ++c) out[c] += v.at(r, c);
    for (std::size_t c = 0; c < m; ++c) out[c] /= static_cast<double>(n);
  } else {
    for (std::size_t r = 0; r < n; ++r) {
      double acc = 0.0;
      for (std::size_t c = 0; c < m; ++c) acc += v.at(r, c);
      out[r] = acc / static_cast<double>(m);
    }
  }
  return x.tape->record(
      "mean_over_axis", std::move(out), {x.id},
      [axis, n, m](const Tape&, const Tensor& g, std::span<Tensor* const> dx) {
        auto d = dx[0]->mutable_data();
        const double inv = 1.0 / static_cast<double>(axis == 0 ? n : m);
        for (std::size_t r = 0; r < n; ++r)
          for (std::size_t c = 0; c < m; ++c)
            d[r * m + c] += (axis == 0 ? g[c] : g[r]) * inv;
      });
}

Var sum(Var x) {
  double total = 0.0;
  for (double v : x.value().data()) total += v;
  return x.tape->record(
      "sum", Tensor::scalar(total), {x.id},
      [](const Tape&, const Tensor& g, std::span<Tensor* const> dx) {
        for (auto& d : dx[0]->mutable_data()) d += g[0];
      });
}

Var select(Var x, std::size_t index) {
  if (index >= x.value().size()) {
    throw DimensionError("select: index " + std::to_string(index) +
                         " out of range for " + shape_string(x.shape()));
  }
  return x.tape->record(
      "select", Tensor::scalar(x.value()[index]), {x.id},
      [index](const Tape&, const Tensor& g, std::span<Tensor* const> dx) {
        dx[0]->mutable_data()[index] += g[0];
      });
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw DimensionError("concat_cols: no inputs");
  const std::size_t n = parts[0].value().dim(0);
  std::vector<std::size_t> widths;
  std::vector<NodeId> ids;
  std::size_t total = 0;
  for (const Var& p : parts) {
    require_same_tape(parts[0], p);
    require_rank(p.value(), 2, "concat_cols");
    if (p.value().dim(0) != n) {
      throw DimensionError("concat_cols: row counts differ, " +
                           shape_string(parts[0].shape()) + " vs " +
                           shape_string(p.shape()));
    }
    widths.push_back(p.value().dim(1));
    ids.push_back(p.id);
    total += widths.back();
  }
  Tensor out({n, total});
  std::size_t off = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const Tensor& v = parts[k].value();
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t c = 0; c < widths[k]; ++c) out.at(r, off + c) = v.at(r, c);
    off += widths[k];
  }
  return parts[0].tape->record(
      "concat_cols", std::move(out), std::move(ids),
      [widths, n, total](const Tape&, const Tensor& g,
                         std::span<Tensor* const> dx) {
        std::size_t off = 0;
        for (std::size_t k = 0; k < widths.size(); ++k) {
          if (dx[k]) {
            auto d = dx[k]->mutable_data();
            for (std::size_t r = 0; r < n; ++r)
              for (std::size_t c = 0; c < widths[k]; ++c)
                d[r * widths[k] + c] += g[r * total + off + c];
          }
          off += widths[k];
        }
      });
}

Tensor softmax_rows(const Tensor& x) {
  require_rank(x, 2, "softmax_rows");
  Tensor out(x.shape());
  const std::size_t n = x.dim(0), m = x.dim(1);
  for (std::size_t r = 0; r < n; ++r) {
    softmax_row(x.data().data() + r * m, out.mutable_data().data() + r * m, m);
  }
  return out;
}

Var softmax_rows(Var x) {
  Tensor out = softmax_rows(x.value());
  const std::size_t n = out.dim(0), m = out.dim(1);
  const NodeId self = x.tape->size();
  return x.tape->record(
      "softmax_rows", std::move(out), {x.id},
      [self, n, m](const Tape& t, const Tensor& g, std::span<Tensor* const> dx) {
        const Tensor& y = t.value(self);
        auto d = dx[0]->mutable_data();
        for (std::size_t r = 0; r < n; ++r) {
          double dot = 0.0;
          for (std::size_t c = 0; c < m; ++c) dot += g[r * m + c] * y[r * m + c];
          for (std::size_t c = 0; c < m; ++c)
            d[r * m + c] += y[r * m + c] * (g[r * m + c] - dot);
        }
      });
}

Var log_softmax_rows(Var x) {
  const Tensor& v = x.value();
  require_rank(v, 2, "log_softmax_rows");
  const std::size_t n = v.dim(0), m = v.dim(1);
  Tensor out(v.shape());
  for (std::size_t r = 0; r < n; ++r) {
    const double* row = v.data().data() + r * m;
    const double mx = *std::max_element(row, row + m);
    double total = 0.0;
    for (std::size_t c = 0; c < m; ++c) total += std::exp(row[c] - mx);
    const double lse = mx + std::log(total);
    for (std::size_t c = 0; c < m; ++c) out[r * m + c] = row[c] - lse;
  }
  const NodeId self = x.tape->size();
  return x.tape->record(
      "log_softmax_rows", std::move(out), {x.id},
      [self, n, m](const Tape& t, const Tensor& g, std::span<Tensor* const> dx) {
        const Tensor& y = t.value(self);
        auto d = dx[0]->mutable_data();
        for (std::size_t r = 0; r < n; ++r) {
          double gsum = 0.0;
          for (std::size_t c = 0; c < m; ++c) gsum += g[r * m + c];
          for (std::size_t c = 0; c < m; ++c)
            d[r * m + c] += g[r * m + c] - std::exp(y[r * m + c]) * gsum;
        }
      });
}

namespace {

struct ConvGeometry {
  std::size_t c_in, h, w, c_out, k, stride, out_h, out_w;
  std::size_t patch() const { return c_in * k * k; }
  std::size_t cells() const { return out_h * out_w; }
};

// cols[(c*k + ky)*k + kx][oy*out_w + ox] = input[c][oy*s + ky][ox*s + kx]
void im2col(const ConvGeometry& g, const double* in, double* cols) {
  for (std::size_t c = 0; c < g.c_in; ++c)
    for (std::size_t ky = 0; ky < g.k; ++ky)
      for (std::size_t kx = 0; kx < g.k; ++kx) {
        double* row = cols + ((c * g.k + ky) * g.k + kx) * g.cells();
        for (std::size_t oy = 0; oy < g.out_h; ++oy) {
          const double* src = in + (c * g.h + oy * g.stride + ky) * g.w + kx;
          double* dst = row + oy * g.out_w;
          for (std::size_t ox = 0; ox < g.out_w; ++ox) dst[ox] = src[ox * g.stride];
        }
      }
}

void col2im(const ConvGeometry& g, const double* cols, double* in) {
  for (std::size_t c = 0; c < g.c_in; ++c)
    for (std::size_t ky = 0; ky < g.k; ++ky)
      for (std::size_t kx = 0; kx < g.k; ++kx) {
        const double* row = cols + ((c * g.k + ky) * g.k + kx) * g.cells();
        for (std::size_t oy = 0; oy < g.out_h; ++oy) {
          double* dst = in + (c * g.h + oy * g.stride + ky) * g.w + kx;
          const double* src = row + oy * g.out_w;
          for (std::size_t ox = 0; ox < g.out_w; ++ox) dst[ox * g.stride] += src[ox];
        }
      }
}

}  // namespace

Var conv2d(Var input, Var kernels, std::size_t stride) {
  require_same_tape(input, kernels);
  const Tensor& X = input.value();
  const Tensor& K = kernels.value();
  require_rank(X, 3, "conv2d");
  require_rank(K, 4, "conv2d");
  if (stride == 0) throw DimensionError("conv2d: stride must be positive");
  if (K.dim(1) != X.dim(0) || K.dim(2) != K.dim(3)) {
    throw DimensionError("conv2d: kernels " + shape_string(K.shape()) +
                         " incompatible with input " + shape_string(X.shape()));
  }
  if (K.dim(2) > X.dim(1) || K.dim(3) > X.dim(2)) {
    throw DimensionError("conv2d: kernel " + shape_string(K.shape()) +
                         " larger than input " + shape_string(X.shape()));
  }
  ConvGeometry geo{X.dim(0), X.dim(1), X.dim(2), K.dim(0), K.dim(2), stride, 0, 0};
  geo.out_h = (geo.h - geo.k) / stride + 1;
  geo.out_w = (geo.w - geo.k) / stride + 1;

  auto cols = std::make_shared<std::vector<double>>(geo.patch() * geo.cells());
  im2col(geo, X.data().data(), cols->data());
  Tensor out({geo.c_out, geo.out_h, geo.out_w}, 0.0);
  gemm_nn(geo.c_out, geo.patch(), geo.cells(), K.data().data(), cols->data(),
          out.mutable_data().data());

  return input.tape->record(
      "conv2d", std::move(out), {input.id, kernels.id},
      [geo, cols, kid = kernels.id](const Tape& t, const Tensor& g,
                                    std::span<Tensor* const> dx) {
        if (dx[1]) {  // dK = G * cols^T
          gemm_nt(geo.c_out, geo.cells(), geo.patch(), g.data().data(),
                  cols->data(), dx[1]->mutable_data().data());
        }
        if (dx[0]) {  // dcols = K^T * G, folded back onto the input grid
          std::vector<double> dcols(geo.patch() * geo.cells(), 0.0);
          gemm_tn(geo.patch(), geo.c_out, geo.cells(), t.value(kid).data().data(),
                  g.data().data(), dcols.data());
          col2im(geo, dcols.data(), dx[0]->mutable_data().data());
        }
      });
}

Var add_channel_bias(Var x, Var bias) {
  require_same_tape(x, bias);
  const Tensor& X = x.value();
  require_rank(X, 3, "add_channel_bias");
  const std::size_t c = X.dim(0), plane = X.dim(1) * X.dim(2);
  if (bias.value().size() != c) {
    throw DimensionError("add_channel_bias: bias " +
                         shape_string(bias.shape()) + " incompatible with " +
                         shape_string(X.shape()));
  }
  Tensor out = X;
  auto o = out.mutable_data();
  for (std::size_t ch = 0; ch < c; ++ch) {
    const double b = bias.value()[ch];
    for (std::size_t i = 0; i < plane; ++i) o[ch * plane + i] += b;
  }
  return x.tape->record(
      "add_channel_bias", std::move(out), {x.id, bias.id},
      [c, plane](const Tape&, const Tensor& g, std::span<Tensor* const> dx) {
        accumulate(dx[0], g);
        if (dx[1]) {
          auto db = dx[1]->mutable_data();
          for (std::size_t ch = 0; ch < c; ++ch) {
            double acc = 0.0;
            for (std::size_t i = 0; i < plane; ++i) acc += g[ch * plane + i];
            db[ch] += acc;
          }
        }
      });
}

}  // namespace csn::ad
