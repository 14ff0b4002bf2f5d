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

#ifndef CSN_AUTODIFF_HPP_
#define CSN_AUTODIFF_HPP_

#include <cstddef>
#include <functional>
#include <span>
#include <string_view>
#include <vector>

#include "csn/tensor.hpp"

// Define-by-run reverse-mode differentiation. A Tape records every forward
// op as a node holding its value and a backward rule; backward() walks the
// nodes in reverse and accumulates gradients. Node inputs always precede the
// node itself, so the append order is already topological.
namespace csn::ad {

using NodeId = std::size_t;

class Tape;

// Handle to a node on a tape. Cheap to copy; only valid while the tape lives.
struct Var {
  Tape* tape = nullptr;
  NodeId id = 0;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
};

// `input_grads[i]` is null when input i does not require a gradient.
using BackwardFn = std::function<void(const Tape& tape, const Tensor& upstream,
                                      std::span<Tensor* const> input_grads)>;

class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Differentiable leaf (a parameter).
  Var leaf(Tensor value, std::string_view label = "leaf");
  // Leaf excluded from differentiation (inputs, labels).
  Var constant(Tensor value, std::string_view label = "constant");

  // Appends an op node. Throws NumericError if `value` is not finite.
  Var record(std::string_view op, Tensor value, std::vector<NodeId> inputs,
             BackwardFn backward);

  std::size_t size() const { return nodes_.size(); }
  const Tensor& value(NodeId id) const { return nodes_.at(id).value; }
  std::string_view op(NodeId id) const { return nodes_.at(id).op; }
  std::span<const NodeId> inputs(NodeId id) const { return nodes_.at(id).inputs; }
  bool requires_grad(NodeId id) const { return nodes_.at(id).requires_grad; }

  // Seeds d(loss)/d(loss) = 1 and propagates. The loss must hold exactly one
  // element. May be called again after further recording; gradients are
  // recomputed from scratch.
  void backward(Var loss);

  // Gradient of the last backward() loss w.r.t. node `id`. Nodes that did
  // not influence the loss report zeros.
  Tensor grad(NodeId id) const;
  Tensor grad(Var v) const { return grad(v.id); }

 private:
  struct Node {
    std::string_view op;
    std::vector<NodeId> inputs;
    Tensor value;
    BackwardFn backward;
    bool requires_grad = false;
  };

  std::vector<Node> nodes_;
  std::vector<Tensor> grads_;
  std::vector<bool> has_grad_;
};

// -- ops ---------------------------------------------------------------------

Var matmul(Var a, Var b);
Var transpose(Var x);
Var reshape(Var x, Shape shape);
Var add(Var a, Var b);
Var negate(Var x);
Var scale(Var x, double factor);
// map: n x d, weights: n x 1. Row r of map is multiplied by weights[r].
Var broadcast_mul(Var map, Var weights);
Var relu(Var x);
// Natural log; every input element must be positive.
Var log(Var x);
// 2-D mean. axis 0 reduces rows (n x m -> 1 x m), axis 1 reduces columns
// (n x m -> n x 1).
Var mean_over_axis(Var x, std::size_t axis);
// Sum of every element, shape [1].
Var sum(Var x);
// Element at flat index, shape [1].
Var select(Var x, std::size_t index);
// Column-wise concatenation of 2-D tensors sharing the row count.
Var concat_cols(std::span<const Var> parts);
Var softmax_rows(Var x);
Var log_softmax_rows(Var x);
// Valid cross-correlation. input: c_in x H x W, kernels: c_out x c_in x k x k.
Var conv2d(Var input, Var kernels, std::size_t stride);
// x: c x H x W, bias: c (any shape with c elements).
Var add_channel_bias(Var x, Var bias);

// Plain tensor versions for callers that do not need gradients.
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor softmax_rows(const Tensor& x);

}  // namespace csn::ad

#endif  // CSN_AUTODIFF_HPP_
