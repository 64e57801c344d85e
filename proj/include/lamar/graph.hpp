#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "lamar/param_store.hpp"
#include "lamar/tensor.hpp"

namespace lamar {

class Graph;
class Rng;

// Handle to a node of a Graph. Cheap to copy; valid while the graph lives.
class Var {
 public:
  Var() = default;
  Var(Graph* graph, std::size_t id) : graph_(graph), id_(id) {}

  const Tensor& value() const;
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
  Graph& graph() const { return *graph_; }
  std::size_t id() const noexcept { return id_; }
  bool valid() const noexcept { return graph_ != nullptr; }

 private:
  Graph* graph_ = nullptr;
  std::size_t id_ = 0;
};

// Tape for reverse-mode differentiation. Nodes are appended in evaluation
// order, so a reverse sweep is a valid topological order.
class Graph {
 public:
  // With recording off no backward closures are kept (inference).
  explicit Graph(bool record = true) : record_(record) {}
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Var constant(Tensor value);
  // Leaf bound to a stored parameter. Gradients flow into the store's
  // gradient buffer unless the parameter is frozen.
  Var parameter(ParamStore& store, const std::string& name);

  void backward(Var loss);

  bool recording() const noexcept { return record_; }
  const Tensor& value(Var v) const;
  // Empty until some gradient has been accumulated into the node.
  const Tensor& grad(Var v) const;
  bool requires_grad(Var v) const { return nodes_[v.id()].requires_grad; }
  std::size_t size() const noexcept { return nodes_.size(); }

  // --- op-author interface ---
  // The closure receives the graph and the handle of the node it belongs to.
  using BackwardFn = std::function<void(Graph&, Var self)>;
  // Registers an op result. `inputs` decide whether the node needs a gradient;
  // the closure runs only when it does and recording is enabled.
  Var emit(Tensor value, std::span<const Var> inputs, BackwardFn backward);
  // Gradient buffer of v, allocated to zeros on first use.
  Tensor& grad_buffer(Var v);
  bool needs_grad(Var v) const { return record_ && nodes_[v.id()].requires_grad; }

 private:
  struct Node {
    Tensor value;
    const Tensor* view = nullptr;  // parameter leaves alias the store
    Tensor grad;
    Tensor* sink = nullptr;  // parameter leaves accumulate straight into the store
    bool requires_grad = false;
    BackwardFn backward;
  };

  bool record_;
  std::vector<Node> nodes_;
};

namespace ops {

// Matrix product a * b.
Var matmul(Var a, Var b);
// x * w + b, with b a 1 x out row broadcast over rows.
Var linear(Var x, Var w, Var b);
// x * w with no bias.
Var linear(Var x, Var w);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var x, Real factor);
// x + row broadcast (row is 1 x cols).
Var add_row(Var x, Var row);
// x[r] += table[r % table.rows()]; x.rows() must be a multiple of table.rows().
Var add_periodic(Var x, Var table);
// Repeats a 1 x c row `times` times.
Var repeat_row(Var row, std::size_t times);
// Per-sample row concatenation. Part i contributes group[i] consecutive rows
// per sample; all parts must describe the same number of samples.
Var interleave(std::span<const Var> parts, std::span<const std::size_t> group);
// Row `index` of every consecutive block of `group` rows.
Var take_rows(Var x, std::size_t group, std::size_t index);
// Mean of every consecutive block of `group` rows.
Var group_mean(Var x, std::size_t group);
Var reshape(Var x, std::size_t rows, std::size_t cols);
Var slice_cols(Var x, std::size_t begin, std::size_t end);
Var concat_cols(std::span<const Var> parts);
// Per block of `group` rows: a_g * b_g^T  -> (blocks*group) x group.
Var batched_matmul_nt(Var a, Var b, std::size_t group);
// Per block of `group` rows: p_g * v_g with p_g group x group.
Var batched_matmul(Var p, Var v, std::size_t group);

Var softmax_rows(Var x);
Var layer_norm(Var x, Var gamma, Var beta);
Var gelu(Var x);
Var sigmoid(Var x);
// Inverted dropout; identity when !train or p == 0.
Var dropout(Var x, Real p, Rng* rng, bool train);
Var l2_normalize_rows(Var x);
// Straight-through Bernoulli mask: forward mask * c, backward treats mask as p.
Var straight_through_mask(Var p, Var c, const Tensor& mask);

// Scalar losses (1 x 1).
// Mean over every element of the squared difference.
Var mse(Var a, Var b);
// Mean binary cross-entropy in logits form; logits are n x 1, targets in {0,1}.
Var bce_with_logits(Var logits, std::span<const int> targets);
// Mean categorical cross-entropy via log-sum-exp; logits n x k.
Var cross_entropy(Var logits, std::span<const int> targets);

}  // namespace ops

}  // namespace lamar
