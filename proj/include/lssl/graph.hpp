#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "lssl/tensor.hpp"

namespace lssl {

// Gradients keyed by tensor identity, local to one backward traversal.
using GradMap = std::unordered_map<const TensorImpl*, std::vector<double>>;

// Records one op: the closure receives the output gradient and accumulates
// input gradients into the map.
struct OpNode {
  std::string op;
  std::vector<std::shared_ptr<TensorImpl>> inputs;
  std::shared_ptr<TensorImpl> output;
  std::function<void(const std::vector<double>& out_grad, GradMap& grads)> backward;
};

// Define-by-run tape. Nodes are stored in creation order, which is already a
// topological order; backward walks it in reverse and visits each node once.
// A Graph is single-threaded; each thread has its own active graph.
class Graph : public std::enable_shared_from_this<Graph> {
 public:
  int record(OpNode node);

  // Accumulate d(loss)/d(leaf) into every reachable requires_grad leaf.
  // The loss must be a single-element tensor recorded on this graph.
  // Consumes the graph: all nodes are dropped afterwards.
  void backward(const Tensor& loss);

  // Vector-Jacobian product: seed gradients for `output` and return the
  // gradient map without touching any tensor's grad buffer and without
  // consuming the graph.
  GradMap vjp(const Tensor& output, std::span<const double> seed);

  void clear();
  std::size_t num_nodes() const { return nodes_.size(); }
  std::uint64_t generation() const { return generation_; }

 private:
  void traverse(const TensorImpl* root, int root_index, GradMap& grads);

  std::vector<OpNode> nodes_;
  std::uint64_t generation_ = 1;
};

// The thread's active graph; ops record onto it unless recording is paused.
std::shared_ptr<Graph> active_graph();
bool recording_enabled();

// Pauses recording for the current thread (forward passes in eval loops,
// solver internals in adjoint mode).
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

// Swaps in a fresh graph for the current thread; used for nested
// vector-Jacobian products inside the adjoint solver.
class GraphScope {
 public:
  GraphScope();
  ~GraphScope();
  GraphScope(const GraphScope&) = delete;
  GraphScope& operator=(const GraphScope&) = delete;

  const std::shared_ptr<Graph>& graph() const { return graph_; }

 private:
  std::shared_ptr<Graph> graph_;
  std::shared_ptr<Graph> prev_;
  bool prev_recording_;
};

// Convenience wrapper for Graph::backward on the graph that recorded `loss`.
void backward(const Tensor& loss);

// True when gradients should flow into this tensor: either a requires_grad
// leaf or an intermediate produced on a still-live graph generation.
bool tensor_needs_grad(const std::shared_ptr<TensorImpl>& t);

// Zero-initialized gradient accumulator for `t` within one traversal.
std::vector<double>& grad_accum(GradMap& grads, const std::shared_ptr<TensorImpl>& t);

}  // namespace lssl
