#include "lssl/graph.hpp"

#include <algorithm>

namespace lssl {

namespace {
thread_local std::shared_ptr<Graph> t_active;
thread_local bool t_recording = true;
}  // namespace

std::shared_ptr<Graph> active_graph() {
  if (!t_active) t_active = std::make_shared<Graph>();
  return t_active;
}

bool recording_enabled() { return t_recording; }

NoGradGuard::NoGradGuard() : prev_(t_recording) { t_recording = false; }
NoGradGuard::~NoGradGuard() { t_recording = prev_; }

GraphScope::GraphScope()
    : graph_(std::make_shared<Graph>()), prev_(t_active), prev_recording_(t_recording) {
  t_active = graph_;
  t_recording = true;
}

GraphScope::~GraphScope() {
  t_active = prev_;
  t_recording = prev_recording_;
}

int Graph::record(OpNode node) {
  node.output->produced_by_op = true;
  node.output->owner = weak_from_this();
  node.output->owner_generation = generation_;
  node.output->node_index = static_cast<int>(nodes_.size());
  nodes_.push_back(std::move(node));
  return nodes_.back().output->node_index;
}

void Graph::traverse(const TensorImpl* root, int root_index, GradMap& grads) {
  for (int i = root_index; i >= 0; --i) {
    OpNode& node = nodes_[static_cast<std::size_t>(i)];
    auto it = grads.find(node.output.get());
    if (it == grads.end()) continue;  // output does not influence the root
    node.backward(it->second, grads);
  }
  (void)root;
}

void Graph::backward(const Tensor& loss) {
  const auto& impl = loss.impl();
  if (impl->data.size() != 1) {
    throw std::invalid_argument("backward: loss must be a single-element tensor, shape is " +
                                shape_str(impl->shape));
  }
  auto owner = impl->owner.lock();
  if (!impl->produced_by_op || owner.get() != this || impl->owner_generation != generation_) {
    throw std::invalid_argument("backward: loss is detached from the active graph");
  }
  GradMap grads;
  grads[impl.get()] = {1.0};
  {
    NoGradGuard pause;
    traverse(impl.get(), impl->node_index, grads);
  }
  for (auto& [ti, g] : grads) {
    if (!ti->requires_grad) continue;
    if (ti->produced_by_op) {
      // Live intermediates of this graph already propagated; stale outputs of
      // dead graphs behave as leaves.
      auto o = ti->owner.lock();
      if (o.get() == this && ti->owner_generation == generation_) continue;
    }
    auto* mut = const_cast<TensorImpl*>(ti);
    if (mut->grad.empty()) {
      mut->grad = std::move(g);
    } else {
      for (std::size_t k = 0; k < g.size(); ++k) mut->grad[k] += g[k];
    }
  }
  clear();
}

GradMap Graph::vjp(const Tensor& output, std::span<const double> seed) {
  const auto& impl = output.impl();
  auto owner = impl->owner.lock();
  if (!impl->produced_by_op || owner.get() != this || impl->owner_generation != generation_) {
    throw std::invalid_argument("vjp: output is detached from this graph");
  }
  if (seed.size() != impl->data.size()) {
    throw std::invalid_argument("vjp: seed length does not match output size");
  }
  GradMap grads;
  grads[impl.get()] = std::vector<double>(seed.begin(), seed.end());
  {
    NoGradGuard pause;
    traverse(impl.get(), impl->node_index, grads);
  }
  return grads;
}

void Graph::clear() {
  nodes_.clear();
  ++generation_;
}

void backward(const Tensor& loss) {
  auto owner = loss.impl()->owner.lock();
  if (!owner) {
    throw std::invalid_argument("backward: loss is detached (no recorded graph)");
  }
  owner->backward(loss);
}

bool tensor_needs_grad(const std::shared_ptr<TensorImpl>& t) {
  if (t->requires_grad) return true;
  if (!t->produced_by_op) return false;
  auto g = t->owner.lock();
  return g && g->generation() == t->owner_generation;
}

std::vector<double>& grad_accum(GradMap& grads, const std::shared_ptr<TensorImpl>& t) {
  auto& g = grads[t.get()];
  if (g.empty()) g.assign(t->data.size(), 0.0);
  return g;
}

}  // namespace lssl
