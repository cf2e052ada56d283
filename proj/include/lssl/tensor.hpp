#pragma once

#include <cstddef>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

namespace lssl {

class Graph;

// Thrown when an operation produces or receives NaN/Inf.
class NumericsError : public std::runtime_error {
 public:
  explicit NumericsError(const std::string& what) : std::runtime_error(what) {}
};

// Thrown on ODE solver failures (step underflow, max steps, bad stages).
class SolverError : public std::runtime_error {
 public:
  explicit SolverError(const std::string& what) : std::runtime_error(what) {}
};

using Shape = std::vector<int>;

inline std::size_t numel(const Shape& shape) {
  std::size_t n = 1;
  for (int d : shape) n *= static_cast<std::size_t>(d);
  return n;
}

std::string shape_str(const Shape& shape);

struct TensorImpl {
  Shape shape;
  std::vector<double> data;
  // Lazily allocated; empty means "no gradient accumulated yet".
  std::vector<double> grad;
  bool requires_grad = false;

  // Set when an op recorded this tensor as its output.
  bool produced_by_op = false;
  std::weak_ptr<Graph> owner;
  std::uint64_t owner_generation = 0;
  int node_index = -1;
};

// Dense n-dimensional array of 64-bit floats, row-major. Copies share the
// underlying buffer; ops never mutate their inputs, and in-place mutation
// (optimizer updates) goes through data().
class Tensor {
 public:
  Tensor() : impl_(std::make_shared<TensorImpl>()) {}

  Tensor(Shape shape, std::vector<double> values, bool requires_grad = false);

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  const Shape& shape() const { return impl_->shape; }
  int dim(int i) const { return impl_->shape.at(static_cast<std::size_t>(i)); }
  int ndim() const { return static_cast<int>(impl_->shape.size()); }
  std::size_t size() const { return impl_->data.size(); }

  std::vector<double>& data() { return impl_->data; }
  const std::vector<double>& data() const { return impl_->data; }

  double value() const;  // single-element tensors only
  double at(std::size_t i) const { return impl_->data.at(i); }

  bool requires_grad() const { return impl_->requires_grad; }
  Tensor& set_requires_grad(bool on) {
    impl_->requires_grad = on;
    return *this;
  }

  // True when no recorded op produced this tensor on a live graph.
  bool is_leaf() const;

  bool has_grad() const { return !impl_->grad.empty(); }
  // Accumulated gradient; zeros if backward never reached this tensor.
  std::vector<double> grad_or_zeros() const;
  std::vector<double>& grad_buffer();
  void zero_grad() { impl_->grad.clear(); }

  // Deep copy of values; detached from any graph, requires_grad off.
  Tensor clone_detached() const;
  // Same buffer, viewed without graph history.
  Tensor detached_view() const;

  void check_finite(const std::string& context) const;

  std::shared_ptr<TensorImpl>& impl() { return impl_; }
  const std::shared_ptr<TensorImpl>& impl() const { return impl_; }

 private:
  std::shared_ptr<TensorImpl> impl_;
};

bool same_shape(const Tensor& a, const Tensor& b);

}  // namespace lssl
