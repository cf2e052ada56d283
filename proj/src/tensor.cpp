#include "lssl/tensor.hpp"

#include <cmath>
#include <sstream>

#include "lssl/graph.hpp"

namespace lssl {

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

Tensor::Tensor(Shape shape, std::vector<double> values, bool requires_grad)
    : impl_(std::make_shared<TensorImpl>()) {
  for (int d : shape) {
    if (d <= 0) throw std::invalid_argument("Tensor: shape dims must be positive, got " + shape_str(shape));
  }
  if (numel(shape) != values.size()) {
    throw std::invalid_argument("Tensor: shape " + shape_str(shape) + " does not match data length " +
                                std::to_string(values.size()));
  }
  impl_->shape = std::move(shape);
  impl_->data = std::move(values);
  impl_->requires_grad = requires_grad;
  check_finite("Tensor()");
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  return Tensor(std::move(shape), std::vector<double>(numel(shape)), requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  std::vector<double> v(numel(shape), value);
  return Tensor(std::move(shape), std::move(v), requires_grad);
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return Tensor({1}, {value}, requires_grad);
}

double Tensor::value() const {
  if (impl_->data.size() != 1) {
    throw std::invalid_argument("Tensor::value: expected a single element, shape is " + shape_str(impl_->shape));
  }
  return impl_->data[0];
}

bool Tensor::is_leaf() const {
  if (!impl_->produced_by_op) return true;
  auto g = impl_->owner.lock();
  return !g || g->generation() != impl_->owner_generation;
}

std::vector<double> Tensor::grad_or_zeros() const {
  if (impl_->grad.empty()) return std::vector<double>(impl_->data.size(), 0.0);
  return impl_->grad;
}

std::vector<double>& Tensor::grad_buffer() {
  if (impl_->grad.empty()) impl_->grad.assign(impl_->data.size(), 0.0);
  return impl_->grad;
}

Tensor Tensor::clone_detached() const {
  return Tensor(impl_->shape, impl_->data, false);
}

Tensor Tensor::detached_view() const {
  Tensor t;
  t.impl() = std::make_shared<TensorImpl>();
  t.impl()->shape = impl_->shape;
  t.impl()->data = impl_->data;  // copy of values, shared history dropped
  t.impl()->requires_grad = false;
  return t;
}

void Tensor::check_finite(const std::string& context) const {
  for (double v : impl_->data) {
    if (!std::isfinite(v)) {
      throw NumericsError(context + ": non-finite value in tensor " + shape_str(impl_->shape));
    }
  }
}

bool same_shape(const Tensor& a, const Tensor& b) { return a.shape() == b.shape(); }

}  // namespace lssl
