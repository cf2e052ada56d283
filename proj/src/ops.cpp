#include "lssl/ops.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstring>

#include "lssl/graph.hpp"

namespace lssl {

namespace {

using MatRM = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapM = Eigen::Map<MatRM>;
using MapCM = Eigen::Map<const MatRM>;

bool needs_grad(const std::shared_ptr<TensorImpl>& t) { return tensor_needs_grad(t); }

bool any_needs_grad(const std::vector<std::shared_ptr<TensorImpl>>& inputs) {
  for (const auto& t : inputs) {
    if (needs_grad(t)) return true;
  }
  return false;
}

std::vector<double>& acc(GradMap& grads, const std::shared_ptr<TensorImpl>& t) {
  return grad_accum(grads, t);
}

void finite_or_throw(const Tensor& t, const char* op) {
  MapCM m(t.data().data(), 1, static_cast<Eigen::Index>(t.size()));
  if (!m.allFinite()) throw NumericsError(std::string(op) + ": produced non-finite values");
}

template <typename Backward>
Tensor make_op(const char* op, std::vector<Tensor> inputs, Tensor out, Backward&& bw) {
  finite_or_throw(out, op);
  std::vector<std::shared_ptr<TensorImpl>> impls;
  impls.reserve(inputs.size());
  for (auto& t : inputs) impls.push_back(t.impl());
  if (recording_enabled() && any_needs_grad(impls)) {
    OpNode node;
    node.op = op;
    node.inputs = impls;
    node.output = out.impl();
    node.backward = std::forward<Backward>(bw);
    active_graph()->record(std::move(node));
  }
  return out;
}

enum class EwKind { Add, Sub, Mul };

Tensor elementwise_binary(const char* name, EwKind kind, const Tensor& a, const Tensor& b) {
  const bool a_scalar = a.size() == 1;
  const bool b_scalar = b.size() == 1;
  if (!a_scalar && !b_scalar && !same_shape(a, b)) {
    throw std::invalid_argument(std::string(name) + ": shapes " + shape_str(a.shape()) + " and " +
                                shape_str(b.shape()) + " are not broadcast-compatible");
  }
  const Tensor& big = b_scalar ? a : b;
  Tensor out = Tensor::zeros(big.shape());
  const auto& av = a.data();
  const auto& bv = b.data();
  auto& ov = out.data();
  const std::size_t n = ov.size();
  for (std::size_t i = 0; i < n; ++i) {
    const double x = av[a_scalar ? 0 : i];
    const double y = bv[b_scalar ? 0 : i];
    switch (kind) {
      case EwKind::Add: ov[i] = x + y; break;
      case EwKind::Sub: ov[i] = x - y; break;
      case EwKind::Mul: ov[i] = x * y; break;
    }
  }
  auto ai = a.impl();
  auto bi = b.impl();
  return make_op(name, {a, b}, std::move(out),
                 [ai, bi, a_scalar, b_scalar, kind](const std::vector<double>& g, GradMap& grads) {
                   if (needs_grad(ai)) {
                     auto& ga = acc(grads, ai);
                     for (std::size_t i = 0; i < g.size(); ++i) {
                       double d = g[i];
                       if (kind == EwKind::Mul) d *= bi->data[b_scalar ? 0 : i];
                       ga[a_scalar ? 0 : i] += d;
                     }
                   }
                   if (needs_grad(bi)) {
                     auto& gb = acc(grads, bi);
                     for (std::size_t i = 0; i < g.size(); ++i) {
                       double d = g[i];
                       if (kind == EwKind::Sub) d = -d;
                       if (kind == EwKind::Mul) d = g[i] * ai->data[a_scalar ? 0 : i];
                       gb[b_scalar ? 0 : i] += d;
                     }
                   }
                 });
}

template <typename Fwd, typename Der>
Tensor elementwise_unary(const char* name, const Tensor& a, Fwd fwd, Der der_from_xy) {
  Tensor out = Tensor::zeros(a.shape());
  const auto& av = a.data();
  auto& ov = out.data();
  for (std::size_t i = 0; i < av.size(); ++i) ov[i] = fwd(av[i]);
  auto ai = a.impl();
  auto oi = out.impl();
  return make_op(name, {a}, std::move(out), [ai, oi, der_from_xy](const std::vector<double>& g, GradMap& grads) {
    if (!needs_grad(ai)) return;
    auto& ga = acc(grads, ai);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * der_from_xy(ai->data[i], oi->data[i]);
  });
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.ndim() != 2 || b.ndim() != 2) {
    throw std::invalid_argument("matmul: expects 2-D tensors, got " + shape_str(a.shape()) + " and " +
                                shape_str(b.shape()));
  }
  const int m = a.dim(0), k = a.dim(1), k2 = b.dim(0), n = b.dim(1);
  if (k != k2) {
    throw std::invalid_argument("matmul: inner dimensions disagree, " + shape_str(a.shape()) + " vs " +
                                shape_str(b.shape()));
  }
  Tensor out = Tensor::zeros({m, n});
  MapCM A(a.data().data(), m, k);
  MapCM B(b.data().data(), k, n);
  MapM O(out.data().data(), m, n);
  O.noalias() = A * B;
  auto ai = a.impl();
  auto bi = b.impl();
  return make_op("matmul", {a, b}, std::move(out),
                 [ai, bi, m, k, n](const std::vector<double>& g, GradMap& grads) {
                   MapCM G(g.data(), m, n);
                   MapCM A(ai->data.data(), m, k);
                   MapCM B(bi->data.data(), k, n);
                   if (needs_grad(ai)) {
                     MapM GA(acc(grads, ai).data(), m, k);
                     GA.noalias() += G * B.transpose();
                   }
                   if (needs_grad(bi)) {
                     MapM GB(acc(grads, bi).data(), k, n);
                     GB.noalias() += A.transpose() * G;
                   }
                 });
}

Tensor add(const Tensor& a, const Tensor& b) { return elementwise_binary("add", EwKind::Add, a, b); }
Tensor sub(const Tensor& a, const Tensor& b) { return elementwise_binary("sub", EwKind::Sub, a, b); }
Tensor mul(const Tensor& a, const Tensor& b) { return elementwise_binary("mul", EwKind::Mul, a, b); }

Tensor neg(const Tensor& a) {
  return elementwise_unary("neg", a, [](double x) { return -x; }, [](double, double) { return -1.0; });
}

Tensor scale(const Tensor& a, double c) {
  return elementwise_unary("scale", a, [c](double x) { return c * x; }, [c](double, double) { return c; });
}

Tensor lincomb(const std::vector<std::pair<double, Tensor>>& terms) {
  if (terms.empty()) throw std::invalid_argument("lincomb: needs at least one term");
  const Shape& shape = terms.front().second.shape();
  Tensor out = Tensor::zeros(shape);
  auto& ov = out.data();
  for (const auto& [c, t] : terms) {
    if (t.shape() != shape) {
      throw std::invalid_argument("lincomb: mismatched term shapes " + shape_str(shape) + " vs " +
                                  shape_str(t.shape()));
    }
    const auto& tv = t.data();
    for (std::size_t i = 0; i < ov.size(); ++i) ov[i] += c * tv[i];
  }
  std::vector<Tensor> inputs;
  std::vector<double> coeffs;
  inputs.reserve(terms.size());
  for (const auto& [c, t] : terms) {
    inputs.push_back(t);
    coeffs.push_back(c);
  }
  std::vector<std::shared_ptr<TensorImpl>> impls;
  for (auto& t : inputs) impls.push_back(t.impl());
  return make_op("lincomb", std::move(inputs), std::move(out),
                 [impls, coeffs](const std::vector<double>& g, GradMap& grads) {
                   for (std::size_t j = 0; j < impls.size(); ++j) {
                     if (!needs_grad(impls[j])) continue;
                     auto& gt = acc(grads, impls[j]);
                     const double c = coeffs[j];
                     for (std::size_t i = 0; i < g.size(); ++i) gt[i] += c * g[i];
                   }
                 });
}

Tensor tanh(const Tensor& a) {
  return elementwise_unary("tanh", a, [](double x) { return std::tanh(x); },
                           [](double, double y) { return 1.0 - y * y; });
}

Tensor sigmoid(const Tensor& a) {
  return elementwise_unary("sigmoid", a, [](double x) { return 1.0 / (1.0 + std::exp(-x)); },
                           [](double, double y) { return y * (1.0 - y); });
}

Tensor leaky_relu(const Tensor& a, double slope) {
  return elementwise_unary("leaky_relu", a, [slope](double x) { return x > 0.0 ? x : slope * x; },
                           [slope](double x, double) { return x > 0.0 ? 1.0 : slope; });
}

Tensor square(const Tensor& a) {
  return elementwise_unary("square", a, [](double x) { return x * x; },
                           [](double x, double) { return 2.0 * x; });
}

Tensor sum(const Tensor& a) {
  double s = 0.0;
  for (double v : a.data()) s += v;
  Tensor out = Tensor::scalar(s);
  auto ai = a.impl();
  return make_op("sum", {a}, std::move(out), [ai](const std::vector<double>& g, GradMap& grads) {
    if (!needs_grad(ai)) return;
    auto& ga = acc(grads, ai);
    for (double& v : ga) v += g[0];
  });
}

Tensor mean(const Tensor& a) {
  double s = 0.0;
  for (double v : a.data()) s += v;
  const double inv_n = 1.0 / static_cast<double>(a.size());
  Tensor out = Tensor::scalar(s * inv_n);
  auto ai = a.impl();
  return make_op("mean", {a}, std::move(out), [ai, inv_n](const std::vector<double>& g, GradMap& grads) {
    if (!needs_grad(ai)) return;
    auto& ga = acc(grads, ai);
    for (double& v : ga) v += g[0] * inv_n;
  });
}

Tensor reshape(const Tensor& a, Shape new_shape) {
  if (numel(new_shape) != a.size()) {
    throw std::invalid_argument("reshape: " + shape_str(a.shape()) + " to " + shape_str(new_shape) +
                                " changes element count");
  }
  Tensor out(new_shape, a.data());
  auto ai = a.impl();
  return make_op("reshape", {a}, std::move(out), [ai](const std::vector<double>& g, GradMap& grads) {
    if (!needs_grad(ai)) return;
    auto& ga = acc(grads, ai);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
  });
}

Tensor add_bias(const Tensor& x, const Tensor& bias) {
  if (x.ndim() != 2 || bias.ndim() != 1 || bias.dim(0) != x.dim(1)) {
    throw std::invalid_argument("add_bias: expects [b x n] and [n], got " + shape_str(x.shape()) + " and " +
                                shape_str(bias.shape()));
  }
  const int b = x.dim(0), n = x.dim(1);
  Tensor out = Tensor::zeros(x.shape());
  const auto& xv = x.data();
  const auto& bv = bias.data();
  auto& ov = out.data();
  for (int r = 0; r < b; ++r) {
    for (int j = 0; j < n; ++j) ov[static_cast<std::size_t>(r) * n + j] = xv[static_cast<std::size_t>(r) * n + j] + bv[j];
  }
  auto xi = x.impl();
  auto bi = bias.impl();
  return make_op("add_bias", {x, bias}, std::move(out),
                 [xi, bi, b, n](const std::vector<double>& g, GradMap& grads) {
                   if (needs_grad(xi)) {
                     auto& gx = acc(grads, xi);
                     for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
                   }
                   if (needs_grad(bi)) {
                     auto& gb = acc(grads, bi);
                     for (int r = 0; r < b; ++r) {
                       for (int j = 0; j < n; ++j) gb[j] += g[static_cast<std::size_t>(r) * n + j];
                     }
                   }
                 });
}

Tensor concat_cols(const Tensor& a, const Tensor& b) {
  if (a.ndim() != 2 || b.ndim() != 2 || a.dim(0) != b.dim(0)) {
    throw std::invalid_argument("concat_cols: expects matching row counts, got " + shape_str(a.shape()) +
                                " and " + shape_str(b.shape()));
  }
  const int rows = a.dim(0), p = a.dim(1), q = b.dim(1);
  Tensor out = Tensor::zeros({rows, p + q});
  const auto& av = a.data();
  const auto& bv = b.data();
  auto& ov = out.data();
  for (int r = 0; r < rows; ++r) {
    std::memcpy(&ov[static_cast<std::size_t>(r) * (p + q)], &av[static_cast<std::size_t>(r) * p],
                sizeof(double) * static_cast<std::size_t>(p));
    std::memcpy(&ov[static_cast<std::size_t>(r) * (p + q) + p], &bv[static_cast<std::size_t>(r) * q],
                sizeof(double) * static_cast<std::size_t>(q));
  }
  auto ai = a.impl();
  auto bi = b.impl();
  return make_op("concat_cols", {a, b}, std::move(out),
                 [ai, bi, rows, p, q](const std::vector<double>& g, GradMap& grads) {
                   if (needs_grad(ai)) {
                     auto& ga = acc(grads, ai);
                     for (int r = 0; r < rows; ++r) {
                       for (int j = 0; j < p; ++j) {
                         ga[static_cast<std::size_t>(r) * p + j] += g[static_cast<std::size_t>(r) * (p + q) + j];
                       }
                     }
                   }
                   if (needs_grad(bi)) {
                     auto& gb = acc(grads, bi);
                     for (int r = 0; r < rows; ++r) {
                       for (int j = 0; j < q; ++j) {
                         gb[static_cast<std::size_t>(r) * q + j] += g[static_cast<std::size_t>(r) * (p + q) + p + j];
                       }
                     }
                   }
                 });
}

Tensor slice_cols(const Tensor& x, int begin, int len) {
  if (x.ndim() != 2 || begin < 0 || len <= 0 || begin + len > x.dim(1)) {
    throw std::invalid_argument("slice_cols: bad slice [" + std::to_string(begin) + ", " +
                                std::to_string(begin + len) + ") of " + shape_str(x.shape()));
  }
  const int rows = x.dim(0), n = x.dim(1);
  Tensor out = Tensor::zeros({rows, len});
  const auto& xv = x.data();
  auto& ov = out.data();
  for (int r = 0; r < rows; ++r) {
    std::memcpy(&ov[static_cast<std::size_t>(r) * len], &xv[static_cast<std::size_t>(r) * n + begin],
                sizeof(double) * static_cast<std::size_t>(len));
  }
  auto xi = x.impl();
  return make_op("slice_cols", {x}, std::move(out),
                 [xi, rows, n, begin, len](const std::vector<double>& g, GradMap& grads) {
                   if (!needs_grad(xi)) return;
                   auto& gx = acc(grads, xi);
                   for (int r = 0; r < rows; ++r) {
                     for (int j = 0; j < len; ++j) {
                       gx[static_cast<std::size_t>(r) * n + begin + j] += g[static_cast<std::size_t>(r) * len + j];
                     }
                   }
                 });
}

Tensor scale_rows(const Tensor& x, const std::vector<double>& factors) {
  if (x.ndim() != 2 || static_cast<int>(factors.size()) != x.dim(0)) {
    throw std::invalid_argument("scale_rows: factor count " + std::to_string(factors.size()) +
                                " does not match rows of " + shape_str(x.shape()));
  }
  const int rows = x.dim(0), n = x.dim(1);
  Tensor out = Tensor::zeros(x.shape());
  const auto& xv = x.data();
  auto& ov = out.data();
  for (int r = 0; r < rows; ++r) {
    const double f = factors[static_cast<std::size_t>(r)];
    for (int j = 0; j < n; ++j) ov[static_cast<std::size_t>(r) * n + j] = f * xv[static_cast<std::size_t>(r) * n + j];
  }
  auto xi = x.impl();
  return make_op("scale_rows", {x}, std::move(out),
                 [xi, rows, n, factors](const std::vector<double>& g, GradMap& grads) {
                   if (!needs_grad(xi)) return;
                   auto& gx = acc(grads, xi);
                   for (int r = 0; r < rows; ++r) {
                     const double f = factors[static_cast<std::size_t>(r)];
                     for (int j = 0; j < n; ++j) gx[static_cast<std::size_t>(r) * n + j] += f * g[static_cast<std::size_t>(r) * n + j];
                   }
                 });
}

Tensor mse(const Tensor& a, const Tensor& b) {
  if (!same_shape(a, b)) {
    throw std::invalid_argument("mse: shapes " + shape_str(a.shape()) + " and " + shape_str(b.shape()) +
                                " differ");
  }
  const auto& av = a.data();
  const auto& bv = b.data();
  double s = 0.0;
  for (std::size_t i = 0; i < av.size(); ++i) {
    const double d = av[i] - bv[i];
    s += d * d;
  }
  const double inv_n = 1.0 / static_cast<double>(av.size());
  Tensor out = Tensor::scalar(s * inv_n);
  auto ai = a.impl();
  auto bi = b.impl();
  return make_op("mse", {a, b}, std::move(out), [ai, bi, inv_n](const std::vector<double>& g, GradMap& grads) {
    const double c = 2.0 * inv_n * g[0];
    if (needs_grad(ai)) {
      auto& ga = acc(grads, ai);
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += c * (ai->data[i] - bi->data[i]);
    }
    if (needs_grad(bi)) {
      auto& gb = acc(grads, bi);
      for (std::size_t i = 0; i < gb.size(); ++i) gb[i] -= c * (ai->data[i] - bi->data[i]);
    }
  });
}

namespace {
// Norm floor for the cosine denominators. The gradient scales with 1/|v|, so
// the floor caps it; 1e-3 keeps the cap within a few orders of the typical
// loss gradients, which matters when a zero-initialized trajectory net puts
// early displacements exactly at the origin. Above the floor the value and
// gradient are the exact cosine.
constexpr double kCosEps = 1e-3;
}

Tensor cosine_similarity(const Tensor& a, const Tensor& b) {
  int rows = 0, d = 0;
  bool b_broadcast = false;
  if (a.ndim() == 1 && b.ndim() == 1) {
    if (a.dim(0) != b.dim(0)) {
      throw std::invalid_argument("cosine_similarity: lengths differ, " + shape_str(a.shape()) + " vs " +
                                  shape_str(b.shape()));
    }
    rows = 1;
    d = a.dim(0);
  } else if (a.ndim() == 2 && b.ndim() == 2 && same_shape(a, b)) {
    rows = a.dim(0);
    d = a.dim(1);
  } else if (a.ndim() == 2 && b.ndim() == 1 && b.dim(0) == a.dim(1)) {
    rows = a.dim(0);
    d = a.dim(1);
    b_broadcast = true;
  } else {
    throw std::invalid_argument("cosine_similarity: unsupported shapes " + shape_str(a.shape()) + " and " +
                                shape_str(b.shape()));
  }

  const bool scalar_out = (a.ndim() == 1);
  Tensor out = scalar_out ? Tensor::zeros({1}) : Tensor::zeros({rows, 1});
  const auto& av = a.data();
  const auto& bv = b.data();
  auto& ov = out.data();
  for (int r = 0; r < rows; ++r) {
    const double* ar = &av[static_cast<std::size_t>(r) * d];
    const double* br = &bv[b_broadcast ? 0 : static_cast<std::size_t>(r) * d];
    double dot = 0.0, na2 = 0.0, nb2 = 0.0;
    for (int j = 0; j < d; ++j) {
      dot += ar[j] * br[j];
      na2 += ar[j] * ar[j];
      nb2 += br[j] * br[j];
    }
    const double na = std::max(std::sqrt(na2), kCosEps);
    const double nb = std::max(std::sqrt(nb2), kCosEps);
    ov[static_cast<std::size_t>(r)] = dot / (na * nb);
  }
  auto ai = a.impl();
  auto bi = b.impl();
  return make_op("cosine_similarity", {a, b}, std::move(out),
                 [ai, bi, rows, d, b_broadcast](const std::vector<double>& g, GradMap& grads) {
                   const bool wa = needs_grad(ai);
                   const bool wb = needs_grad(bi);
                   if (!wa && !wb) return;
                   std::vector<double>* ga = wa ? &acc(grads, ai) : nullptr;
                   std::vector<double>* gb = wb ? &acc(grads, bi) : nullptr;
                   for (int r = 0; r < rows; ++r) {
                     const double* ar = &ai->data[static_cast<std::size_t>(r) * d];
                     const double* br = &bi->data[b_broadcast ? 0 : static_cast<std::size_t>(r) * d];
                     double dot = 0.0, na2 = 0.0, nb2 = 0.0;
                     for (int j = 0; j < d; ++j) {
                       dot += ar[j] * br[j];
                       na2 += ar[j] * ar[j];
                       nb2 += br[j] * br[j];
                     }
                     const double na_raw = std::sqrt(na2);
                     const double nb_raw = std::sqrt(nb2);
                     const double na = std::max(na_raw, kCosEps);
                     const double nb = std::max(nb_raw, kCosEps);
                     const double inv = 1.0 / (na * nb);
                     const double c = dot * inv;
                     const double gr = g[static_cast<std::size_t>(r)];
                     if (wa) {
                       double* gar = &(*ga)[static_cast<std::size_t>(r) * d];
                       if (na_raw > kCosEps) {
                         const double k = c / na2;
                         for (int j = 0; j < d; ++j) gar[j] += gr * (br[j] * inv - k * ar[j]);
                       } else {
                         for (int j = 0; j < d; ++j) gar[j] += gr * br[j] * inv;
                       }
                     }
                     if (wb) {
                       double* gbr = &(*gb)[b_broadcast ? 0 : static_cast<std::size_t>(r) * d];
                       if (nb_raw > kCosEps) {
                         const double k = c / nb2;
                         for (int j = 0; j < d; ++j) gbr[j] += gr * (ar[j] * inv - k * br[j]);
                       } else {
                         for (int j = 0; j < d; ++j) gbr[j] += gr * ar[j] * inv;
                       }
                     }
                   }
                 });
}

Tensor cross_entropy(const Tensor& logits, const std::vector<int>& labels) {
  if (logits.ndim() != 2) {
    throw std::invalid_argument("cross_entropy: expects [b x k] logits, got " + shape_str(logits.shape()));
  }
  const int b = logits.dim(0), k = logits.dim(1);
  if (static_cast<int>(labels.size()) != b) {
    throw std::invalid_argument("cross_entropy: label count " + std::to_string(labels.size()) +
                                " does not match batch " + std::to_string(b));
  }
  auto probs = std::make_shared<std::vector<double>>(softmax_rows(logits));
  const auto& lv = logits.data();
  double loss = 0.0;
  for (int r = 0; r < b; ++r) {
    const int y = labels[static_cast<std::size_t>(r)];
    if (y < 0 || y >= k) throw std::invalid_argument("cross_entropy: label out of range");
    loss -= std::log(std::max((*probs)[static_cast<std::size_t>(r) * k + y], 1e-300));
  }
  (void)lv;
  Tensor out = Tensor::scalar(loss / b);
  auto li = logits.impl();
  return make_op("cross_entropy", {logits}, std::move(out),
                 [li, probs, labels, b, k](const std::vector<double>& g, GradMap& grads) {
                   if (!needs_grad(li)) return;
                   auto& gl = acc(grads, li);
                   const double c = g[0] / b;
                   for (int r = 0; r < b; ++r) {
                     for (int j = 0; j < k; ++j) {
                       double p = (*probs)[static_cast<std::size_t>(r) * k + j];
                       if (j == labels[static_cast<std::size_t>(r)]) p -= 1.0;
                       gl[static_cast<std::size_t>(r) * k + j] += c * p;
                     }
                   }
                 });
}

std::vector<double> softmax_rows(const Tensor& logits) {
  if (logits.ndim() != 2) {
    throw std::invalid_argument("softmax_rows: expects [b x k], got " + shape_str(logits.shape()));
  }
  const int b = logits.dim(0), k = logits.dim(1);
  const auto& lv = logits.data();
  std::vector<double> probs(lv.size());
  for (int r = 0; r < b; ++r) {
    const double* row = &lv[static_cast<std::size_t>(r) * k];
    double m = row[0];
    for (int j = 1; j < k; ++j) m = std::max(m, row[j]);
    double z = 0.0;
    for (int j = 0; j < k; ++j) {
      const double e = std::exp(row[j] - m);
      probs[static_cast<std::size_t>(r) * k + j] = e;
      z += e;
    }
    for (int j = 0; j < k; ++j) probs[static_cast<std::size_t>(r) * k + j] /= z;
  }
  return probs;
}

}  // namespace lssl
