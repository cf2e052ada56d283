#pragma once

#include <utility>
#include <vector>

#include "lssl/tensor.hpp"

namespace lssl {

// Differentiable dense-tensor ops. Every op validates shapes, rejects
// non-finite outputs, and registers a backward closure on the active graph
// when recording is enabled and an input participates in gradients.
// Broadcasting is limited to single-element-with-tensor and equal shapes.

Tensor matmul(const Tensor& a, const Tensor& b);  // [m x k] * [k x n]

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor neg(const Tensor& a);
Tensor scale(const Tensor& a, double c);

// out = sum_i coeffs[i] * terms[i]; all terms share one shape. One graph
// node regardless of arity, which keeps Runge-Kutta stage updates cheap.
Tensor lincomb(const std::vector<std::pair<double, Tensor>>& terms);

Tensor tanh(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor leaky_relu(const Tensor& a, double slope = 0.01);
Tensor square(const Tensor& a);

Tensor sum(const Tensor& a);   // scalar
Tensor mean(const Tensor& a);  // scalar

Tensor reshape(const Tensor& a, Shape new_shape);

// 2-D helpers used by the dense layers and the recurrent cell.
Tensor add_bias(const Tensor& x, const Tensor& bias);        // [b x n] + [n]
Tensor concat_cols(const Tensor& a, const Tensor& b);        // [b x p],[b x q] -> [b x (p+q)]
Tensor slice_cols(const Tensor& x, int begin, int len);      // [b x n] -> [b x len]
// Row i scaled by factors[i]; factors are data (no gradient through them).
Tensor scale_rows(const Tensor& x, const std::vector<double>& factors);

// Mean of squared differences over all elements.
Tensor mse(const Tensor& a, const Tensor& b);

// <a,b> / (max(|a|,eps) * max(|b|,eps)), eps = 1e-8. For 1-D inputs returns
// a scalar; for a [b x d] first argument the cosine is taken per row against
// either a matching [b x d] or a broadcast 1-D [d], giving a [b x 1] column.
Tensor cosine_similarity(const Tensor& a, const Tensor& b);

// Mean over rows of (logsumexp(logits_r) - logits_r[label_r]).
Tensor cross_entropy(const Tensor& logits, const std::vector<int>& labels);

// Row-wise softmax probabilities, computed outside the graph.
std::vector<double> softmax_rows(const Tensor& logits);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator-(const Tensor& a) { return neg(a); }

}  // namespace lssl
