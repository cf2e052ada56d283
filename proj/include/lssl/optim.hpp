// AdamW with decoupled weight decay, and a one-cycle learning-rate schedule
// (linear-in-phase cosine warmup then cosine annealing).
#pragma once

#include <cstdint>
#include <vector>

#include "lssl/tensor.hpp"

namespace lssl {

struct AdamWConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
};

// Holds first/second moment buffers per parameter. Parameters are identified by
// position; the list passed to step() must match the one given at construction.
class AdamW {
 public:
  AdamW(std::vector<Tensor> params, AdamWConfig config);

  // Applies one update using each parameter's accumulated gradient, then the
  // caller is expected to zero gradients before the next backward pass.
  void step();
  void zero_grad();

  void set_lr(double lr) { config_.lr = lr; }
  double lr() const { return config_.lr; }
  std::int64_t step_count() const { return t_; }
  const std::vector<Tensor>& params() const { return params_; }

 private:
  std::vector<Tensor> params_;
  AdamWConfig config_;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
  std::int64_t t_ = 0;
};

// Rescales every accumulated gradient so the global L2 norm is at most
// max_norm. Returns the norm before clipping.
double clip_grad_norm(std::vector<Tensor> params, double max_norm);

// One-cycle schedule over a fixed number of steps: cosine ramp from
// max_lr/div_factor up to max_lr across the warmup fraction, then cosine
// anneal down to max_lr/final_div_factor.
struct OneCycleSchedule {
  double max_lr = 1e-3;
  std::int64_t total_steps = 1;
  double pct_start = 0.3;
  double div_factor = 25.0;
  double final_div_factor = 1e4;

  // step is 0-based; values past total_steps-1 clamp to the final rate.
  double lr_at(std::int64_t step) const;
};

}  // namespace lssl
