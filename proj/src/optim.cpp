#include "lssl/optim.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace lssl {

AdamW::AdamW(std::vector<Tensor> params, AdamWConfig config)
    : params_(std::move(params)), config_(config) {
  if (config_.lr <= 0.0) throw std::invalid_argument("AdamW: lr must be positive");
  if (config_.beta1 < 0.0 || config_.beta1 >= 1.0 || config_.beta2 < 0.0 || config_.beta2 >= 1.0) {
    throw std::invalid_argument("AdamW: betas must lie in [0, 1)");
  }
  m_.reserve(params_.size());
  v_.reserve(params_.size());
  for (const auto& p : params_) {
    m_.emplace_back(p.size(), 0.0);
    v_.emplace_back(p.size(), 0.0);
  }
}

void AdamW::step() {
  ++t_;
  const double bc1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto& p = params_[i].data();
    auto& g = params_[i].grad_buffer();
    auto& m = m_[i];
    auto& v = v_[i];
    for (std::size_t j = 0; j < p.size(); ++j) {
      // Decay is decoupled from the gradient update.
      p[j] -= config_.lr * config_.weight_decay * p[j];
      m[j] = config_.beta1 * m[j] + (1.0 - config_.beta1) * g[j];
      v[j] = config_.beta2 * v[j] + (1.0 - config_.beta2) * g[j] * g[j];
      const double m_hat = m[j] / bc1;
      const double v_hat = v[j] / bc2;
      p[j] -= config_.lr * m_hat / (std::sqrt(v_hat) + config_.eps);
    }
    if (!std::isfinite(p[0])) {
      params_[i].check_finite("AdamW::step parameter update");
    }
  }
}

void AdamW::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

double clip_grad_norm(std::vector<Tensor> params, double max_norm) {
  if (max_norm <= 0.0) throw std::invalid_argument("clip_grad_norm: max_norm must be positive");
  double total = 0.0;
  for (auto& p : params) {
    for (double gv : p.grad_buffer()) total += gv * gv;
  }
  total = std::sqrt(total);
  if (total > max_norm) {
    const double scale = max_norm / total;
    for (auto& p : params) {
      for (double& gv : p.grad_buffer()) gv *= scale;
    }
  }
  return total;
}

namespace {
double cos_anneal(double from, double to, double pct) {
  return to + (from - to) * (1.0 + std::cos(std::numbers::pi * pct)) / 2.0;
}
}  // namespace

double OneCycleSchedule::lr_at(std::int64_t step) const {
  if (total_steps <= 0) throw std::invalid_argument("OneCycleSchedule: total_steps must be positive");
  const double s = static_cast<double>(std::clamp<std::int64_t>(step, 0, total_steps - 1));
  const double warm_steps = pct_start * static_cast<double>(total_steps) - 1.0;
  const double initial_lr = max_lr / div_factor;
  const double min_lr = initial_lr / final_div_factor;
  if (s <= warm_steps && warm_steps > 0.0) {
    return cos_anneal(initial_lr, max_lr, s / warm_steps);
  }
  const double down_span = static_cast<double>(total_steps) - 1.0 - warm_steps;
  if (down_span <= 0.0) return max_lr;
  const double pct = (s - warm_steps) / down_span;
  return cos_anneal(max_lr, min_lr, pct);
}

}  // namespace lssl
