// Adaptive Dormand-Prince 5(4) integration of learned dynamics, batched over
// rows with per-row time horizons, plus adjoint-mode gradients that retrace
// the accepted step sequence in reverse.
#pragma once

#include <functional>
#include <memory>
#include <utility>
#include <vector>

#include "lssl/tensor.hpp"

namespace lssl {

// Vector field u(t, z). `times` carries one physical time per row of z.
// Evaluation must be reentrant and read-only over parameters during a solve.
class Dynamics {
 public:
  virtual ~Dynamics() = default;
  virtual Tensor eval(const std::vector<double>& times, const Tensor& z) const = 0;
  virtual std::vector<Tensor> parameters() const { return {}; }
};

// Adapter for test problems with closed-form fields.
class LambdaDynamics : public Dynamics {
 public:
  using Fn = std::function<Tensor(const std::vector<double>&, const Tensor&)>;
  LambdaDynamics(Fn fn, std::vector<Tensor> params = {})
      : fn_(std::move(fn)), params_(std::move(params)) {}
  Tensor eval(const std::vector<double>& times, const Tensor& z) const override {
    return fn_(times, z);
  }
  std::vector<Tensor> parameters() const override { return params_; }

 private:
  Fn fn_;
  std::vector<Tensor> params_;
};

struct SolverConfig {
  double rtol = 1e-3;
  double atol = 1e-4;
  int max_steps = 10000;
  double safety = 0.9;
  double min_factor = 0.2;
  double max_factor = 10.0;
  // When set, the forward pass records every stage on the active graph so a
  // plain backward() differentiates through the step sequence. Testing oracle
  // for the adjoint path, which is the default.
  bool record_graph = false;
};

// One accepted step of the normalized s-in-[0,1] integration, with the state
// at the step start kept for the reverse sweep.
struct StepRecord {
  double s;
  double h;
  Tensor z_start;
};

struct OdeSolution {
  std::vector<double> times;   // requested evaluation times, ascending
  std::vector<Tensor> states;  // state per requested time; first is z0
  int accepted = 0;
  int rejected = 0;
  int nfev = 0;

  // Retrace data for the adjoint sweep.
  std::vector<double> t0s;
  std::vector<double> t1s;
  std::vector<StepRecord> steps;
};

struct SolverStats {
  long long accepted = 0;
  long long rejected = 0;
  long long nfev = 0;
  long long solves = 0;

  void absorb(const OdeSolution& sol) {
    accepted += sol.accepted;
    rejected += sol.rejected;
    nfev += sol.nfev;
    ++solves;
  }
};

// One explicit 5(4) step at physical time t: returns the 5th-order update and
// the embedded error estimate (difference of the 5th- and 4th-order results).
std::pair<Tensor, Tensor> dopri5_step(const Dynamics& f, double t, const Tensor& z, double h);

// Integrates a single state from t0 to t1 (t1 >= t0; equal times return z0).
OdeSolution integrate(const Dynamics& f, const Tensor& z0, double t0, double t1,
                      const SolverConfig& cfg = {});

// Integrates a batch of rows, each over its own [t0s[i], t1s[i]] horizon, in
// one solver pass over time rescaled to s in [0,1].
OdeSolution integrate_batch(const Dynamics& f, const Tensor& z0s, const std::vector<double>& t0s,
                            const std::vector<double>& t1s, const SolverConfig& cfg = {});

struct AdjointResult {
  Tensor grad_z0;
  // Aligned with f.parameters(), each buffer zero-initialized to its size.
  std::vector<std::vector<double>> grad_params;
};

// Reverse sweep over the recorded step sequence: propagates the adjoint state
// through each accepted step via vector-Jacobian products and accumulates
// parameter gradients along the way.
AdjointResult integrate_adjoint_backward(const Dynamics& f, const OdeSolution& solution,
                                         const Tensor& loss_grad_at_t1);

// Differentiable entry point used by training: solves forward and, unless
// cfg.record_graph is set, registers a single graph node whose backward runs
// the adjoint sweep.
Tensor ode_predict(const std::shared_ptr<const Dynamics>& f, const Tensor& z0s,
                   const std::vector<double>& t0s, const std::vector<double>& t1s,
                   const SolverConfig& cfg = {}, SolverStats* stats = nullptr);

}  // namespace lssl
