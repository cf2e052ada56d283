#include "lssl/odesolve.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <span>
#include <sstream>

#include "lssl/graph.hpp"
#include "lssl/ops.hpp"

namespace lssl {

namespace {

// Dormand-Prince 5(4) tableau. E is the 5th-minus-4th-order weight row.
constexpr double C2 = 1.0 / 5, C3 = 3.0 / 10, C4 = 4.0 / 5, C5 = 8.0 / 9;
constexpr double A21 = 1.0 / 5;
constexpr double A31 = 3.0 / 40, A32 = 9.0 / 40;
constexpr double A41 = 44.0 / 45, A42 = -56.0 / 15, A43 = 32.0 / 9;
constexpr double A51 = 19372.0 / 6561, A52 = -25360.0 / 2187, A53 = 64448.0 / 6561,
                 A54 = -212.0 / 729;
constexpr double A61 = 9017.0 / 3168, A62 = -355.0 / 33, A63 = 46732.0 / 5247, A64 = 49.0 / 176,
                 A65 = -5103.0 / 18656;
constexpr double B1 = 35.0 / 384, B3 = 500.0 / 1113, B4 = 125.0 / 192, B5 = -2187.0 / 6784,
                 B6 = 11.0 / 84;
constexpr double E1 = 71.0 / 57600, E3 = -71.0 / 16695, E4 = 71.0 / 1920, E5 = -17253.0 / 339200,
                 E6 = 22.0 / 525, E7 = -1.0 / 40;

struct RkOut {
  Tensor z5;
  Tensor err;
  Tensor k7;
};

// One explicit step of size h from (s, z) with k1 = g(s, z) already in hand.
// The error estimate is control data only, so it is never recorded.
template <typename G>
RkOut rk45_step(G&& g, double s, double h, const Tensor& z, const Tensor& k1, bool need_k7,
                int& nfev) {
  Tensor y2 = lincomb({{1, z}, {h * A21, k1}});
  Tensor k2 = g(s + C2 * h, y2);
  Tensor y3 = lincomb({{1, z}, {h * A31, k1}, {h * A32, k2}});
  Tensor k3 = g(s + C3 * h, y3);
  Tensor y4 = lincomb({{1, z}, {h * A41, k1}, {h * A42, k2}, {h * A43, k3}});
  Tensor k4 = g(s + C4 * h, y4);
  Tensor y5 = lincomb({{1, z}, {h * A51, k1}, {h * A52, k2}, {h * A53, k3}, {h * A54, k4}});
  Tensor k5 = g(s + C5 * h, y5);
  Tensor y6 = lincomb(
      {{1, z}, {h * A61, k1}, {h * A62, k2}, {h * A63, k3}, {h * A64, k4}, {h * A65, k5}});
  Tensor k6 = g(s + h, y6);
  Tensor z5 =
      lincomb({{1, z}, {h * B1, k1}, {h * B3, k3}, {h * B4, k4}, {h * B5, k5}, {h * B6, k6}});
  nfev += 5;
  RkOut out{z5, Tensor(), Tensor()};
  if (need_k7) {
    out.k7 = g(s + h, z5);
    ++nfev;
    NoGradGuard pause;
    out.err = lincomb({{h * E1, k1},
                       {h * E3, k3},
                       {h * E4, k4},
                       {h * E5, k5},
                       {h * E6, k6},
                       {h * E7, out.k7}});
  }
  return out;
}

double rms(const std::vector<double>& v) {
  double acc = 0.0;
  for (double x : v) acc += x * x;
  return std::sqrt(acc / static_cast<double>(v.size()));
}

double error_norm(const Tensor& err, const Tensor& z_start, const Tensor& z_end, double atol,
                  double rtol) {
  const auto& e = err.data();
  const auto& zs = z_start.data();
  const auto& ze = z_end.data();
  double acc = 0.0;
  for (std::size_t i = 0; i < e.size(); ++i) {
    const double sc = atol + rtol * std::max(std::abs(zs[i]), std::abs(ze[i]));
    const double r = e[i] / sc;
    acc += r * r;
  }
  return std::sqrt(acc / static_cast<double>(e.size()));
}

// Hairer-Norsett-Wanner starting-step heuristic on the unit s-interval.
template <typename G>
double initial_step(G&& g, const Tensor& z0, const Tensor& k1, const SolverConfig& cfg,
                    int& nfev) {
  NoGradGuard pause;
  const auto& z = z0.data();
  const auto& f0 = k1.data();
  std::vector<double> sc(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) sc[i] = cfg.atol + cfg.rtol * std::abs(z[i]);
  std::vector<double> tmp(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) tmp[i] = z[i] / sc[i];
  const double d0 = rms(tmp);
  for (std::size_t i = 0; i < z.size(); ++i) tmp[i] = f0[i] / sc[i];
  const double d1 = rms(tmp);
  double h0 = (d0 < 1e-5 || d1 < 1e-5) ? 1e-6 : 0.01 * d0 / d1;
  h0 = std::min(h0, 1.0);
  Tensor z1 = lincomb({{1, z0}, {h0, k1}});
  Tensor f1 = g(h0, z1);
  ++nfev;
  const auto& f1v = f1.data();
  for (std::size_t i = 0; i < z.size(); ++i) tmp[i] = (f1v[i] - f0[i]) / sc[i];
  const double d2 = rms(tmp) / h0;
  double h1;
  if (std::max(d1, d2) <= 1e-15) {
    h1 = std::max(1e-6, h0 * 1e-3);
  } else {
    h1 = std::pow(0.01 / std::max(d1, d2), 0.2);
  }
  return std::min({100.0 * h0, h1, 1.0});
}

void validate_config(const SolverConfig& cfg) {
  if (cfg.rtol <= 0.0 || cfg.atol <= 0.0) {
    throw std::invalid_argument("SolverConfig: rtol and atol must be positive");
  }
  if (cfg.min_factor >= 1.0 || cfg.max_factor <= 1.0) {
    throw std::invalid_argument("SolverConfig: step-factor clamp must bracket 1");
  }
  if (cfg.max_steps <= 0) {
    throw std::invalid_argument("SolverConfig: max_steps must be positive");
  }
}

std::string solve_context(double s, double h) {
  std::ostringstream os;
  os << "(s=" << s << ", h=" << h << ")";
  return os.str();
}

// Shared adaptive loop over normalized time s in [0,1]. In record mode every
// accepted update stays on the ambient graph; otherwise recording is paused
// and accepted steps are logged for the reverse sweep.
OdeSolution integrate_core(const Dynamics& f, const Tensor& z0s, const std::vector<double>& t0s,
                           const std::vector<double>& t1s, const SolverConfig& cfg) {
  validate_config(cfg);
  if (z0s.ndim() != 2) {
    throw std::invalid_argument("integrate: state must be [b x d], got " + shape_str(z0s.shape()));
  }
  const int b = z0s.dim(0);
  if (static_cast<int>(t0s.size()) != b || static_cast<int>(t1s.size()) != b) {
    throw std::invalid_argument("integrate: need one t0 and t1 per state row");
  }
  std::vector<double> horizons(t0s.size());
  bool any_motion = false;
  for (std::size_t i = 0; i < t0s.size(); ++i) {
    horizons[i] = t1s[i] - t0s[i];
    if (horizons[i] < 0.0) {
      throw std::invalid_argument("integrate: end time precedes start time for row " +
                                  std::to_string(i));
    }
    if (horizons[i] > 0.0) any_motion = true;
  }

  OdeSolution sol;
  sol.t0s = t0s;
  sol.t1s = t1s;
  sol.times = {0.0, 1.0};
  if (!any_motion) {
    sol.states = {z0s, z0s};
    return sol;
  }

  auto g = [&](double s, const Tensor& z) -> Tensor {
    std::vector<double> times(horizons.size());
    for (std::size_t i = 0; i < times.size(); ++i) times[i] = t0s[i] + s * horizons[i];
    Tensor u = f.eval(times, z);
    if (!same_shape(u, z)) {
      throw std::invalid_argument("integrate: dynamics output " + shape_str(u.shape()) +
                                  " does not match state " + shape_str(z.shape()));
    }
    return scale_rows(u, horizons);
  };

  std::optional<NoGradGuard> pause;
  if (!cfg.record_graph) pause.emplace();

  Tensor z = z0s;
  double s = 0.0;
  Tensor k1;
  double h;
  try {
    k1 = g(0.0, z);
    ++sol.nfev;
    h = initial_step(g, z, k1, cfg, sol.nfev);
  } catch (const NumericsError& e) {
    throw SolverError(std::string("integrate: non-finite dynamics at start: ") + e.what());
  }

  int attempts = 0;
  while (1.0 - s > 1e-12) {
    if (++attempts > cfg.max_steps) {
      throw SolverError("integrate: exceeded " + std::to_string(cfg.max_steps) + " step attempts " +
                        solve_context(s, h));
    }
    if (h < 1e-12) {
      throw SolverError("integrate: step size underflow " + solve_context(s, h));
    }
    h = std::min(h, 1.0 - s);
    RkOut step;
    try {
      step = rk45_step(g, s, h, z, k1, /*need_k7=*/true, sol.nfev);
    } catch (const NumericsError& e) {
      throw SolverError("integrate: non-finite stage value " + solve_context(s, h) + ": " +
                        e.what());
    }
    const double norm = error_norm(step.err, z, step.z5, cfg.atol, cfg.rtol);
    if (!std::isfinite(norm)) {
      throw SolverError("integrate: non-finite error norm " + solve_context(s, h));
    }
    if (norm <= 1.0) {
      if (!cfg.record_graph) sol.steps.push_back({s, h, z.clone_detached()});
      z = step.z5;
      k1 = step.k7;
      s += h;
      ++sol.accepted;
    } else {
      ++sol.rejected;
    }
    const double factor = norm <= 1e-10
                              ? cfg.max_factor
                              : std::clamp(cfg.safety * std::pow(norm, -0.2), cfg.min_factor,
                                           cfg.max_factor);
    h *= factor;
  }
  sol.states = {z0s, z};
  return sol;
}

}  // namespace

std::pair<Tensor, Tensor> dopri5_step(const Dynamics& f, double t, const Tensor& z, double h) {
  if (h <= 0.0) throw std::invalid_argument("dopri5_step: h must be positive");
  const Shape orig = z.shape();
  Tensor zz = z.ndim() == 1 ? reshape(z, {1, z.dim(0)}) : z;
  if (zz.ndim() != 2) {
    throw std::invalid_argument("dopri5_step: state must be 1-D or 2-D, got " + shape_str(orig));
  }
  NoGradGuard pause;
  const int b = zz.dim(0);
  auto g = [&](double tt, const Tensor& state) -> Tensor {
    std::vector<double> times(static_cast<std::size_t>(b), tt);
    Tensor u = f.eval(times, state);
    if (!same_shape(u, state)) {
      throw std::invalid_argument("dopri5_step: dynamics output " + shape_str(u.shape()) +
                                  " does not match state " + shape_str(state.shape()));
    }
    return u;
  };
  int nfev = 0;
  Tensor k1;
  RkOut out;
  try {
    k1 = g(t, zz);
    out = rk45_step(g, t, h, zz, k1, /*need_k7=*/true, nfev);
  } catch (const NumericsError& e) {
    throw SolverError(std::string("dopri5_step: non-finite stage value: ") + e.what());
  }
  Tensor z5 = reshape(out.z5, orig);
  Tensor err = reshape(out.err, orig);
  return {z5, err};
}

OdeSolution integrate(const Dynamics& f, const Tensor& z0, double t0, double t1,
                      const SolverConfig& cfg) {
  if (t1 < t0) throw std::invalid_argument("integrate: t1 must not precede t0");
  const Shape orig = z0.shape();
  Tensor z = z0.ndim() == 1 ? reshape(z0, {1, z0.dim(0)}) : z0;
  OdeSolution sol = integrate_core(f, z, {t0}, {t1}, cfg);
  sol.times = {t0, t1};
  if (z0.ndim() == 1) {
    for (auto& state : sol.states) state = reshape(state, orig);
  }
  return sol;
}

OdeSolution integrate_batch(const Dynamics& f, const Tensor& z0s, const std::vector<double>& t0s,
                            const std::vector<double>& t1s, const SolverConfig& cfg) {
  return integrate_core(f, z0s, t0s, t1s, cfg);
}

AdjointResult integrate_adjoint_backward(const Dynamics& f, const OdeSolution& solution,
                                         const Tensor& loss_grad_at_t1) {
  if (solution.states.empty()) {
    throw std::invalid_argument("integrate_adjoint_backward: solution has no states");
  }
  const Tensor& zT = solution.states.back();
  if (!same_shape(loss_grad_at_t1, zT)) {
    throw std::invalid_argument("integrate_adjoint_backward: loss gradient " +
                                shape_str(loss_grad_at_t1.shape()) + " does not match state " +
                                shape_str(zT.shape()));
  }
  std::vector<Tensor> params = f.parameters();
  AdjointResult result;
  result.grad_params.reserve(params.size());
  for (const auto& p : params) result.grad_params.emplace_back(p.size(), 0.0);

  std::vector<double> a = loss_grad_at_t1.data();
  const auto& t0s = solution.t0s;
  const auto& t1s = solution.t1s;
  std::vector<double> horizons(t0s.size());
  for (std::size_t i = 0; i < t0s.size(); ++i) horizons[i] = t1s[i] - t0s[i];

  for (auto it = solution.steps.rbegin(); it != solution.steps.rend(); ++it) {
    GraphScope scope;
    Tensor zs = it->z_start.clone_detached();
    if (zs.ndim() == 1) zs = Tensor({1, zs.dim(0)}, zs.data());
    zs.set_requires_grad(true);
    auto g = [&](double s, const Tensor& z) -> Tensor {
      std::vector<double> times(horizons.size());
      for (std::size_t i = 0; i < times.size(); ++i) times[i] = t0s[i] + s * horizons[i];
      return scale_rows(f.eval(times, z), horizons);
    };
    int nfev = 0;
    Tensor k1 = g(it->s, zs);
    RkOut step = rk45_step(g, it->s, it->h, zs, k1, /*need_k7=*/false, nfev);
    GradMap grads = scope.graph()->vjp(step.z5, std::span<const double>(a));
    auto iz = grads.find(zs.impl().get());
    std::vector<double> a_next =
        iz == grads.end() ? std::vector<double>(a.size(), 0.0) : std::move(iz->second);
    for (std::size_t j = 0; j < params.size(); ++j) {
      auto ip = grads.find(params[j].impl().get());
      if (ip == grads.end()) continue;
      auto& gp = result.grad_params[j];
      for (std::size_t k = 0; k < gp.size(); ++k) gp[k] += ip->second[k];
    }
    a = std::move(a_next);
  }
  result.grad_z0 = Tensor(solution.states.front().shape(), std::move(a));
  return result;
}

Tensor ode_predict(const std::shared_ptr<const Dynamics>& f, const Tensor& z0s,
                   const std::vector<double>& t0s, const std::vector<double>& t1s,
                   const SolverConfig& cfg, SolverStats* stats) {
  if (!f) throw std::invalid_argument("ode_predict: null dynamics");
  if (cfg.record_graph) {
    OdeSolution sol = integrate_batch(*f, z0s, t0s, t1s, cfg);
    if (stats) stats->absorb(sol);
    return sol.states.back();
  }
  auto sol = std::make_shared<OdeSolution>(integrate_batch(*f, z0s, t0s, t1s, cfg));
  if (stats) stats->absorb(*sol);
  Tensor z1 = sol->states.back().clone_detached();
  if (recording_enabled()) {
    std::vector<std::shared_ptr<TensorImpl>> inputs{z0s.impl()};
    for (const auto& p : f->parameters()) inputs.push_back(p.impl());
    bool wants = false;
    for (const auto& t : inputs) wants = wants || tensor_needs_grad(t);
    if (wants) {
      auto z0_impl = z0s.impl();
      OpNode node;
      node.op = "ode_predict";
      node.inputs = inputs;
      node.output = z1.impl();
      node.backward = [f, sol, z0_impl](const std::vector<double>& g, GradMap& grads) {
        Tensor seed(sol->states.back().shape(), g);
        AdjointResult adj = integrate_adjoint_backward(*f, *sol, seed);
        if (tensor_needs_grad(z0_impl)) {
          auto& gz = grad_accum(grads, z0_impl);
          const auto& src = adj.grad_z0.data();
          for (std::size_t i = 0; i < gz.size(); ++i) gz[i] += src[i];
        }
        std::vector<Tensor> params = f->parameters();
        for (std::size_t j = 0; j < params.size(); ++j) {
          if (!tensor_needs_grad(params[j].impl())) continue;
          auto& gp = grad_accum(grads, params[j].impl());
          for (std::size_t i = 0; i < gp.size(); ++i) gp[i] += adj.grad_params[j][i];
        }
      };
      active_graph()->record(std::move(node));
    }
  }
  return z1;
}

}  // namespace lssl
