// Pretraining objectives: weighted reconstruction plus direction-alignment
// on visit pairs, in plain and latent-ODE form.
#pragma once

#include "lssl/models.hpp"
#include "lssl/odesolve.hpp"
#include "lssl/tensor.hpp"

namespace lssl {

struct LossWeights {
  double lambda_recon = 1.0;
  double lambda_dir = 1.0;
};

struct LossBreakdown {
  Tensor total;          // scalar, on the active graph
  double total_value = 0.0;
  double reconstruction = 0.0;  // summed pair reconstruction, batch-averaged
  double direction = 0.0;       // batch-mean cosine; 0 when no direction net
  int batch_size = 0;
};

// total = lambda_recon * (mse(x_i, g(z_i)) + mse(x_j, g(z_j)))
//         - lambda_dir * mean_cos(z_j - z_i, tau).
// Requires a non-ODE bundle.
LossBreakdown lssl_loss(const ModelBundle& bundle, const Tensor& x_i, const Tensor& x_j,
                        const LossWeights& weights);

// Same structure, but the second visit's latent is predicted by integrating
// the dynamics net from (z_i, t_i) to t_j: the second reconstruction decodes
// the predicted latent and the direction term aligns z_node_j - z_i with tau.
LossBreakdown lssl_node_loss(const ModelBundle& bundle, const Tensor& x_i, const Tensor& x_j,
                             const std::vector<double>& t_i, const std::vector<double>& t_j,
                             const LossWeights& weights, const SolverConfig& cfg = {},
                             SolverStats* stats = nullptr);

}  // namespace lssl
