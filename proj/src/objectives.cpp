#include "lssl/objectives.hpp"

#include <stdexcept>

#include "lssl/graph.hpp"
#include "lssl/ops.hpp"

namespace lssl {

namespace {

void validate_weights(const ModelBundle& bundle, const LossWeights& w) {
  if (w.lambda_recon < 0.0 || w.lambda_dir < 0.0) {
    throw std::invalid_argument("loss weights must be non-negative");
  }
  if (w.lambda_recon == 0.0 && w.lambda_dir == 0.0) {
    throw std::invalid_argument("loss weights must not both be zero");
  }
  if (w.lambda_recon > 0.0 && !bundle.decoder) {
    throw std::invalid_argument("mode " + mode_name(bundle.mode) +
                                " has no decoder but lambda_recon > 0");
  }
  if (w.lambda_dir > 0.0 && !bundle.direction) {
    throw std::invalid_argument("mode " + mode_name(bundle.mode) +
                                " has no direction net but lambda_dir > 0");
  }
}

// Assembles total from the active terms and fills the reported scalars.
// pair.z_j is the plain latent for Eq.-1-style losses and the ODE-predicted
// latent for the NODE variants, so the same assembly serves both.
LossBreakdown combine(const ModelBundle& bundle, const LossWeights& w, const EncodedPair& pair,
                      const Tensor& x_i, const Tensor& x_j) {
  LossBreakdown out;
  out.batch_size = pair.z_i.dim(0);

  std::vector<std::pair<double, Tensor>> terms;
  if (w.lambda_recon > 0.0) {
    Tensor recon = add(mse(x_i, bundle.decoder->forward(pair.z_i)),
                       mse(x_j, bundle.decoder->forward(pair.z_j)));
    out.reconstruction = recon.value();
    terms.emplace_back(w.lambda_recon, recon);
  }
  if (bundle.direction) {
    if (w.lambda_dir > 0.0) {
      Tensor dir = mean(cosine_similarity(pair.dz, bundle.direction->tau()));
      out.direction = dir.value();
      terms.emplace_back(-w.lambda_dir, dir);
    } else {
      NoGradGuard pause;
      out.direction = mean(cosine_similarity(pair.dz, bundle.direction->tau())).value();
    }
  }
  out.total = lincomb(terms);
  out.total_value = out.total.value();
  return out;
}

}  // namespace

LossBreakdown lssl_loss(const ModelBundle& bundle, const Tensor& x_i, const Tensor& x_j,
                        const LossWeights& weights) {
  if (mode_uses_node(bundle.mode)) {
    throw std::invalid_argument("lssl_loss: bundle mode " + mode_name(bundle.mode) +
                                " integrates dynamics; use lssl_node_loss");
  }
  validate_weights(bundle, weights);
  if (x_i.size() == 0 || x_i.dim(0) == 0) throw std::invalid_argument("lssl_loss: empty batch");
  EncodedPair pair = bundle.encode_pair(x_i, x_j);
  return combine(bundle, weights, pair, x_i, x_j);
}

LossBreakdown lssl_node_loss(const ModelBundle& bundle, const Tensor& x_i, const Tensor& x_j,
                             const std::vector<double>& t_i, const std::vector<double>& t_j,
                             const LossWeights& weights, const SolverConfig& cfg,
                             SolverStats* stats) {
  if (!mode_uses_node(bundle.mode)) {
    throw std::invalid_argument("lssl_node_loss: bundle mode " + mode_name(bundle.mode) +
                                " has no dynamics net; use lssl_loss");
  }
  validate_weights(bundle, weights);
  if (x_i.size() == 0 || x_i.dim(0) == 0) {
    throw std::invalid_argument("lssl_node_loss: empty batch");
  }
  EncodedPair pair = bundle.encode_predict_next(x_i, t_i, t_j, cfg, stats);
  return combine(bundle, weights, pair, x_i, x_j);
}

}  // namespace lssl
