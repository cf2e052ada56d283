#include "lssl/models.hpp"

#include <cmath>
#include <stdexcept>

#include "lssl/ops.hpp"

namespace lssl {

std::string mode_name(Mode mode) {
  switch (mode) {
    case Mode::AE: return "ae";
    case Mode::AE_NODE: return "ae_node";
    case Mode::LSSL: return "lssl";
    case Mode::S_LSSL: return "s_lssl";
    case Mode::LSSL_NODE: return "lssl_node";
    case Mode::S_LSSL_NODE: return "s_lssl_node";
  }
  throw std::invalid_argument("mode_name: unknown mode");
}

Mode mode_from_name(const std::string& name) {
  for (Mode m : all_modes()) {
    if (mode_name(m) == name) return m;
  }
  throw std::invalid_argument("mode_from_name: unknown mode '" + name + "'");
}

const std::vector<Mode>& all_modes() {
  static const std::vector<Mode> modes{Mode::AE,     Mode::AE_NODE,   Mode::LSSL,
                                       Mode::S_LSSL, Mode::LSSL_NODE, Mode::S_LSSL_NODE};
  return modes;
}

bool mode_uses_decoder(Mode mode) { return mode != Mode::S_LSSL && mode != Mode::S_LSSL_NODE; }

bool mode_uses_direction(Mode mode) { return mode != Mode::AE && mode != Mode::AE_NODE; }

bool mode_uses_node(Mode mode) {
  return mode == Mode::AE_NODE || mode == Mode::LSSL_NODE || mode == Mode::S_LSSL_NODE;
}

Tensor Dense::forward(const Tensor& x) const { return add_bias(matmul(x, W), b); }

Dense make_dense(int in, int out, std::mt19937_64& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(in));
  std::uniform_real_distribution<double> dist(-bound, bound);
  std::vector<double> w(static_cast<std::size_t>(in) * static_cast<std::size_t>(out));
  for (auto& v : w) v = dist(rng);
  Dense d{Tensor({in, out}, std::move(w), true), Tensor::zeros({out}, true)};
  return d;
}

namespace {

// Batched view of possibly single-sample input.
Tensor as_rows(const Tensor& x) {
  if (x.ndim() == 1) return reshape(x, {1, x.dim(0)});
  if (x.ndim() == 2) return x;
  throw std::invalid_argument("expected 1-D or 2-D input, got " + shape_str(x.shape()));
}

}  // namespace

Encoder::Encoder(int input_dim, int hidden, int latent, std::mt19937_64& rng)
    : l1(make_dense(input_dim, hidden, rng)), l2(make_dense(hidden, latent, rng)) {}

Tensor Encoder::forward(const Tensor& x) const { return l2.forward(tanh(l1.forward(as_rows(x)))); }

Decoder::Decoder(int latent, int hidden, int output_dim, std::mt19937_64& rng)
    : l1(make_dense(latent, hidden, rng)), l2(make_dense(hidden, output_dim, rng)) {}

Tensor Decoder::forward(const Tensor& z) const { return l2.forward(tanh(l1.forward(as_rows(z)))); }

DirectionNet::DirectionNet(int latent, std::mt19937_64& rng) : l(make_dense(latent, latent, rng)) {}

Tensor DirectionNet::tau() const {
  Tensor ones = Tensor::full({1, l.in_dim()}, 1.0);
  return reshape(l.forward(ones), {l.out_dim()});
}

DynamicsNet::DynamicsNet(int latent, int hidden, std::mt19937_64& rng)
    : l1(make_dense(latent + 1, hidden, rng)), l2(make_dense(hidden, latent, rng)) {
  // Identity flow at initialization.
  for (auto& v : l2.W.data()) v = 0.0;
}

Tensor DynamicsNet::eval(const std::vector<double>& times, const Tensor& z) const {
  if (z.ndim() != 2 || static_cast<int>(times.size()) != z.dim(0)) {
    throw std::invalid_argument("DynamicsNet: need one time per state row");
  }
  Tensor t_col({z.dim(0), 1}, std::vector<double>(times.begin(), times.end()));
  Tensor zt = concat_cols(z, t_col);
  return l2.forward(tanh(l1.forward(zt)));
}

std::vector<Tensor> DynamicsNet::parameters() const { return {l1.W, l1.b, l2.W, l2.b}; }

std::vector<Tensor> Encoder::parameters() const { return {l1.W, l1.b, l2.W, l2.b}; }

std::vector<Tensor> Decoder::parameters() const { return {l1.W, l1.b, l2.W, l2.b}; }

std::vector<Tensor> DirectionNet::parameters() const { return {l.W, l.b}; }

std::vector<Tensor> RecurrentHead::parameters() const {
  return {cell.W, cell.b, out.W, out.b};
}

std::vector<Tensor> MLPHead::parameters() const {
  return {l1.W, l1.b, l2.W, l2.b, l3.W, l3.b};
}

RecurrentHead::RecurrentHead(int latent, int hidden, int n_out, std::mt19937_64& rng)
    : cell(make_dense(hidden + latent, 4 * hidden, rng)),
      out(make_dense(hidden, n_out, rng)),
      hidden_(hidden) {}

Tensor RecurrentHead::forward(const std::vector<Tensor>& latents) const {
  if (latents.empty()) throw std::invalid_argument("RecurrentHead: empty sequence");
  const int b = latents.front().dim(0);
  Tensor h = Tensor::zeros({b, hidden_});
  Tensor c = Tensor::zeros({b, hidden_});
  for (const Tensor& x : latents) {
    if (x.ndim() != 2 || x.dim(0) != b) {
      throw std::invalid_argument("RecurrentHead: inconsistent sequence shapes");
    }
    Tensor gates = cell.forward(concat_cols(h, x));
    Tensor i = sigmoid(slice_cols(gates, 0, hidden_));
    Tensor f = sigmoid(slice_cols(gates, hidden_, hidden_));
    Tensor g = tanh(slice_cols(gates, 2 * hidden_, hidden_));
    Tensor o = sigmoid(slice_cols(gates, 3 * hidden_, hidden_));
    c = add(mul(f, c), mul(i, g));
    h = mul(o, tanh(c));
  }
  return out.forward(h);
}

MLPHead::MLPHead(int latent, int h1, int h2, int n_out, std::mt19937_64& rng)
    : l1(make_dense(latent, h1, rng)), l2(make_dense(h1, h2, rng)), l3(make_dense(h2, n_out, rng)) {}

Tensor MLPHead::forward(const Tensor& z) const {
  return l3.forward(leaky_relu(l2.forward(leaky_relu(l1.forward(as_rows(z))))));
}

namespace {

void push_dense(std::vector<std::pair<std::string, Tensor>>& out, const std::string& prefix,
                const Dense& d) {
  out.emplace_back(prefix + ".W", d.W);
  out.emplace_back(prefix + ".b", d.b);
}

}  // namespace

std::vector<std::pair<std::string, Tensor>> ModelBundle::named_parameters() const {
  std::vector<std::pair<std::string, Tensor>> out;
  push_dense(out, "encoder.l1", encoder->l1);
  push_dense(out, "encoder.l2", encoder->l2);
  if (decoder) {
    push_dense(out, "decoder.l1", decoder->l1);
    push_dense(out, "decoder.l2", decoder->l2);
  }
  if (direction) push_dense(out, "direction.l", direction->l);
  if (dynamics) {
    push_dense(out, "dynamics.l1", dynamics->l1);
    push_dense(out, "dynamics.l2", dynamics->l2);
  }
  if (mlp_head) {
    push_dense(out, "mlp_head.l1", mlp_head->l1);
    push_dense(out, "mlp_head.l2", mlp_head->l2);
    push_dense(out, "mlp_head.l3", mlp_head->l3);
  }
  if (recurrent_head) {
    push_dense(out, "recurrent_head.cell", recurrent_head->cell);
    push_dense(out, "recurrent_head.out", recurrent_head->out);
  }
  return out;
}

std::vector<Tensor> ModelBundle::parameters() const {
  std::vector<Tensor> out;
  for (auto& [name, t] : named_parameters()) out.push_back(t);
  return out;
}

void ModelBundle::attach_mlp_head(int n_out, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  mlp_head = std::make_shared<MLPHead>(dims.latent, dims.mlp_hidden1, dims.mlp_hidden2, n_out, rng);
}

void ModelBundle::attach_recurrent_head(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  recurrent_head = std::make_shared<RecurrentHead>(dims.latent, dims.lstm_hidden, dims.grades, rng);
}

EncodedPair ModelBundle::encode_pair(const Tensor& x_i, const Tensor& x_j) const {
  if (!same_shape(x_i, x_j)) {
    throw std::invalid_argument("encode_pair: shapes " + shape_str(x_i.shape()) + " and " +
                                shape_str(x_j.shape()) + " differ");
  }
  EncodedPair p;
  p.z_i = encoder->forward(x_i);
  p.z_j = encoder->forward(x_j);
  p.dz = sub(p.z_j, p.z_i);
  return p;
}

EncodedPair ModelBundle::encode_predict_next(const Tensor& x_i, const std::vector<double>& t_i,
                                             const std::vector<double>& t_j,
                                             const SolverConfig& cfg, SolverStats* stats) const {
  if (!dynamics) {
    throw std::invalid_argument("encode_predict_next: mode " + mode_name(mode) +
                                " has no dynamics net");
  }
  EncodedPair p;
  p.z_i = encoder->forward(x_i);
  p.z_j = ode_predict(dynamics, p.z_i, t_i, t_j, cfg, stats);
  p.dz = sub(p.z_j, p.z_i);
  return p;
}

Tensor ModelBundle::node_cls_forward(const Tensor& x_i, const std::vector<double>& dts,
                                     const SolverConfig& cfg, SolverStats* stats) const {
  if (!dynamics) {
    throw std::invalid_argument("node_cls_forward: mode " + mode_name(mode) +
                                " has no dynamics net");
  }
  if (!mlp_head) throw std::invalid_argument("node_cls_forward: no MLP head attached");
  for (double dt : dts) {
    if (dt < 0.0) throw std::invalid_argument("node_cls_forward: negative elapsed time");
  }
  Tensor z = encoder->forward(x_i);
  std::vector<double> zeros_t(dts.size(), 0.0);
  Tensor z_next = ode_predict(dynamics, z, zeros_t, dts, cfg, stats);
  return mlp_head->forward(z_next);
}

ModelBundle init_bundle(Mode mode, std::uint64_t seed, const Dims& dims) {
  std::mt19937_64 rng(seed);
  ModelBundle b;
  b.mode = mode;
  b.dims = dims;
  b.encoder = std::make_shared<Encoder>(dims.input, dims.encoder_hidden, dims.latent, rng);
  if (mode_uses_decoder(mode)) {
    b.decoder = std::make_shared<Decoder>(dims.latent, dims.encoder_hidden, dims.input, rng);
  }
  if (mode_uses_direction(mode)) {
    b.direction = std::make_shared<DirectionNet>(dims.latent, rng);
  }
  if (mode_uses_node(mode)) {
    b.dynamics = std::make_shared<DynamicsNet>(dims.latent, dims.dynamics_hidden, rng);
  }
  return b;
}

}  // namespace lssl
