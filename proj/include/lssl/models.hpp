// Trainable networks: dense encoder/decoder pair, direction vector net,
// latent dynamics net, LSTM grade head, MLP heads, and the mode-dependent
// bundle that ties them together.
#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "lssl/odesolve.hpp"
#include "lssl/tensor.hpp"

namespace lssl {

// Training objectives differ in which loss terms are active; the bundle's
// structure follows the mode (see mode_uses_* below).
enum class Mode { AE, AE_NODE, LSSL, S_LSSL, LSSL_NODE, S_LSSL_NODE };

std::string mode_name(Mode mode);
Mode mode_from_name(const std::string& name);
const std::vector<Mode>& all_modes();

// Reconstruction term active (decoder present).
bool mode_uses_decoder(Mode mode);
// Direction-alignment term active (direction net present).
bool mode_uses_direction(Mode mode);
// Latent dynamics integrated between visits (dynamics net present).
bool mode_uses_node(Mode mode);

struct Dims {
  int input = 64;
  int encoder_hidden = 128;
  int latent = 64;
  int dynamics_hidden = 64;
  int mlp_hidden1 = 1024;
  int mlp_hidden2 = 64;
  int lstm_hidden = 64;
  int grades = 5;
};

struct Dense {
  Tensor W;  // [in x out]
  Tensor b;  // [out]
  Tensor forward(const Tensor& x) const;
  int in_dim() const { return W.dim(0); }
  int out_dim() const { return W.dim(1); }
};

// Kaiming-uniform weights (bound sqrt(6/fan_in)), zero biases.
Dense make_dense(int in, int out, std::mt19937_64& rng);

class Encoder {
 public:
  Encoder(int input_dim, int hidden, int latent, std::mt19937_64& rng);
  Tensor forward(const Tensor& x) const;  // [b x input] -> [b x latent]
  std::vector<Tensor> parameters() const;
  Dense l1, l2;
};

class Decoder {
 public:
  Decoder(int latent, int hidden, int output_dim, std::mt19937_64& rng);
  Tensor forward(const Tensor& z) const;  // [b x latent] -> [b x output]
  std::vector<Tensor> parameters() const;
  Dense l1, l2;
};

// Maps a fixed all-ones vector through one dense layer; tau depends only on
// the layer's parameters.
class DirectionNet {
 public:
  DirectionNet(int latent, std::mt19937_64& rng);
  Tensor tau() const;  // [latent]
  std::vector<Tensor> parameters() const;
  Dense l;
};

// u(t, z): state concatenated with per-row time, one tanh hidden layer, and a
// linear output layer that starts at zero so the initial flow is the identity.
class DynamicsNet : public Dynamics {
 public:
  DynamicsNet(int latent, int hidden, std::mt19937_64& rng);
  Tensor eval(const std::vector<double>& times, const Tensor& z) const override;
  std::vector<Tensor> parameters() const override;
  Dense l1, l2;
};

// Single LSTM cell unrolled over a fixed-length latent sequence, then a
// linear layer to grade logits. Gate layout along the 4h axis: [i, f, g, o].
class RecurrentHead {
 public:
  RecurrentHead(int latent, int hidden, int n_out, std::mt19937_64& rng);
  Tensor forward(const std::vector<Tensor>& latents) const;  // each [b x latent]
  std::vector<Tensor> parameters() const;
  Dense cell;  // [(hidden+latent) x 4*hidden]
  Dense out;

 private:
  int hidden_;
};

class MLPHead {
 public:
  MLPHead(int latent, int h1, int h2, int n_out, std::mt19937_64& rng);
  Tensor forward(const Tensor& z) const;
  std::vector<Tensor> parameters() const;
  Dense l1, l2, l3;
};

struct EncodedPair {
  Tensor z_i;
  Tensor z_j;
  Tensor dz;
};

struct ModelBundle {
  Mode mode = Mode::AE;
  Dims dims;
  std::shared_ptr<Encoder> encoder;
  std::shared_ptr<Decoder> decoder;        // iff mode_uses_decoder
  std::shared_ptr<DirectionNet> direction; // iff mode_uses_direction
  std::shared_ptr<DynamicsNet> dynamics;   // iff mode_uses_node
  std::shared_ptr<MLPHead> mlp_head;       // attached for fine-tuning
  std::shared_ptr<RecurrentHead> recurrent_head;

  std::vector<Tensor> parameters() const;
  std::vector<std::pair<std::string, Tensor>> named_parameters() const;

  void attach_mlp_head(int n_out, std::uint64_t seed);
  void attach_recurrent_head(std::uint64_t seed);

  // Encodes both visits of a pair; dz row r is z_j - z_i for pair r.
  EncodedPair encode_pair(const Tensor& x_i, const Tensor& x_j) const;

  // Encodes the first visit only and integrates the dynamics to the second
  // visit's time; dz is z_node_j - z_i.
  EncodedPair encode_predict_next(const Tensor& x_i, const std::vector<double>& t_i,
                                  const std::vector<double>& t_j, const SolverConfig& cfg = {},
                                  SolverStats* stats = nullptr) const;

  // Grade logits for the next visit from a single image and the elapsed time.
  Tensor node_cls_forward(const Tensor& x_i, const std::vector<double>& dts,
                          const SolverConfig& cfg = {}, SolverStats* stats = nullptr) const;
};

// Deterministic per (mode, seed): Kaiming-uniform dense weights, zero biases,
// zero-initialized final dynamics layer.
ModelBundle init_bundle(Mode mode, std::uint64_t seed, const Dims& dims = {});

}  // namespace lssl
