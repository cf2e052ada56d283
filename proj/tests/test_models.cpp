#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>
#include <vector>

#include "lssl/graph.hpp"
#include "lssl/models.hpp"
#include "lssl/ops.hpp"
#include "lssl/tensor.hpp"

using namespace lssl;

namespace {

Tensor rand_input(std::mt19937_64& rng, int rows, int cols, double width = 1.0) {
  std::uniform_real_distribution<double> dist(-width, width);
  std::vector<double> v(static_cast<std::size_t>(rows) * cols);
  for (auto& x : v) x = dist(rng);
  return Tensor({rows, cols}, std::move(v));
}

void zero_params(const std::vector<Tensor>& params) {
  for (auto p : params) {
    for (auto& v : p.data()) v = 0.0;
  }
}

double l2_norm(const std::vector<double>& v) {
  double acc = 0.0;
  for (double x : v) acc += x * x;
  return std::sqrt(acc);
}

Dims tiny_dims() {
  Dims d;
  d.input = 6;
  d.encoder_hidden = 8;
  d.latent = 4;
  d.dynamics_hidden = 8;
  d.mlp_hidden1 = 16;
  d.mlp_hidden2 = 8;
  d.lstm_hidden = 8;
  return d;
}

}  // namespace

TEST_CASE("mode algebra fixes bundle structure") {
  for (Mode m : all_modes()) {
    ModelBundle b = init_bundle(m, 1);
    CHECK(b.encoder != nullptr);
    CHECK(static_cast<bool>(b.decoder) == mode_uses_decoder(m));
    CHECK(static_cast<bool>(b.direction) == mode_uses_direction(m));
    CHECK(static_cast<bool>(b.dynamics) == mode_uses_node(m));
    CHECK(mode_from_name(mode_name(m)) == m);
  }
  // Reduced forms: reconstruction-only has no direction net, Siamese form has
  // no decoder.
  ModelBundle ae = init_bundle(Mode::AE, 2);
  CHECK(!ae.direction);
  CHECK(ae.decoder != nullptr);
  ModelBundle siam = init_bundle(Mode::S_LSSL, 2);
  CHECK(!siam.decoder);
  CHECK(siam.direction != nullptr);
  CHECK_THROWS_AS(mode_from_name("bogus"), std::invalid_argument);
}

TEST_CASE("encode_pair identities") {
  std::mt19937_64 rng(3);
  ModelBundle b = init_bundle(Mode::LSSL, 7);
  Tensor x = rand_input(rng, 4, b.dims.input);

  SUBCASE("identical inputs give zero trajectory") {
    EncodedPair p = b.encode_pair(x, x);
    for (std::size_t i = 0; i < p.dz.size(); ++i) CHECK(p.dz.at(i) == 0.0);
  }
  SUBCASE("trajectory closes the triangle") {
    Tensor y = rand_input(rng, 4, b.dims.input);
    EncodedPair p = b.encode_pair(x, y);
    for (std::size_t i = 0; i < p.dz.size(); ++i) {
      CHECK(p.z_i.at(i) + p.dz.at(i) == doctest::Approx(p.z_j.at(i)).epsilon(1e-12));
    }
  }
  SUBCASE("swapping the pair negates the trajectory exactly") {
    Tensor y = rand_input(rng, 4, b.dims.input);
    EncodedPair p = b.encode_pair(x, y);
    EncodedPair q = b.encode_pair(y, x);
    for (std::size_t i = 0; i < p.dz.size(); ++i) CHECK(p.dz.at(i) == -q.dz.at(i));
  }
  SUBCASE("zeroed encoder maps everything to zero") {
    zero_params({b.encoder->l1.W, b.encoder->l1.b, b.encoder->l2.W, b.encoder->l2.b});
    EncodedPair p = b.encode_pair(x, rand_input(rng, 4, b.dims.input));
    for (std::size_t i = 0; i < p.z_i.size(); ++i) CHECK(p.z_i.at(i) == 0.0);
    for (std::size_t i = 0; i < p.z_j.size(); ++i) CHECK(p.z_j.at(i) == 0.0);
  }
  SUBCASE("shape mismatch rejected") {
    CHECK_THROWS_AS(b.encode_pair(x, rand_input(rng, 3, b.dims.input)), std::invalid_argument);
  }
}

TEST_CASE("encode_predict_next identities and wiring") {
  std::mt19937_64 rng(11);
  ModelBundle b = init_bundle(Mode::LSSL_NODE, 13, tiny_dims());
  Tensor x = rand_input(rng, 3, b.dims.input);

  SUBCASE("zero horizon returns the encoded latent") {
    EncodedPair p = b.encode_predict_next(x, {1.0, 2.0, 3.0}, {1.0, 2.0, 3.0});
    for (std::size_t i = 0; i < p.dz.size(); ++i) CHECK(p.dz.at(i) == 0.0);
    for (std::size_t i = 0; i < p.z_i.size(); ++i) CHECK(p.z_j.at(i) == p.z_i.at(i));
  }
  SUBCASE("freshly initialized dynamics are the identity flow") {
    EncodedPair p = b.encode_predict_next(x, {0.0, 1.0, 5.0}, {2.0, 4.0, 30.0});
    for (std::size_t i = 0; i < p.dz.size(); ++i) CHECK(p.dz.at(i) == 0.0);
  }
  SUBCASE("non-NODE bundle rejects prediction") {
    ModelBundle plain = init_bundle(Mode::LSSL, 13, tiny_dims());
    CHECK_THROWS_AS(plain.encode_predict_next(x, {0.0, 0.0, 0.0}, {1.0, 1.0, 1.0}),
                    std::invalid_argument);
  }
}

TEST_CASE("dynamics net in a near-linear regime matches the exponential flow") {
  // l1 reads only the state with a tiny gain; l2 undoes the gain. tanh is
  // linear to ~3e-8 relative at that amplitude, so z' ~= z and z(t) ~= e^t.
  std::mt19937_64 rng(4);
  Dims d = tiny_dims();
  d.latent = 1;
  auto net = std::make_shared<DynamicsNet>(d.latent, 4, rng);
  zero_params(net->parameters());
  const double gain = 1e-4;
  net->l1.W.data()[0] = gain;  // state column into hidden unit 0
  net->l2.W.data()[0] = 1.0 / gain;
  SolverConfig cfg;
  cfg.rtol = 1e-9;
  cfg.atol = 1e-12;
  NoGradGuard ng;
  Tensor z1 = ode_predict(net, Tensor({1, 1}, {1.0}), {0.0}, {1.0}, cfg);
  CHECK(z1.at(0) == doctest::Approx(std::exp(1.0)).epsilon(1e-5));
}

TEST_CASE("recurrent head is order-sensitive and shape-correct") {
  std::mt19937_64 rng(19);
  Dims d = tiny_dims();
  ModelBundle b = init_bundle(Mode::S_LSSL, 5, d);
  b.attach_recurrent_head(99);
  Tensor a = rand_input(rng, 2, d.latent);
  Tensor bb = rand_input(rng, 2, d.latent);
  Tensor c = rand_input(rng, 2, d.latent);
  Tensor fwd = b.recurrent_head->forward({a, bb, c});
  REQUIRE(fwd.shape() == Shape{2, 5});
  Tensor rev = b.recurrent_head->forward({c, bb, a});
  double diff = 0.0;
  for (std::size_t i = 0; i < fwd.size(); ++i) diff = std::max(diff, std::abs(fwd.at(i) - rev.at(i)));
  CHECK(diff > 1e-6);
}

TEST_CASE("node_cls_forward identities") {
  std::mt19937_64 rng(8);
  Dims d = tiny_dims();
  ModelBundle b = init_bundle(Mode::S_LSSL_NODE, 21, d);
  b.attach_mlp_head(d.grades, 77);
  Tensor x = rand_input(rng, 3, d.input);

  SUBCASE("zero elapsed time equals head on the plain latent") {
    Tensor logits = b.node_cls_forward(x, {0.0, 0.0, 0.0});
    Tensor direct = b.mlp_head->forward(b.encoder->forward(x));
    for (std::size_t i = 0; i < logits.size(); ++i) CHECK(logits.at(i) == direct.at(i));
  }
  SUBCASE("zeroed dynamics output makes logits independent of elapsed time") {
    Tensor l1 = b.node_cls_forward(x, {0.5, 1.0, 2.0});
    Tensor l2 = b.node_cls_forward(x, {3.0, 7.0, 11.0});
    for (std::size_t i = 0; i < l1.size(); ++i) CHECK(l1.at(i) == l2.at(i));
  }
  SUBCASE("negative elapsed time rejected") {
    CHECK_THROWS_AS(b.node_cls_forward(x, {0.5, -1.0, 2.0}), std::invalid_argument);
  }
  SUBCASE("missing head rejected") {
    ModelBundle no_head = init_bundle(Mode::S_LSSL_NODE, 21, d);
    CHECK_THROWS_AS(no_head.node_cls_forward(x, {0.5, 1.0, 2.0}), std::invalid_argument);
  }
}

TEST_CASE("init_bundle determinism and init properties") {
  SUBCASE("same seed is bit-identical") {
    ModelBundle a = init_bundle(Mode::LSSL_NODE, 123);
    ModelBundle b = init_bundle(Mode::LSSL_NODE, 123);
    auto pa = a.named_parameters();
    auto pb = b.named_parameters();
    REQUIRE(pa.size() == pb.size());
    for (std::size_t i = 0; i < pa.size(); ++i) {
      CHECK(pa[i].first == pb[i].first);
      CHECK(pa[i].second.data() == pb[i].second.data());
    }
  }
  SUBCASE("different seeds differ") {
    ModelBundle a = init_bundle(Mode::LSSL, 1);
    ModelBundle b = init_bundle(Mode::LSSL, 2);
    CHECK(a.encoder->l1.W.data() != b.encoder->l1.W.data());
  }
  SUBCASE("direction vector has positive norm across 100 seeds") {
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
      ModelBundle b = init_bundle(Mode::S_LSSL, seed, tiny_dims());
      NoGradGuard ng;
      Tensor tau = b.direction->tau();
      CHECK(l2_norm(tau.data()) > 0.0);
    }
  }
  SUBCASE("biases start at zero and dynamics output layer starts at zero") {
    ModelBundle b = init_bundle(Mode::LSSL_NODE, 9);
    for (double v : b.encoder->l1.b.data()) CHECK(v == 0.0);
    for (double v : b.dynamics->l2.W.data()) CHECK(v == 0.0);
    for (double v : b.dynamics->l2.b.data()) CHECK(v == 0.0);
  }
}

TEST_CASE("forward passes are pure") {
  std::mt19937_64 rng(31);
  ModelBundle b = init_bundle(Mode::LSSL, 55, tiny_dims());
  Tensor x = rand_input(rng, 3, b.dims.input);
  NoGradGuard ng;
  Tensor z1 = b.encoder->forward(x);
  Tensor z2 = b.encoder->forward(x);
  CHECK(z1.data() == z2.data());
  Tensor t1 = b.direction->tau();
  Tensor t2 = b.direction->tau();
  CHECK(t1.data() == t2.data());
}

