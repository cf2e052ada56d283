#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "lssl/models.hpp"

namespace lssl {

// One experiment = one cohort seed, one pretraining configuration, one output
// directory. Defaults are desk scale: they finish in minutes on a laptop and
// every knob can be raised from the CLI or a config file.
struct ExperimentConfig {
  // Base objective family; use_node switches in the flow-field variant.
  // "ae" reconstructs only, "lssl" adds the alignment term, "s_lssl" keeps
  // only the alignment term.
  std::string mode = "lssl";
  double lambda_recon = 1.0;
  double lambda_dir = 1.0;
  bool use_node = false;

  int pretrain_epochs = 60;
  double pretrain_lr = 5e-4;
  double weight_decay = 1e-5;
  int batch_size = 16;

  int finetune_epochs = 30;
  double finetune_lr = 1e-3;
  double finetune_weight_decay = 1e-4;

  double rtol = 1e-3;
  double atol = 1e-4;

  int n_subjects = 1000;
  std::uint64_t seed = 0;
  std::string out_dir = "out";
};

// Composed full mode ("s_lssl" + use_node -> Mode::S_LSSL_NODE). Throws
// invalid_argument when the weights contradict the mode: a zero alignment
// weight with positive reconstruction is an autoencoder, a zero
// reconstruction weight with positive alignment is the Siamese variant, and
// the combined objective needs both. Checked before any compute so a typo
// cannot silently train the wrong objective.
Mode validated_mode(const ExperimentConfig& cfg);

// Range checks on everything else (epochs, rates, tolerances, cohort size).
void validate_config(const ExperimentConfig& cfg);

// Canonical flat key=value rendering; doubles use shortest round-trip form.
std::map<std::string, std::string> config_echo(const ExperimentConfig& cfg);

std::uint64_t fnv1a64(const std::string& bytes);

// 16 hex digits over the canonical rendering; stamped on every results row.
std::string config_hash(const ExperimentConfig& cfg);

}  // namespace lssl
