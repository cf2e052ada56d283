#include "lssl/config.hpp"

#include <stdexcept>

#include <json.hpp>

namespace lssl {

namespace {

std::string fmt(double v) { return nlohmann::json(v).dump(); }

// What the weights alone say the base mode is.
std::string implied_base(double lambda_recon, double lambda_dir) {
  if (lambda_dir == 0.0) return "ae";
  if (lambda_recon == 0.0) return "s_lssl";
  return "lssl";
}

}  // namespace

Mode validated_mode(const ExperimentConfig& cfg) {
  if (cfg.mode != "ae" && cfg.mode != "lssl" && cfg.mode != "s_lssl")
    throw std::invalid_argument("config: mode must be ae, lssl, or s_lssl, got '" + cfg.mode + "'");
  if (cfg.lambda_recon < 0.0 || cfg.lambda_dir < 0.0)
    throw std::invalid_argument("config: loss weights must be nonnegative");
  if (cfg.lambda_recon == 0.0 && cfg.lambda_dir == 0.0)
    throw std::invalid_argument("config: both loss weights are zero; nothing to train");

  const std::string implied = implied_base(cfg.lambda_recon, cfg.lambda_dir);
  if (implied != cfg.mode)
    throw std::invalid_argument("config: mode '" + cfg.mode + "' contradicts weights (recon " +
                                fmt(cfg.lambda_recon) + ", dir " + fmt(cfg.lambda_dir) +
                                " imply '" + implied + "')");

  return mode_from_name(cfg.use_node ? cfg.mode + "_node" : cfg.mode);
}

void validate_config(const ExperimentConfig& cfg) {
  (void)validated_mode(cfg);
  if (cfg.pretrain_epochs < 1) throw std::invalid_argument("config: pretrain_epochs must be >= 1");
  if (cfg.finetune_epochs < 1) throw std::invalid_argument("config: finetune_epochs must be >= 1");
  if (cfg.batch_size < 1) throw std::invalid_argument("config: batch_size must be >= 1");
  if (!(cfg.pretrain_lr > 0.0) || !(cfg.finetune_lr > 0.0))
    throw std::invalid_argument("config: learning rates must be positive");
  if (cfg.weight_decay < 0.0 || cfg.finetune_weight_decay < 0.0)
    throw std::invalid_argument("config: weight decay must be nonnegative");
  if (!(cfg.rtol > 0.0) || !(cfg.atol > 0.0))
    throw std::invalid_argument("config: solver tolerances must be positive");
  if (cfg.n_subjects < 10) throw std::invalid_argument("config: n_subjects must be >= 10");
  if (cfg.out_dir.empty()) throw std::invalid_argument("config: out_dir must not be empty");
}

std::map<std::string, std::string> config_echo(const ExperimentConfig& cfg) {
  return {
      {"mode", cfg.mode},
      {"lambda_recon", fmt(cfg.lambda_recon)},
      {"lambda_dir", fmt(cfg.lambda_dir)},
      {"use_node", cfg.use_node ? "1" : "0"},
      {"pretrain_epochs", std::to_string(cfg.pretrain_epochs)},
      {"pretrain_lr", fmt(cfg.pretrain_lr)},
      {"weight_decay", fmt(cfg.weight_decay)},
      {"batch_size", std::to_string(cfg.batch_size)},
      {"finetune_epochs", std::to_string(cfg.finetune_epochs)},
      {"finetune_lr", fmt(cfg.finetune_lr)},
      {"finetune_weight_decay", fmt(cfg.finetune_weight_decay)},
      {"rtol", fmt(cfg.rtol)},
      {"atol", fmt(cfg.atol)},
      {"n_subjects", std::to_string(cfg.n_subjects)},
      {"seed", std::to_string(cfg.seed)},
      {"out_dir", cfg.out_dir},
  };
}

std::uint64_t fnv1a64(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string config_hash(const ExperimentConfig& cfg) {
  // out_dir does not change what is computed, so it stays out of the hash.
  std::string canon;
  for (const auto& [k, v] : config_echo(cfg)) {
    if (k == "out_dir") continue;
    canon += k;
    canon += '=';
    canon += v;
    canon += '\n';
  }
  const std::uint64_t h = fnv1a64(canon);
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return std::string(buf);
}

}  // namespace lssl
