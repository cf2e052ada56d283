#include <cstdio>
#include <exception>
#include <filesystem>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "lssl/pipeline.hpp"

namespace {

// The cohort on disk is the source of truth; a config that disagrees with it
// would stamp wrong provenance into checkpoints and rows.
lssl::Cohort load_cohort_checked(const lssl::ExperimentConfig& cfg, const std::string& base_flag) {
  const std::string base = base_flag.empty() ? cfg.out_dir + "/cohort" : base_flag;
  if (!std::filesystem::exists(base + ".jsonl"))
    throw std::runtime_error("no cohort at " + base + ".jsonl; run `generate` first or pass --cohort");
  lssl::Cohort cohort = lssl::load_cohort(base);
  if (static_cast<int>(cohort.subjects.size()) != cfg.n_subjects)
    throw std::runtime_error("--subjects " + std::to_string(cfg.n_subjects) +
                             " does not match the cohort (" +
                             std::to_string(cohort.subjects.size()) + " subjects)");
  if (cohort.seed != cfg.seed)
    throw std::runtime_error("--seed " + std::to_string(cfg.seed) +
                             " does not match the cohort (seed " +
                             std::to_string(cohort.seed) + ")");
  return cohort;
}

void print_split_counts(const lssl::Cohort& cohort) {
  int train = 0, val = 0, test = 0;
  for (const auto& s : cohort.subjects) {
    if (s.split == lssl::Split::Train) ++train;
    else if (s.split == lssl::Split::Val) ++val;
    else ++test;
  }
  std::printf("subjects train/val/test %d/%d/%d\n", train, val, test);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Longitudinal self-supervised pretraining and evaluation on a synthetic cohort"};
  app.require_subcommand(1);
  app.set_config("--config", "", "Flat key=value config file; explicit flags win");

  lssl::ExperimentConfig cfg;
  int jobs = 1;
  int max_epochs_this_run = 0;
  std::string task, checkpoint, resume, cohort_base;

  app.add_option("--mode", cfg.mode, "Objective family: ae, lssl, or s_lssl")
      ->capture_default_str();
  app.add_option("--lambda-dir", cfg.lambda_dir, "Alignment term weight")->capture_default_str();
  app.add_option("--lambda-recon", cfg.lambda_recon, "Reconstruction term weight")
      ->capture_default_str();
  app.add_flag("--node,!--no-node", cfg.use_node, "Predict the second visit with the flow field");
  app.add_option("--seed", cfg.seed, "Cohort and training seed")->capture_default_str();
  app.add_option("--subjects", cfg.n_subjects, "Cohort size")->capture_default_str();
  app.add_option("--epochs", cfg.pretrain_epochs, "Pretraining epochs")->capture_default_str();
  app.add_option("--lr", cfg.pretrain_lr, "Pretraining peak learning rate")
      ->capture_default_str();
  app.add_option("--weight-decay", cfg.weight_decay, "Pretraining weight decay")
      ->capture_default_str();
  app.add_option("--batch-size", cfg.batch_size, "Batch size for all loops")
      ->capture_default_str();
  app.add_option("--finetune-epochs", cfg.finetune_epochs, "Fine-tuning epochs per task")
      ->capture_default_str();
  app.add_option("--finetune-lr", cfg.finetune_lr, "Fine-tuning peak learning rate")
      ->capture_default_str();
  app.add_option("--finetune-weight-decay", cfg.finetune_weight_decay,
                 "Fine-tuning weight decay")
      ->capture_default_str();
  app.add_option("--rtol", cfg.rtol, "Flow solver relative tolerance")->capture_default_str();
  app.add_option("--atol", cfg.atol, "Flow solver absolute tolerance")->capture_default_str();
  app.add_option("--out", cfg.out_dir, "Output directory")->capture_default_str();

  CLI::App* gen = app.add_subcommand("generate", "Write cohort, split listing, and manifest");
  gen->fallthrough();

  CLI::App* pre = app.add_subcommand("pretrain", "Train the configured objective on visit pairs");
  pre->fallthrough();
  pre->add_option("--cohort", cohort_base, "Cohort base path (default <out>/cohort)");
  pre->add_option("--resume", resume, "Checkpoint to continue from");
  pre->add_option("--max-epochs-this-run", max_epochs_this_run,
                  "Stop after this many epochs; resume later from the last checkpoint");

  CLI::App* ev = app.add_subcommand("evaluate", "Fine-tune or analyze one downstream task");
  ev->fallthrough();
  ev->add_option("--task", task, "age, next_visit, norms, or node_cls")->required();
  ev->add_option("--checkpoint", checkpoint,
                 "Pretrained weights; omit for the from-scratch baseline");
  ev->add_option("--cohort", cohort_base, "Cohort base path (default <out>/cohort)");

  CLI::App* rep = app.add_subcommand(
      "reproduce", "Full grid: generate, pretrain every variant, evaluate, summarize");
  rep->fallthrough();
  rep->add_option("--jobs", jobs, "Concurrent pretraining cells")->capture_default_str();

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) {
      const lssl::GenerateResult res = lssl::cmd_generate(cfg);
      print_split_counts(res.cohort);
      std::printf("cohort   %s.jsonl\n", res.cohort_base.c_str());
      std::printf("splits   %s\n", res.splits_path.c_str());
      std::printf("manifest %s\n", res.manifest_path.c_str());
    } else if (pre->parsed()) {
      const lssl::Cohort cohort = load_cohort_checked(cfg, cohort_base);
      const lssl::PretrainResult res =
          lssl::cmd_pretrain(cfg, cohort, resume, max_epochs_this_run);
      std::printf("mode %s  epochs run %d  best epoch %d  best val %.6g\n",
                  lssl::mode_name(lssl::validated_mode(cfg)).c_str(), res.epochs_run,
                  res.best_epoch, res.best_val_total);
      std::printf("best %s\nlast %s\nlog  %s\n", res.best_path.c_str(), res.last_path.c_str(),
                  res.log_path.c_str());
    } else if (ev->parsed()) {
      const lssl::Cohort cohort = load_cohort_checked(cfg, cohort_base);
      const lssl::EvaluateResult res = lssl::cmd_evaluate(cfg, cohort, task, checkpoint);
      for (const lssl::ResultRow& row : res.rows)
        std::printf("%-12s %-14s %.6g\n", row.mode.c_str(), row.metric.c_str(), row.value);
      std::printf("results %s\n", res.results_path.c_str());
      for (const std::string& p : res.score_paths) std::printf("scores  %s\n", p.c_str());
    } else if (rep->parsed()) {
      const lssl::ReproduceResult res = lssl::cmd_reproduce(cfg, jobs);
      std::printf("results %s\nsummary %s\n", res.results_path.c_str(), res.summary_path.c_str());
    }
  } catch (const std::exception& ex) {
    std::cerr << "error: " << ex.what() << "\n";
    return 1;
  }
  return 0;
}
