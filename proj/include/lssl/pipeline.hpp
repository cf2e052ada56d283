#pragma once

#include <string>
#include <vector>

#include "lssl/config.hpp"
#include "lssl/eval.hpp"
#include "lssl/synthdata.hpp"

namespace lssl {

// Filesystem-facing experiment steps. Every step is a deterministic function
// of (config, cohort): same inputs give byte-identical outputs.

struct GenerateResult {
  Cohort cohort;
  std::string cohort_base;    // base path; .jsonl and .meta.json hang off it
  std::string splits_path;
  std::string manifest_path;
};

// Writes cohort.jsonl, cohort.meta.json, splits.json, manifest.json under
// cfg.out_dir (created if missing).
GenerateResult cmd_generate(const ExperimentConfig& cfg);

struct PretrainResult {
  std::string best_path;
  std::string last_path;
  std::string log_path;
  int epochs_run = 0;
  int best_epoch = -1;
  double best_val_total = 0.0;
  double last_train_total = 0.0;
  double last_val_total = 0.0;
  double last_val_direction = 0.0;  // batch-mean cosine on validation pairs
};

// Trains the configured objective on grade-change pairs from the train split,
// logging one CSV row per epoch and keeping two checkpoints: the latest
// completed epoch and the best validation loss. A non-finite loss aborts with
// the previous epoch's files untouched. With resume_from, training continues
// after the epoch stored in that checkpoint; the shuffle stream is derived
// from (seed, epoch), so a resumed epoch sees the batches the uninterrupted
// run would have seen. max_epochs_this_run > 0 caps how many epochs this
// invocation trains (the schedule still spans cfg.pretrain_epochs), which is
// how a walltime-limited run splits training into resumable chunks.
PretrainResult cmd_pretrain(const ExperimentConfig& cfg, const Cohort& cohort,
                            const std::string& resume_from = "",
                            int max_epochs_this_run = 0);

// One results.csv row.
struct ResultRow {
  std::string mode;  // weight provenance: pretraining mode, or "scratch"
  double lambda_dir = 0.0;
  double lambda_recon = 0.0;
  bool node = false;
  std::string task;
  std::string metric;
  double value = 0.0;
  std::uint64_t seed = 0;
  std::string config_hash;
};

void append_results(const std::string& path, const std::vector<ResultRow>& rows);

struct EvaluateResult {
  std::vector<ResultRow> rows;
  std::string results_path;
  std::vector<std::string> score_paths;
};

// Loads the checkpoint (or fresh weights when checkpoint_path is empty),
// runs one task from {age, next_visit, norms, node_cls}, appends rows to
// results.csv, and dumps per-example scores for the AUC tasks. node_cls
// needs flow-equipped weights.
EvaluateResult cmd_evaluate(const ExperimentConfig& cfg, const Cohort& cohort,
                            const std::string& task, const std::string& checkpoint_path);

struct ReproduceResult {
  std::string results_path;
  std::string summary_path;
  std::vector<std::string> checkpoint_paths;
};

// Full grid: generate, pretrain the six objective variants, evaluate every
// weight row (the six plus from-scratch) on every applicable task, and write
// summary.md with the comparison tables and directional pass/fail flags.
// jobs > 1 pretrains grid cells concurrently; results are identical either
// way because each cell is self-contained.
ReproduceResult cmd_reproduce(const ExperimentConfig& cfg, int jobs = 1);

// Adjacent-visit pairs of the given split partitioned into (fast, slow) by
// subject speed class.
std::pair<std::vector<PairItem>, std::vector<PairItem>> split_pairs_by_speed(
    const Cohort& cohort, const std::vector<PairItem>& items);

}  // namespace lssl
