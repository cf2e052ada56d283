#pragma once

#include <cstdint>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "lssl/models.hpp"
#include "lssl/odesolve.hpp"
#include "lssl/synthdata.hpp"

namespace lssl {

struct FinetuneConfig {
  int epochs = 150;
  double lr = 1e-3;
  double weight_decay = 1e-4;
  int batch_size = 128;
  std::uint64_t seed = 0;
  SolverConfig solver;
};

// One result row. Fields that a task does not produce stay NaN.
struct MetricsReport {
  std::string task;
  std::string mode;
  double mse = std::numeric_limits<double>::quiet_NaN();
  double auc_mild = std::numeric_limits<double>::quiet_NaN();
  double auc_moderate = std::numeric_limits<double>::quiet_NaN();
  double auc_severe = std::numeric_limits<double>::quiet_NaN();
  double norm_mean_fast = std::numeric_limits<double>::quiet_NaN();
  double norm_std_fast = std::numeric_limits<double>::quiet_NaN();
  double norm_mean_slow = std::numeric_limits<double>::quiet_NaN();
  double norm_std_slow = std::numeric_limits<double>::quiet_NaN();
  double norm_p = std::numeric_limits<double>::quiet_NaN();
  std::uint64_t seed = 0;
  double wall_seconds = 0.0;
};

struct GroupNormStats {
  std::string label;
  int count = 0;
  double mean = 0.0;
  double stddev = 0.0;
  double t = 0.0;
  double p = 0.0;
};

// -------- sample materialization (exposed for tests and the pipeline) --------

// Every visit of the listed subjects as one row.
struct VisitSamples {
  Tensor x;
  std::vector<double> age;
  std::vector<int> subject;
};
VisitSamples collect_visit_samples(const Cohort& cohort,
                                   const std::vector<int>& subjects);

// Sliding windows of three consecutive visits plus the grade of the fourth.
struct WindowSamples {
  Tensor x0, x1, x2;
  std::vector<int> target_grade;
  std::vector<int> subject;
};
WindowSamples collect_window_samples(const Cohort& cohort,
                                     const std::vector<int>& subjects);

Tensor gather_rows(const Tensor& x, const std::vector<int>& rows);

std::vector<std::vector<double>> snapshot_params(const std::vector<Tensor>& params);
void restore_params(const std::vector<Tensor>& params,
                    const std::vector<std::vector<double>>& snap);

// Mean squared error in squared years: predictions are de-standardized with
// the given training-set statistics before comparison.
double regression_mse(const ModelBundle& bundle, const Tensor& x,
                      const std::vector<double>& ages, double age_mean,
                      double age_std);

// -------- fine-tuning tasks --------

// Attaches a fresh one-output head and fine-tunes it together with the
// encoder on visit-level (observation, age) samples; reports test MSE in
// squared years. Throws on split leakage.
MetricsReport finetune_age_regression(ModelBundle& bundle, const Cohort& cohort,
                                      const SequenceDataset& data,
                                      const FinetuneConfig& cfg);

// Grade scores exported with a report so AUCs can be recomputed externally.
struct ScoredEval {
  MetricsReport report;
  std::vector<int> target_grade;
  std::vector<double> score_mild, score_moderate, score_severe;
};

// Attaches a fresh recurrent head over the encoded last three visits and
// trains with cross-entropy on the next visit's grade. The three AUCs score
// the events grade>=1, >=2, >=3 from summed softmax tails; an AUC is NaN if
// the test split lacks one of the classes.
ScoredEval finetune_predict_next_visit(ModelBundle& bundle, const Cohort& cohort,
                                       const SequenceDataset& data,
                                       const FinetuneConfig& cfg);

// Fine-tunes encoder, flow field, and a fresh grade head on (first visit,
// elapsed time) -> next grade. Requires a flow-equipped bundle.
ScoredEval evaluate_node_cls(ModelBundle& bundle, const Cohort& cohort,
                             const PairDataset& data, const FinetuneConfig& cfg);

// Per-pair latent trajectory norms for two groups and a one-sided Welch test
// that the first group's mean norm exceeds the second's. With
// use_node_trajectory the trajectory is the flow prediction minus the start
// latent. When require_test_split is set, any pair from a subject outside the
// test split is a hard error.
std::pair<GroupNormStats, GroupNormStats> trajectory_norm_analysis(
    const ModelBundle& bundle, const Cohort& cohort,
    const std::vector<PairItem>& group_fast, const std::vector<PairItem>& group_slow,
    bool use_node_trajectory, const SolverConfig& solver = {},
    bool require_test_split = true);

}  // namespace lssl
