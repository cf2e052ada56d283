#include "lssl/eval.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <random>
#include <set>
#include <stdexcept>

#include "lssl/graph.hpp"
#include "lssl/objectives.hpp"
#include "lssl/ops.hpp"
#include "lssl/optim.hpp"
#include "lssl/stats.hpp"

namespace lssl {

namespace {

constexpr std::uint64_t kHeadTag = 0x9E3779B900000011ULL;

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

void require_disjoint(const std::vector<int>& a, const std::vector<int>& b,
                      const char* what) {
  std::set<int> sa(a.begin(), a.end());
  for (int s : b)
    if (sa.count(s))
      throw std::logic_error(std::string("split leakage: subject in two splits of ") + what);
}

void verify_splits(const SequenceDataset& d) {
  require_disjoint(d.train, d.val, "sequence dataset");
  require_disjoint(d.train, d.test, "sequence dataset");
  require_disjoint(d.val, d.test, "sequence dataset");
}

std::vector<int> pair_subjects(const std::vector<PairItem>& items) {
  std::vector<int> out;
  for (const PairItem& it : items) out.push_back(it.subject);
  return out;
}

void verify_splits(const PairDataset& d) {
  require_disjoint(pair_subjects(d.train), pair_subjects(d.val), "pair dataset");
  require_disjoint(pair_subjects(d.train), pair_subjects(d.test), "pair dataset");
  require_disjoint(pair_subjects(d.val), pair_subjects(d.test), "pair dataset");
}

void validate_cfg(const FinetuneConfig& cfg) {
  if (cfg.epochs <= 0 || cfg.lr <= 0.0 || cfg.weight_decay < 0.0 || cfg.batch_size <= 0)
    throw std::invalid_argument("FinetuneConfig: epochs, lr, batch_size must be positive");
}

std::vector<int> shuffled_indices(int n, std::mt19937_64& rng) {
  std::vector<int> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::shuffle(idx.begin(), idx.end(), rng);
  return idx;
}

template <typename T>
std::vector<T> gather(const std::vector<T>& v, const std::vector<int>& idx) {
  std::vector<T> out;
  out.reserve(idx.size());
  for (int i : idx) out.push_back(v[i]);
  return out;
}

// AUC or NaN when the labels collapse to one class.
double auc_or_nan(const std::vector<double>& scores, const std::vector<int>& labels) {
  bool pos = false, neg = false;
  for (int l : labels) (l ? pos : neg) = true;
  if (!pos || !neg) return std::numeric_limits<double>::quiet_NaN();
  return auc(scores, labels);
}

struct TailScores {
  std::vector<double> mild, moderate, severe;
};

// Tail sums of row-wise softmax: P(grade >= 1), >= 2, >= 3.
TailScores tail_scores(const Tensor& logits) {
  const std::vector<double> probs = softmax_rows(logits);
  const int rows = logits.shape()[0];
  const int cols = logits.shape()[1];
  TailScores out;
  for (int r = 0; r < rows; ++r) {
    double acc[3] = {0.0, 0.0, 0.0};
    for (int g = 1; g < cols; ++g) {
      const double p = probs[static_cast<std::size_t>(r) * cols + g];
      if (g >= 1) acc[0] += p;
      if (g >= 2) acc[1] += p;
      if (g >= 3) acc[2] += p;
    }
    out.mild.push_back(acc[0]);
    out.moderate.push_back(acc[1]);
    out.severe.push_back(acc[2]);
  }
  return out;
}

void fill_auc_triplet(MetricsReport& rep, const TailScores& s,
                      const std::vector<int>& grades) {
  std::vector<int> y1, y2, y3;
  for (int g : grades) {
    y1.push_back(g >= 1 ? 1 : 0);
    y2.push_back(g >= 2 ? 1 : 0);
    y3.push_back(g >= 3 ? 1 : 0);
  }
  rep.auc_mild = auc_or_nan(s.mild, y1);
  rep.auc_moderate = auc_or_nan(s.moderate, y2);
  rep.auc_severe = auc_or_nan(s.severe, y3);
}

}  // namespace

VisitSamples collect_visit_samples(const Cohort& cohort,
                                   const std::vector<int>& subjects) {
  const int d = cohort.params.obs_dim;
  std::size_t rows = 0;
  for (int si : subjects) rows += cohort.subjects[si].visits.size();
  VisitSamples out;
  out.x = Tensor::zeros({static_cast<int>(rows), d});
  std::size_t r = 0;
  for (int si : subjects) {
    for (const Visit& v : cohort.subjects[si].visits) {
      std::copy(v.x.begin(), v.x.end(), out.x.data().begin() + r * d);
      out.age.push_back(v.age);
      out.subject.push_back(si);
      ++r;
    }
  }
  return out;
}

WindowSamples collect_window_samples(const Cohort& cohort,
                                     const std::vector<int>& subjects) {
  const int d = cohort.params.obs_dim;
  std::size_t rows = 0;
  for (int si : subjects) {
    const auto& visits = cohort.subjects[si].visits;
    if (visits.size() < 4)
      throw std::invalid_argument("collect_window_samples: sequence shorter than four visits");
    rows += visits.size() - 3;
  }
  WindowSamples out;
  out.x0 = Tensor::zeros({static_cast<int>(rows), d});
  out.x1 = Tensor::zeros({static_cast<int>(rows), d});
  out.x2 = Tensor::zeros({static_cast<int>(rows), d});
  std::size_t r = 0;
  for (int si : subjects) {
    const auto& visits = cohort.subjects[si].visits;
    for (std::size_t k = 0; k + 3 < visits.size(); ++k) {
      std::copy(visits[k].x.begin(), visits[k].x.end(), out.x0.data().begin() + r * d);
      std::copy(visits[k + 1].x.begin(), visits[k + 1].x.end(),
                out.x1.data().begin() + r * d);
      std::copy(visits[k + 2].x.begin(), visits[k + 2].x.end(),
                out.x2.data().begin() + r * d);
      out.target_grade.push_back(visits[k + 3].grade);
      out.subject.push_back(si);
      ++r;
    }
  }
  return out;
}

Tensor gather_rows(const Tensor& x, const std::vector<int>& rows) {
  if (x.shape().size() != 2)
    throw std::invalid_argument("gather_rows: expected a 2-D tensor");
  const int d = x.shape()[1];
  Tensor out = Tensor::zeros({static_cast<int>(rows.size()), d});
  for (std::size_t r = 0; r < rows.size(); ++r)
    std::copy(x.data().begin() + static_cast<std::size_t>(rows[r]) * d,
              x.data().begin() + static_cast<std::size_t>(rows[r] + 1) * d,
              out.data().begin() + r * d);
  return out;
}

std::vector<std::vector<double>> snapshot_params(const std::vector<Tensor>& params) {
  std::vector<std::vector<double>> snap;
  snap.reserve(params.size());
  for (const Tensor& p : params) snap.push_back(p.data());
  return snap;
}

void restore_params(const std::vector<Tensor>& params,
                    const std::vector<std::vector<double>>& snap) {
  if (params.size() != snap.size())
    throw std::invalid_argument("restore_params: size mismatch");
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor p = params[i];
    if (p.data().size() != snap[i].size())
      throw std::invalid_argument("restore_params: shape mismatch");
    p.data() = snap[i];
  }
}

double regression_mse(const ModelBundle& bundle, const Tensor& x,
                      const std::vector<double>& ages, double age_mean,
                      double age_std) {
  if (!bundle.mlp_head) throw std::invalid_argument("regression_mse: bundle has no head");
  if (static_cast<std::size_t>(x.shape()[0]) != ages.size())
    throw std::invalid_argument("regression_mse: row count mismatch");
  NoGradGuard ng;
  Tensor pred = bundle.mlp_head->forward(bundle.encoder->forward(x));
  double acc = 0.0;
  for (std::size_t i = 0; i < ages.size(); ++i) {
    const double years = pred.at(i) * age_std + age_mean;
    acc += (years - ages[i]) * (years - ages[i]);
  }
  return acc / static_cast<double>(ages.size());
}

MetricsReport finetune_age_regression(ModelBundle& bundle, const Cohort& cohort,
                                      const SequenceDataset& data,
                                      const FinetuneConfig& cfg) {
  const auto start = Clock::now();
  validate_cfg(cfg);
  verify_splits(data);
  if (data.train.empty() || data.val.empty() || data.test.empty())
    throw std::invalid_argument("finetune_age_regression: every split needs subjects");

  VisitSamples train = collect_visit_samples(cohort, data.train);
  VisitSamples val = collect_visit_samples(cohort, data.val);
  VisitSamples test = collect_visit_samples(cohort, data.test);

  double age_mean = 0.0;
  for (double a : train.age) age_mean += a;
  age_mean /= static_cast<double>(train.age.size());
  double age_var = 0.0;
  for (double a : train.age) age_var += (a - age_mean) * (a - age_mean);
  const double age_std =
      train.age.size() > 1 && age_var > 0.0
          ? std::sqrt(age_var / static_cast<double>(train.age.size() - 1))
          : 1.0;

  bundle.attach_mlp_head(1, splitmix64(cfg.seed ^ kHeadTag));
  std::vector<Tensor> trainable = bundle.encoder->parameters();
  for (const Tensor& p : bundle.mlp_head->parameters()) trainable.push_back(p);

  const int n = train.x.shape()[0];
  const int steps_per_epoch = (n + cfg.batch_size - 1) / cfg.batch_size;
  AdamW opt(trainable, {.lr = cfg.lr, .weight_decay = cfg.weight_decay});
  OneCycleSchedule sched{.max_lr = cfg.lr,
                         .total_steps = static_cast<std::int64_t>(cfg.epochs) * steps_per_epoch};

  std::mt19937_64 rng(cfg.seed);
  double best_val = std::numeric_limits<double>::infinity();
  auto best = snapshot_params(trainable);
  std::int64_t step = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const std::vector<int> order = shuffled_indices(n, rng);
    for (int b = 0; b < n; b += cfg.batch_size) {
      const std::vector<int> idx(order.begin() + b,
                                 order.begin() + std::min(n, b + cfg.batch_size));
      Tensor xb = gather_rows(train.x, idx);
      const int m = static_cast<int>(idx.size());
      Tensor yb = Tensor::zeros({m, 1});
      for (int r = 0; r < m; ++r)
        yb.data()[r] = (train.age[idx[r]] - age_mean) / age_std;
      opt.set_lr(sched.lr_at(step++));
      opt.zero_grad();
      Tensor loss = mse(bundle.mlp_head->forward(bundle.encoder->forward(xb)), yb);
      backward(loss);
      opt.step();
    }
    const double val_mse = regression_mse(bundle, val.x, val.age, age_mean, age_std);
    if (val_mse < best_val) {
      best_val = val_mse;
      best = snapshot_params(trainable);
    }
  }
  restore_params(trainable, best);

  MetricsReport rep;
  rep.task = "age_regression";
  rep.mode = mode_name(bundle.mode);
  rep.mse = regression_mse(bundle, test.x, test.age, age_mean, age_std);
  rep.seed = cfg.seed;
  rep.wall_seconds = seconds_since(start);
  return rep;
}

ScoredEval finetune_predict_next_visit(ModelBundle& bundle, const Cohort& cohort,
                                       const SequenceDataset& data,
                                       const FinetuneConfig& cfg) {
  const auto start = Clock::now();
  validate_cfg(cfg);
  verify_splits(data);
  if (data.train.empty() || data.val.empty() || data.test.empty())
    throw std::invalid_argument("finetune_predict_next_visit: every split needs subjects");

  WindowSamples train = collect_window_samples(cohort, data.train);
  WindowSamples val = collect_window_samples(cohort, data.val);
  WindowSamples test = collect_window_samples(cohort, data.test);

  bundle.attach_recurrent_head(splitmix64(cfg.seed ^ kHeadTag));
  std::vector<Tensor> trainable = bundle.encoder->parameters();
  for (const Tensor& p : bundle.recurrent_head->parameters()) trainable.push_back(p);

  auto logits_of = [&](const Tensor& x0, const Tensor& x1, const Tensor& x2) {
    return bundle.recurrent_head->forward({bundle.encoder->forward(x0),
                                           bundle.encoder->forward(x1),
                                           bundle.encoder->forward(x2)});
  };

  const int n = train.x0.shape()[0];
  const int steps_per_epoch = (n + cfg.batch_size - 1) / cfg.batch_size;
  AdamW opt(trainable, {.lr = cfg.lr, .weight_decay = cfg.weight_decay});
  OneCycleSchedule sched{.max_lr = cfg.lr,
                         .total_steps = static_cast<std::int64_t>(cfg.epochs) * steps_per_epoch};

  std::mt19937_64 rng(cfg.seed);
  double best_val = std::numeric_limits<double>::infinity();
  auto best = snapshot_params(trainable);
  std::int64_t step = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const std::vector<int> order = shuffled_indices(n, rng);
    for (int b = 0; b < n; b += cfg.batch_size) {
      const std::vector<int> idx(order.begin() + b,
                                 order.begin() + std::min(n, b + cfg.batch_size));
      opt.set_lr(sched.lr_at(step++));
      opt.zero_grad();
      Tensor loss = cross_entropy(logits_of(gather_rows(train.x0, idx),
                                            gather_rows(train.x1, idx),
                                            gather_rows(train.x2, idx)),
                                  gather(train.target_grade, idx));
      backward(loss);
      opt.step();
    }
    double val_ce;
    {
      NoGradGuard ng;
      val_ce = cross_entropy(logits_of(val.x0, val.x1, val.x2), val.target_grade).value();
    }
    if (val_ce < best_val) {
      best_val = val_ce;
      best = snapshot_params(trainable);
    }
  }
  restore_params(trainable, best);

  ScoredEval out;
  {
    NoGradGuard ng;
    const TailScores scores = tail_scores(logits_of(test.x0, test.x1, test.x2));
    out.score_mild = scores.mild;
    out.score_moderate = scores.moderate;
    out.score_severe = scores.severe;
    out.target_grade = test.target_grade;
    fill_auc_triplet(out.report, scores, test.target_grade);
  }
  out.report.task = "predict_next_visit";
  out.report.mode = mode_name(bundle.mode);
  out.report.seed = cfg.seed;
  out.report.wall_seconds = seconds_since(start);
  return out;
}

ScoredEval evaluate_node_cls(ModelBundle& bundle, const Cohort& cohort,
                             const PairDataset& data, const FinetuneConfig& cfg) {
  const auto start = Clock::now();
  validate_cfg(cfg);
  if (!bundle.dynamics)
    throw std::invalid_argument("evaluate_node_cls: bundle has no flow field");
  verify_splits(data);
  if (data.train.empty() || data.val.empty() || data.test.empty())
    throw std::invalid_argument("evaluate_node_cls: every split needs pairs");

  PairBatch train = make_pair_batch(cohort, data.train, 0, data.train.size());
  PairBatch val = make_pair_batch(cohort, data.val, 0, data.val.size());
  PairBatch test = make_pair_batch(cohort, data.test, 0, data.test.size());

  bundle.attach_mlp_head(static_cast<int>(bundle.dims.grades),
                         splitmix64(cfg.seed ^ kHeadTag));
  std::vector<Tensor> trainable = bundle.encoder->parameters();
  for (const Tensor& p : bundle.dynamics->parameters()) trainable.push_back(p);
  for (const Tensor& p : bundle.mlp_head->parameters()) trainable.push_back(p);

  const int n = train.x_i.shape()[0];
  const int steps_per_epoch = (n + cfg.batch_size - 1) / cfg.batch_size;
  AdamW opt(trainable, {.lr = cfg.lr, .weight_decay = cfg.weight_decay});
  OneCycleSchedule sched{.max_lr = cfg.lr,
                         .total_steps = static_cast<std::int64_t>(cfg.epochs) * steps_per_epoch};

  std::mt19937_64 rng(cfg.seed);
  double best_val = std::numeric_limits<double>::infinity();
  auto best = snapshot_params(trainable);
  std::int64_t step = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const std::vector<int> order = shuffled_indices(n, rng);
    for (int b = 0; b < n; b += cfg.batch_size) {
      const std::vector<int> idx(order.begin() + b,
                                 order.begin() + std::min(n, b + cfg.batch_size));
      opt.set_lr(sched.lr_at(step++));
      opt.zero_grad();
      Tensor logits = bundle.node_cls_forward(gather_rows(train.x_i, idx),
                                              gather(train.dt, idx), cfg.solver);
      Tensor loss = cross_entropy(logits, gather(train.grade_j, idx));
      backward(loss);
      opt.step();
    }
    double val_ce;
    {
      NoGradGuard ng;
      val_ce = cross_entropy(bundle.node_cls_forward(val.x_i, val.dt, cfg.solver),
                             val.grade_j)
                   .value();
    }
    if (val_ce < best_val) {
      best_val = val_ce;
      best = snapshot_params(trainable);
    }
  }
  restore_params(trainable, best);

  ScoredEval out;
  {
    NoGradGuard ng;
    const TailScores scores =
        tail_scores(bundle.node_cls_forward(test.x_i, test.dt, cfg.solver));
    out.score_mild = scores.mild;
    out.score_moderate = scores.moderate;
    out.score_severe = scores.severe;
    out.target_grade = test.grade_j;
    fill_auc_triplet(out.report, scores, test.grade_j);
  }
  out.report.task = "node_cls";
  out.report.mode = mode_name(bundle.mode);
  out.report.seed = cfg.seed;
  out.report.wall_seconds = seconds_since(start);
  return out;
}

namespace {

std::vector<double> trajectory_norms(const ModelBundle& bundle, const Cohort& cohort,
                                     const std::vector<PairItem>& items,
                                     bool use_node_trajectory,
                                     const SolverConfig& solver) {
  NoGradGuard ng;
  PairBatch batch = make_pair_batch(cohort, items, 0, items.size());
  const int latent = bundle.dims.latent;
  Tensor z_i = bundle.encoder->forward(batch.x_i);
  Tensor z_end;
  if (use_node_trajectory) {
    if (!bundle.dynamics)
      throw std::invalid_argument("trajectory_norm_analysis: bundle has no flow field");
    std::vector<double> zeros(items.size(), 0.0);
    z_end = ode_predict(bundle.dynamics, z_i, zeros, batch.dt, solver);
  } else {
    z_end = bundle.encoder->forward(batch.x_j);
  }
  std::vector<double> norms;
  for (std::size_t r = 0; r < items.size(); ++r) {
    double acc = 0.0;
    for (int c = 0; c < latent; ++c) {
      const double d = z_end.at(r * latent + c) - z_i.at(r * latent + c);
      acc += d * d;
    }
    norms.push_back(std::sqrt(acc));
  }
  return norms;
}

}  // namespace

std::pair<GroupNormStats, GroupNormStats> trajectory_norm_analysis(
    const ModelBundle& bundle, const Cohort& cohort,
    const std::vector<PairItem>& group_fast, const std::vector<PairItem>& group_slow,
    bool use_node_trajectory, const SolverConfig& solver, bool require_test_split) {
  if (group_fast.size() < 2 || group_slow.size() < 2)
    throw std::invalid_argument("trajectory_norm_analysis: each group needs >= 2 pairs");
  if (require_test_split) {
    for (const auto* group : {&group_fast, &group_slow})
      for (const PairItem& it : *group)
        if (cohort.subjects[it.subject].split != Split::Test)
          throw std::logic_error(
              "trajectory_norm_analysis: pair from outside the test split");
  }
  const std::vector<double> fast =
      trajectory_norms(bundle, cohort, group_fast, use_node_trajectory, solver);
  const std::vector<double> slow =
      trajectory_norms(bundle, cohort, group_slow, use_node_trajectory, solver);
  const WelchResult w = welch_one_sided_greater(fast, slow);

  GroupNormStats a, b;
  a.label = "fast";
  a.count = w.n_a;
  a.mean = w.mean_a;
  a.stddev = std::sqrt(w.var_a);
  b.label = "slow";
  b.count = w.n_b;
  b.mean = w.mean_b;
  b.stddev = std::sqrt(w.var_b);
  a.t = b.t = w.t;
  a.p = b.p = w.p;
  return {a, b};
}

}  // namespace lssl
