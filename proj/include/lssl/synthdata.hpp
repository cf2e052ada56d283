#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "lssl/tensor.hpp"

namespace lssl {

enum class SpeedClass { Slow, Fast };
enum class Split { Train, Val, Test };

const char* speed_name(SpeedClass c);
const char* split_name(Split s);
Split split_from_name(const std::string& name);

// One observation of a subject. `time` is years since the subject's baseline
// visit; `age` is baseline_age + time.
struct Visit {
  double time = 0.0;
  double age = 0.0;
  int grade = 0;
  std::vector<double> x;
};

struct SubjectRecord {
  std::uint64_t id = 0;
  double baseline_age = 0.0;
  SpeedClass speed = SpeedClass::Slow;
  double rate = 0.0;
  double onset_age = 0.0;
  std::vector<double> nuisance;
  Split split = Split::Train;
  std::vector<Visit> visits;
};

struct CohortParams {
  int obs_dim = 64;
  int nuisance_dim = 12;
  // Per-visit acquisition artifacts live in a low-rank subspace of scale
  // acq_scale per coordinate; iid pixel noise is noise_sigma. Acquisition
  // variance dominates, the way unregistered scans differ far more by field
  // of view than by disease change.
  int acq_dim = 4;
  double acq_scale = 0.25;
  double noise_sigma = 0.012;
  // Column scales of the observation embedding: severity is deliberately a
  // weak direction relative to the per-subject nuisance identity.
  double severity_scale = 0.35;
  double nuisance_scale = 0.35;
  double bias_scale = 0.1;
  // Speed class shifts the first nuisance coordinate by +-class_sep/2, the
  // way clinically known progression-speed factors are visible in the scan
  // itself. Within-subject differences are unaffected.
  double class_sep = 1.25;
  // Severity enters the observation as s * (1 + gain_alpha * tanh(<u, nu>)),
  // a per-subject gain tied to identity: within-subject changes stay on one
  // shared direction, but absolute severity cannot be read off without
  // untangling the gain.
  double gain_alpha = 0.5;
  double onset_mean = 52.0;
  double onset_sd = 11.0;
  // Slow transitions outlast the observable age span, fast ones complete
  // inside it; the class contrast in per-pair progression survives the
  // population average only under that asymmetry.
  double slow_rate_lo = 0.035;
  double slow_rate_hi = 0.048;
  double fast_rate_lo = 0.15;
  double fast_rate_hi = 0.35;
  int min_visits = 5;
  int max_visits = 8;
  double gap_lo = 1.2;
  double gap_hi = 2.4;
  double age_lo = 9.0;
  double age_hi = 91.0;
};

struct Cohort {
  CohortParams params;
  std::uint64_t seed = 0;
  // Observation embedding, shared cohort-wide: W is obs_dim x
  // (1 + nuisance_dim) row-major, column 0 multiplies severity. embed_u is
  // the nuisance direction that sets each subject's severity gain. embed_A
  // is obs_dim x acq_dim row-major, the acquisition subspace.
  std::vector<double> embed_W;
  std::vector<double> embed_b;
  std::vector<double> embed_u;
  std::vector<double> embed_A;
  std::vector<SubjectRecord> subjects;
};

std::uint64_t splitmix64(std::uint64_t x);

// Latent disease severity in [0, 4] as a function of age.
double severity_at(double rate, double onset_age, double age);
int grade_from_severity(double s);

// Per-subject severity gain, in [1 - gain_alpha, 1 + gain_alpha].
double severity_gain(const Cohort& cohort, const std::vector<double>& nuisance);

// Noiseless observation of severity s with the given nuisance vector.
std::vector<double> clean_observation(const Cohort& cohort, double s,
                                      const std::vector<double>& nuisance);

// Deterministic per (n_subjects, seed, params). Subjects are generated from
// independent streams seeded by splitmix64(seed ^ id), so generation order
// does not matter. Splits are assigned 60/20/20 by subject, stratified by
// speed class and final grade.
Cohort generate_cohort(int n_subjects, std::uint64_t seed,
                       const CohortParams& params = {});

// -------- dataset shapes --------

// One consecutive-visit pair of a subject. `subject` indexes into
// Cohort::subjects; j == i + 1 always.
struct PairItem {
  int subject = 0;
  int i = 0;
  int j = 0;
};

struct PairDataset {
  std::vector<PairItem> train, val, test;
  const std::vector<PairItem>& split(Split s) const;
};

// Consecutive pairs of every eligible subject. With require_grade_change only
// subjects whose follow-up contains at least one grade change contribute; the
// result may be empty.
PairDataset make_pair_dataset(const Cohort& cohort, bool require_grade_change);

// Subject indices (into Cohort::subjects) with at least four visits.
struct SequenceDataset {
  std::vector<int> train, val, test;
  const std::vector<int>& split(Split s) const;
};

SequenceDataset make_sequence_dataset(const Cohort& cohort);

// -------- batch materialization --------

// Row-aligned tensors for a contiguous range of pair items. Ages are
// absolute; dt[i] = age_j - age_i is the integration horizon for the flow
// models, which run in time relative to the first visit of the pair.
struct PairBatch {
  Tensor x_i, x_j;
  std::vector<double> age_i, age_j, dt;
  std::vector<int> grade_i, grade_j;
  std::vector<int> subject;
};

PairBatch make_pair_batch(const Cohort& cohort, const std::vector<PairItem>& items,
                          std::size_t begin, std::size_t count);

// -------- serialization --------

// One JSON object per visit: subject id, split, time, age, grade, and the
// observation vector.
std::string cohort_to_jsonl(const Cohort& cohort);
// Everything except the visits: params, seed, embedding, subject parameters.
std::string cohort_meta_json(const Cohort& cohort);

// Writes base_path + ".jsonl" and base_path + ".meta.json".
void save_cohort(const Cohort& cohort, const std::string& base_path);
Cohort load_cohort(const std::string& base_path);

}  // namespace lssl
