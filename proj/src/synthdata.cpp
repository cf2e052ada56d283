#include "lssl/synthdata.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>
#include <stdexcept>
#include <unordered_map>

#include <json.hpp>

namespace lssl {

using nlohmann::json;

namespace {

// Stream tags sit above 2^32 so they can never collide with a subject id.
constexpr std::uint64_t kEmbedTag = 0x9E3779B900000001ULL;
constexpr std::uint64_t kSplitTag = 0x9E3779B900000002ULL;

constexpr double kGradeThresholds[] = {0.5, 1.5, 2.5, 3.5};

}  // namespace

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(CohortParams, obs_dim, nuisance_dim,
                                   acq_dim, acq_scale, noise_sigma,
                                   severity_scale, nuisance_scale, bias_scale,
                                   class_sep, gain_alpha, onset_mean, onset_sd,
                                   slow_rate_lo, slow_rate_hi, fast_rate_lo,
                                   fast_rate_hi, min_visits, max_visits, gap_lo,
                                   gap_hi, age_lo, age_hi)

const char* speed_name(SpeedClass c) {
  return c == SpeedClass::Slow ? "slow" : "fast";
}

const char* split_name(Split s) {
  switch (s) {
    case Split::Train: return "train";
    case Split::Val: return "val";
    case Split::Test: return "test";
  }
  return "?";
}

Split split_from_name(const std::string& name) {
  if (name == "train") return Split::Train;
  if (name == "val") return Split::Val;
  if (name == "test") return Split::Test;
  throw std::invalid_argument("unknown split name: " + name);
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

double severity_at(double rate, double onset_age, double age) {
  // 4 / (1 + e^-u) is overflow-safe: e^-u saturating to inf gives 0.
  return 4.0 / (1.0 + std::exp(-rate * (age - onset_age)));
}

int grade_from_severity(double s) {
  int g = 0;
  for (double thr : kGradeThresholds) g += s >= thr ? 1 : 0;
  return g;
}

double severity_gain(const Cohort& cohort, const std::vector<double>& nuisance) {
  const CohortParams& p = cohort.params;
  if (static_cast<int>(nuisance.size()) != p.nuisance_dim)
    throw std::invalid_argument("nuisance dimension mismatch");
  double dot = 0.0;
  for (int c = 0; c < p.nuisance_dim; ++c) dot += cohort.embed_u[c] * nuisance[c];
  return 1.0 + p.gain_alpha * std::tanh(dot / std::sqrt(double(p.nuisance_dim)));
}

std::vector<double> clean_observation(const Cohort& cohort, double s,
                                      const std::vector<double>& nuisance) {
  const CohortParams& p = cohort.params;
  if (static_cast<int>(nuisance.size()) != p.nuisance_dim)
    throw std::invalid_argument("nuisance dimension mismatch");
  const double sg = s * severity_gain(cohort, nuisance);
  const int in_dim = 1 + p.nuisance_dim;
  std::vector<double> out(p.obs_dim);
  for (int r = 0; r < p.obs_dim; ++r) {
    double acc = cohort.embed_W[static_cast<std::size_t>(r) * in_dim] * sg;
    for (int c = 0; c < p.nuisance_dim; ++c)
      acc += cohort.embed_W[static_cast<std::size_t>(r) * in_dim + 1 + c] * nuisance[c];
    out[r] = std::tanh(acc + cohort.embed_b[r]);
  }
  return out;
}

namespace {

SubjectRecord generate_subject(std::uint64_t id, std::uint64_t cohort_seed,
                               const Cohort& cohort) {
  const CohortParams& p = cohort.params;
  std::mt19937_64 rng(splitmix64(cohort_seed ^ id));
  std::normal_distribution<double> unit_normal(0.0, 1.0);

  SubjectRecord s;
  s.id = id;
  s.speed = (id % 2 == 0) ? SpeedClass::Slow : SpeedClass::Fast;
  s.nuisance.resize(p.nuisance_dim);
  for (auto& v : s.nuisance) v = unit_normal(rng);
  s.nuisance[0] += (s.speed == SpeedClass::Fast ? 0.5 : -0.5) * p.class_sep;
  const double rate_lo = s.speed == SpeedClass::Slow ? p.slow_rate_lo : p.fast_rate_lo;
  const double rate_hi = s.speed == SpeedClass::Slow ? p.slow_rate_hi : p.fast_rate_hi;
  s.rate = std::uniform_real_distribution<double>(rate_lo, rate_hi)(rng);
  s.onset_age = p.onset_mean + p.onset_sd * unit_normal(rng);
  s.baseline_age = std::uniform_real_distribution<double>(p.age_lo, p.age_hi)(rng);
  const int n_visits =
      std::uniform_int_distribution<int>(p.min_visits, p.max_visits)(rng);

  std::uniform_real_distribution<double> gap(p.gap_lo, p.gap_hi);
  double t = 0.0;
  s.visits.resize(n_visits);
  for (int k = 0; k < n_visits; ++k) {
    if (k > 0) t += gap(rng);
    Visit& v = s.visits[k];
    v.time = t;
    v.age = s.baseline_age + t;
    const double sev = severity_at(s.rate, s.onset_age, v.age);
    v.grade = grade_from_severity(sev);
    v.x = clean_observation(cohort, sev, s.nuisance);
    // Acquisition artifacts are redrawn per visit: consecutive scans of one
    // subject differ mostly by them, not by disease change.
    std::vector<double> eta(p.acq_dim);
    for (auto& e : eta) e = unit_normal(rng);
    for (int r = 0; r < p.obs_dim; ++r) {
      double acc = 0.0;
      for (int c = 0; c < p.acq_dim; ++c)
        acc += cohort.embed_A[static_cast<std::size_t>(r) * p.acq_dim + c] * eta[c];
      v.x[r] += acc + p.noise_sigma * unit_normal(rng);
    }
  }
  return s;
}

void assign_splits(Cohort& cohort, std::uint64_t seed) {
  // Stratify by speed class and final grade so every grade's subjects spread
  // 60/20/20; the assignment pattern carries across strata, which keeps the
  // global subject counts exact up to rounding.
  std::vector<std::vector<int>> strata(10);
  for (std::size_t i = 0; i < cohort.subjects.size(); ++i) {
    const SubjectRecord& s = cohort.subjects[i];
    const int key = (s.speed == SpeedClass::Fast ? 5 : 0) + s.visits.back().grade;
    strata[key].push_back(static_cast<int>(i));
  }
  std::mt19937_64 rng(splitmix64(seed ^ kSplitTag));
  static constexpr Split kPattern[] = {Split::Train, Split::Train, Split::Train,
                                       Split::Val, Split::Test};
  int pos = 0;
  for (auto& stratum : strata) {
    std::shuffle(stratum.begin(), stratum.end(), rng);
    for (int idx : stratum) {
      cohort.subjects[idx].split = kPattern[pos];
      pos = (pos + 1) % 5;
    }
  }
}

}  // namespace

Cohort generate_cohort(int n_subjects, std::uint64_t seed,
                       const CohortParams& params) {
  if (n_subjects < 10)
    throw std::invalid_argument("generate_cohort: need at least 10 subjects");
  if (params.min_visits < 2 || params.max_visits < params.min_visits)
    throw std::invalid_argument("generate_cohort: invalid visit count range");

  Cohort cohort;
  cohort.params = params;
  cohort.seed = seed;

  const int in_dim = 1 + params.nuisance_dim;
  cohort.embed_W.resize(static_cast<std::size_t>(params.obs_dim) * in_dim);
  cohort.embed_b.resize(params.obs_dim);
  std::mt19937_64 rng(splitmix64(seed ^ kEmbedTag));
  std::normal_distribution<double> unit_normal(0.0, 1.0);
  for (int r = 0; r < params.obs_dim; ++r)
    for (int c = 0; c < in_dim; ++c)
      cohort.embed_W[static_cast<std::size_t>(r) * in_dim + c] =
          (c == 0 ? params.severity_scale : params.nuisance_scale) * unit_normal(rng);
  for (auto& b : cohort.embed_b) b = params.bias_scale * unit_normal(rng);
  cohort.embed_u.resize(params.nuisance_dim);
  for (auto& u : cohort.embed_u) u = unit_normal(rng);
  cohort.embed_A.resize(static_cast<std::size_t>(params.obs_dim) * params.acq_dim);
  const double acq_col = params.acq_scale / std::sqrt(double(params.acq_dim));
  for (auto& a : cohort.embed_A) a = acq_col * unit_normal(rng);

  cohort.subjects.reserve(n_subjects);
  for (int id = 0; id < n_subjects; ++id)
    cohort.subjects.push_back(generate_subject(id, seed, cohort));

  assign_splits(cohort, seed);
  return cohort;
}

const std::vector<PairItem>& PairDataset::split(Split s) const {
  switch (s) {
    case Split::Train: return train;
    case Split::Val: return val;
    case Split::Test: return test;
  }
  throw std::logic_error("bad split");
}

const std::vector<int>& SequenceDataset::split(Split s) const {
  switch (s) {
    case Split::Train: return train;
    case Split::Val: return val;
    case Split::Test: return test;
  }
  throw std::logic_error("bad split");
}

PairDataset make_pair_dataset(const Cohort& cohort, bool require_grade_change) {
  PairDataset out;
  for (std::size_t si = 0; si < cohort.subjects.size(); ++si) {
    const SubjectRecord& s = cohort.subjects[si];
    if (require_grade_change) {
      bool changed = false;
      for (std::size_t k = 1; k < s.visits.size(); ++k)
        changed = changed || s.visits[k].grade != s.visits[k - 1].grade;
      if (!changed) continue;
    }
    auto& dest = s.split == Split::Train  ? out.train
                 : s.split == Split::Val ? out.val
                                         : out.test;
    for (int k = 0; k + 1 < static_cast<int>(s.visits.size()); ++k)
      dest.push_back({static_cast<int>(si), k, k + 1});
  }
  return out;
}

SequenceDataset make_sequence_dataset(const Cohort& cohort) {
  SequenceDataset out;
  for (std::size_t si = 0; si < cohort.subjects.size(); ++si) {
    const SubjectRecord& s = cohort.subjects[si];
    if (s.visits.size() < 4) continue;
    auto& dest = s.split == Split::Train  ? out.train
                 : s.split == Split::Val ? out.val
                                         : out.test;
    dest.push_back(static_cast<int>(si));
  }
  return out;
}

PairBatch make_pair_batch(const Cohort& cohort, const std::vector<PairItem>& items,
                          std::size_t begin, std::size_t count) {
  if (begin + count > items.size())
    throw std::out_of_range("make_pair_batch: range exceeds item list");
  const int d = cohort.params.obs_dim;
  const int n = static_cast<int>(count);
  PairBatch b;
  b.x_i = Tensor::zeros({n, d});
  b.x_j = Tensor::zeros({n, d});
  for (std::size_t r = 0; r < count; ++r) {
    const PairItem& it = items[begin + r];
    const SubjectRecord& s = cohort.subjects[it.subject];
    const Visit& vi = s.visits[it.i];
    const Visit& vj = s.visits[it.j];
    std::copy(vi.x.begin(), vi.x.end(), b.x_i.data().begin() + r * d);
    std::copy(vj.x.begin(), vj.x.end(), b.x_j.data().begin() + r * d);
    b.age_i.push_back(vi.age);
    b.age_j.push_back(vj.age);
    b.dt.push_back(vj.age - vi.age);
    b.grade_i.push_back(vi.grade);
    b.grade_j.push_back(vj.grade);
    b.subject.push_back(it.subject);
  }
  return b;
}

std::string cohort_to_jsonl(const Cohort& cohort) {
  std::ostringstream out;
  for (const SubjectRecord& s : cohort.subjects) {
    for (const Visit& v : s.visits) {
      json row{{"subject", s.id}, {"split", split_name(s.split)},
               {"time", v.time},  {"age", v.age},
               {"grade", v.grade}, {"x", v.x}};
      out << row.dump() << '\n';
    }
  }
  return out.str();
}

std::string cohort_meta_json(const Cohort& cohort) {
  json subjects = json::array();
  for (const SubjectRecord& s : cohort.subjects) {
    subjects.push_back({{"id", s.id},
                        {"baseline_age", s.baseline_age},
                        {"speed", speed_name(s.speed)},
                        {"rate", s.rate},
                        {"onset_age", s.onset_age},
                        {"nuisance", s.nuisance},
                        {"split", split_name(s.split)},
                        {"n_visits", s.visits.size()}});
  }
  json meta{{"seed", cohort.seed},
            {"params", cohort.params},
            {"embed_W", cohort.embed_W},
            {"embed_b", cohort.embed_b},
            {"embed_u", cohort.embed_u},
            {"embed_A", cohort.embed_A},
            {"subjects", subjects}};
  return meta.dump(2);
}

void save_cohort(const Cohort& cohort, const std::string& base_path) {
  {
    std::ofstream f(base_path + ".jsonl", std::ios::binary);
    if (!f) throw std::runtime_error("cannot write " + base_path + ".jsonl");
    f << cohort_to_jsonl(cohort);
  }
  std::ofstream f(base_path + ".meta.json", std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + base_path + ".meta.json");
  f << cohort_meta_json(cohort);
}

Cohort load_cohort(const std::string& base_path) {
  std::ifstream meta_file(base_path + ".meta.json", std::ios::binary);
  if (!meta_file) throw std::runtime_error("cannot read " + base_path + ".meta.json");
  json meta = json::parse(meta_file);

  Cohort cohort;
  cohort.seed = meta.at("seed").get<std::uint64_t>();
  cohort.params = meta.at("params").get<CohortParams>();
  cohort.embed_W = meta.at("embed_W").get<std::vector<double>>();
  cohort.embed_b = meta.at("embed_b").get<std::vector<double>>();
  cohort.embed_u = meta.at("embed_u").get<std::vector<double>>();
  cohort.embed_A = meta.at("embed_A").get<std::vector<double>>();

  std::unordered_map<std::uint64_t, std::size_t> by_id;
  for (const json& js : meta.at("subjects")) {
    SubjectRecord s;
    s.id = js.at("id").get<std::uint64_t>();
    s.baseline_age = js.at("baseline_age").get<double>();
    s.speed = std::string(js.at("speed")) == "fast" ? SpeedClass::Fast : SpeedClass::Slow;
    s.rate = js.at("rate").get<double>();
    s.onset_age = js.at("onset_age").get<double>();
    s.nuisance = js.at("nuisance").get<std::vector<double>>();
    s.split = split_from_name(js.at("split"));
    s.visits.reserve(js.at("n_visits").get<std::size_t>());
    by_id.emplace(s.id, cohort.subjects.size());
    cohort.subjects.push_back(std::move(s));
  }

  std::ifstream rows(base_path + ".jsonl", std::ios::binary);
  if (!rows) throw std::runtime_error("cannot read " + base_path + ".jsonl");
  std::string line;
  while (std::getline(rows, line)) {
    if (line.empty()) continue;
    json row = json::parse(line);
    auto it = by_id.find(row.at("subject").get<std::uint64_t>());
    if (it == by_id.end())
      throw std::runtime_error("visit row for unknown subject in " + base_path);
    SubjectRecord& s = cohort.subjects[it->second];
    if (split_from_name(row.at("split")) != s.split)
      throw std::runtime_error("visit split disagrees with subject split");
    Visit v;
    v.time = row.at("time").get<double>();
    v.age = row.at("age").get<double>();
    v.grade = row.at("grade").get<int>();
    v.x = row.at("x").get<std::vector<double>>();
    s.visits.push_back(std::move(v));
  }
  for (const SubjectRecord& s : cohort.subjects)
    if (s.visits.empty())
      throw std::runtime_error("subject with no visit rows in " + base_path);
  return cohort;
}

}  // namespace lssl
