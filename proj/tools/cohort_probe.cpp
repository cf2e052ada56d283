// Diagnostics over a candidate cohort parameterization, printed as one
// block per run. Estimates, without any training, how much signal each
// downstream analysis has to work with:
//   - alignment ceiling: best achievable batch-mean cos(dz, tau) for a
//     deterministic per-visit encoder, from the clean pair displacement in
//     the acquisition-orthogonal complement against the iid noise floor
//   - speed-separation probes: Welch t on ||dx|| (what a lossless
//     autoencoder exposes) and on the severity-axis projection (what an
//     aligned encoder exposes)
//   - grade readout: AUC of true severity vs a diagonal-LDA probe on raw
//     observations, the spread between them is the representation headroom
//   - age fit: residual variance of age regressed on severity readouts
//
// Usage: cohort_probe [key=value ...] with CohortParams field names plus
// n_subjects and seed.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <string>
#include <vector>

#include "lssl/synthdata.hpp"

using namespace lssl;

namespace {

double phi(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

struct Welch {
  double mean_a = 0, mean_b = 0, t = 0, p = 0;
  int na = 0, nb = 0;
};

Welch welch_one_sided(const std::vector<double>& a, const std::vector<double>& b) {
  Welch w;
  w.na = int(a.size());
  w.nb = int(b.size());
  if (w.na < 2 || w.nb < 2) return w;
  double sa = 0, sb = 0;
  for (double v : a) w.mean_a += v;
  for (double v : b) w.mean_b += v;
  w.mean_a /= w.na;
  w.mean_b /= w.nb;
  for (double v : a) sa += (v - w.mean_a) * (v - w.mean_a);
  for (double v : b) sb += (v - w.mean_b) * (v - w.mean_b);
  sa /= (w.na - 1);
  sb /= (w.nb - 1);
  const double se = std::sqrt(sa / w.na + sb / w.nb);
  w.t = se > 0 ? (w.mean_a - w.mean_b) / se : 0.0;
  // normal approximation; the degrees of freedom here are in the hundreds
  w.p = 1.0 - phi(w.t);
  return w;
}

double auc(const std::vector<int>& label, const std::vector<double>& score) {
  double pos = 0, neg = 0, rank_sum = 0;
  std::vector<int> idx(label.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = int(i);
  std::sort(idx.begin(), idx.end(),
            [&](int l, int r) { return score[l] < score[r]; });
  std::size_t i = 0;
  double rank = 1;
  while (i < idx.size()) {
    std::size_t j = i;
    while (j + 1 < idx.size() && score[idx[j + 1]] == score[idx[i]]) ++j;
    const double avg_rank = 0.5 * (rank + rank + double(j - i));
    for (std::size_t k = i; k <= j; ++k) {
      if (label[idx[k]]) {
        pos += 1;
        rank_sum += avg_rank;
      } else {
        neg += 1;
      }
    }
    rank += double(j - i + 1);
    i = j + 1;
  }
  if (pos == 0 || neg == 0) return std::nan("");
  return (rank_sum - pos * (pos + 1) / 2) / (pos * neg);
}

double severity_of(const SubjectRecord& s, const Visit& v) {
  return severity_at(s.rate, s.onset_age, v.age);
}

}  // namespace

int main(int argc, char** argv) {
  CohortParams p;
  int n_subjects = 1000;
  std::uint64_t seed = 0;
  std::map<std::string, double*> fields{
      {"acq_scale", &p.acq_scale},
      {"noise_sigma", &p.noise_sigma},
      {"severity_scale", &p.severity_scale},
      {"nuisance_scale", &p.nuisance_scale},
      {"bias_scale", &p.bias_scale},
      {"gain_alpha", &p.gain_alpha},
      {"onset_mean", &p.onset_mean},
      {"onset_sd", &p.onset_sd},
      {"slow_rate_lo", &p.slow_rate_lo},
      {"slow_rate_hi", &p.slow_rate_hi},
      {"fast_rate_lo", &p.fast_rate_lo},
      {"fast_rate_hi", &p.fast_rate_hi},
      {"gap_lo", &p.gap_lo},
      {"gap_hi", &p.gap_hi},
      {"age_lo", &p.age_lo},
      {"age_hi", &p.age_hi}};
  std::map<std::string, int*> int_fields{{"obs_dim", &p.obs_dim},
                                         {"nuisance_dim", &p.nuisance_dim},
                                         {"acq_dim", &p.acq_dim},
                                         {"min_visits", &p.min_visits},
                                         {"max_visits", &p.max_visits},
                                         {"n_subjects", &n_subjects}};
  for (int i = 1; i < argc; ++i) {
    const std::string arg = argv[i];
    const auto eq = arg.find('=');
    if (eq == std::string::npos) {
      std::fprintf(stderr, "bad arg: %s\n", arg.c_str());
      return 2;
    }
    const std::string key = arg.substr(0, eq);
    const double val = std::stod(arg.substr(eq + 1));
    if (key == "seed") {
      seed = std::uint64_t(val);
    } else if (fields.count(key)) {
      *fields[key] = val;
    } else if (int_fields.count(key)) {
      *int_fields[key] = int(val);
    } else {
      std::fprintf(stderr, "unknown key: %s\n", key.c_str());
      return 2;
    }
  }

  const Cohort c = generate_cohort(n_subjects, seed, p);
  const PairDataset gc = make_pair_dataset(c, true);
  const PairDataset all = make_pair_dataset(c, false);
  const SequenceDataset seqs = make_sequence_dataset(c);

  // composition
  int grade_hist[5] = {0, 0, 0, 0, 0};
  int changed_slow = 0, changed_fast = 0;
  for (const SubjectRecord& s : c.subjects) {
    grade_hist[s.visits.back().grade]++;
    if (s.visits.back().grade != s.visits.front().grade) {
      (s.speed == SpeedClass::Slow ? changed_slow : changed_fast)++;
    }
  }
  int gc_slow = 0, gc_fast = 0;
  for (const auto* split : {&gc.train, &gc.val}) {
    for (const PairItem& it : *split) {
      (c.subjects[it.subject].speed == SpeedClass::Slow ? gc_slow : gc_fast)++;
    }
  }

  // Orthonormal basis of the acquisition subspace; an encoder can null it
  // out, so signal is measured in the complement.
  std::vector<std::vector<double>> acq_basis;
  for (int col = 0; col < p.acq_dim; ++col) {
    std::vector<double> v(std::size_t(p.obs_dim));
    for (int r = 0; r < p.obs_dim; ++r)
      v[std::size_t(r)] = c.embed_A[std::size_t(r) * p.acq_dim + col];
    for (const auto& b : acq_basis) {
      double dot = 0;
      for (std::size_t k = 0; k < v.size(); ++k) dot += b[k] * v[k];
      for (std::size_t k = 0; k < v.size(); ++k) v[k] -= dot * b[k];
    }
    double nn = 0;
    for (double x : v) nn += x * x;
    nn = std::sqrt(nn);
    if (nn > 1e-12) {
      for (double& x : v) x /= nn;
      acq_basis.push_back(std::move(v));
    }
  }
  auto deflate = [&](std::vector<double>& v) {
    for (const auto& b : acq_basis) {
      double dot = 0;
      for (std::size_t k = 0; k < v.size(); ++k) dot += b[k] * v[k];
      for (std::size_t k = 0; k < v.size(); ++k) v[k] -= dot * b[k];
    }
  };

  // alignment ceiling on the validation pairs of the pretraining set
  double ceiling = 0, snr_sum = 0;
  std::vector<double> snrs;
  for (const PairItem& it : gc.val) {
    const SubjectRecord& s = c.subjects[it.subject];
    const auto ci = clean_observation(c, severity_of(s, s.visits[it.i]), s.nuisance);
    const auto cj = clean_observation(c, severity_of(s, s.visits[it.j]), s.nuisance);
    std::vector<double> dc(ci.size());
    for (std::size_t k = 0; k < ci.size(); ++k) dc[k] = cj[k] - ci[k];
    deflate(dc);
    double d2 = 0;
    for (double v : dc) d2 += v * v;
    const double snr = std::sqrt(d2) / (p.noise_sigma * std::sqrt(2.0));
    snrs.push_back(snr);
    snr_sum += snr;
    ceiling += 2.0 * phi(snr) - 1.0;
  }
  if (!gc.val.empty()) ceiling /= double(gc.val.size());
  std::sort(snrs.begin(), snrs.end());
  auto q = [&](double f) {
    return snrs.empty() ? 0.0 : snrs[std::size_t(f * double(snrs.size() - 1))];
  };

  // severity axis from clean train displacements
  std::vector<double> axis(std::size_t(p.obs_dim), 0.0);
  for (const PairItem& it : gc.train) {
    const SubjectRecord& s = c.subjects[it.subject];
    const auto ci = clean_observation(c, severity_of(s, s.visits[it.i]), s.nuisance);
    const auto cj = clean_observation(c, severity_of(s, s.visits[it.j]), s.nuisance);
    for (std::size_t k = 0; k < axis.size(); ++k) axis[k] += cj[k] - ci[k];
  }
  deflate(axis);
  double axis_norm = 0;
  for (double v : axis) axis_norm += v * v;
  axis_norm = std::sqrt(axis_norm);
  if (axis_norm > 0)
    for (double& v : axis) v /= axis_norm;

  // speed separation on test pairs: raw norm vs axis projection
  std::vector<double> norm_fast, norm_slow, proj_fast, proj_slow;
  for (const PairItem& it : all.test) {
    const SubjectRecord& s = c.subjects[it.subject];
    const auto& xi = s.visits[it.i].x;
    const auto& xj = s.visits[it.j].x;
    double d2 = 0, pr = 0;
    for (std::size_t k = 0; k < xi.size(); ++k) {
      const double d = xj[k] - xi[k];
      d2 += d * d;
      pr += axis[k] * d;
    }
    auto& norms = s.speed == SpeedClass::Fast ? norm_fast : norm_slow;
    auto& projs = s.speed == SpeedClass::Fast ? proj_fast : proj_slow;
    norms.push_back(std::sqrt(d2));
    projs.push_back(std::fabs(pr));
  }
  const Welch w_norm = welch_one_sided(norm_fast, norm_slow);
  const Welch w_proj = welch_one_sided(proj_fast, proj_slow);

  // next-grade readout from visit i: true severity vs diagonal LDA on x
  std::vector<int> lab_train, lab_test;
  std::vector<double> s_test, sg_test;
  std::vector<const std::vector<double>*> x_train, x_test;
  for (const auto* split : {&all.train, &all.test}) {
    for (const PairItem& it : *split) {
      const SubjectRecord& s = c.subjects[it.subject];
      const int y = s.visits[it.j].grade >= 3 ? 1 : 0;
      if (split == &all.train) {
        lab_train.push_back(y);
        x_train.push_back(&s.visits[it.i].x);
      } else {
        lab_test.push_back(y);
        x_test.push_back(&s.visits[it.i].x);
        const double sv = severity_of(s, s.visits[it.i]);
        s_test.push_back(sv);
        sg_test.push_back(sv * severity_gain(c, s.nuisance));
      }
    }
  }
  double auc_lda = std::nan("");
  if (!x_train.empty()) {
    const std::size_t d = x_train[0]->size();
    std::vector<double> mu1(d, 0), mu0(d, 0), var(d, 0), mu(d, 0);
    int n1 = 0, n0 = 0;
    for (std::size_t i = 0; i < x_train.size(); ++i) {
      const auto& x = *x_train[i];
      for (std::size_t k = 0; k < d; ++k) {
        (lab_train[i] ? mu1 : mu0)[k] += x[k];
        mu[k] += x[k];
      }
      (lab_train[i] ? n1 : n0)++;
    }
    if (n1 > 1 && n0 > 1) {
      for (std::size_t k = 0; k < d; ++k) {
        mu1[k] /= n1;
        mu0[k] /= n0;
        mu[k] /= double(n1 + n0);
      }
      for (std::size_t i = 0; i < x_train.size(); ++i) {
        const auto& x = *x_train[i];
        for (std::size_t k = 0; k < d; ++k) var[k] += (x[k] - mu[k]) * (x[k] - mu[k]);
      }
      std::vector<double> scores;
      for (const auto* xp : x_test) {
        double sc = 0;
        for (std::size_t k = 0; k < d; ++k)
          sc += (mu1[k] - mu0[k]) / (var[k] / double(n1 + n0 - 1) + 1e-12) * (*xp)[k];
        scores.push_back(sc);
      }
      auc_lda = auc(lab_test, scores);
    }
  }
  const double auc_s = auc(lab_test, s_test);
  const double auc_sg = auc(lab_test, sg_test);

  // age fit over test visits: variance left after the best severity readout
  std::vector<double> ages, sevs;
  for (const SubjectRecord& s : c.subjects) {
    if (s.split != Split::Test) continue;
    for (const Visit& v : s.visits) {
      ages.push_back(v.age);
      sevs.push_back(severity_of(s, v));
    }
  }
  double age_mean = 0;
  for (double a : ages) age_mean += a;
  age_mean /= double(ages.size());
  double age_var = 0;
  for (double a : ages) age_var += (a - age_mean) * (a - age_mean);
  age_var /= double(ages.size());
  // linear fit age ~ logit(s/4), the exact inverse for a known-rate subject
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  std::vector<double> logits(sevs.size());
  for (std::size_t i = 0; i < sevs.size(); ++i) {
    const double sc = std::clamp(sevs[i] / 4.0, 1e-6, 1.0 - 1e-6);
    logits[i] = std::log(sc / (1.0 - sc));
    sx += logits[i];
    sy += ages[i];
    sxx += logits[i] * logits[i];
    sxy += logits[i] * ages[i];
  }
  const double n = double(ages.size());
  const double beta = (n * sxy - sx * sy) / std::max(n * sxx - sx * sx, 1e-12);
  const double alpha = (sy - beta * sx) / n;
  double age_res = 0;
  for (std::size_t i = 0; i < ages.size(); ++i) {
    const double e = ages[i] - (alpha + beta * logits[i]);
    age_res += e * e;
  }
  age_res /= n;

  std::printf("subjects %d seed %llu\n", n_subjects, (unsigned long long)seed);
  std::printf("grades at last visit: %d %d %d %d %d\n", grade_hist[0], grade_hist[1],
              grade_hist[2], grade_hist[3], grade_hist[4]);
  std::printf("changed subjects slow/fast: %d/%d\n", changed_slow, changed_fast);
  std::printf("gc pairs train/val/test: %zu/%zu/%zu  slow share %.3f\n", gc.train.size(),
              gc.val.size(), gc.test.size(),
              gc_slow + gc_fast ? double(gc_slow) / double(gc_slow + gc_fast) : 0.0);
  std::printf("all pairs test: %zu  sequences train: %zu\n", all.test.size(),
              seqs.train.size());
  std::printf("C5 ceiling %.4f  snr q25/50/75 %.2f/%.2f/%.2f\n", ceiling, q(0.25),
              q(0.5), q(0.75));
  std::printf("C8 ae-proxy: fast %.4f slow %.4f t %.2f p %.4g\n", w_norm.mean_a,
              w_norm.mean_b, w_norm.t, w_norm.p);
  std::printf("C8 axis-proxy: fast %.4f slow %.4f t %.2f p %.4g\n", w_proj.mean_a,
              w_proj.mean_b, w_proj.t, w_proj.p);
  std::printf("C6 auc severe+: true-s %.4f  gained-s %.4f  lda-x %.4f\n", auc_s,
              auc_sg, auc_lda);
  std::printf("C7 age: var %.1f  logit-s residual %.1f (ratio %.2f)\n", age_var,
              age_res, age_res / age_var);
  return 0;
}
