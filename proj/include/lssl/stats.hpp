#pragma once

#include <vector>

namespace lssl {

// Rank-based Mann-Whitney AUC: the fraction of (positive, negative) pairs
// where the positive scores higher, ties counted one half. Labels are 0/1;
// both classes must be present.
double auc(const std::vector<double>& scores, const std::vector<int>& labels);

// Regularized incomplete beta I_x(a, b), continued-fraction evaluation.
double regularized_incomplete_beta(double a, double b, double x);

// P(T > t) for Student's t with df degrees of freedom.
double student_t_sf(double t, double df);

struct WelchResult {
  double mean_a = 0.0, mean_b = 0.0;
  double var_a = 0.0, var_b = 0.0;
  int n_a = 0, n_b = 0;
  double t = 0.0;
  double df = 0.0;
  // One-sided p for the alternative mean_a > mean_b.
  double p = 0.0;
};

// Welch's unequal-variance t-test. Each sample needs at least two points.
// Degenerate zero-variance inputs resolve by mean comparison: equal means
// give t = 0, p = 0.5; otherwise p is 0 or 1.
WelchResult welch_one_sided_greater(const std::vector<double>& a,
                                    const std::vector<double>& b);

}  // namespace lssl
