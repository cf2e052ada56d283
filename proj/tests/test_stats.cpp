#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "lssl/stats.hpp"

using namespace lssl;

namespace {

// Direct O(n_pos * n_neg) pair counting, the definition itself.
double auc_pairs(const std::vector<double>& s, const std::vector<int>& y) {
  double won = 0.0, total = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (y[i] != 1) continue;
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (y[j] != 0) continue;
      total += 1.0;
      if (s[i] > s[j]) won += 1.0;
      else if (s[i] == s[j]) won += 0.5;
    }
  }
  return won / total;
}

double t_pdf(double x, double df) {
  const double ln = std::lgamma(0.5 * (df + 1.0)) - std::lgamma(0.5 * df) -
                    0.5 * std::log(df * std::acos(-1.0)) -
                    0.5 * (df + 1.0) * std::log1p(x * x / df);
  return std::exp(ln);
}

double simpson(const std::function<double(double)>& f, double a, double b) {
  return (b - a) / 6.0 * (f(a) + 4.0 * f(0.5 * (a + b)) + f(b));
}

double adaptive_simpson(const std::function<double(double)>& f, double a, double b,
                        double whole, double tol, int depth) {
  const double m = 0.5 * (a + b);
  const double left = simpson(f, a, m);
  const double right = simpson(f, m, b);
  if (depth <= 0 || std::abs(left + right - whole) < 15.0 * tol)
    return left + right + (left + right - whole) / 15.0;
  return adaptive_simpson(f, a, m, left, 0.5 * tol, depth - 1) +
         adaptive_simpson(f, m, b, right, 0.5 * tol, depth - 1);
}

// Survival function by quadrature of the density over [0, |t|], using the
// symmetry of the distribution. Independent of the incomplete-beta route.
double t_sf_quadrature(double t, double df) {
  const double a = 0.0, b = std::abs(t);
  auto f = [df](double x) { return t_pdf(x, df); };
  const double mass = b == 0.0 ? 0.0
                               : adaptive_simpson(f, a, b, simpson(f, a, b), 1e-13, 40);
  return t >= 0.0 ? 0.5 - mass : 0.5 + mass;
}

}  // namespace

TEST_CASE("auc pinned examples") {
  CHECK(auc({0.1, 0.4, 0.35, 0.8}, {0, 0, 1, 1}) == doctest::Approx(0.75));
  CHECK(auc({0.0, 0.1, 0.9, 1.0}, {0, 0, 1, 1}) == 1.0);
  CHECK(auc({0.9, 1.0, 0.0, 0.1}, {0, 0, 1, 1}) == 0.0);
  CHECK(auc({0.5, 0.5, 0.5, 0.5}, {0, 1, 0, 1}) == 0.5);
  // Label flip mirrors the score.
  CHECK(auc({0.1, 0.4, 0.35, 0.8}, {1, 1, 0, 0}) == doctest::Approx(0.25));
}

TEST_CASE("auc input validation") {
  CHECK_THROWS_AS(auc({0.1, 0.2}, {1, 1}), std::invalid_argument);
  CHECK_THROWS_AS(auc({0.1, 0.2}, {0, 0}), std::invalid_argument);
  CHECK_THROWS_AS(auc({0.1}, {0, 1}), std::invalid_argument);
  CHECK_THROWS_AS(auc({0.1, 0.2}, {0, 2}), std::invalid_argument);
}

TEST_CASE("auc agrees with pair counting under heavy ties") {
  std::mt19937_64 rng(5);
  std::uniform_int_distribution<int> grid(0, 9);
  std::bernoulli_distribution coin(0.4);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> s;
    std::vector<int> y;
    bool pos = false, neg = false;
    for (int i = 0; i < 120; ++i) {
      s.push_back(grid(rng) / 9.0);
      y.push_back(coin(rng) ? 1 : 0);
      (y.back() ? pos : neg) = true;
    }
    if (!pos || !neg) continue;
    CHECK(auc(s, y) == doctest::Approx(auc_pairs(s, y)).epsilon(1e-12));
  }
}

TEST_CASE("auc is invariant under strictly monotone transforms") {
  std::mt19937_64 rng(9);
  std::normal_distribution<double> n01(0.0, 1.0);
  std::vector<double> s;
  std::vector<int> y;
  for (int i = 0; i < 200; ++i) {
    y.push_back(i % 2);
    s.push_back(n01(rng) + y.back());
  }
  const double base = auc(s, y);
  auto mapped = [&](const std::function<double(double)>& f) {
    std::vector<double> t(s.size());
    for (std::size_t i = 0; i < s.size(); ++i) t[i] = f(s[i]);
    return auc(t, y);
  };
  CHECK(mapped([](double v) { return 3.0 * v + 7.0; }) == base);
  CHECK(mapped([](double v) { return std::exp(v); }) == base);
  CHECK(mapped([](double v) { return std::atan(v); }) == base);
  CHECK(mapped([](double v) { return 1.0 / (1.0 + std::exp(-v)); }) == base);
}

TEST_CASE("incomplete beta endpoints and symmetry") {
  CHECK(regularized_incomplete_beta(2.0, 3.0, 0.0) == 0.0);
  CHECK(regularized_incomplete_beta(2.0, 3.0, 1.0) == 1.0);
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.05, 0.95);
  std::uniform_real_distribution<double> ab(0.3, 20.0);
  for (int i = 0; i < 200; ++i) {
    const double a = ab(rng), b = ab(rng), x = u(rng);
    const double lhs = regularized_incomplete_beta(a, b, x);
    const double rhs = 1.0 - regularized_incomplete_beta(b, a, 1.0 - x);
    CHECK(lhs == doctest::Approx(rhs).epsilon(1e-12));
    CHECK(lhs >= 0.0);
    CHECK(lhs <= 1.0);
  }
  // I_x(1, 1) is the identity.
  CHECK(regularized_incomplete_beta(1.0, 1.0, 0.3) == doctest::Approx(0.3).epsilon(1e-12));
  CHECK_THROWS_AS(regularized_incomplete_beta(-1.0, 1.0, 0.5), std::invalid_argument);
  CHECK_THROWS_AS(regularized_incomplete_beta(1.0, 1.0, 1.5), std::invalid_argument);
}

TEST_CASE("t survival function matches quadrature to 1e-10") {
  for (double df : {1.5, 3.0, 10.0, 57.3, 200.0}) {
    for (double t : {-5.0, -2.0, -0.5, 0.0, 0.3, 1.0, 2.5, 6.0}) {
      CHECK(std::abs(student_t_sf(t, df) - t_sf_quadrature(t, df)) < 1e-10);
    }
  }
  // Known closed forms: df=1 is Cauchy, sf(1) = 1/4; df=2 has sf(t) in
  // elementary form.
  CHECK(student_t_sf(1.0, 1.0) == doctest::Approx(0.25).epsilon(1e-12));
  const double sf2 = 0.5 - 0.5 * (1.0 / std::sqrt(2.0 + 1.0 * 1.0));
  CHECK(student_t_sf(1.0, 2.0) == doctest::Approx(sf2).epsilon(1e-12));
  CHECK(student_t_sf(0.0, 7.0) == doctest::Approx(0.5).epsilon(1e-14));
}

TEST_CASE("welch test pinned and derived behavior") {
  SUBCASE("identical samples give t = 0, p = 0.5") {
    std::vector<double> a{1.0, 2.0, 3.0, 4.0};
    WelchResult r = welch_one_sided_greater(a, a);
    CHECK(r.t == 0.0);
    CHECK(r.p == doctest::Approx(0.5).epsilon(1e-14));
  }
  SUBCASE("well separated groups are detected with overwhelming confidence") {
    std::mt19937_64 rng(11);
    std::normal_distribution<double> lo(1.0, 0.1), hi(2.0, 0.1);
    std::vector<double> a, b;
    for (int i = 0; i < 300; ++i) {
      a.push_back(hi(rng));
      b.push_back(lo(rng));
    }
    WelchResult r = welch_one_sided_greater(a, b);
    CHECK(r.p < 1e-10);
    WelchResult rev = welch_one_sided_greater(b, a);
    CHECK(rev.p > 1.0 - 1e-10);
  }
  SUBCASE("statistic and df match the formulas computed independently") {
    std::vector<double> a{3.1, 2.7, 3.3, 2.9, 3.6};
    std::vector<double> b{2.2, 2.8, 2.1, 2.5, 2.3, 2.6, 2.0};
    WelchResult r = welch_one_sided_greater(a, b);
    double ma = 0, mb = 0;
    for (double v : a) ma += v;
    for (double v : b) mb += v;
    ma /= a.size();
    mb /= b.size();
    double va = 0, vb = 0;
    for (double v : a) va += (v - ma) * (v - ma);
    for (double v : b) vb += (v - mb) * (v - mb);
    va /= a.size() - 1;
    vb /= b.size() - 1;
    const double sa = va / a.size(), sb = vb / b.size();
    const double t = (ma - mb) / std::sqrt(sa + sb);
    const double df = (sa + sb) * (sa + sb) /
                      (sa * sa / (a.size() - 1) + sb * sb / (b.size() - 1));
    CHECK(r.t == doctest::Approx(t).epsilon(1e-14));
    CHECK(r.df == doctest::Approx(df).epsilon(1e-14));
    CHECK(r.p == doctest::Approx(student_t_sf(t, df)).epsilon(1e-14));
    CHECK(r.p >= 0.0);
    CHECK(r.p <= 1.0);
  }
  SUBCASE("degenerate constant samples") {
    WelchResult eq = welch_one_sided_greater({2.0, 2.0, 2.0}, {2.0, 2.0});
    CHECK(eq.t == 0.0);
    CHECK(eq.p == 0.5);
    WelchResult gt = welch_one_sided_greater({3.0, 3.0}, {2.0, 2.0});
    CHECK(gt.p == 0.0);
    WelchResult lt = welch_one_sided_greater({1.0, 1.0}, {2.0, 2.0});
    CHECK(lt.p == 1.0);
  }
  SUBCASE("samples of one are rejected") {
    CHECK_THROWS_AS(welch_one_sided_greater({1.0}, {2.0, 3.0}), std::invalid_argument);
    CHECK_THROWS_AS(welch_one_sided_greater({1.0, 2.0}, {3.0}), std::invalid_argument);
  }
}

TEST_CASE("random scores on balanced labels sit near one half") {
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> s;
  std::vector<int> y;
  for (int i = 0; i < 4000; ++i) {
    s.push_back(u(rng));
    y.push_back(i % 2);
  }
  const double a = auc(s, y);
  CHECK(a > 0.45);
  CHECK(a < 0.55);
}
