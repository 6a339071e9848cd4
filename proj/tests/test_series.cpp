#include <doctest.h>
#include "forkpath/rng.hpp"

#include <cmath>
#include <numeric>

#include "forkpath/series.hpp"

using namespace forkpath;
using outcomes::OutcomeDistribution;
using outcomes::OutcomeSpace;
using series::Metric;

namespace {

OutcomeDistribution dist(const OutcomeSpace& space, std::vector<double> probs) {
  OutcomeDistribution d;
  d.space = space;
  d.probs = std::move(probs);
  return d;
}

OutcomeSpace two_label_space() { return OutcomeSpace{{"A", "Other"}}; }

}  // namespace

TEST_CASE("distance values") {
  auto space = two_label_space();
  auto a = dist(space, {0.5, 0.5});
  auto b = dist(space, {0.85, 0.15});

  // the reference pair: just below 0.5 under L2
  double d2 = series::distance(a, b, Metric::L2);
  CHECK(d2 == doctest::Approx(0.494975).epsilon(1e-4));
  CHECK(d2 < 0.5);

  for (auto metric : {Metric::L2, Metric::L1, Metric::KL}) {
    CHECK(series::distance(a, a, metric) == doctest::Approx(0.0).epsilon(1e-9));
  }

  auto p = dist(space, {1.0, 0.0});
  auto q = dist(space, {0.0, 1.0});
  CHECK(series::distance(p, q, Metric::L1) == doctest::Approx(2.0));
  CHECK(series::distance(p, q, Metric::L2) == doctest::Approx(std::sqrt(2.0)));
  CHECK(series::distance(p, q, Metric::KL) > 0.0);

  OutcomeSpace other{{"B", "Other"}};
  auto c = dist(other, {0.5, 0.5});
  CHECK_THROWS_AS(series::distance(a, c, Metric::L2), SpaceMismatchError);
}

TEST_CASE("distance bounds and symmetry on random distributions") {
  Rng rng(99);
  auto space = OutcomeSpace{{"A", "B", "C", "Other"}};
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> pa(4), pb(4);
    double sa = 0, sb = 0;
    for (int i = 0; i < 4; ++i) {
      pa[i] = rng.uniform() + 1e-9;
      pb[i] = rng.uniform() + 1e-9;
      sa += pa[i];
      sb += pb[i];
    }
    for (int i = 0; i < 4; ++i) {
      pa[i] /= sa;
      pb[i] /= sb;
    }
    auto a = dist(space, pa);
    auto b = dist(space, pb);
    double l2 = series::distance(a, b, Metric::L2);
    double l1 = series::distance(a, b, Metric::L1);
    CHECK(l2 >= 0.0);
    CHECK(l2 <= std::sqrt(2.0) + 1e-12);
    CHECK(l1 >= 0.0);
    CHECK(l1 <= 2.0 + 1e-12);
    CHECK(l2 == doctest::Approx(series::distance(b, a, Metric::L2)));
    CHECK(l1 == doctest::Approx(series::distance(b, a, Metric::L1)));
  }
}

TEST_CASE("drift series basics") {
  auto space = two_label_space();
  std::vector<OutcomeDistribution> constant(5, dist(space, {0.3, 0.7}));
  auto flat = series::drift_series(constant, Metric::L2);
  CHECK(flat.values.size() == 5);
  for (double v : flat.values) CHECK(v == doctest::Approx(0.0));

  // flip from [1,0] to [0,1] at t=5 -> step of sqrt(2) under L2
  std::vector<OutcomeDistribution> flip;
  for (int t = 0; t < 10; ++t) {
    flip.push_back(t < 5 ? dist(space, {1.0, 0.0}) : dist(space, {0.0, 1.0}));
  }
  auto stepped = series::drift_series(flip, Metric::L2);
  for (int t = 0; t < 5; ++t) CHECK(stepped.values[t] == doctest::Approx(0.0));
  for (int t = 5; t < 10; ++t) CHECK(stepped.values[t] == doctest::Approx(std::sqrt(2.0)));

  // linear mixture drift -> linear L1 series
  std::vector<OutcomeDistribution> drifting;
  for (int t = 0; t < 6; ++t) {
    double w = t / 5.0;
    drifting.push_back(dist(space, {1.0 - w, w}));
  }
  auto linear = series::drift_series(drifting, Metric::L1);
  for (int t = 0; t < 6; ++t) CHECK(linear.values[t] == doctest::Approx(2.0 * t / 5.0));

  std::vector<OutcomeDistribution> single{dist(space, {1.0, 0.0})};
  CHECK_THROWS_AS(series::drift_series(single, Metric::L2), SeriesTooShortError);
}

TEST_CASE("drift is invariant to label permutation for L1/L2") {
  OutcomeSpace space{{"A", "B", "Other"}};
  OutcomeSpace permuted{{"B", "A", "Other"}};
  std::vector<OutcomeDistribution> original{dist(space, {0.7, 0.2, 0.1}),
                                            dist(space, {0.1, 0.6, 0.3})};
  std::vector<OutcomeDistribution> relabeled{dist(permuted, {0.2, 0.7, 0.1}),
                                             dist(permuted, {0.6, 0.1, 0.3})};
  for (auto metric : {Metric::L1, Metric::L2}) {
    auto a = series::drift_series(original, metric);
    auto b = series::drift_series(relabeled, metric);
    for (std::size_t t = 0; t < a.values.size(); ++t) {
      CHECK(a.values[t] == doctest::Approx(b.values[t]));
    }
  }
}

TEST_CASE("perturb") {
  series::DriftSeries base;
  base.values = {0.1, 0.2, 0.3, 0.4};

  auto zero = series::perturb(base, 0.0, 42);
  CHECK(zero.values == base.values);

  auto a = series::perturb(base, 0.03, 42);
  auto b = series::perturb(base, 0.03, 42);
  CHECK(a.values == b.values);
  CHECK(a.values != base.values);

  // sample variance of many perturbations of a constant series ~ 0.03
  series::DriftSeries constant;
  constant.values.assign(10000, 0.0);
  auto noisy = series::perturb(constant, 0.03, 7);
  double mean = std::accumulate(noisy.values.begin(), noisy.values.end(), 0.0) / 10000.0;
  double var = 0.0;
  for (double v : noisy.values) var += (v - mean) * (v - mean);
  var /= 10000.0;
  CHECK(var == doctest::Approx(0.03).epsilon(0.05));

  CHECK_THROWS_AS(series::perturb(base, -0.1, 0), PreconditionError);
}

TEST_CASE("series csv round trip") {
  series::DriftSeries s;
  s.values = {0.0, 0.125, 0.5};
  auto csv = series::to_csv(s);
  CHECK(csv == "t,y\n0,0\n1,0.125\n2,0.5\n");
  auto back = series::series_from_csv(csv, Metric::L2);
  CHECK(back.values == s.values);
}
