#include <doctest.h>

#include <cmath>

#include "forkpath/rng.hpp"
#include "forkpath/survival.hpp"

using namespace forkpath;
using outcomes::OutcomeDistribution;
using outcomes::OutcomeSpace;
using series::Metric;
using survival::SiteDistributions;

namespace {

OutcomeSpace space_ab() { return OutcomeSpace{{"A", "B", "Other"}}; }

OutcomeDistribution dist(std::vector<double> probs) {
  OutcomeDistribution d;
  d.space = space_ab();
  d.probs = std::move(probs);
  return d;
}

}  // namespace

TEST_CASE("hazard sums raw probabilities of forking alternates") {
  SiteDistributions site;
  site.base_token = "w*";
  site.sites.emplace_back("w*", 0.7, dist({1.0, 0.0, 0.0}));
  site.sites.emplace_back("w1", 0.2, dist({0.0, 1.0, 0.0}));  // far from base
  site.sites.emplace_back("w2", 0.1, dist({0.95, 0.05, 0.0}));  // close to base

  // only w1 exceeds epsilon = .6: h = .2
  CHECK(survival::hazard(site, 0.6, Metric::L2) == doctest::Approx(0.2));

  // epsilon above the metric's max: nothing forks
  CHECK(survival::hazard(site, 2.0, Metric::L2) == doctest::Approx(0.0));

  // alternates identical to the base: h = 0
  SiteDistributions same;
  same.base_token = "w*";
  same.sites.emplace_back("w*", 0.5, dist({0.5, 0.5, 0.0}));
  same.sites.emplace_back("w1", 0.5, dist({0.5, 0.5, 0.0}));
  CHECK(survival::hazard(same, 0.1, Metric::L2) == doctest::Approx(0.0));

  SiteDistributions missing;
  missing.base_token = "gone";
  missing.sites.emplace_back("w1", 0.5, dist({0.5, 0.5, 0.0}));
  CHECK_THROWS_AS(survival::hazard(missing, 0.5, Metric::L2), MissingSiteError);
}

TEST_CASE("survival curve is a running product of 1 - h") {
  auto no_hazard = survival::survival_curve(std::vector<double>{0.0, 0.0, 0.0});
  CHECK(no_hazard == std::vector<double>{1.0, 1.0, 1.0});

  auto hand = survival::survival_curve(std::vector<double>{0.1, 0.2});
  CHECK(hand[0] == doctest::Approx(0.9));
  CHECK(hand[1] == doctest::Approx(0.72));

  auto absorbing = survival::survival_curve(std::vector<double>{0.5, 1.0, 0.2});
  CHECK(absorbing[1] == doctest::Approx(0.0));
  CHECK(absorbing[2] == doctest::Approx(0.0));

  CHECK_THROWS_AS(survival::survival_curve(std::vector<double>{1.5}), InvalidHazardError);
  CHECK_THROWS_AS(survival::survival_curve(std::vector<double>{-0.1}), InvalidHazardError);
}

TEST_CASE("randomized monotonicity in epsilon and nonincreasing survival") {
  Rng rng(314);
  for (int trial = 0; trial < 200; ++trial) {
    int length = 2 + static_cast<int>(rng.uniform_index(8));
    std::vector<SiteDistributions> per_index(length);
    for (int t = 0; t < length; ++t) {
      per_index[t].base_token = "w*";
      double remaining = 1.0;
      int alternates = 1 + static_cast<int>(rng.uniform_index(3));
      double base_p = 0.3 + 0.5 * rng.uniform();
      remaining -= base_p;
      per_index[t].sites.emplace_back("w*", base_p, dist({1.0, 0.0, 0.0}));
      for (int a = 0; a < alternates; ++a) {
        double p = remaining / alternates;
        double shift = rng.uniform();
        per_index[t].sites.emplace_back("alt" + std::to_string(a), p,
                                        dist({1.0 - shift, shift, 0.0}));
      }
    }
    double eps1 = 0.2 + 0.4 * rng.uniform();
    double eps2 = eps1 + 0.3 * rng.uniform();
    auto curve1 = survival::analyze(per_index, eps1, Metric::L2);
    auto curve2 = survival::analyze(per_index, eps2, Metric::L2);
    for (int t = 0; t < length; ++t) {
      CHECK(curve1.hazards[t] >= curve2.hazards[t] - 1e-12);
      CHECK(curve1.survival[t] <= curve2.survival[t] + 1e-12);
      if (t > 0) CHECK(curve1.survival[t] <= curve1.survival[t - 1] + 1e-12);
      CHECK(curve1.survival[t] >= 0.0);
      CHECK(curve1.survival[t] <= 1.0);
    }
  }
}

TEST_CASE("log-space recomputation agrees with the running product") {
  Rng rng(11);
  std::vector<double> hazards;
  for (int t = 0; t < 50; ++t) hazards.push_back(0.9 * rng.uniform());
  auto curve = survival::survival_curve(hazards);
  double log_sum = 0.0;
  for (double h : hazards) log_sum += std::log1p(-h);
  CHECK(curve.back() == doctest::Approx(std::exp(log_sum)).epsilon(1e-12));
}

TEST_CASE("parallel sets flows") {
  SiteDistributions at_t;
  at_t.base_token = "x";
  at_t.sites.emplace_back("x", 0.6, dist({1.0, 0.0, 0.0}));
  at_t.sites.emplace_back("y", 0.4, dist({0.0, 1.0, 0.0}));
  SiteDistributions at_next;
  at_next.base_token = "z";
  at_next.sites.emplace_back("z", 1.0, dist({0.5, 0.5, 0.0}));

  auto flows = survival::parallel_sets_flows(at_t, at_next, 3);

  double mass_t = 0.0, mass_next = 0.0;
  for (const auto& f : flows) {
    if (f.token_index == 3) mass_t += f.mass;
    if (f.token_index == 4) mass_next += f.mass;
  }
  CHECK(mass_t == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(mass_next == doctest::Approx(1.0).epsilon(1e-9));

  // disjoint block structure: two flows of .6 and .4 at index 3
  int count_t = 0;
  for (const auto& f : flows) {
    if (f.token_index == 3) {
      ++count_t;
      if (f.token == "x") CHECK(f.mass == doctest::Approx(0.6));
      if (f.token == "y") CHECK(f.mass == doctest::Approx(0.4));
    }
  }
  CHECK(count_t == 2);

  SiteDistributions empty;
  CHECK_THROWS_AS(survival::parallel_sets_flows(at_t, empty, 3), MissingSiteError);
}

TEST_CASE("survival csv") {
  survival::SurvivalCurve curve;
  curve.hazards = {0.1, 0.2};
  curve.survival = {0.9, 0.72};
  CHECK(survival::to_csv(curve) == "t,h,S\n0,0.1,0.9\n1,0.2,0.72\n");
}
