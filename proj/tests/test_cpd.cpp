#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "forkpath/cpd.hpp"
#include "forkpath/rng.hpp"

using namespace forkpath;
using cpd::CpdPosterior;
using cpd::CpdPriors;
using cpd::McmcConfig;

namespace {

series::DriftSeries make_series(std::vector<double> values) {
  series::DriftSeries s;
  s.values = std::move(values);
  return s;
}

// Piecewise-constant series with Gaussian noise.
series::DriftSeries noisy_steps(int length, const std::vector<std::pair<int, double>>& levels,
                                double noise_sd, uint64_t seed) {
  Rng rng(seed);
  std::vector<double> values(length, 0.0);
  for (int t = 0; t < length; ++t) {
    double level = 0.0;
    for (const auto& [start, value] : levels) {
      if (t >= start) level = value;
    }
    values[t] = level + noise_sd * rng.gaussian();
  }
  return make_series(std::move(values));
}

double total_variation(const std::vector<double>& a, const std::vector<double>& b) {
  double tv = 0.0;
  for (std::size_t i = 0; i < std::max(a.size(), b.size()); ++i) {
    double x = i < a.size() ? a[i] : 0.0;
    double y = i < b.size() ? b[i] : 0.0;
    tv += std::abs(x - y);
  }
  return 0.5 * tv;
}

std::size_t argmax(const std::vector<double>& v) {
  return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
}

}  // namespace

TEST_CASE("count_configurations matches hand enumeration") {
  // T=6, L=3, one change: only t=3 fits
  CHECK(cpd::count_configurations(6, 1, 3) == doctest::Approx(1.0));
  // T=7, L=3: t in {3, 4}
  CHECK(cpd::count_configurations(7, 1, 3) == doctest::Approx(2.0));
  // T=9, L=3, two changes: only (3, 6)
  CHECK(cpd::count_configurations(9, 2, 3) == doctest::Approx(1.0));
  CHECK(cpd::count_configurations(8, 2, 3) == doctest::Approx(0.0));
  CHECK(cpd::count_configurations(20, 0, 3) == doctest::Approx(1.0));
  // T=10, L=3, m=1: t in {3,...,7} -> 5
  CHECK(cpd::count_configurations(10, 1, 3) == doctest::Approx(5.0));
}

TEST_CASE("exact posterior normalizes and excludes endpoints") {
  auto series = noisy_steps(12, {{0, 0.1}, {6, 0.8}}, 0.05, 11);
  CpdPriors priors;
  priors.m_max = 2;
  auto posterior = cpd::exact_posterior(series, priors);

  double pm_sum = 0.0;
  for (double p : posterior.p_m) pm_sum += p;
  CHECK(pm_sum == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(posterior.p_tau[0] == 0.0);
  CHECK(posterior.p_tau[posterior.p_tau.size() - 1] == 0.0);

  // mass conservation: sum_t p_tau = E[m]
  double tau_mass = 0.0, mean_m = 0.0;
  for (double p : posterior.p_tau) tau_mass += p;
  for (std::size_t m = 0; m < posterior.p_m.size(); ++m) {
    mean_m += static_cast<double>(m) * posterior.p_m[m];
  }
  CHECK(tau_mass == doctest::Approx(mean_m).epsilon(1e-9));
}

TEST_CASE("exact posterior is symmetric for symmetric series") {
  // values mirrored around the midpoint
  std::vector<double> values{0.1, 0.12, 0.1, 0.6, 0.6, 0.1, 0.12, 0.1};
  auto series = make_series(values);
  CpdPriors priors;
  priors.m_max = 1;
  priors.min_segment_length = 2;
  auto posterior = cpd::exact_posterior(series, priors);
  std::size_t n = posterior.p_tau.size();
  for (std::size_t t = 1; t < n; ++t) {
    std::size_t mirror = n - t;
    if (mirror >= n) continue;
    CHECK(posterior.p_tau[t] == doctest::Approx(posterior.p_tau[mirror]).epsilon(1e-6));
  }
}

TEST_CASE("exact posterior guards instance size") {
  auto series = noisy_steps(60, {{0, 0.1}}, 0.05, 3);
  CpdPriors priors;
  CHECK_THROWS_AS(cpd::exact_posterior(series, priors), OracleTooLargeError);
}

TEST_CASE("flat series puts the posterior mode at zero changes") {
  auto series = noisy_steps(24, {{0, 0.2}}, 0.05, 21);
  CpdPriors priors;
  priors.m_max = 2;
  McmcConfig mcmc;
  mcmc.seed = 7;
  auto posterior = cpd::fit(series, priors, mcmc);
  CHECK(argmax(posterior.p_m) == 0);

  auto exact = cpd::exact_posterior(series, priors);
  CHECK(argmax(exact.p_m) == 0);
}

TEST_CASE("single step series: mode m=1 and the change time is found") {
  // step 0 -> 1 at t=10, sigma .05, T=24
  auto series = noisy_steps(24, {{0, 0.0}, {10, 1.0}}, 0.05, 42);
  CpdPriors priors;
  priors.m_max = 2;
  auto exact = cpd::exact_posterior(series, priors);
  CHECK(argmax(exact.p_m) == 1);
  CHECK(argmax(exact.p_tau) == 10);

  McmcConfig mcmc;
  mcmc.iterations = 20000;
  mcmc.burn_in = 4000;
  mcmc.thin = 2;
  mcmc.seed = 9;
  auto fitted = cpd::fit(series, priors, mcmc);
  CHECK(argmax(fitted.p_m) == 1);
  CHECK(argmax(fitted.p_tau) == 10);
  CHECK(total_variation(fitted.p_m, exact.p_m) < 0.05);
}

TEST_CASE("two-step series: mode m=2 with peaks at both jumps") {
  auto series = noisy_steps(30, {{0, 0.0}, {8, 0.8}, {16, 1.6}}, 0.05, 5);
  CpdPriors priors;
  priors.m_max = 3;
  McmcConfig mcmc;
  mcmc.iterations = 20000;
  mcmc.burn_in = 4000;
  mcmc.thin = 2;
  mcmc.seed = 17;
  auto posterior = cpd::fit(series, priors, mcmc);
  CHECK(argmax(posterior.p_m) == 2);
  CHECK(posterior.p_tau[8] > 0.5);
  CHECK(posterior.p_tau[16] > 0.5);
}

TEST_CASE("gibbs agrees with the exact oracle across seeded instances") {
  Rng seeds(2024);
  for (int instance = 0; instance < 6; ++instance) {
    uint64_t seed = seeds.next_u64();
    int length = 18 + static_cast<int>(seed % 7);  // 18..24
    int jump_at = 6 + static_cast<int>((seed >> 8) % static_cast<uint64_t>(length - 12));
    double magnitude = 0.5 + 0.1 * static_cast<double>((seed >> 16) % 5);
    auto series = noisy_steps(length, {{0, 0.1}, {jump_at, 0.1 + magnitude}}, 0.05, seed);

    CpdPriors priors;
    priors.m_max = 2;
    auto exact = cpd::exact_posterior(series, priors);

    McmcConfig mcmc;
    mcmc.iterations = 20000;
    mcmc.burn_in = 4000;
    mcmc.thin = 2;
    mcmc.seed = seed ^ 0xabcd;
    auto fitted = cpd::fit(series, priors, mcmc);

    INFO("instance ", instance, " length ", length, " jump at ", jump_at);
    CHECK(total_variation(fitted.p_m, exact.p_m) < 0.05);
    CHECK(argmax(fitted.p_tau) == argmax(exact.p_tau));
  }
}

TEST_CASE("fit is deterministic given the seed") {
  auto series = noisy_steps(24, {{0, 0.0}, {12, 0.9}}, 0.05, 77);
  CpdPriors priors;
  McmcConfig mcmc;
  mcmc.seed = 123;
  auto a = cpd::fit(series, priors, mcmc);
  auto b = cpd::fit(series, priors, mcmc);
  REQUIRE(a.segment_draws.size() == b.segment_draws.size());
  CHECK(a.p_m == b.p_m);
  CHECK(a.p_tau == b.p_tau);
  for (std::size_t i = 0; i < a.segment_draws.size(); ++i) {
    CHECK(a.segment_draws[i].num_changes == b.segment_draws[i].num_changes);
    CHECK(a.segment_draws[i].change_times == b.segment_draws[i].change_times);
    CHECK(a.segment_draws[i].sigma == b.segment_draws[i].sigma);
  }
}

TEST_CASE("p_tau mass equals posterior mean of m for sampled fits") {
  auto series = noisy_steps(24, {{0, 0.0}, {9, 0.7}}, 0.08, 15);
  CpdPriors priors;
  priors.m_max = 2;
  McmcConfig mcmc;
  mcmc.seed = 5;
  auto posterior = cpd::fit(series, priors, mcmc);
  double tau_mass = 0.0, mean_m = 0.0;
  for (double p : posterior.p_tau) tau_mass += p;
  for (std::size_t m = 0; m < posterior.p_m.size(); ++m) {
    mean_m += static_cast<double>(m) * posterior.p_m[m];
  }
  CHECK(tau_mass == doctest::Approx(mean_m).epsilon(1e-9));
}

TEST_CASE("series too short raises") {
  auto series = make_series({0.1, 0.2, 0.1, 0.2, 0.3});
  CpdPriors priors;  // min segment 3 -> needs T >= 6
  priors.m_max = 1;
  McmcConfig mcmc;
  CHECK_THROWS_AS(cpd::fit(series, priors, mcmc), SeriesTooShortError);
}

TEST_CASE("bayes factor test on fixture posteriors") {
  CpdPriors uniform01;
  uniform01.m_max = 1;

  CpdPosterior even;
  even.p_m = {0.5, 0.5};
  auto d1 = cpd::bayes_factor_test(even, uniform01);
  CHECK(d1.bf == doctest::Approx(1.0));
  CHECK_FALSE(d1.has_change);

  CpdPosterior strong;
  strong.p_m = {0.05, 0.95};
  auto d2 = cpd::bayes_factor_test(strong, uniform01);
  CHECK(d2.bf == doctest::Approx(19.0));
  CHECK(d2.has_change);

  CpdPosterior none;
  none.p_m = {1.0, 0.0};
  auto d3 = cpd::bayes_factor_test(none, uniform01);
  CHECK(d3.bf == doctest::Approx(0.0));
  CHECK_FALSE(d3.has_change);

  CpdPosterior certain;
  certain.p_m = {0.0, 1.0};
  auto d4 = cpd::bayes_factor_test(certain, uniform01);
  CHECK(std::isinf(d4.bf));
  CHECK(d4.has_change);
}

TEST_CASE("estimate_num_changepoints walks the cumulative quantile") {
  CpdPosterior a;
  a.p_m = {1.0, 0.0, 0.0};
  CHECK(cpd::estimate_num_changepoints(a, 0.1) == 0);

  CpdPosterior b;
  b.p_m = {0.05, 0.90, 0.05};
  CHECK(cpd::estimate_num_changepoints(b, 0.1) == 1);

  CpdPosterior c;
  c.p_m = {0.05, 0.04, 0.91};
  CHECK(cpd::estimate_num_changepoints(c, 0.1) == 2);
}

TEST_CASE("changepoint mask thresholds and nests") {
  CpdPosterior posterior;
  posterior.p_m = {0.2, 0.8};
  posterior.p_tau = {0.0, 0.1, 0.95, 0.6, 0.0};

  CpdPosterior flat;
  flat.p_m = {1.0};
  flat.p_tau = {0.0, 0.0, 0.0};
  auto all_false = cpd::changepoint_mask(flat, 0.7);
  CHECK(std::none_of(all_false.begin(), all_false.end(), [](bool b) { return b; }));

  auto at_07 = cpd::changepoint_mask(posterior, 0.7);
  CHECK(at_07 == std::vector<bool>{false, false, true, false, false});

  auto at_05 = cpd::changepoint_mask(posterior, 0.5);
  auto at_09 = cpd::changepoint_mask(posterior, 0.9);
  for (std::size_t t = 0; t < at_07.size(); ++t) {
    if (at_09[t]) CHECK(at_07[t]);
    if (at_07[t]) CHECK(at_05[t]);
  }
}

TEST_CASE("posterior json round trip") {
  auto series = noisy_steps(20, {{0, 0.0}, {9, 0.8}}, 0.05, 33);
  CpdPriors priors;
  priors.m_max = 2;
  McmcConfig mcmc;
  mcmc.seed = 3;
  auto posterior = cpd::fit(series, priors, mcmc);
  json j = cpd::posterior_to_json(posterior, priors);
  CHECK(j.contains("p_m"));
  CHECK(j.contains("p_tau"));
  CHECK(j.contains("config"));
  CHECK(j.contains("diagnostics"));
  auto back = cpd::posterior_from_json(j);
  CHECK(back.p_m == posterior.p_m);
  CHECK(back.p_tau == posterior.p_tau);
  CHECK(back.mcmc_config.seed == posterior.mcmc_config.seed);
}
