#include <doctest.h>

#include <cmath>
#include <vector>

#include "forkpath/core.hpp"
#include "forkpath/rng.hpp"

using namespace forkpath;

TEST_CASE("path_probability basics") {
  CHECK(path_probability(std::vector<double>{}) == doctest::Approx(1.0));
  CHECK(path_probability(std::vector<double>{std::log(0.5)}) == doctest::Approx(0.5));
  // hand product of two factors: 0.5 * 0.2 = 0.1
  CHECK(path_probability(std::vector<double>{std::log(0.5), std::log(0.2)}) ==
        doctest::Approx(0.1).epsilon(1e-12));
  CHECK_THROWS_AS(path_probability(std::vector<double>{0.1}), InvalidLogprobError);
}

TEST_CASE("path_probability is multiplicative over concatenation") {
  Rng rng(7);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> a, b, both;
    int na = 1 + static_cast<int>(rng.uniform_index(6));
    int nb = 1 + static_cast<int>(rng.uniform_index(6));
    for (int i = 0; i < na; ++i) a.push_back(std::log(0.05 + 0.95 * rng.uniform()));
    for (int i = 0; i < nb; ++i) b.push_back(std::log(0.05 + 0.95 * rng.uniform()));
    both = a;
    both.insert(both.end(), b.begin(), b.end());
    double lhs = path_probability(both);
    double rhs = path_probability(a) * path_probability(b);
    CHECK(lhs == doctest::Approx(rhs).epsilon(1e-12));
  }
}

TEST_CASE("normalize_weights basics") {
  auto w = normalize_weights(std::vector<double>{1, 1, 2});
  REQUIRE(w.size() == 3);
  CHECK(w[0] == doctest::Approx(0.25));
  CHECK(w[1] == doctest::Approx(0.25));
  CHECK(w[2] == doctest::Approx(0.5));

  auto single = normalize_weights(std::vector<double>{0.3});
  CHECK(single[0] == doctest::Approx(1.0));

  // hand normalization with a zero entry kept in place
  auto mixed = normalize_weights(std::vector<double>{0.1, 0.0, 0.3});
  CHECK(mixed[0] == doctest::Approx(0.25));
  CHECK(mixed[1] == doctest::Approx(0.0));
  CHECK(mixed[2] == doctest::Approx(0.75));

  CHECK_THROWS_AS(normalize_weights(std::vector<double>{0.0, 0.0}), DegenerateWeightsError);
  CHECK_THROWS_AS(normalize_weights(std::vector<double>{1.0, -0.5}), DegenerateWeightsError);
}

TEST_CASE("normalize_weights idempotent and scale invariant") {
  Rng rng(13);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> w;
    int n = 1 + static_cast<int>(rng.uniform_index(8));
    for (int i = 0; i < n; ++i) w.push_back(rng.uniform());
    w[rng.uniform_index(w.size())] += 0.5;  // guarantee positive mass
    double c = 0.1 + 10 * rng.uniform();
    std::vector<double> scaled = w;
    for (double& x : scaled) x *= c;

    auto norm = normalize_weights(w);
    auto norm_scaled = normalize_weights(scaled);
    auto norm_twice = normalize_weights(norm);

    double sum = 0.0;
    for (std::size_t i = 0; i < norm.size(); ++i) {
      sum += norm[i];
      CHECK(norm[i] == doctest::Approx(norm_scaled[i]).epsilon(1e-12));
      CHECK(norm[i] == doctest::Approx(norm_twice[i]).epsilon(1e-12));
    }
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
  }
}

namespace {

BasePath sample_base_path() {
  BasePath path;
  path.prompt_id = "demo-1";
  path.prompt_text = "Question:\n1+1?\n\nAnswer:\n";
  path.decode_params = {0.0, 16, 42};
  TokenEvent a{"2", std::log(0.9), {{"2", std::log(0.9)}, {"3", std::log(0.1)}}};
  TokenEvent b{".", std::log(0.8), {{".", std::log(0.8)}, {"!", std::log(0.2)}}};
  path.events = {a, b};
  return path;
}

}  // namespace

TEST_CASE("json round trip is structurally identical") {
  BasePath path = sample_base_path();
  json j = path;
  auto back = j.get<BasePath>();
  CHECK(back == path);
  CHECK(back.completion_text() == "2.");

  SampleRecord record;
  record.site = ForkSite{1, "!", 0.2};
  record.completion_text = "?!";
  record.completion_logprob = std::log(0.25);
  record.outcome_label = "Yes";
  record.sample_index = 3;
  json jr = record;
  CHECK(jr.get<SampleRecord>() == record);

  record.outcome_label.reset();
  json jr2 = record;
  CHECK(jr2.at("outcome_label").is_null());
  CHECK(jr2.get<SampleRecord>() == record);
}

TEST_CASE("json field names are canonical") {
  ForkSite site{3, "cat", 0.25};
  json j = site;
  CHECK(j.at("t") == 3);
  CHECK(j.at("w") == "cat");
  CHECK(j.at("p_w") == doctest::Approx(0.25));

  TokenEvent e{"a", -0.5, {{"a", -0.5}}};
  json je = e;
  CHECK(je.contains("token"));
  CHECK(je.contains("logprob"));
  CHECK(je.contains("top_alternates"));
}

TEST_CASE("token event validation") {
  TokenEvent bad{"x", 0.5, {{"x", 0.5}}};
  json j = json{{"token", "x"}, {"logprob", 0.5}, {"top_alternates", json::array({json::array({"x", 0.5})})}};
  TokenEvent out;
  CHECK_THROWS_AS(from_json(j, out), InvalidLogprobError);

  TokenEvent missing{"x", -0.1, {{"y", -0.2}}};
  ensure_realized_alternate(missing);
  REQUIRE(missing.top_alternates.size() == 2);
  CHECK(missing.top_alternates[0].first == "x");  // -0.1 sorts before -0.2
  CHECK_NOTHROW(validate(missing));
}
