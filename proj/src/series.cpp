#include "forkpath/series.hpp"

#include <cmath>
#include <sstream>

#include "forkpath/rng.hpp"
#include "forkpath/util.hpp"

namespace forkpath::series {

std::string to_string(Metric metric) {
  switch (metric) {
    case Metric::L2: return "L2";
    case Metric::L1: return "L1";
    case Metric::KL: return "KL";
  }
  throw Error("unknown metric");
}

Metric metric_from_string(const std::string& name) {
  if (name == "L2") return Metric::L2;
  if (name == "L1") return Metric::L1;
  if (name == "KL") return Metric::KL;
  throw Error("unknown metric: " + name);
}

void to_json(json& j, const DriftSeries& series) {
  j = json{{"values", series.values},
           {"metric", to_string(series.metric)},
           {"noise_variance", series.noise_variance},
           {"seed", series.seed}};
}

void from_json(const json& j, DriftSeries& series) {
  series.values = j.at("values").get<std::vector<double>>();
  series.metric = metric_from_string(j.at("metric").get<std::string>());
  series.noise_variance = j.at("noise_variance").get<double>();
  series.seed = j.at("seed").get<uint64_t>();
}

double distance(const outcomes::OutcomeDistribution& a, const outcomes::OutcomeDistribution& b,
                Metric metric) {
  if (a.space != b.space || a.probs.size() != b.probs.size()) {
    throw SpaceMismatchError("distance: distributions use different outcome spaces");
  }
  switch (metric) {
    case Metric::L2: {
      double sum = 0.0;
      for (std::size_t i = 0; i < a.probs.size(); ++i) {
        double d = a.probs[i] - b.probs[i];
        sum += d * d;
      }
      return std::sqrt(sum);
    }
    case Metric::L1: {
      double sum = 0.0;
      for (std::size_t i = 0; i < a.probs.size(); ++i) {
        sum += std::abs(a.probs[i] - b.probs[i]);
      }
      return sum;
    }
    case Metric::KL: {
      // Mix both arguments with uniform mass at eps before the log ratio so
      // zero entries stay finite.
      const double eps = 1e-6;
      double n = static_cast<double>(a.probs.size());
      double sum = 0.0;
      for (std::size_t i = 0; i < a.probs.size(); ++i) {
        double p = (1.0 - eps) * a.probs[i] + eps / n;
        double q = (1.0 - eps) * b.probs[i] + eps / n;
        sum += p * std::log(p / q);
      }
      return std::max(0.0, sum);
    }
  }
  throw Error("unknown metric");
}

DriftSeries drift_series(std::span<const outcomes::OutcomeDistribution> distributions,
                         Metric metric) {
  if (distributions.size() < 2) {
    throw SeriesTooShortError("drift_series: need at least 2 distributions");
  }
  DriftSeries out;
  out.metric = metric;
  out.values.reserve(distributions.size());
  out.values.push_back(0.0);
  for (std::size_t t = 1; t < distributions.size(); ++t) {
    out.values.push_back(distance(distributions[0], distributions[t], metric));
  }
  return out;
}

DriftSeries perturb(const DriftSeries& series, double variance, uint64_t seed) {
  if (variance < 0.0) throw PreconditionError("perturb: negative variance");
  DriftSeries out = series;
  out.noise_variance = variance;
  out.seed = seed;
  if (variance == 0.0) return out;
  Rng rng(seed);
  double sd = std::sqrt(variance);
  for (double& v : out.values) v += sd * rng.gaussian();
  return out;
}

std::string to_csv(const DriftSeries& series) {
  std::string out = "t,y\n";
  for (std::size_t t = 0; t < series.values.size(); ++t) {
    out += std::to_string(t);
    out += ',';
    out += format_double(series.values[t]);
    out += '\n';
  }
  return out;
}

DriftSeries series_from_csv(const std::string& csv, Metric metric) {
  DriftSeries out;
  out.metric = metric;
  std::istringstream in(csv);
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto comma = line.find(',');
    if (comma == std::string::npos) throw Error("series CSV: missing comma in line: " + line);
    std::string value = line.substr(comma + 1);
    if (first) {
      first = false;
      // tolerate a header row
      char* end = nullptr;
      std::strtod(value.c_str(), &end);
      if (end == value.c_str()) continue;
    }
    out.values.push_back(std::strtod(value.c_str(), nullptr));
  }
  if (out.values.size() < 2) throw SeriesTooShortError("series CSV: fewer than 2 rows");
  return out;
}

}  // namespace forkpath::series
