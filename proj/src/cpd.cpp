#include "forkpath/cpd.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>

#include "forkpath/rng.hpp"

namespace forkpath::cpd {

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;
constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// Prefix sums over the series for O(1) per-segment regression statistics.
class SegmentTable {
 public:
  SegmentTable(const std::vector<double>& values, double g) : g_(g) {
    std::size_t n = values.size();
    sum_t_.assign(n + 1, 0.0);
    sum_t2_.assign(n + 1, 0.0);
    sum_y_.assign(n + 1, 0.0);
    sum_y2_.assign(n + 1, 0.0);
    sum_ty_.assign(n + 1, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      double t = static_cast<double>(i);
      sum_t_[i + 1] = sum_t_[i] + t;
      sum_t2_[i + 1] = sum_t2_[i] + t * t;
      sum_y_[i + 1] = sum_y_[i] + values[i];
      sum_y2_[i + 1] = sum_y2_[i] + values[i] * values[i];
      sum_ty_[i + 1] = sum_ty_[i] + t * values[i];
    }
  }

  struct Seg {
    int n = 0;
    double center = 0;                          // segment time midpoint
    double a00 = 0, a01 = 0, a11 = 0, det = 0;  // A = X'X + I/g
    double b0 = 0, b1 = 0;                      // X'y
    double resid = 0;                           // y'y - b'A^{-1}b
    double log_det_cov = 0;                     // log |I + g X X'| = log(g^2 det A)
  };

  // Time is centered within the segment, so the slope regressor has zero
  // mean: the prior is position-invariant and mirrored series give mirrored
  // posteriors.
  Seg segment(int a, int b) const {
    Seg s;
    s.n = b - a;
    s.center = 0.5 * static_cast<double>(a + b - 1);
    double st = sum_t_[b] - sum_t_[a];
    double st2 = sum_t2_[b] - sum_t2_[a];
    double sy = sum_y_[b] - sum_y_[a];
    double sy2 = sum_y2_[b] - sum_y2_[a];
    double sty = sum_ty_[b] - sum_ty_[a];
    double sx = st - s.n * s.center;             // exactly 0 up to rounding
    double sx2 = st2 - 2.0 * s.center * st + s.n * s.center * s.center;
    double sxy = sty - s.center * sy;
    s.a00 = sx2 + 1.0 / g_;
    s.a01 = sx;
    s.a11 = static_cast<double>(s.n) + 1.0 / g_;
    s.det = s.a00 * s.a11 - s.a01 * s.a01;
    s.b0 = sxy;
    s.b1 = sy;
    double quad = (s.a11 * s.b0 * s.b0 - 2.0 * s.a01 * s.b0 * s.b1 + s.a00 * s.b1 * s.b1) / s.det;
    s.resid = std::max(0.0, sy2 - quad);
    s.log_det_cov = 2.0 * std::log(g_) + std::log(s.det);
    return s;
  }

  // log N(y_seg; 0, sigma^2 (I + g X X')) for a fixed noise level.
  double log_lik_given_sigma(int a, int b, double sigma2) const {
    Seg s = segment(a, b);
    return -0.5 * s.n * (kLog2Pi + std::log(sigma2)) - 0.5 * s.log_det_cov -
           s.resid / (2.0 * sigma2);
  }

 private:
  double g_;
  std::vector<double> sum_t_, sum_t2_, sum_y_, sum_y2_, sum_ty_;
};

std::vector<int> boundaries(const std::vector<int>& taus, int length) {
  std::vector<int> out;
  out.reserve(taus.size() + 2);
  out.push_back(0);
  out.insert(out.end(), taus.begin(), taus.end());
  out.push_back(length);
  return out;
}

std::vector<int> valid_insert_positions(const std::vector<int>& taus, int length, int min_len) {
  std::vector<int> out;
  auto bounds = boundaries(taus, length);
  for (std::size_t i = 0; i + 1 < bounds.size(); ++i) {
    for (int t = bounds[i] + min_len; t <= bounds[i + 1] - min_len; ++t) out.push_back(t);
  }
  return out;
}

double log_binomial(double n, double k) {
  return std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0);
}

}  // namespace

double count_configurations(std::size_t length, int num_changes, int min_len) {
  if (num_changes == 0) return 1.0;
  double slack = static_cast<double>(length) -
                 static_cast<double>(num_changes + 1) * static_cast<double>(min_len);
  if (slack < 0) return 0.0;
  return std::exp(log_binomial(slack + num_changes, num_changes));
}

std::vector<double> CpdPriors::resolved_pi_m() const {
  std::vector<double> pi = pi_m;
  if (pi.empty()) pi.assign(static_cast<std::size_t>(m_max) + 1, 1.0 / (m_max + 1));
  return pi;
}

void validate(const CpdPriors& priors, std::size_t series_length) {
  if (priors.m_max < 0) throw Error("CpdPriors: m_max < 0");
  if (priors.min_segment_length < 2) throw Error("CpdPriors: min_segment_length < 2");
  if (priors.coef_prior_scale <= 0.0) throw Error("CpdPriors: coef_prior_scale <= 0");
  if (priors.noise_prior_shape <= 0.0 || priors.noise_prior_scale <= 0.0) {
    throw Error("CpdPriors: inverse-gamma hyperparameters must be positive");
  }
  auto pi = priors.resolved_pi_m();
  if (pi.size() != static_cast<std::size_t>(priors.m_max) + 1) {
    throw Error("CpdPriors: pi_m must have m_max + 1 entries");
  }
  double total = 0.0;
  for (double p : pi) {
    if (p < 0.0) throw Error("CpdPriors: negative prior mass");
    total += p;
  }
  if (std::abs(total - 1.0) > 1e-9) throw Error("CpdPriors: pi_m must sum to 1");
  if (series_length > 0 &&
      static_cast<std::size_t>(priors.m_max) * priors.min_segment_length >= series_length) {
    throw Error("CpdPriors: m_max * min_segment_length must be < series length");
  }
}

void to_json(json& j, const CpdPriors& priors) {
  j = json{{"m_max", priors.m_max},
           {"pi_m", priors.resolved_pi_m()},
           {"min_segment_length", priors.min_segment_length},
           {"coef_prior_scale", priors.coef_prior_scale},
           {"noise_prior_shape", priors.noise_prior_shape},
           {"noise_prior_scale", priors.noise_prior_scale}};
}

void from_json(const json& j, CpdPriors& priors) {
  priors.m_max = j.value("m_max", 3);
  priors.pi_m = j.value("pi_m", std::vector<double>{});
  priors.min_segment_length = j.value("min_segment_length", 3);
  priors.coef_prior_scale = j.value("coef_prior_scale", 100.0);
  priors.noise_prior_shape = j.value("noise_prior_shape", 2.0);
  priors.noise_prior_scale = j.value("noise_prior_scale", 0.02);
}

void to_json(json& j, const McmcConfig& config) {
  j = json{{"iterations", config.iterations},
           {"burn_in", config.burn_in},
           {"thin", config.thin},
           {"seed", config.seed}};
}

void from_json(const json& j, McmcConfig& config) {
  config.iterations = j.value("iterations", 10000);
  config.burn_in = j.value("burn_in", 2000);
  config.thin = j.value("thin", 5);
  config.seed = j.value("seed", static_cast<uint64_t>(0));
}

// ---------------------------------------------------------------------------
// Exact enumeration oracle

namespace {

// Marginal likelihood of a full segmentation with coefficients and noise
// integrated out analytically.
double log_marginal(const SegmentTable& table, const std::vector<int>& taus, int length,
                    const CpdPriors& priors) {
  double log_det_total = 0.0;
  double resid_total = 0.0;
  auto bounds = boundaries(taus, length);
  for (std::size_t i = 0; i + 1 < bounds.size(); ++i) {
    auto seg = table.segment(bounds[i], bounds[i + 1]);
    log_det_total += seg.log_det_cov;
    resid_total += seg.resid;
  }
  double a0 = priors.noise_prior_shape;
  double b0 = priors.noise_prior_scale;
  double half_t = 0.5 * static_cast<double>(length);
  return -half_t * kLog2Pi - 0.5 * log_det_total + a0 * std::log(b0) - std::lgamma(a0) +
         std::lgamma(a0 + half_t) - (a0 + half_t) * std::log(b0 + 0.5 * resid_total);
}

void enumerate_taus(int length, int min_len, int num_changes, std::vector<int>& current,
                    const std::function<void(const std::vector<int>&)>& visit) {
  if (static_cast<int>(current.size()) == num_changes) {
    visit(current);
    return;
  }
  int lo = current.empty() ? min_len : current.back() + min_len;
  int remaining = num_changes - static_cast<int>(current.size());
  // leave room for the remaining change points and a final segment
  int hi = length - remaining * min_len;
  for (int t = lo; t <= hi; ++t) {
    current.push_back(t);
    enumerate_taus(length, min_len, num_changes, current, visit);
    current.pop_back();
  }
}

}  // namespace

CpdPosterior exact_posterior(const series::DriftSeries& series, const CpdPriors& priors) {
  std::size_t length = series.size();
  if (length < static_cast<std::size_t>(priors.min_segment_length)) {
    throw SeriesTooShortError("exact_posterior: series shorter than one segment");
  }
  validate(priors, length);
  if (length > 40 || priors.m_max > 3) {
    throw OracleTooLargeError("exact_posterior: guard is T <= 40 and m_max <= 3");
  }

  SegmentTable table(series.values, priors.coef_prior_scale);
  auto pi = priors.resolved_pi_m();
  int t_len = static_cast<int>(length);

  struct Entry {
    std::vector<int> taus;
    int m;
    double log_weight;
  };
  std::vector<Entry> entries;
  double max_log = kNegInf;
  for (int m = 0; m <= priors.m_max; ++m) {
    if (pi[m] <= 0.0) continue;
    double configs = count_configurations(length, m, priors.min_segment_length);
    if (configs <= 0.0) continue;
    double log_prior = std::log(pi[m]) - std::log(configs);
    std::vector<int> current;
    enumerate_taus(t_len, priors.min_segment_length, m, current,
                   [&](const std::vector<int>& taus) {
                     double lw = log_prior + log_marginal(table, taus, t_len, priors);
                     entries.push_back({taus, m, lw});
                     max_log = std::max(max_log, lw);
                   });
  }
  if (entries.empty()) throw Error("exact_posterior: no feasible segmentation");

  double total = 0.0;
  for (auto& e : entries) total += std::exp(e.log_weight - max_log);

  CpdPosterior posterior;
  posterior.p_m.assign(static_cast<std::size_t>(priors.m_max) + 1, 0.0);
  posterior.p_tau.assign(length, 0.0);
  for (const auto& e : entries) {
    double w = std::exp(e.log_weight - max_log) / total;
    posterior.p_m[e.m] += w;
    for (int t : e.taus) posterior.p_tau[t] += w;
  }
  posterior.diagnostics.converged = true;
  return posterior;
}

// ---------------------------------------------------------------------------
// Gibbs sampler

namespace {

struct SamplerState {
  std::vector<int> taus;
  std::vector<double> slopes;
  std::vector<double> intercepts;
  double sigma2 = 1.0;
};

struct MoveProbs {
  double birth = 0.0;
  double death = 0.0;
};

MoveProbs move_probs(int m, int m_max, bool has_valid_birth) {
  bool can_birth = m < m_max && has_valid_birth;
  bool can_death = m > 0;
  MoveProbs p;
  if (can_birth && can_death) {
    p.birth = 0.5;
    p.death = 0.5;
  } else if (can_birth) {
    p.birth = 1.0;
  } else if (can_death) {
    p.death = 1.0;
  }
  return p;
}

}  // namespace

CpdPosterior fit(const series::DriftSeries& series, const CpdPriors& priors,
                 const McmcConfig& config) {
  std::size_t length = series.size();
  int min_len = priors.min_segment_length;
  if (length < 2 * static_cast<std::size_t>(min_len)) {
    throw SeriesTooShortError("fit: series length " + std::to_string(length) +
                              " < 2 * min_segment_length");
  }
  validate(priors, length);
  if (config.iterations <= config.burn_in) throw Error("fit: iterations must exceed burn_in");
  if (config.thin < 1) throw Error("fit: thin must be >= 1");

  const int t_len = static_cast<int>(length);
  const double g = priors.coef_prior_scale;
  const double a0 = priors.noise_prior_shape;
  const double b0 = priors.noise_prior_scale;
  SegmentTable table(series.values, g);
  auto pi = priors.resolved_pi_m();
  std::vector<double> log_pi(pi.size(), kNegInf);
  for (std::size_t i = 0; i < pi.size(); ++i) {
    if (pi[i] > 0.0) log_pi[i] = std::log(pi[i]);
  }
  std::vector<double> log_configs(pi.size(), kNegInf);
  for (std::size_t m = 0; m < pi.size(); ++m) {
    double c = count_configurations(length, static_cast<int>(m), min_len);
    if (c > 0.0) log_configs[m] = std::log(c);
  }

  Rng rng(config.seed);
  SamplerState state;
  {
    double mean = 0.0, var = 0.0;
    for (double v : series.values) mean += v;
    mean /= static_cast<double>(length);
    for (double v : series.values) var += (v - mean) * (v - mean);
    var /= static_cast<double>(length);
    state.sigma2 = std::max(var, 1e-8);
  }
  // Start from the smallest feasible m with positive prior mass, change
  // points evenly spaced.
  for (int m0 = 0; m0 <= priors.m_max; ++m0) {
    if (pi[m0] <= 0.0 || count_configurations(length, m0, min_len) <= 0.0) continue;
    for (int i = 1; i <= m0; ++i) {
      int tau = i * t_len / (m0 + 1);
      tau = std::clamp(tau, i * min_len, t_len - (m0 - i + 1) * min_len);
      state.taus.push_back(tau);
    }
    break;
  }

  CpdDiagnostics diag;
  CpdPosterior posterior;
  posterior.mcmc_config = config;
  posterior.p_m.assign(pi.size(), 0.0);
  posterior.p_tau.assign(length, 0.0);

  auto draw_coefficients = [&](const std::vector<int>& taus) {
    auto bounds = boundaries(taus, t_len);
    state.slopes.assign(bounds.size() - 1, 0.0);
    state.intercepts.assign(bounds.size() - 1, 0.0);
    for (std::size_t i = 0; i + 1 < bounds.size(); ++i) {
      auto seg = table.segment(bounds[i], bounds[i + 1]);
      double inv_det = 1.0 / seg.det;
      double mean_slope = inv_det * (seg.a11 * seg.b0 - seg.a01 * seg.b1);
      double mean_intercept = inv_det * (-seg.a01 * seg.b0 + seg.a00 * seg.b1);
      // covariance = sigma2 * A^{-1}
      double c00 = state.sigma2 * seg.a11 * inv_det;
      double c01 = -state.sigma2 * seg.a01 * inv_det;
      double c11 = state.sigma2 * seg.a00 * inv_det;
      double l00 = std::sqrt(std::max(c00, 1e-300));
      double l10 = c01 / l00;
      double l11 = std::sqrt(std::max(c11 - l10 * l10, 0.0));
      double z0 = rng.gaussian();
      double z1 = rng.gaussian();
      state.slopes[i] = mean_slope + l00 * z0;
      state.intercepts[i] = mean_intercept + l10 * z0 + l11 * z1;
    }
  };

  int retained = config.iterations - config.burn_in;
  int num_draws = retained / config.thin;
  posterior.segment_draws.reserve(std::max(num_draws, 0));

  for (int sweep = 0; sweep < config.iterations; ++sweep) {
    int m = static_cast<int>(state.taus.size());

    // --- birth/death move on the number of change points (coefficients
    // integrated out, conditioned on the current noise level)
    auto valid = valid_insert_positions(state.taus, t_len, min_len);
    MoveProbs probs = move_probs(m, priors.m_max, !valid.empty());
    double u = rng.uniform();
    if (probs.birth > 0.0 && u < probs.birth) {
      ++diag.birth_proposals;
      int t_star = valid[rng.uniform_index(valid.size())];
      // enclosing segment
      int lo = 0, hi = t_len;
      for (int tau : state.taus) {
        if (tau < t_star) lo = tau;
        if (tau > t_star) {
          hi = tau;
          break;
        }
      }
      std::vector<int> proposed = state.taus;
      proposed.insert(std::upper_bound(proposed.begin(), proposed.end(), t_star), t_star);
      auto valid_after = valid_insert_positions(proposed, t_len, min_len);
      MoveProbs probs_after = move_probs(m + 1, priors.m_max, !valid_after.empty());

      double log_accept = table.log_lik_given_sigma(lo, t_star, state.sigma2) +
                          table.log_lik_given_sigma(t_star, hi, state.sigma2) -
                          table.log_lik_given_sigma(lo, hi, state.sigma2);
      log_accept += log_pi[m + 1] - log_pi[m];
      log_accept += log_configs[m] - log_configs[m + 1];
      log_accept += std::log(probs_after.death / static_cast<double>(m + 1));
      log_accept -= std::log(probs.birth / static_cast<double>(valid.size()));
      if (std::log(std::max(rng.uniform(), 1e-300)) < log_accept) {
        state.taus = std::move(proposed);
        ++diag.birth_accepts;
      }
    } else if (probs.death > 0.0 && u < probs.birth + probs.death) {
      ++diag.death_proposals;
      std::size_t idx = rng.uniform_index(state.taus.size());
      int t_star = state.taus[idx];
      int lo = idx > 0 ? state.taus[idx - 1] : 0;
      int hi = idx + 1 < state.taus.size() ? state.taus[idx + 1] : t_len;
      std::vector<int> proposed = state.taus;
      proposed.erase(proposed.begin() + static_cast<long>(idx));
      auto valid_after = valid_insert_positions(proposed, t_len, min_len);
      MoveProbs probs_after = move_probs(m - 1, priors.m_max, !valid_after.empty());

      double log_accept = table.log_lik_given_sigma(lo, hi, state.sigma2) -
                          table.log_lik_given_sigma(lo, t_star, state.sigma2) -
                          table.log_lik_given_sigma(t_star, hi, state.sigma2);
      log_accept += log_pi[m - 1] - log_pi[m];
      log_accept += log_configs[m] - log_configs[m - 1];
      log_accept += std::log(probs_after.birth / static_cast<double>(valid_after.size()));
      log_accept -= std::log(probs.death / static_cast<double>(m));
      if (std::log(std::max(rng.uniform(), 1e-300)) < log_accept) {
        state.taus = std::move(proposed);
        ++diag.death_accepts;
      }
    }

    // --- single-site Metropolis shifts of each change time
    m = static_cast<int>(state.taus.size());
    for (int i = 0; i < m; ++i) {
      int lo_bound = (i > 0 ? state.taus[i - 1] : 0) + min_len;
      int hi_bound = (i + 1 < m ? state.taus[i + 1] : t_len) - min_len;
      if (hi_bound <= lo_bound) continue;
      int proposal = lo_bound + static_cast<int>(rng.uniform_index(
                                    static_cast<std::size_t>(hi_bound - lo_bound + 1)));
      int current = state.taus[i];
      if (proposal == current) continue;
      ++diag.shift_proposals;
      int a = i > 0 ? state.taus[i - 1] : 0;
      int b = i + 1 < m ? state.taus[i + 1] : t_len;
      double log_accept = table.log_lik_given_sigma(a, proposal, state.sigma2) +
                          table.log_lik_given_sigma(proposal, b, state.sigma2) -
                          table.log_lik_given_sigma(a, current, state.sigma2) -
                          table.log_lik_given_sigma(current, b, state.sigma2);
      if (std::log(std::max(rng.uniform(), 1e-300)) < log_accept) {
        state.taus[i] = proposal;
        ++diag.shift_accepts;
      }
    }

    // --- conjugate draws for segment coefficients and noise
    draw_coefficients(state.taus);
    {
      auto bounds = boundaries(state.taus, t_len);
      double ssr = 0.0;
      double coef_ss = 0.0;
      for (std::size_t i = 0; i + 1 < bounds.size(); ++i) {
        double center = 0.5 * static_cast<double>(bounds[i] + bounds[i + 1] - 1);
        for (int t = bounds[i]; t < bounds[i + 1]; ++t) {
          double fitted =
              state.slopes[i] * (static_cast<double>(t) - center) + state.intercepts[i];
          double r = series.values[t] - fitted;
          ssr += r * r;
        }
        coef_ss += state.slopes[i] * state.slopes[i] + state.intercepts[i] * state.intercepts[i];
      }
      double shape = a0 + 0.5 * static_cast<double>(t_len) +
                     static_cast<double>(state.taus.size() + 1);
      double scale = b0 + 0.5 * ssr + coef_ss / (2.0 * g);
      state.sigma2 = rng.inverse_gamma(shape, scale);
    }

    // --- record
    if (sweep >= config.burn_in && (sweep - config.burn_in) % config.thin == 0) {
      SegmentDraw draw;
      draw.num_changes = static_cast<int>(state.taus.size());
      draw.change_times = state.taus;
      draw.slopes = state.slopes;
      draw.intercepts = state.intercepts;
      draw.sigma = std::sqrt(state.sigma2);
      posterior.segment_draws.push_back(std::move(draw));
    }
  }

  double n_draws = static_cast<double>(posterior.segment_draws.size());
  for (const auto& d : posterior.segment_draws) {
    posterior.p_m[d.num_changes] += 1.0 / n_draws;
    for (int t : d.change_times) posterior.p_tau[t] += 1.0 / n_draws;
  }

  // split-half agreement of p(m | y) as a convergence heuristic
  {
    std::size_t half = posterior.segment_draws.size() / 2;
    std::vector<double> first(pi.size(), 0.0), second(pi.size(), 0.0);
    for (std::size_t i = 0; i < posterior.segment_draws.size(); ++i) {
      auto& target = i < half ? first : second;
      target[posterior.segment_draws[i].num_changes] += 1.0;
    }
    double tv = 0.0;
    for (std::size_t i = 0; i < pi.size(); ++i) {
      double f = half > 0 ? first[i] / static_cast<double>(half) : 0.0;
      double s = half > 0 ? second[i] / static_cast<double>(posterior.segment_draws.size() - half)
                          : 0.0;
      tv += std::abs(f - s);
    }
    diag.split_half_tv = 0.5 * tv;
    diag.converged = diag.split_half_tv <= 0.05;
  }
  posterior.diagnostics = diag;
  return posterior;
}

// ---------------------------------------------------------------------------

BayesFactorDecision bayes_factor_test(const CpdPosterior& posterior, const CpdPriors& priors) {
  auto pi = priors.resolved_pi_m();
  double prior_none = pi.empty() ? 0.0 : pi[0];
  double prior_some = 0.0;
  for (std::size_t i = 1; i < pi.size(); ++i) prior_some += pi[i];

  double post_none = posterior.p_m.empty() ? 0.0 : posterior.p_m[0];
  double post_some = 0.0;
  for (std::size_t i = 1; i < posterior.p_m.size(); ++i) post_some += posterior.p_m[i];

  BayesFactorDecision decision;
  if (prior_some <= 0.0 || prior_none <= 0.0) {
    decision.bf = 0.0;
    decision.has_change = false;
    return decision;
  }
  if (post_none <= 0.0) {
    decision.bf = post_some > 0.0 ? std::numeric_limits<double>::infinity() : 0.0;
    decision.has_change = post_some > 0.0;
    return decision;
  }
  double prior_odds = prior_some / prior_none;
  decision.bf = (post_some / post_none) / prior_odds;
  decision.has_change = decision.bf > 9.0;
  return decision;
}

int estimate_num_changepoints(const CpdPosterior& posterior, double quantile) {
  if (quantile <= 0.0 || quantile >= 1.0) {
    throw PreconditionError("estimate_num_changepoints: quantile outside (0, 1)");
  }
  double cumulative = 0.0;
  for (std::size_t m = 0; m < posterior.p_m.size(); ++m) {
    cumulative += posterior.p_m[m];
    if (cumulative >= quantile - 1e-12) return static_cast<int>(m);
  }
  return static_cast<int>(posterior.p_m.size()) - 1;
}

std::vector<bool> changepoint_mask(const CpdPosterior& posterior, double threshold) {
  if (threshold <= 0.0 || threshold >= 1.0) {
    throw PreconditionError("changepoint_mask: threshold outside (0, 1)");
  }
  std::vector<bool> mask(posterior.p_tau.size(), false);
  for (std::size_t t = 0; t < posterior.p_tau.size(); ++t) {
    mask[t] = posterior.p_tau[t] >= threshold;
  }
  return mask;
}

json posterior_to_json(const CpdPosterior& posterior, const CpdPriors& priors) {
  json diag{{"converged", posterior.diagnostics.converged},
            {"split_half_tv", posterior.diagnostics.split_half_tv},
            {"birth_accepts", posterior.diagnostics.birth_accepts},
            {"birth_proposals", posterior.diagnostics.birth_proposals},
            {"death_accepts", posterior.diagnostics.death_accepts},
            {"death_proposals", posterior.diagnostics.death_proposals},
            {"shift_accepts", posterior.diagnostics.shift_accepts},
            {"shift_proposals", posterior.diagnostics.shift_proposals}};
  json config = posterior.mcmc_config;
  config["priors"] = priors;
  return json{{"p_m", posterior.p_m},
              {"p_tau", posterior.p_tau},
              {"config", config},
              {"diagnostics", diag}};
}

CpdPosterior posterior_from_json(const json& j) {
  CpdPosterior posterior;
  posterior.p_m = j.at("p_m").get<std::vector<double>>();
  posterior.p_tau = j.at("p_tau").get<std::vector<double>>();
  if (j.contains("config")) posterior.mcmc_config = j.at("config").get<McmcConfig>();
  if (j.contains("diagnostics")) {
    const auto& d = j.at("diagnostics");
    posterior.diagnostics.converged = d.value("converged", true);
    posterior.diagnostics.split_half_tv = d.value("split_half_tv", 0.0);
  }
  return posterior;
}

}  // namespace forkpath::cpd
