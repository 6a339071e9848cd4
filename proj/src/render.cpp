#include <algorithm>
#include <cmath>

#include "forkpath/report.hpp"
#include "forkpath/util.hpp"

namespace forkpath::report {

namespace {

const char* kPalette[] = {"#4e79a7", "#f28e2b", "#59a14f", "#e15759",
                          "#76b7b2", "#edc948", "#b07aa1"};
constexpr int kPaletteSize = 7;

std::string html_escape(const std::string& s) {
  std::string out;
  out.reserve(s.size());
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out.push_back(c);
    }
  }
  return out;
}

std::string num(double v) { return format_g(v, 6); }

struct Chart {
  double width = 680, height = 220, pad = 34;
  std::string body;

  double x(double t, double t_max) const {
    if (t_max <= 0) return pad;
    return pad + t / t_max * (width - 2 * pad);
  }
  double y(double v, double v_max = 1.0) const {
    if (v_max <= 0) v_max = 1.0;
    return height - pad - (v / v_max) * (height - 2 * pad);
  }

  std::string finish(const std::string& title) const {
    std::string svg = "<svg width=\"" + num(width) + "\" height=\"" + num(height) +
                      "\" xmlns=\"http://www.w3.org/2000/svg\">\n";
    svg += "<text x=\"" + num(pad) + "\" y=\"16\" font-size=\"13\" font-family=\"sans-serif\">" +
           html_escape(title) + "</text>\n";
    svg += "<rect x=\"" + num(pad) + "\" y=\"" + num(pad) + "\" width=\"" + num(width - 2 * pad) +
           "\" height=\"" + num(height - 2 * pad) +
           "\" fill=\"none\" stroke=\"#ccc\" stroke-width=\"1\"/>\n";
    svg += body;
    svg += "</svg>\n";
    return svg;
  }
};

std::string stacked_outcome_chart(const ExampleAnalysis& a) {
  if (a.length < 2) return "<p>series too short to chart</p>\n";
  Chart c;
  double t_max = static_cast<double>(a.length - 1);
  std::size_t k = a.space.labels.size();
  std::vector<double> lower(a.length, 0.0);
  for (std::size_t label = 0; label < k; ++label) {
    std::vector<double> upper(a.length);
    for (std::size_t t = 0; t < a.length; ++t) upper[t] = lower[t] + a.o_t[t].probs[label];
    std::string points;
    for (std::size_t t = 0; t < a.length; ++t) {
      points += num(c.x(static_cast<double>(t), t_max)) + "," + num(c.y(upper[t])) + " ";
    }
    for (std::size_t r = a.length; r-- > 0;) {
      points += num(c.x(static_cast<double>(r), t_max)) + "," + num(c.y(lower[r])) + " ";
    }
    c.body += "<polygon points=\"" + points + "\" fill=\"" +
              kPalette[label % kPaletteSize] + "\" fill-opacity=\"0.75\" stroke=\"none\"/>\n";
    lower = std::move(upper);
  }
  // legend
  double lx = c.pad + 4;
  for (std::size_t label = 0; label < k; ++label) {
    c.body += "<rect x=\"" + num(lx) + "\" y=\"" + num(c.height - 14) +
              "\" width=\"10\" height=\"10\" fill=\"" + kPalette[label % kPaletteSize] + "\"/>\n";
    c.body += "<text x=\"" + num(lx + 13) + "\" y=\"" + num(c.height - 5) +
              "\" font-size=\"11\" font-family=\"sans-serif\">" +
              html_escape(a.space.labels[label]) + "</text>\n";
    lx += 18 + 7.0 * static_cast<double>(a.space.labels[label].size());
  }
  return c.finish("outcome distribution over token index");
}

std::string tau_chart(const ExampleAnalysis& a) {
  if (a.length < 2) return "";
  Chart c;
  double t_max = static_cast<double>(a.length - 1);
  double bar = std::max(1.0, (c.width - 2 * c.pad) / static_cast<double>(a.length) - 1.0);
  for (std::size_t t = 0; t < a.posterior.p_tau.size(); ++t) {
    double p = a.posterior.p_tau[t];
    if (p <= 0.0) continue;
    double top = c.y(p);
    c.body += "<rect x=\"" + num(c.x(static_cast<double>(t), t_max) - bar / 2) + "\" y=\"" +
              num(top) + "\" width=\"" + num(bar) + "\" height=\"" +
              num(c.y(0.0) - top) + "\" fill=\"#b03030\"/>\n";
  }
  return c.finish("change point probability per token index");
}

std::string survival_chart(const ExampleAnalysis& a) {
  if (a.length < 2) return "";
  Chart c;
  double t_max = static_cast<double>(a.length - 1);
  double bar = std::max(1.0, (c.width - 2 * c.pad) / static_cast<double>(a.length) - 1.0);
  for (std::size_t t = 0; t < a.curve.hazards.size(); ++t) {
    double h = a.curve.hazards[t];
    if (h <= 0.0) continue;
    double top = c.y(h);
    c.body += "<rect x=\"" + num(c.x(static_cast<double>(t), t_max) - bar / 2) + "\" y=\"" +
              num(top) + "\" width=\"" + num(bar) + "\" height=\"" + num(c.y(0.0) - top) +
              "\" fill=\"#d08040\" fill-opacity=\"0.8\"/>\n";
  }
  std::string points;
  for (std::size_t t = 0; t < a.curve.survival.size(); ++t) {
    points += num(c.x(static_cast<double>(t), t_max)) + "," + num(c.y(a.curve.survival[t])) + " ";
  }
  c.body += "<polyline points=\"" + points +
            "\" fill=\"none\" stroke=\"#305090\" stroke-width=\"2\"/>\n";
  return c.finish("hazard h(t) and survival S(t), epsilon = " + num(a.curve.epsilon));
}

std::string heat_text(const ExampleAnalysis& a) {
  std::string out = "<p class=\"tokens\">";
  for (std::size_t t = 0; t < a.base_tokens.size(); ++t) {
    double p = t < a.posterior.p_tau.size() ? a.posterior.p_tau[t] : 0.0;
    std::string token = html_escape(a.base_tokens[t]);
    if (p > 0.0) {
      int green = static_cast<int>(std::lround(255.0 * (1.0 - std::min(1.0, p))));
      out += "<span title=\"t=" + std::to_string(t) + " p=" + num(p) +
             "\" style=\"background-color: rgb(255," + std::to_string(green) + ",0)\">" + token +
             "</span>";
    } else {
      out += "<span title=\"t=" + std::to_string(t) + "\">" + token + "</span>";
    }
  }
  out += "</p>\n";
  return out;
}

const char* kStyle =
    "body{font-family:sans-serif;margin:24px;max-width:900px}"
    "table{border-collapse:collapse;margin:12px 0}"
    "td,th{border:1px solid #bbb;padding:4px 8px;font-size:13px;text-align:right}"
    "th{background:#f0f0f0}td:first-child,th:first-child{text-align:left}"
    ".tokens{line-height:1.7;border:1px solid #ddd;padding:10px;white-space:pre-wrap}"
    ".tokens span{border-radius:2px}";

std::string example_page(const ExampleAnalysis& a, const AnalysisConfig& config) {
  auto decision = cpd::bayes_factor_test(a.posterior, config.priors);
  int m_estimate = cpd::estimate_num_changepoints(a.posterior, config.m_quantile);
  double final_s = a.curve.survival.empty() ? 1.0 : a.curve.survival.back();

  std::string html = "<!DOCTYPE html>\n<html><head><meta charset=\"utf-8\"><title>" +
                     html_escape(a.example_id) + "</title><style>" + kStyle +
                     "</style></head>\n<body>\n";
  html += "<h1>" + html_escape(a.example_id) + "</h1>\n";
  html += "<p>task: " + outcomes::to_string(a.task_kind) +
          " | tokens: " + std::to_string(a.length) + "</p>\n";

  html += "<table><tr><th>quantity</th><th>value</th></tr>";
  html += "<tr><td>estimated change points (q=" + num(config.m_quantile) + ")</td><td>" +
          std::to_string(m_estimate) + "</td></tr>";
  html += "<tr><td>bayes factor</td><td>" +
          (std::isinf(decision.bf) ? std::string("inf") : num(decision.bf)) + "</td></tr>";
  html += "<tr><td>has change (bf &gt; 9)</td><td>" + std::string(decision.has_change ? "yes" : "no") +
          "</td></tr>";
  html += "<tr><td>final survival S(T-1) at epsilon=" + num(a.curve.epsilon) + "</td><td>" +
          num(final_s) + "</td></tr>";
  html += "</table>\n";

  html += stacked_outcome_chart(a);
  html += tau_chart(a);
  html += heat_text(a);
  html += survival_chart(a);

  if (a.baselines) {
    html += "<h2>static baselines</h2>\n<table><tr><th>baseline</th><th>label</th><th>mass</th></tr>";
    for (const auto& [label, p] : a.baselines->resample_histogram) {
      html += "<tr><td>resample histogram</td><td>" + html_escape(label) + "</td><td>" + num(p) +
              "</td></tr>";
    }
    for (const auto& [label, p] : a.baselines->answer_logits) {
      html += "<tr><td>answer probe logits</td><td>" + html_escape(label) + "</td><td>" + num(p) +
              "</td></tr>";
    }
    if (a.baselines->verbalized_valid) {
      for (const auto& [label, p] : a.baselines->verbalized) {
        html += "<tr><td>verbalized confidence</td><td>" + html_escape(label) + "</td><td>" +
                num(p) + "</td></tr>";
      }
    } else {
      html += "<tr><td>verbalized confidence</td><td colspan=\"2\">invalid</td></tr>";
    }
    html += "</table>\n";
  }

  html += "</body></html>\n";
  return html;
}

}  // namespace

void render_report(const std::filesystem::path& out_dir,
                   const std::vector<ExampleAnalysis>& analyses,
                   const std::vector<pipeline::SampleStore>& stores,
                   const AnalysisConfig& config) {
  std::filesystem::create_directories(out_dir);

  std::vector<std::size_t> order(analyses.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return analyses[a].example_id < analyses[b].example_id;
  });

  std::vector<ExampleAnalysis> sorted;
  std::vector<pipeline::SampleStore> sorted_stores;
  for (std::size_t i : order) {
    sorted.push_back(analyses[i]);
    if (stores.size() == analyses.size()) sorted_stores.push_back(stores[i]);
  }

  for (const auto& a : sorted) {
    auto dir = out_dir / a.example_id;
    save_analysis_bundle(dir, a, config);
    write_file(dir / "page.html", example_page(a, config));
  }

  std::string html = "<!DOCTYPE html>\n<html><head><meta charset=\"utf-8\"><title>forkpath report"
                     "</title><style>" +
                     std::string(kStyle) + "</style></head>\n<body>\n<h1>forking paths report</h1>\n";
  std::string summary_csv = "task,n_examples,frac_with_change,mean_final_survival\n";

  if (!sorted.empty()) {
    auto summary = task_summary(sorted, config.m_quantile);
    summary_csv += summary.task + "," + std::to_string(summary.n_examples) + "," +
                   format_double(summary.frac_with_change) + "," +
                   format_double(summary.mean_final_survival) + "\n";
    html += "<table><tr><th>task</th><th>examples</th><th>frac with &ge;1 change</th>"
            "<th>mean S(T-1)</th></tr>";
    html += "<tr><td>" + html_escape(summary.task) + "</td><td>" +
            std::to_string(summary.n_examples) + "</td><td>" + num(summary.frac_with_change) +
            "</td><td>" + num(summary.mean_final_survival) + "</td></tr></table>\n";
  } else {
    html += "<p>no examples analyzed</p>\n";
  }
  write_file(out_dir / "summary.csv", summary_csv);

  // normalized change-time histogram
  std::string hist_csv = "bucket_lo,bucket_hi,fraction\n";
  if (!sorted.empty()) {
    auto hist = tau_histogram(sorted, config.histogram_buckets, config.tau_threshold);
    html += "<h2>change time histogram (threshold " + num(config.tau_threshold) + ")</h2>\n";
    html += "<table><tr><th>normalized t</th><th>fraction of examples</th></tr>";
    for (int b = 0; b < hist.buckets; ++b) {
      double lo = static_cast<double>(b) / hist.buckets;
      double hi = static_cast<double>(b + 1) / hist.buckets;
      hist_csv += format_double(lo) + "," + format_double(hi) + "," +
                  format_double(hist.fractions[b]) + "\n";
      html += "<tr><td>[" + num(lo) + ", " + num(hi) + ")</td><td>" + num(hist.fractions[b]) +
              "</td></tr>";
    }
    html += "</table>\n";
  }
  write_file(out_dir / "tau_histogram.csv", hist_csv);

  // threshold sweeps
  std::string sweep_csv = "kind,parameter,key,value\n";
  if (!sorted.empty()) {
    auto sweep = threshold_sweep(sorted, config.tau_threshold_grid, config.m_quantile_grid,
                                 config.epsilon_grid, config.histogram_buckets);
    for (const auto& [threshold, hist] : sweep.tau_histograms) {
      for (int b = 0; b < hist.buckets; ++b) {
        sweep_csv += "tau_histogram," + format_double(threshold) + ",bucket_" +
                     std::to_string(b) + "," + format_double(hist.fractions[b]) + "\n";
      }
    }
    for (const auto& [q, dist] : sweep.m_estimates) {
      for (const auto& [m, frac] : dist) {
        sweep_csv += "m_estimate," + format_double(q) + ",m_" + std::to_string(m) + "," +
                     format_double(frac) + "\n";
      }
    }
    html += "<h2>mean final survival by epsilon</h2>\n<table><tr><th>epsilon</th>"
            "<th>mean S(T-1)</th></tr>";
    for (const auto& [epsilon, mean_s] : sweep.mean_final_survival) {
      sweep_csv += "mean_final_survival," + format_double(epsilon) + ",S," +
                   format_double(mean_s) + "\n";
      html += "<tr><td>" + num(epsilon) + "</td><td>" + num(mean_s) + "</td></tr>";
    }
    html += "</table>\n";
  }
  write_file(out_dir / "sweeps.csv", sweep_csv);

  // correlation studies need at least 3 examples
  json correlations = json::object();
  if (sorted.size() >= 3) {
    auto corr = correlation_studies(sorted, sorted_stores, config);
    auto corr_json = [](const Correlation& c) {
      return c.defined ? json{{"value", c.value}, {"defined", true}}
                       : json{{"value", nullptr}, {"defined", false}};
    };
    correlations["log_ptau_vs_logprob_pearson"] = corr_json(corr.log_ptau_vs_logprob);
    correlations["log_ptau_vs_logprob_spearman"] = corr_json(corr.log_ptau_vs_logprob_rank);
    correlations["pooled_points"] = corr.pooled_points;
    correlations["changes_vs_survival_spearman"] = corr_json(corr.changes_vs_survival);
    json sub = json::array();
    for (const auto& [n, c] : corr.subsample) {
      json entry = corr_json(c);
      entry["n"] = n;
      sub.push_back(entry);
    }
    correlations["subsample_spearman"] = sub;
  }
  write_file(out_dir / "correlations.json", correlations.dump(1));

  html += "<h2>examples</h2>\n<ul>";
  for (const auto& a : sorted) {
    html += "<li><a href=\"" + a.example_id + "/page.html\">" + html_escape(a.example_id) +
            "</a></li>";
  }
  html += "</ul>\n</body></html>\n";
  write_file(out_dir / "index.html", html);
}

}  // namespace forkpath::report
