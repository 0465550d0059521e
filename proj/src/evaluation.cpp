#include "fedeeg/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>

#include "fedeeg/error.hpp"

namespace fedeeg {

ConfusionCounts& ConfusionCounts::operator+=(const ConfusionCounts& o) {
  tp += o.tp;
  fp += o.fp;
  tn += o.tn;
  fn += o.fn;
  return *this;
}

ConfusionCounts confusion(std::span<const double> probs, std::span<const std::uint8_t> labels,
                          double threshold) {
  if (probs.size() != labels.size()) throw DimensionError("scores and labels differ in length");
  ConfusionCounts c;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    const bool pred = probs[i] >= threshold;
    const bool pos = labels[i] == 1;
    if (pred && pos) ++c.tp;
    else if (pred) ++c.fp;
    else if (pos) ++c.fn;
    else ++c.tn;
  }
  return c;
}

double accuracy(const ConfusionCounts& c) {
  if (c.total() == 0) throw UndefinedMetricError("accuracy of an empty set");
  return static_cast<double>(c.tp + c.tn) / static_cast<double>(c.total());
}

double f1_score(const ConfusionCounts& c) {
  if (c.total() == 0) throw UndefinedMetricError("F1 of an empty set");
  const auto denom = 2 * c.tp + c.fp + c.fn;
  return denom == 0 ? 0.0 : static_cast<double>(2 * c.tp) / static_cast<double>(denom);
}

double auroc(std::span<const double> scores, std::span<const std::uint8_t> labels) {
  if (scores.size() != labels.size()) throw DimensionError("scores and labels differ in length");
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  // Sum of doubled midranks (1-based) of the positives keeps everything integral.
  std::uint64_t pos = 0;
  std::uint64_t twice_rank_sum = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && scores[order[j]] == scores[order[i]]) ++j;
    const std::uint64_t twice_mid = (i + 1) + j;  // 2 * (first + last) / 2, 1-based
    for (std::size_t k = i; k < j; ++k) {
      if (labels[order[k]] == 1) {
        ++pos;
        twice_rank_sum += twice_mid;
      }
    }
    i = j;
  }
  const std::uint64_t neg = n - pos;
  if (pos == 0 || neg == 0) throw UndefinedMetricError("AUROC needs both classes");
  // U = R_pos - pos(pos+1)/2 ; AUROC = U / (pos * neg)
  const double u2 = static_cast<double>(twice_rank_sum) - static_cast<double>(pos * (pos + 1));
  return u2 / (2.0 * static_cast<double>(pos) * static_cast<double>(neg));
}

MetricTriple evaluate_set(std::span<const double> probs, std::span<const std::uint8_t> labels) {
  const auto c = confusion(probs, labels);
  MetricTriple m{accuracy(c), f1_score(c), std::numeric_limits<double>::quiet_NaN()};
  try {
    m.auroc = auroc(probs, labels);
  } catch (const UndefinedMetricError&) {
  }
  return m;
}

MetricsReport evaluate_global(const Mlp& model, const ParamVector& params,
                              std::span<const ClientDataset> test_sets) {
  MetricsReport report;
  std::vector<double> all_probs;
  std::vector<std::uint8_t> all_labels;
  for (const auto& t : test_sets) {
    if (t.empty()) throw UndefinedMetricError("client '" + t.client_id + "' has an empty test set");
    const auto probs = model.forward(params, t.inputs());
    report.per_client.push_back({t.client_id, t.size(), evaluate_set(probs, t.labels)});
    all_probs.insert(all_probs.end(), probs.begin(), probs.end());
    all_labels.insert(all_labels.end(), t.labels.begin(), t.labels.end());
  }
  report.pooled = evaluate_set(all_probs, all_labels);
  const double k = static_cast<double>(report.per_client.size());
  for (const auto& c : report.per_client) {
    report.macro.accuracy += c.metrics.accuracy / k;
    report.macro.f1 += c.metrics.f1 / k;
    report.macro.auroc += c.metrics.auroc / k;
  }
  return report;
}

MeanStd mean_std(std::span<const double> values) {
  MeanStd r;
  if (values.empty()) return r;
  const double n = static_cast<double>(values.size());
  r.mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
  if (values.size() > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - r.mean) * (v - r.mean);
    r.std = std::sqrt(ss / (n - 1.0));
  }
  return r;
}

namespace {

TripleStats triple_stats(const std::vector<MetricTriple>& xs) {
  std::vector<double> a, f, u;
  for (const auto& x : xs) {
    a.push_back(x.accuracy);
    f.push_back(x.f1);
    u.push_back(x.auroc);
  }
  return {mean_std(a), mean_std(f), mean_std(u)};
}

}  // namespace

RunSummary summarize_runs(std::span<const MetricsReport> runs) {
  RunSummary s;
  s.runs = runs.size();
  if (runs.empty()) return s;
  const std::size_t k = runs.front().per_client.size();
  for (std::size_t c = 0; c < k; ++c) {
    std::vector<MetricTriple> xs;
    for (const auto& r : runs) {
      if (r.per_client.size() != k) throw DimensionError("runs report different client sets");
      xs.push_back(r.per_client[c].metrics);
    }
    s.per_client.emplace_back(runs.front().per_client[c].client, triple_stats(xs));
  }
  std::vector<MetricTriple> pooled, macro;
  for (const auto& r : runs) {
    pooled.push_back(r.pooled);
    macro.push_back(r.macro);
  }
  s.pooled = triple_stats(pooled);
  s.macro = triple_stats(macro);
  return s;
}

std::string format_mean_std(const MeanStd& v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.1f (%.1f)", 100.0 * v.mean, 100.0 * v.std);
  return buf;
}

}  // namespace fedeeg
