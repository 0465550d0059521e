#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "fedeeg/dataset.hpp"
#include "fedeeg/model.hpp"

namespace fedeeg {

struct ConfusionCounts {
  std::uint64_t tp = 0, fp = 0, tn = 0, fn = 0;
  std::uint64_t total() const noexcept { return tp + fp + tn + fn; }
  ConfusionCounts& operator+=(const ConfusionCounts& o);
};

// Positive class is preictal (label 1); predicted positive iff prob >= threshold.
ConfusionCounts confusion(std::span<const double> probs, std::span<const std::uint8_t> labels,
                          double threshold = 0.5);

double accuracy(const ConfusionCounts& c);  // throws UndefinedMetricError when empty
double f1_score(const ConfusionCounts& c);  // 0 when 2tp + fp + fn == 0

// P(score_pos > score_neg) + 0.5 P(tie), via midranks. Throws
// UndefinedMetricError unless both classes are present.
double auroc(std::span<const double> scores, std::span<const std::uint8_t> labels);

struct MetricTriple {
  double accuracy = 0.0;
  double f1 = 0.0;
  double auroc = 0.0;  // NaN when the test set holds a single class
};

struct ClientMetrics {
  std::string client;
  std::size_t test_size = 0;
  MetricTriple metrics;
};

struct MetricsReport {
  std::vector<ClientMetrics> per_client;
  MetricTriple pooled;
  MetricTriple macro;  // unweighted mean over clients
};

MetricTriple evaluate_set(std::span<const double> probs, std::span<const std::uint8_t> labels);

// Per-client metrics at threshold 0.5, pooled over the concatenated test
// sets, and the macro (unweighted client) mean.
MetricsReport evaluate_global(const Mlp& model, const ParamVector& params,
                              std::span<const ClientDataset> test_sets);

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation (n - 1); 0 for a single run
};

MeanStd mean_std(std::span<const double> values);

struct TripleStats {
  MeanStd accuracy, f1, auroc;
};

struct RunSummary {
  std::vector<std::pair<std::string, TripleStats>> per_client;
  TripleStats pooled;
  TripleStats macro;
  std::size_t runs = 0;
};

// Mean and std of every metric over repeated runs with the same clients.
RunSummary summarize_runs(std::span<const MetricsReport> runs);

// "66.2 (6.0)": percent with one decimal, std in parentheses.
std::string format_mean_std(const MeanStd& v);

}  // namespace fedeeg
