/**
 * metrics.hpp - calibration and discrimination metrics.
 *
 * Equal-width bins are [m/M, (m+1)/M) with the last bin closed. AdaECE
 * sorts by confidence and cuts N predictions into M contiguous groups;
 * when M does not divide N the first N mod M groups take one extra item.
 * AUROC is the Mann-Whitney statistic with ties credited one half.
 */
#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace secl {

struct ScoredPrediction {
  double confidence = 0.0;
  bool correct = false;
  std::string domain;
};

struct ReliabilityBin {
  double lo = 0.0;
  double hi = 0.0;
  std::size_t count = 0;
  double mean_conf = 0.0;
  double accuracy = 0.0;
};

struct ReliabilityBins {
  int m = 10;
  std::vector<ReliabilityBin> bins;
};

int equal_width_bin(double confidence, int m);

double ece(std::span<const ScoredPrediction> preds, int m = 10);
double ada_ece(std::span<const ScoredPrediction> preds, int m = 10);
double brier(std::span<const ScoredPrediction> preds);
double auroc(std::span<const ScoredPrediction> preds);
double accuracy(std::span<const ScoredPrediction> preds);

// Group sizes used by ada_ece for n items in m groups.
std::vector<std::size_t> equal_mass_sizes(std::size_t n, int m);

ReliabilityBins reliability_bins(std::span<const ScoredPrediction> preds, int m = 10);

struct MetricBlock {
  std::size_t n = 0;
  double accuracy = 0.0;
  double ece = 0.0;
  std::optional<double> ada_ece; // needs n >= m
  double brier = 0.0;
  std::optional<double> auroc; // needs both classes
  double conf_min = 0.0;
  double conf_max = 0.0;
  ReliabilityBins reliability;
};

MetricBlock metric_block(std::span<const ScoredPrediction> preds, int m = 10);

struct MetricSummary {
  MetricBlock overall;
  std::map<std::string, MetricBlock> per_domain;
};

MetricSummary summarize(std::span<const ScoredPrediction> preds, int m = 10);

// CSV with columns bin_lo,bin_hi,count,mean_conf,accuracy.
std::string reliability_csv(const ReliabilityBins& bins);

} // namespace secl
