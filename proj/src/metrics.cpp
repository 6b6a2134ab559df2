#include "secl/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <stdexcept>

namespace secl {

namespace {

void require_nonempty(std::span<const ScoredPrediction> preds, const char* metric) {
  if (preds.empty()) throw std::invalid_argument(std::string(metric) + " of an empty prediction set");
}

void check_confidence(double c) {
  if (!(c >= 0.0 && c <= 1.0)) throw std::out_of_range("confidence outside [0, 1]");
}

} // namespace

int equal_width_bin(double confidence, int m) {
  check_confidence(confidence);
  return std::min(static_cast<int>(std::floor(confidence * m)), m - 1);
}

double ece(std::span<const ScoredPrediction> preds, int m) {
  require_nonempty(preds, "ECE");
  std::vector<double> conf_sum(m, 0.0), correct_sum(m, 0.0);
  std::vector<std::size_t> count(m, 0);
  for (const auto& p : preds) {
    const int b = equal_width_bin(p.confidence, m);
    conf_sum[b] += p.confidence;
    correct_sum[b] += p.correct ? 1.0 : 0.0;
    ++count[b];
  }
  const double n = static_cast<double>(preds.size());
  double total = 0.0;
  for (int b = 0; b < m; ++b) {
    if (count[b] == 0) continue;
    const double cnt = static_cast<double>(count[b]);
    total += (cnt / n) * std::fabs(correct_sum[b] / cnt - conf_sum[b] / cnt);
  }
  return total;
}

std::vector<std::size_t> equal_mass_sizes(std::size_t n, int m) {
  std::vector<std::size_t> sizes(m, n / m);
  for (std::size_t i = 0; i < n % m; ++i) ++sizes[i];
  return sizes;
}

double ada_ece(std::span<const ScoredPrediction> preds, int m) {
  if (preds.size() < static_cast<std::size_t>(m)) {
    throw std::invalid_argument("too few predictions for equal-mass binning");
  }
  std::vector<std::size_t> order(preds.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return preds[a].confidence < preds[b].confidence; });
  const double n = static_cast<double>(preds.size());
  double total = 0.0;
  std::size_t pos = 0;
  for (std::size_t size : equal_mass_sizes(preds.size(), m)) {
    double conf = 0.0, correct = 0.0;
    for (std::size_t i = pos; i < pos + size; ++i) {
      check_confidence(preds[order[i]].confidence);
      conf += preds[order[i]].confidence;
      correct += preds[order[i]].correct ? 1.0 : 0.0;
    }
    const double cnt = static_cast<double>(size);
    total += (cnt / n) * std::fabs(correct / cnt - conf / cnt);
    pos += size;
  }
  return total;
}

double brier(std::span<const ScoredPrediction> preds) {
  require_nonempty(preds, "Brier score");
  double total = 0.0;
  for (const auto& p : preds) {
    check_confidence(p.confidence);
    const double d = p.confidence - (p.correct ? 1.0 : 0.0);
    total += d * d;
  }
  return total / static_cast<double>(preds.size());
}

double auroc(std::span<const ScoredPrediction> preds) {
  std::vector<std::size_t> order(preds.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return preds[a].confidence < preds[b].confidence; });

  // mid-ranks over tie groups, 1-based
  double rank_sum_pos = 0.0;
  std::size_t n_pos = 0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && preds[order[j]].confidence == preds[order[i]].confidence) ++j;
    const double mid_rank = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
    for (std::size_t t = i; t < j; ++t) {
      if (preds[order[t]].correct) {
        rank_sum_pos += mid_rank;
        ++n_pos;
      }
    }
    i = j;
  }
  const std::size_t n_neg = preds.size() - n_pos;
  if (n_pos == 0 || n_neg == 0) throw std::invalid_argument("AUROC undefined");
  const double np = static_cast<double>(n_pos);
  return (rank_sum_pos - np * (np + 1.0) / 2.0) / (np * static_cast<double>(n_neg));
}

double accuracy(std::span<const ScoredPrediction> preds) {
  require_nonempty(preds, "accuracy");
  const auto hits = std::count_if(preds.begin(), preds.end(), [](const auto& p) { return p.correct; });
  return static_cast<double>(hits) / static_cast<double>(preds.size());
}

ReliabilityBins reliability_bins(std::span<const ScoredPrediction> preds, int m) {
  ReliabilityBins out;
  out.m = m;
  out.bins.resize(m);
  for (int b = 0; b < m; ++b) {
    out.bins[b].lo = static_cast<double>(b) / m;
    out.bins[b].hi = static_cast<double>(b + 1) / m;
  }
  for (const auto& p : preds) {
    auto& bin = out.bins[equal_width_bin(p.confidence, m)];
    ++bin.count;
    bin.mean_conf += p.confidence;
    bin.accuracy += p.correct ? 1.0 : 0.0;
  }
  for (auto& bin : out.bins) {
    if (bin.count == 0) continue;
    bin.mean_conf /= static_cast<double>(bin.count);
    bin.accuracy /= static_cast<double>(bin.count);
  }
  return out;
}

MetricBlock metric_block(std::span<const ScoredPrediction> preds, int m) {
  require_nonempty(preds, "metrics");
  MetricBlock block;
  block.n = preds.size();
  block.accuracy = accuracy(preds);
  block.ece = ece(preds, m);
  if (preds.size() >= static_cast<std::size_t>(m)) block.ada_ece = ada_ece(preds, m);
  block.brier = brier(preds);
  const auto hits = std::count_if(preds.begin(), preds.end(), [](const auto& p) { return p.correct; });
  if (hits > 0 && static_cast<std::size_t>(hits) < preds.size()) block.auroc = auroc(preds);
  auto [lo, hi] = std::minmax_element(preds.begin(), preds.end(),
                                      [](const auto& a, const auto& b) { return a.confidence < b.confidence; });
  block.conf_min = lo->confidence;
  block.conf_max = hi->confidence;
  block.reliability = reliability_bins(preds, m);
  return block;
}

MetricSummary summarize(std::span<const ScoredPrediction> preds, int m) {
  MetricSummary summary;
  summary.overall = metric_block(preds, m);
  std::map<std::string, std::vector<ScoredPrediction>> by_domain;
  for (const auto& p : preds) by_domain[p.domain].push_back(p);
  for (const auto& [domain, group] : by_domain) summary.per_domain[domain] = metric_block(group, m);
  return summary;
}

std::string reliability_csv(const ReliabilityBins& bins) {
  std::string out = "bin_lo,bin_hi,count,mean_conf,accuracy\n";
  char line[160];
  for (const auto& b : bins.bins) {
    std::snprintf(line, sizeof(line), "%.4f,%.4f,%zu,%.6f,%.6f\n", b.lo, b.hi, b.count, b.mean_conf, b.accuracy);
    out += line;
  }
  return out;
}

} // namespace secl
