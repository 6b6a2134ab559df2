#include "secl/posthoc.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>
#include <string>

#include "secl/util.hpp"

namespace secl {

std::string_view to_string(PosthocModel::Kind kind) {
  return kind == PosthocModel::Kind::Temperature ? "temperature" : "platt";
}

double clamp_confidence(double c) { return std::clamp(c, kClampEps, 1.0 - kClampEps); }

double apply(const PosthocModel& model, double c) {
  if (model.kind == PosthocModel::Kind::Temperature) {
    return sigmoid(logit(clamp_confidence(c)) / model.temperature);
  }
  return sigmoid(model.a * c + model.b);
}

namespace {

void require_both_classes(std::span<const ScoredPrediction> preds, const char* what) {
  const auto hits = std::count_if(preds.begin(), preds.end(), [](const auto& p) { return p.correct; });
  if (hits == 0 || static_cast<std::size_t>(hits) == preds.size()) {
    throw std::invalid_argument(std::string(what) + " needs both correct and incorrect predictions");
  }
}

double log_loss(double p, bool y) {
  const double q = std::clamp(p, 1e-15, 1.0 - 1e-15);
  return y ? -std::log(q) : -std::log1p(-q);
}

} // namespace

double nll(std::span<const ScoredPrediction> preds, const std::function<double(double)>& transform) {
  double total = 0.0;
  for (const auto& p : preds) total += log_loss(transform(p.confidence), p.correct);
  return total / static_cast<double>(preds.size());
}

PosthocModel fit_temperature(std::span<const ScoredPrediction> preds) {
  require_both_classes(preds, "temperature scaling");
  std::vector<double> logits;
  logits.reserve(preds.size());
  for (const auto& p : preds) logits.push_back(logit(clamp_confidence(p.confidence)));

  auto objective = [&](double log_t) {
    const double t = std::exp(log_t);
    double total = 0.0;
    for (std::size_t i = 0; i < preds.size(); ++i) {
      // -log sigma(z) = softplus(-z)
      const double z = (preds[i].correct ? 1.0 : -1.0) * logits[i] / t;
      total += z > 0 ? std::log1p(std::exp(-z)) : -z + std::log1p(std::exp(z));
    }
    return total / static_cast<double>(preds.size());
  };

  const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
  double lo = std::log(0.01), hi = std::log(100.0);
  double x1 = hi - inv_phi * (hi - lo), x2 = lo + inv_phi * (hi - lo);
  double f1 = objective(x1), f2 = objective(x2);
  int iterations = 0;
  while (hi - lo > 1e-8) {
    ++iterations;
    if (f1 <= f2) {
      hi = x2;
      x2 = x1;
      f2 = f1;
      x1 = hi - inv_phi * (hi - lo);
      f1 = objective(x1);
    } else {
      lo = x1;
      x1 = x2;
      f1 = f2;
      x2 = lo + inv_phi * (hi - lo);
      f2 = objective(x2);
    }
  }
  PosthocModel model;
  model.kind = PosthocModel::Kind::Temperature;
  model.temperature = std::exp((lo + hi) / 2.0);
  model.iterations = iterations;
  return model;
}

PosthocModel fit_platt(std::span<const ScoredPrediction> preds, int max_iterations) {
  require_both_classes(preds, "Platt scaling");
  const double n = static_cast<double>(preds.size());
  double sxx = 0.0, sx = 0.0;
  for (const auto& p : preds) {
    sxx += p.confidence * p.confidence;
    sx += p.confidence;
  }
  sxx /= n;
  sx /= n;
  // largest eigenvalue of [[E c^2, E c], [E c, 1]]; logistic curvature is at most 1/4
  const double tr = sxx + 1.0, det = sxx - sx * sx;
  const double lmax = tr / 2.0 + std::sqrt(std::max(0.0, tr * tr / 4.0 - det));
  const double step = 1.0 / (0.25 * lmax);

  PosthocModel model;
  model.kind = PosthocModel::Kind::Platt;
  auto loss_and_grad = [&](double a, double b, double& ga, double& gb) {
    double loss = 0.0;
    ga = gb = 0.0;
    for (const auto& p : preds) {
      const double z = a * p.confidence + b;
      const double y = p.correct ? 1.0 : 0.0;
      const double s = sigmoid(z);
      loss += (y > 0.5) ? (z > 0 ? std::log1p(std::exp(-z)) : -z + std::log1p(std::exp(z)))
                        : (z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)));
      ga += (s - y) * p.confidence;
      gb += (s - y);
    }
    ga /= n;
    gb /= n;
    return loss / n;
  };

  double ga = 0.0, gb = 0.0;
  double loss = loss_and_grad(model.a, model.b, ga, gb);
  for (int it = 1; it <= max_iterations; ++it) {
    const double a = model.a - step * ga;
    const double b = model.b - step * gb;
    double nga = 0.0, ngb = 0.0;
    const double next = loss_and_grad(a, b, nga, ngb);
    model.a = a;
    model.b = b;
    model.iterations = it;
    const double improvement = loss - next;
    loss = next;
    ga = nga;
    gb = ngb;
    if (improvement < 1e-8) return model;
  }
  throw std::runtime_error("Platt scaling did not converge after " + std::to_string(max_iterations) +
                           " iterations (a=" + std::to_string(model.a) + ", b=" + std::to_string(model.b) +
                           ", nll=" + std::to_string(loss) + ")");
}

Fitter temperature_fitter() {
  return [](std::span<const ScoredPrediction> train) -> Transform {
    const auto model = fit_temperature(train);
    return [model](double c) { return apply(model, c); };
  };
}

Fitter platt_fitter() {
  return [](std::span<const ScoredPrediction> train) -> Transform {
    const auto model = fit_platt(train);
    return [model](double c) { return apply(model, c); };
  };
}

KFoldResult kfold_eval(std::span<const ScoredPrediction> preds, int k, const Fitter& fitter,
                       std::uint64_t seed) {
  if (k < 2) throw std::invalid_argument("k-fold needs k >= 2");
  if (preds.size() < static_cast<std::size_t>(k)) throw std::invalid_argument("fewer predictions than folds");

  constexpr int kMaxAttempts = 20;
  const std::size_t n = preds.size();
  std::vector<std::size_t> fold_of(n);
  bool ok = false;
  for (int attempt = 0; attempt < kMaxAttempts && !ok; ++attempt) {
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    std::mt19937_64 rng(splitmix64(seed + static_cast<std::uint64_t>(attempt)));
    std::shuffle(perm.begin(), perm.end(), rng);
    std::size_t pos = 0;
    int fold = 0;
    for (std::size_t size : equal_mass_sizes(n, k)) {
      for (std::size_t i = pos; i < pos + size; ++i) fold_of[perm[i]] = static_cast<std::size_t>(fold);
      pos += size;
      ++fold;
    }
    ok = true;
    for (int f = 0; f < k && ok; ++f) {
      bool pos_seen = false, neg_seen = false;
      for (std::size_t i = 0; i < n; ++i) {
        if (fold_of[i] == static_cast<std::size_t>(f)) continue;
        (preds[i].correct ? pos_seen : neg_seen) = true;
      }
      ok = pos_seen && neg_seen;
    }
  }
  if (!ok) throw std::invalid_argument("could not form folds with both classes in every training split");

  KFoldResult result;
  result.predictions.assign(preds.begin(), preds.end());
  result.fold_of = fold_of;
  for (int f = 0; f < k; ++f) {
    std::vector<ScoredPrediction> train;
    for (std::size_t i = 0; i < n; ++i) {
      if (fold_of[i] != static_cast<std::size_t>(f)) train.push_back(preds[i]);
    }
    result.train_sizes.push_back(train.size());
    const auto transform = fitter(train);
    for (std::size_t i = 0; i < n; ++i) {
      if (fold_of[i] == static_cast<std::size_t>(f)) {
        result.predictions[i].confidence = transform(preds[i].confidence);
      }
    }
  }
  return result;
}

} // namespace secl
