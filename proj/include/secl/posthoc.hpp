/**
 * posthoc.hpp - supervised recalibration baselines.
 *
 * Both transforms act on a scalar confidence. Temperature scaling divides
 * the confidence's logit by T; Platt scaling fits sigma(a c + b).
 * Confidences are clamped to [1e-6, 1 - 1e-6] before any logit.
 */
#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string_view>
#include <vector>

#include "secl/metrics.hpp"

namespace secl {

inline constexpr double kClampEps = 1e-6;

struct PosthocModel {
  enum class Kind { Temperature, Platt };
  Kind kind = Kind::Temperature;
  double temperature = 1.0;
  double a = 0.0;
  double b = 0.0;
  int iterations = 0;
};

std::string_view to_string(PosthocModel::Kind kind);

double clamp_confidence(double c);
double apply(const PosthocModel& model, double c);

// Mean negative log-likelihood of `probs` against the correctness labels.
double nll(std::span<const ScoredPrediction> preds, const std::function<double(double)>& transform);

// Golden-section search on log T over [log 0.01, log 100].
PosthocModel fit_temperature(std::span<const ScoredPrediction> preds);

// Full-batch gradient descent with step 1/L (L the logistic-loss Lipschitz
// bound for this data), stopping when the NLL improvement falls below 1e-8.
PosthocModel fit_platt(std::span<const ScoredPrediction> preds, int max_iterations = 200000);

using Transform = std::function<double(double)>;
using Fitter = std::function<Transform(std::span<const ScoredPrediction>)>;

Fitter temperature_fitter();
Fitter platt_fitter();

struct KFoldResult {
  std::vector<ScoredPrediction> predictions; // out-of-fold, original order
  std::vector<std::size_t> train_sizes;
  std::vector<std::size_t> fold_of; // fold index per prediction
};

KFoldResult kfold_eval(std::span<const ScoredPrediction> preds, int k, const Fitter& fitter,
                       std::uint64_t seed = 0);

} // namespace secl
