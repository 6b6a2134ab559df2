#include "secl/readout.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <stdexcept>

namespace secl {

std::string_view to_string(Judge judge) {
  switch (judge) {
  case Judge::ExactMatch: return "exact_match";
  case Judge::NumericMatch: return "numeric_match";
  case Judge::OptionIndex: return "option_index";
  }
  return "exact_match";
}

Judge judge_from_string(std::string_view name) {
  if (name == "exact_match") return Judge::ExactMatch;
  if (name == "numeric_match") return Judge::NumericMatch;
  if (name == "option_index") return Judge::OptionIndex;
  throw std::invalid_argument("unknown judge '" + std::string(name) + "'");
}

namespace {

double checked_total(std::span<const double> probs) {
  if (probs.size() != kNumBins) {
    throw std::invalid_argument("digit distribution must have 10 entries");
  }
  double total = 0.0;
  for (double p : probs) {
    if (!std::isfinite(p) || p < 0.0) {
      throw std::invalid_argument("digit probabilities must be finite and non-negative");
    }
    total += p;
  }
  if (!(total > 0.0)) throw std::invalid_argument("empty digit distribution");
  return total;
}

} // namespace

double soft_confidence(std::span<const double> bin_probs) {
  const double total = checked_total(bin_probs);
  double acc = 0.0;
  for (std::size_t k = 0; k < kNumBins; ++k) {
    acc += (bin_probs[k] / total) * ((static_cast<double>(k) + 0.5) / 10.0);
  }
  return acc;
}

ConfidenceDistribution ConfidenceDistribution::from_digit_probs(std::span<const double> raw) {
  const double total = checked_total(raw);
  ConfidenceDistribution dist;
  for (std::size_t k = 0; k < kNumBins; ++k) dist.bin_probs[k] = raw[k] / total;
  dist.soft = soft_confidence(dist.bin_probs);
  return dist;
}

int bin_of(double c) {
  if (!(c >= 0.0 && c <= 1.0)) {
    throw std::out_of_range("confidence outside [0, 1]");
  }
  return std::min(static_cast<int>(std::floor(c * 10.0)), 9);
}

std::string normalize_answer(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  bool pending_space = false;
  for (char ch : text) {
    if (std::isspace(static_cast<unsigned char>(ch))) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) {
      out.push_back(' ');
      pending_space = false;
    }
    out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(ch))));
  }
  return out;
}

namespace {

std::optional<double> parse_number(std::string_view text) {
  std::string s = normalize_answer(text);
  s.erase(std::remove(s.begin(), s.end(), ','), s.end());
  if (!s.empty() && s.front() == '+') s.erase(s.begin());
  if (s.empty()) return std::nullopt;
  double value = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  if (ec != std::errc{} || ptr != s.data() + s.size() || !std::isfinite(value)) {
    return std::nullopt;
  }
  return value;
}

std::optional<std::size_t> letter_index(std::string_view norm) {
  std::string s(norm);
  if (s.size() >= 2 && s.front() == '(' && s.back() == ')') s = s.substr(1, s.size() - 2);
  if (s.size() == 2 && (s.back() == '.' || s.back() == ')')) s.pop_back();
  if (s.size() == 1 && s[0] >= 'a' && s[0] <= 'z') return static_cast<std::size_t>(s[0] - 'a');
  return std::nullopt;
}

} // namespace

std::optional<std::size_t> resolve_option(const QuestionRecord& record, std::string_view text) {
  const std::string norm = normalize_answer(text);
  for (std::size_t i = 0; i < record.options.size(); ++i) {
    if (normalize_answer(record.options[i]) == norm) return i;
  }
  if (auto idx = letter_index(norm); idx && *idx < record.options.size()) return idx;
  return std::nullopt;
}

bool judge_correctness(const QuestionRecord& record, std::string_view answer_text) {
  if (normalize_answer(record.gold).empty()) {
    throw std::invalid_argument("question " + record.id + ": missing gold");
  }
  switch (record.judge) {
  case Judge::ExactMatch:
    return normalize_answer(answer_text) == normalize_answer(record.gold);
  case Judge::NumericMatch: {
    auto gold = parse_number(record.gold);
    if (!gold) throw std::invalid_argument("question " + record.id + ": gold is not numeric");
    auto answer = parse_number(answer_text);
    if (!answer) return false;
    const double scale = std::max(std::fabs(*gold), std::fabs(*answer));
    return std::fabs(*gold - *answer) <= 1e-6 * scale;
  }
  case Judge::OptionIndex: {
    auto gold = resolve_option(record, record.gold);
    if (!gold) throw std::invalid_argument("question " + record.id + ": gold names no option");
    auto answer = resolve_option(record, answer_text);
    return answer && *answer == *gold;
  }
  }
  return false;
}

} // namespace secl
