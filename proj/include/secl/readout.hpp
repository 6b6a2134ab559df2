/**
 * readout.hpp - stream records and the verbalized-confidence readout.
 *
 * A backend reports raw probabilities for the ten digit tokens "0".."9".
 * The readout renormalizes over those ten tokens and takes the expectation
 * over bin midpoints, giving a soft scalar confidence in [0.05, 0.95].
 */
#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace secl {

inline constexpr std::size_t kNumBins = 10;

enum class Judge { ExactMatch, NumericMatch, OptionIndex };

std::string_view to_string(Judge judge);
Judge judge_from_string(std::string_view name);

struct QuestionRecord {
  std::string id;
  std::string domain;
  std::string prompt;
  std::vector<std::string> options; // empty for open-ended questions
  std::string gold;
  Judge judge = Judge::ExactMatch;
};

struct ConfidenceDistribution {
  std::array<double, kNumBins> bin_probs{};
  double soft = 0.5;

  // Renormalizes raw digit-token probabilities and derives `soft`.
  static ConfidenceDistribution from_digit_probs(std::span<const double> raw);
};

struct AnswerRecord {
  std::string question_id;
  std::string answer_text;
  ConfidenceDistribution confidence;
  double mean_token_entropy = 0.0;
  std::optional<bool> correct;
  std::optional<double> signal;
  bool trained = false;
  bool adapters_active_at_generation = true;
};

// Sum_k P(bin_k) * (k + 0.5) / 10 over the renormalized input.
// Throws std::invalid_argument("empty digit distribution") when the input
// carries no mass, and for negative or non-finite entries.
double soft_confidence(std::span<const double> bin_probs);

// floor(10 c) with c = 1.0 in the top bin. Throws std::out_of_range outside [0, 1].
int bin_of(double c);

// Lowercase, trim and collapse internal whitespace runs to one space.
std::string normalize_answer(std::string_view text);

// Index of the option that `text` names, either by option text or by letter
// ("B", "(B)", "B." or "B)"). Empty if nothing matches.
std::optional<std::size_t> resolve_option(const QuestionRecord& record, std::string_view text);

bool judge_correctness(const QuestionRecord& record, std::string_view answer_text);

} // namespace secl
