#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "pingmatch/features.hpp"
#include "pingmatch/model.hpp"
#include "pingmatch/types.hpp"

namespace pingmatch {

using Rng = std::mt19937_64;

struct MatchPolicy {
  int top_n = 30;
  double epsilon = 0.1;
  // Local hours [quiet_start_hour, quiet_end_hour) during which translators
  // who have not declared availability are filtered out.
  int quiet_start_hour = 1;
  int quiet_end_hour = 6;
  std::uint64_t seed = 0;

  void validate() const;
  bool in_quiet_hours(int local_hour) const;
};

struct RankedCandidate {
  TranslatorId translator_id;
  double score = 0.5;
  bool explored = false;
  int rank = 0;

  bool operator==(const RankedCandidate&) const = default;
};

// Language, quiet-hour, and requester-preference hard filters. Output keeps
// the input order.
std::vector<const TranslatorProfile*> filter_candidates(const TranslationRequest& request,
                                                        std::span<const TranslatorProfile> profiles,
                                                        TimestampMs now,
                                                        const MatchPolicy& policy);

// Scores each candidate with the model; sorted by descending score, then
// ascending translator_id. Throws ModelMissing when model is null.
std::vector<RankedCandidate> rank_candidates(std::span<const TranslatorProfile* const> eligible,
                                             const ResponseModel* model, const StatsBook& stats,
                                             TimestampMs now);

// Control arm: uniform random order, every score 0.5.
std::vector<RankedCandidate> random_order(std::span<const TranslatorProfile* const> eligible,
                                          Rng& rng);

// Epsilon-greedy slot filling: each of top_n slots independently explores
// with probability epsilon (uniform over unselected candidates); the rest
// take the best remaining ranked candidate.
std::vector<RankedCandidate> select_pings(std::span<const RankedCandidate> ranked,
                                          const MatchPolicy& policy, Rng& rng);

}  // namespace pingmatch
