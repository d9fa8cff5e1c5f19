#include "pingmatch/matcher.hpp"

#include <algorithm>
#include <numeric>

#include "pingmatch/error.hpp"

namespace pingmatch {

void MatchPolicy::validate() const {
  if (top_n < 1) throw Error(ErrorCode::ConfigInvalid, "top_n must be >= 1");
  if (!(epsilon >= 0.0 && epsilon <= 1.0))
    throw Error(ErrorCode::ConfigInvalid, "epsilon must be in [0, 1]");
  if (quiet_start_hour < 0 || quiet_start_hour > 23 || quiet_end_hour < 0 || quiet_end_hour > 24)
    throw Error(ErrorCode::ConfigInvalid, "quiet hours must lie in 0..24");
}

bool MatchPolicy::in_quiet_hours(int hour) const {
  if (quiet_start_hour == quiet_end_hour) return false;
  if (quiet_start_hour < quiet_end_hour) return hour >= quiet_start_hour && hour < quiet_end_hour;
  return hour >= quiet_start_hour || hour < quiet_end_hour;  // wraps midnight
}

std::vector<const TranslatorProfile*> filter_candidates(const TranslationRequest& request,
                                                        std::span<const TranslatorProfile> profiles,
                                                        TimestampMs now,
                                                        const MatchPolicy& policy) {
  std::vector<const TranslatorProfile*> out;
  const auto& prefs = request.preferences;
  for (const auto& t : profiles) {
    if (!t.languages.count(request.source_language) || !t.languages.count(request.target_language))
      continue;
    if (!t.declared_available &&
        policy.in_quiet_hours(local_hour(now, t.timezone_offset_minutes)))
      continue;
    if (prefs.gender_identity && t.gender_identity != prefs.gender_identity) continue;
    if (prefs.occupation && !t.occupations.count(*prefs.occupation)) continue;
    out.push_back(&t);
  }
  return out;
}

namespace {

void sort_ranked(std::vector<RankedCandidate>& ranked) {
  std::sort(ranked.begin(), ranked.end(), [](const RankedCandidate& a, const RankedCandidate& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.translator_id < b.translator_id;
  });
  for (std::size_t i = 0; i < ranked.size(); ++i) ranked[i].rank = static_cast<int>(i) + 1;
}

}  // namespace

std::vector<RankedCandidate> rank_candidates(std::span<const TranslatorProfile* const> eligible,
                                             const ResponseModel* model, const StatsBook& stats,
                                             TimestampMs now) {
  if (!model) throw Error(ErrorCode::ModelMissing, "no response model loaded");
  std::vector<RankedCandidate> ranked;
  ranked.reserve(eligible.size());
  for (const TranslatorProfile* t : eligible) {
    const int hour = local_hour(now, t->timezone_offset_minutes);
    const double score =
        predict_probability(*model, feature_vector(*t, stats.get(t->translator_id), hour));
    ranked.push_back({t->translator_id, score, false, 0});
  }
  sort_ranked(ranked);
  return ranked;
}

std::vector<RankedCandidate> random_order(std::span<const TranslatorProfile* const> eligible,
                                          Rng& rng) {
  std::vector<RankedCandidate> out;
  out.reserve(eligible.size());
  for (const TranslatorProfile* t : eligible) out.push_back({t->translator_id, 0.5, false, 0});
  std::sort(out.begin(), out.end(), [](const RankedCandidate& a, const RankedCandidate& b) {
    return a.translator_id < b.translator_id;
  });
  std::shuffle(out.begin(), out.end(), rng);
  for (std::size_t i = 0; i < out.size(); ++i) out[i].rank = static_cast<int>(i) + 1;
  return out;
}

std::vector<RankedCandidate> select_pings(std::span<const RankedCandidate> ranked,
                                          const MatchPolicy& policy, Rng& rng) {
  policy.validate();
  const auto top_n = static_cast<std::size_t>(policy.top_n);
  std::vector<RankedCandidate> out;

  if (ranked.size() <= top_n) {
    out.assign(ranked.begin(), ranked.end());
    for (std::size_t i = 0; i < out.size(); ++i) {
      out[i].explored = false;
      out[i].rank = static_cast<int>(i) + 1;
    }
    return out;
  }

  // Unselected candidates, kept in rank order; exploitation takes the front.
  std::vector<std::size_t> remaining(ranked.size());
  std::iota(remaining.begin(), remaining.end(), 0);
  std::bernoulli_distribution explore(policy.epsilon);

  out.reserve(top_n);
  for (std::size_t slot = 0; slot < top_n; ++slot) {
    std::size_t pick = 0;
    const bool explored = explore(rng);
    if (explored) {
      std::uniform_int_distribution<std::size_t> uniform(0, remaining.size() - 1);
      pick = uniform(rng);
    }
    RankedCandidate c = ranked[remaining[pick]];
    c.explored = explored;
    c.rank = static_cast<int>(slot) + 1;
    out.push_back(std::move(c));
    remaining.erase(remaining.begin() + static_cast<std::ptrdiff_t>(pick));
  }
  return out;
}

}  // namespace pingmatch
