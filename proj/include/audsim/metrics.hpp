#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <utility>
#include <vector>

#include "audsim/channel.hpp"
#include "audsim/fusion.hpp"
#include "audsim/pilots.hpp"

namespace audsim {

struct ConfusionCounts {
  std::int64_t true_pos = 0;
  std::int64_t false_pos = 0;
  std::int64_t true_neg = 0;
  std::int64_t false_neg = 0;
  std::int64_t num_active = 0;
  std::int64_t num_users = 0;
};

struct BalancedScore {
  double balanced_accuracy = 0.0;
  double balanced_inaccuracy = 0.0;
};

namespace detail {

inline BalancedScore balanced_from_counts(const ConfusionCounts& c) {
  // vacuous classes score 1: an empty frame that stays empty is a perfect
  // detection, and with p = 1/Q empty frames are ~37% of all trials
  const double recall_active =
      c.num_active > 0 ? static_cast<double>(c.true_pos) / static_cast<double>(c.num_active) : 1.0;
  const std::int64_t inactive = c.num_users - c.num_active;
  const double recall_inactive =
      inactive > 0 ? static_cast<double>(c.true_neg) / static_cast<double>(inactive) : 1.0;
  const double acc = 0.5 * (recall_active + recall_inactive);
  return {acc, 1.0 - acc};
}

}  // namespace detail

/// Scores the fused global detected set against the global activity set.
/// Balanced accuracy is the mean of the recall over actives and the recall
/// over inactives, with a vacuous class counting as fully recalled.
inline std::pair<ConfusionCounts, BalancedScore> score(
    const DetectionOutcome& outcome, const ActivityRealization& activity,
    std::int64_t population) {
  if (activity.population != population)
    throw std::invalid_argument("score: population mismatch");

  ConfusionCounts c;
  c.num_users = population;
  c.num_active = static_cast<std::int64_t>(activity.active_set.size());
  for (int q : outcome.fused) {
    if (q < 0 || q >= population)
      throw std::invalid_argument("score: detected id outside population");
    if (activity.active[q]) ++c.true_pos;
    else ++c.false_pos;
  }
  c.false_neg = c.num_active - c.true_pos;
  c.true_neg = (c.num_users - c.num_active) - c.false_pos;
  return {c, detail::balanced_from_counts(c)};
}

/// Alternative reading scored per channel and unioned: a user counts as a
/// true positive if correctly detected on at least one of its channels, and
/// as a true negative if correctly left out on at least one. Provided for
/// comparison with the fused-set semantics; both coincide at F = 1.
inline std::pair<ConfusionCounts, BalancedScore> score_channel_union(
    const DetectionOutcome& outcome, const ActivityRealization& activity,
    const PilotBook& book) {
  const int population = book.total_users();
  if (activity.population != population)
    throw std::invalid_argument("score_channel_union: population mismatch");

  std::vector<char> tp(population, 0), tn(population, 0);
  for (int f = 0; f < book.num_channels; ++f) {
    const auto& det = outcome.per_channel_detected[f];
    std::vector<char> in_det(population, 0);
    for (int q : det) in_det[q] = 1;
    for (int q : book.per_channel_users[f]) {
      if (activity.active[q] && in_det[q]) tp[q] = 1;
      if (!activity.active[q] && !in_det[q]) tn[q] = 1;
    }
  }

  ConfusionCounts c;
  c.num_users = population;
  c.num_active = static_cast<std::int64_t>(activity.active_set.size());
  for (int q = 0; q < population; ++q) {
    c.true_pos += tp[q];
    c.true_neg += tn[q];
  }
  c.false_neg = c.num_active - c.true_pos;
  c.false_pos = (c.num_users - c.num_active) - c.true_neg;
  return {c, detail::balanced_from_counts(c)};
}

/// Streaming mean/standard-error accumulator with compensated summation;
/// partial aggregates from concurrent workers merge associatively.
class Aggregator {
 public:
  void add(double x) {
    add_compensated(sum_, sum_c_, x);
    add_compensated(sumsq_, sumsq_c_, x * x);
    ++count_;
  }

  void merge(const Aggregator& other) {
    add_compensated(sum_, sum_c_, other.sum_);
    add_compensated(sum_, sum_c_, other.sum_c_);
    add_compensated(sumsq_, sumsq_c_, other.sumsq_);
    add_compensated(sumsq_, sumsq_c_, other.sumsq_c_);
    count_ += other.count_;
  }

  std::int64_t count() const { return count_; }

  double mean() const {
    if (count_ == 0) throw std::logic_error("Aggregator: empty stream");
    return sum_ / static_cast<double>(count_);
  }

  // standard error of the mean; zero for a single observation
  double std_error() const {
    if (count_ == 0) throw std::logic_error("Aggregator: empty stream");
    if (count_ < 2) return 0.0;
    const double n = static_cast<double>(count_);
    const double var = std::max(0.0, (sumsq_ - sum_ * sum_ / n) / (n - 1.0));
    return std::sqrt(var / n);
  }

 private:
  static void add_compensated(double& s, double& c, double x) {
    const double y = x - c;
    const double t = s + y;
    c = (t - s) - y;
    s = t;
  }

  std::int64_t count_ = 0;
  double sum_ = 0.0, sum_c_ = 0.0;
  double sumsq_ = 0.0, sumsq_c_ = 0.0;
};

struct AggregateSummary {
  double mean = 0.0;
  double std_error = 0.0;
  std::int64_t count = 0;
};

/// Mean balanced inaccuracy of a batch of scores, with its standard error.
inline AggregateSummary aggregate(const std::vector<BalancedScore>& scores) {
  if (scores.empty()) throw std::invalid_argument("aggregate: empty stream");
  Aggregator agg;
  for (const auto& s : scores) agg.add(s.balanced_inaccuracy);
  return {agg.mean(), agg.std_error(), agg.count()};
}

}  // namespace audsim
