#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <numeric>
#include <optional>
#include <stdexcept>
#include <vector>

#include "audsim/channel.hpp"
#include "audsim/config.hpp"
#include "audsim/omp.hpp"
#include "audsim/pilots.hpp"
#include "audsim/rng.hpp"

namespace audsim {

struct DetectionOutcome {
  std::vector<std::vector<int>> per_channel_detected;  // sorted global ids
  std::vector<int> fused;                              // sorted global ids
  FusionStrategy strategy = FusionStrategy::kSingleChannel;
};

/// One OMP execution unit: a single channel, or a stacked super-channel.
/// The full trajectory is kept so threshold sweeps can reuse it: a run with
/// a larger epsilon detects a prefix of the same selection sequence.
struct UnitRun {
  std::vector<int> member_channels;  // constituent channel indices
  std::vector<int> global_ids;       // local column -> global user id
  OmpResult omp;
};

struct StrategyRuns {
  FusionStrategy strategy = FusionStrategy::kSingleChannel;
  int num_channels = 0;
  std::vector<UnitRun> units;
};

namespace detail {

inline std::vector<int> sorted_unique(std::vector<int> v) {
  std::sort(v.begin(), v.end());
  v.erase(std::unique(v.begin(), v.end()), v.end());
  return v;
}

inline std::vector<int> map_to_global(const std::vector<int>& locals,
                                      const std::vector<int>& global_ids) {
  std::vector<int> out;
  out.reserve(locals.size());
  for (int j : locals) out.push_back(global_ids[j]);
  return out;
}

// All C-subsets of {0..F-1} in lexicographic order.
inline std::vector<std::vector<int>> channel_subsets(int num_channels, int size) {
  std::vector<std::vector<int>> subsets;
  std::vector<int> idx(size);
  std::iota(idx.begin(), idx.end(), 0);
  while (true) {
    subsets.push_back(idx);
    int i = size - 1;
    while (i >= 0 && idx[i] == num_channels - size + i) --i;
    if (i < 0) break;
    ++idx[i];
    for (int j = i + 1; j < size; ++j) idx[j] = idx[j - 1] + 1;
  }
  return subsets;
}

inline StoppingRule unit_rule(const StoppingRule& rule, int true_active) {
  if (rule.mode == StoppingRule::Mode::kKnownK)
    return StoppingRule::known(true_active);
  return rule;
}

}  // namespace detail

/// Runs the per-unit OMP passes for the strategies whose units are fixed up
/// front (everything except iterative detection). In known-K mode each unit
/// stops at its own true active count, taken from the frame's activity.
inline StrategyRuns run_detection_units(const PilotBook& book,
                                        const FrameRealization& frame,
                                        FusionStrategy strategy,
                                        const StoppingRule& rule) {
  if (strategy == FusionStrategy::kIterative)
    throw std::invalid_argument("run_detection_units: iterative is sequential, use detect_iterative");

  StrategyRuns runs;
  runs.strategy = strategy;
  runs.num_channels = book.num_channels;

  if (strategy != FusionStrategy::kSuperChannel) {
    for (int f = 0; f < book.num_channels; ++f) {
      UnitRun unit;
      unit.member_channels = {f};
      unit.global_ids = book.per_channel_users[f];
      const auto r = detail::unit_rule(rule, active_count_in_channel(book, frame.activity, f));
      unit.omp = run_omp(frame.received[f], book.per_channel_matrix[f], r);
      runs.units.push_back(std::move(unit));
    }
    return runs;
  }

  // Super-channels: one stacked observation per C-subset of channels,
  // searching only for the users whose channel set is exactly that subset.
  // Replicas of everyone else stay in the signal as interference.
  const int tp = book.pilot_length;
  const int copies = book.copies;
  const double renorm = 1.0 / std::sqrt(static_cast<double>(copies));
  for (const auto& subset : detail::channel_subsets(book.num_channels, copies)) {
    std::vector<int> members;
    for (int q = 0; q < book.total_users(); ++q)
      if (book.channel_sets[q] == subset) members.push_back(q);
    if (members.empty()) continue;

    const auto m_cols = frame.received[subset[0]].cols();
    Eigen::MatrixXcd y(static_cast<Eigen::Index>(copies) * tp, m_cols);
    for (int i = 0; i < copies; ++i)
      y.middleRows(static_cast<Eigen::Index>(i) * tp, tp) = frame.received[subset[i]];

    Eigen::MatrixXcd phi(static_cast<Eigen::Index>(copies) * tp,
                         static_cast<Eigen::Index>(members.size()));
    for (std::size_t j = 0; j < members.size(); ++j) {
      const auto col = book.pilots.col(members[j]);
      for (int i = 0; i < copies; ++i)
        phi.block(static_cast<Eigen::Index>(i) * tp, static_cast<Eigen::Index>(j), tp, 1) =
            col * renorm;  // stacked replica renormalized to unit norm
    }

    int active = 0;
    for (int q : members) active += frame.activity.active[q] ? 1 : 0;

    UnitRun unit;
    unit.member_channels = subset;
    unit.global_ids = members;
    unit.omp = run_omp(y, phi, detail::unit_rule(rule, active));
    runs.units.push_back(std::move(unit));
  }
  return runs;
}

/// Maps unit trajectories to a DetectionOutcome. With eps_cut set, each
/// unit's detections are the trajectory prefix a run at that threshold would
/// have produced; without it the full detected sets are used (known-K mode).
inline DetectionOutcome fuse_detections(const StrategyRuns& runs,
                                        const PilotBook& book,
                                        std::optional<double> eps_cut = std::nullopt) {
  DetectionOutcome out;
  out.strategy = runs.strategy;
  out.per_channel_detected.assign(runs.num_channels, {});

  std::vector<int> all;
  for (const auto& unit : runs.units) {
    const auto locals = eps_cut ? detected_prefix(unit.omp, *eps_cut) : unit.omp.selected;
    const auto ids = detail::map_to_global(locals, unit.global_ids);
    for (int f : unit.member_channels)
      out.per_channel_detected[f].insert(out.per_channel_detected[f].end(),
                                         ids.begin(), ids.end());
    all.insert(all.end(), ids.begin(), ids.end());
  }
  for (auto& lst : out.per_channel_detected) lst = detail::sorted_unique(std::move(lst));
  all = detail::sorted_unique(std::move(all));

  if (runs.strategy == FusionStrategy::kStrict) {
    // keep only users detected on every channel they transmit in
    std::vector<int> fused;
    for (int q : all) {
      bool everywhere = true;
      for (int f : book.channel_sets[q]) {
        const auto& det = out.per_channel_detected[f];
        if (!std::binary_search(det.begin(), det.end(), q)) {
          everywhere = false;
          break;
        }
      }
      if (everywhere) fused.push_back(q);
    }
    out.fused = std::move(fused);
  } else {
    out.fused = std::move(all);
  }
  return out;
}

inline DetectionOutcome detect_independent(const PilotBook& book,
                                           const FrameRealization& frame,
                                           const StoppingRule& rule) {
  auto runs = run_detection_units(book, frame, FusionStrategy::kIndependentUnion, rule);
  const auto cut = rule.mode == StoppingRule::Mode::kResidualThreshold
                       ? std::optional<double>(rule.epsilon)
                       : std::nullopt;
  return fuse_detections(runs, book, cut);
}

inline DetectionOutcome detect_strict(const PilotBook& book,
                                      const FrameRealization& frame,
                                      const StoppingRule& rule) {
  auto runs = run_detection_units(book, frame, FusionStrategy::kStrict, rule);
  const auto cut = rule.mode == StoppingRule::Mode::kResidualThreshold
                       ? std::optional<double>(rule.epsilon)
                       : std::nullopt;
  return fuse_detections(runs, book, cut);
}

inline DetectionOutcome detect_superchannel(const PilotBook& book,
                                            const FrameRealization& frame,
                                            const StoppingRule& rule) {
  auto runs = run_detection_units(book, frame, FusionStrategy::kSuperChannel, rule);
  const auto cut = rule.mode == StoppingRule::Mode::kResidualThreshold
                       ? std::optional<double>(rule.epsilon)
                       : std::nullopt;
  return fuse_detections(runs, book, cut);
}

/// Sequential detection: channels are processed in order, each detection is
/// propagated by least-squares projecting the user's pilot out of the
/// received signal of its not-yet-processed channels. In known-K mode a
/// channel only searches for the actives it still misses.
inline DetectionOutcome detect_iterative(const PilotBook& book,
                                         const FrameRealization& frame,
                                         const StoppingRule& rule,
                                         IterativeOrder order = IterativeOrder::kAscending,
                                         Rng* order_rng = nullptr) {
  const int F = book.num_channels;
  std::vector<int> schedule(F);
  std::iota(schedule.begin(), schedule.end(), 0);
  if (order == IterativeOrder::kRandom) {
    if (!order_rng)
      throw std::invalid_argument("detect_iterative: random order needs an rng");
    for (int i = F; i > 1; --i)
      std::swap(schedule[i - 1], schedule[order_rng->bits() % i]);
  }

  std::vector<Eigen::MatrixXcd> work = frame.received;
  std::vector<char> processed(F, 0);
  std::vector<char> detected(book.total_users(), 0);

  DetectionOutcome out;
  out.strategy = FusionStrategy::kIterative;
  out.per_channel_detected.assign(F, {});

  for (int f : schedule) {
    StoppingRule unit_rule = rule;
    if (rule.mode == StoppingRule::Mode::kKnownK) {
      // the channel searches for the actives it has not been handed yet;
      // earlier detections are trusted whether or not they are correct
      int remaining = active_count_in_channel(book, frame.activity, f);
      for (int q : book.per_channel_users[f])
        if (detected[q]) --remaining;
      unit_rule = StoppingRule::known(std::max(0, remaining));
    }
    const auto res = run_omp(work[f], book.per_channel_matrix[f], unit_rule);
    auto ids = detail::map_to_global(res.selected, book.per_channel_users[f]);
    out.per_channel_detected[f] = detail::sorted_unique(ids);
    processed[f] = 1;

    for (int q : ids) {
      if (detected[q]) continue;
      detected[q] = 1;
      for (int g : book.channel_sets[q]) {
        if (processed[g]) continue;
        const auto col = book.per_channel_matrix[g].col(book.global_to_local[g][q]);
        work[g] -= col * ((col.adjoint() * work[g]) / col.squaredNorm());
      }
    }
  }

  for (int q = 0; q < book.total_users(); ++q)
    if (detected[q]) out.fused.push_back(q);
  return out;
}

/// Strategy dispatch used by the Monte-Carlo driver.
inline DetectionOutcome detect(const PilotBook& book, const FrameRealization& frame,
                               FusionStrategy strategy, const StoppingRule& rule,
                               IterativeOrder iterative_order = IterativeOrder::kAscending,
                               Rng* order_rng = nullptr) {
  switch (strategy) {
    case FusionStrategy::kIterative:
      return detect_iterative(book, frame, rule, iterative_order, order_rng);
    case FusionStrategy::kStrict:
      return detect_strict(book, frame, rule);
    case FusionStrategy::kSuperChannel:
      return detect_superchannel(book, frame, rule);
    case FusionStrategy::kSingleChannel:
    case FusionStrategy::kIndependentUnion: {
      auto out = detect_independent(book, frame, rule);
      out.strategy = strategy;
      return out;
    }
  }
  throw std::logic_error("detect: unknown strategy");
}

}  // namespace audsim
