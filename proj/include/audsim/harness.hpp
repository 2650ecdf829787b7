#pragma once

#include <atomic>
#include <chrono>
#include <charconv>
#include <cstdint>
#include <exception>
#include <functional>
#include <mutex>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "audsim/channel.hpp"
#include "audsim/config.hpp"
#include "audsim/fusion.hpp"
#include "audsim/metrics.hpp"
#include "audsim/omp.hpp"
#include "audsim/pilots.hpp"
#include "audsim/rng.hpp"
#include "audsim/version.hpp"

namespace audsim {

struct ValidationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Identifies one trial's random stream: everything the trial draws comes
/// from the generator seeded by (master, stream, index).
struct TrialSeed {
  std::uint64_t master = 0;
  std::uint64_t stream = streams::kEvaluation;
  std::uint64_t index = 0;
  std::uint64_t value() const { return derive_seed(master, stream, index); }
};

struct TrialResult {
  ConfusionCounts counts;
  BalancedScore score;
};

namespace detail {

inline std::string fmt(double v) {
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  (void)ec;
  return std::string(buf, p);
}

// Static partition over [0, n); worker exceptions are rethrown after join.
inline void parallel_for(std::int64_t n, int workers,
                         const std::function<void(std::int64_t, std::int64_t)>& body) {
  workers = std::max(1, workers);
  if (workers == 1 || n < 2) {
    if (n > 0) body(0, n);
    return;
  }
  const std::int64_t chunk = (n + workers - 1) / workers;
  std::vector<std::thread> pool;
  std::mutex err_mutex;
  std::exception_ptr first_error;
  for (int w = 0; w < workers; ++w) {
    const std::int64_t b = w * chunk;
    const std::int64_t e = std::min(n, b + chunk);
    if (b >= e) break;
    pool.emplace_back([&, b, e] {
      try {
        body(b, e);
      } catch (...) {
        std::lock_guard<std::mutex> lk(err_mutex);
        if (!first_error) first_error = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

inline StoppingRule stopping_rule_of(const ExperimentConfig& cfg) {
  return cfg.stopping == StoppingMode::kKnownK
             ? StoppingRule::known(0)  // per-unit counts filled in by fusion
             : StoppingRule::residual(cfg.epsilon);
}

inline PilotBook per_trial_book(const ExperimentConfig& cfg, const TrialSeed& seed) {
  return make_pilot_book(cfg, derive_seed(seed.value(), streams::kPilotBook, 0));
}

}  // namespace detail

/// One Monte-Carlo trial: activity, frame synthesis, fused detection, score.
/// Fully determined by (cfg, book, seed).
inline TrialResult run_trial(const ExperimentConfig& cfg, const PilotBook& book,
                             const TrialSeed& seed) {
  const PilotBook* active_book = &book;
  PilotBook fresh;
  if (cfg.pilot_mode == PilotMode::kPerTrial) {
    fresh = detail::per_trial_book(cfg, seed);
    active_book = &fresh;
  }
  Rng rng(seed.value());
  auto activity = sample_activity(active_book->total_users(), cfg.activation_prob, rng);
  auto frame = synthesize_frame(*active_book, activity, cfg, rng);
  auto outcome = detect(*active_book, frame, cfg.fusion, detail::stopping_rule_of(cfg),
                        cfg.iterative_order, &rng);
  auto [counts, sc] = score(outcome, activity, active_book->total_users());
  return {counts, sc};
}

/// Per-trial results in trial order, independent of the worker count.
inline std::vector<TrialResult> run_monte_carlo(const ExperimentConfig& cfg,
                                                const PilotBook& book,
                                                std::uint64_t stream,
                                                std::int64_t trials, int workers) {
  std::vector<TrialResult> results(static_cast<std::size_t>(trials));
  detail::parallel_for(trials, workers, [&](std::int64_t b, std::int64_t e) {
    for (std::int64_t t = b; t < e; ++t)
      results[static_cast<std::size_t>(t)] =
          run_trial(cfg, book, {cfg.master_seed, stream, static_cast<std::uint64_t>(t)});
  });
  return results;
}

struct MonteCarloSummary {
  double mean_inaccuracy = 0.0;
  double std_error = 0.0;
  std::int64_t trials = 0;
  std::int64_t true_pos = 0, false_pos = 0, true_neg = 0, false_neg = 0;
};

/// Sequential reduction in trial order; identical for any worker count.
inline MonteCarloSummary summarize(const std::vector<TrialResult>& results) {
  if (results.empty()) throw std::invalid_argument("summarize: no trials");
  Aggregator agg;
  MonteCarloSummary s;
  for (const auto& r : results) {
    agg.add(r.score.balanced_inaccuracy);
    s.true_pos += r.counts.true_pos;
    s.false_pos += r.counts.false_pos;
    s.true_neg += r.counts.true_neg;
    s.false_neg += r.counts.false_neg;
  }
  s.mean_inaccuracy = agg.mean();
  s.std_error = agg.std_error();
  s.trials = agg.count();
  return s;
}

/// Geometric threshold grid between the noise-only correlation floor and a
/// ceiling above the strongest expected active-user correlation. The floor
/// scales with sqrt(M) (noise-residual correlations concentrate there), the
/// ceiling with the per-replica received amplitude sqrt(T_p Gamma / C).
inline std::vector<double> default_epsilon_grid(const ExperimentConfig& cfg,
                                                int points = 12) {
  if (points < 2) throw std::invalid_argument("default_epsilon_grid: need >= 2 points");
  const double m = static_cast<double>(cfg.num_antennas);
  const double lo = 0.75 * std::sqrt(m);
  const double hi = 1.5 * std::sqrt(m * (1.0 + cfg.pilot_length * cfg.snr_linear() /
                                                   cfg.num_copies));
  const double ratio = std::pow(hi / lo, 1.0 / (points - 1));
  std::vector<double> grid(points);
  double v = lo;
  for (int i = 0; i < points; ++i, v *= ratio) grid[i] = v;
  return grid;
}

struct CalibrationPoint {
  double epsilon = 0.0;
  double mean_inaccuracy = 0.0;
  double std_error = 0.0;
};

struct CalibrationResult {
  double best_epsilon = 0.0;
  std::vector<CalibrationPoint> table;  // grid order
  std::int64_t trials = 0;
};

/// Grid search for the threshold minimizing mean balanced inaccuracy, with
/// common random numbers: every grid point scores the identical realization
/// at each trial index. Ties go to the larger epsilon (fewer false
/// positives). The calibration stream is disjoint from evaluation seeds.
///
/// For the strategies whose OMP units are fixed up front, each trial runs
/// the greedy loop once at the smallest grid epsilon and every other grid
/// point is scored on a prefix of that shared trajectory; iterative
/// detection re-runs per epsilon since its subtractions depend on it.
inline CalibrationResult calibrate_epsilon(const ExperimentConfig& cfg,
                                           const PilotBook& book,
                                           const std::vector<double>& grid,
                                           std::int64_t trials_per_point,
                                           int workers) {
  if (cfg.stopping != StoppingMode::kResidualThreshold)
    throw std::invalid_argument("calibrate_epsilon: stopping rule is not residual-based");
  if (grid.empty()) throw std::invalid_argument("calibrate_epsilon: empty grid");
  if (trials_per_point < 1)
    throw std::invalid_argument("calibrate_epsilon: trials_per_point must be positive");

  const std::size_t g = grid.size();
  double eps_floor = grid[0];
  for (double e : grid) eps_floor = std::min(eps_floor, e);

  std::vector<double> inacc(static_cast<std::size_t>(trials_per_point) * g);
  detail::parallel_for(trials_per_point, workers, [&](std::int64_t b, std::int64_t e) {
    for (std::int64_t t = b; t < e; ++t) {
      const TrialSeed seed{cfg.master_seed, streams::kCalibration,
                           static_cast<std::uint64_t>(t)};
      const PilotBook* active_book = &book;
      PilotBook fresh;
      if (cfg.pilot_mode == PilotMode::kPerTrial) {
        fresh = detail::per_trial_book(cfg, seed);
        active_book = &fresh;
      }
      Rng rng(seed.value());
      auto activity = sample_activity(active_book->total_users(), cfg.activation_prob, rng);
      auto frame = synthesize_frame(*active_book, activity, cfg, rng);
      double* row = &inacc[static_cast<std::size_t>(t) * g];

      if (cfg.fusion == FusionStrategy::kIterative) {
        for (std::size_t i = 0; i < g; ++i) {
          auto outcome = detect_iterative(*active_book, frame,
                                          StoppingRule::residual(grid[i]),
                                          cfg.iterative_order, &rng);
          row[i] = score(outcome, activity, active_book->total_users())
                       .second.balanced_inaccuracy;
        }
      } else {
        auto runs = run_detection_units(*active_book, frame, cfg.fusion,
                                        StoppingRule::residual(eps_floor));
        for (std::size_t i = 0; i < g; ++i) {
          auto outcome = fuse_detections(runs, *active_book, grid[i]);
          row[i] = score(outcome, activity, active_book->total_users())
                       .second.balanced_inaccuracy;
        }
      }
    }
  });

  CalibrationResult out;
  out.trials = trials_per_point;
  out.table.resize(g);
  for (std::size_t i = 0; i < g; ++i) {
    Aggregator agg;
    for (std::int64_t t = 0; t < trials_per_point; ++t)
      agg.add(inacc[static_cast<std::size_t>(t) * g + i]);
    out.table[i] = {grid[i], agg.mean(), agg.std_error()};
  }
  std::size_t best = 0;
  for (std::size_t i = 1; i < g; ++i) {
    const auto& cand = out.table[i];
    const auto& cur = out.table[best];
    if (cand.mean_inaccuracy < cur.mean_inaccuracy ||
        (cand.mean_inaccuracy == cur.mean_inaccuracy && cand.epsilon > cur.epsilon))
      best = i;
  }
  out.best_epsilon = out.table[best].epsilon;
  return out;
}

struct SweepOptions {
  int workers = 1;
  std::int64_t trials_override = -1;             // <= 0: keep per-config value
  std::int64_t calibration_trials_override = -1; // <= 0: keep spec value
  int grid_points = 12;                          // default-grid resolution
};

struct SweepRecord {
  std::int64_t cell = 0;
  ExperimentConfig config;  // resolved, epsilon filled in when calibrated
  std::vector<std::pair<std::string, std::string>> axis_values;
  bool calibrated = false;
  std::vector<double> epsilon_grid;  // grid actually used (empty when none)
  std::optional<CalibrationResult> calibration;
  MonteCarloSummary summary;
  double wall_seconds = 0.0;
};

/// Deterministic CSV: everything needed to identify and interpret a cell,
/// no timing information (timings live in the manifest).
inline std::string csv_header() {
  return "cell,users_per_channel_base,num_channels,num_copies,num_antennas,"
         "pilot_length,activation_prob,snr_db,stopping,epsilon,fusion,"
         "num_trials,master_seed,mean_balanced_inaccuracy,"
         "stderr_balanced_inaccuracy,true_pos,false_pos,true_neg,false_neg\n";
}

inline std::string csv_row(const SweepRecord& rec) {
  const auto& c = rec.config;
  std::string eps = c.stopping == StoppingMode::kResidualThreshold
                        ? detail::fmt(c.epsilon)
                        : std::string();
  std::string row;
  row += std::to_string(rec.cell);
  row += ',' + std::to_string(c.users_per_channel_base);
  row += ',' + std::to_string(c.num_channels);
  row += ',' + std::to_string(c.num_copies);
  row += ',' + std::to_string(c.num_antennas);
  row += ',' + std::to_string(c.pilot_length);
  row += ',' + detail::fmt(c.activation_prob);
  row += ',' + detail::fmt(c.snr_db);
  row += ',' + to_string(c.stopping);
  row += ',' + eps;
  row += ',' + to_string(c.fusion);
  row += ',' + std::to_string(rec.summary.trials);
  row += ',' + std::to_string(c.master_seed);
  row += ',' + detail::fmt(rec.summary.mean_inaccuracy);
  row += ',' + detail::fmt(rec.summary.std_error);
  row += ',' + std::to_string(rec.summary.true_pos);
  row += ',' + std::to_string(rec.summary.false_pos);
  row += ',' + std::to_string(rec.summary.true_neg);
  row += ',' + std::to_string(rec.summary.false_neg);
  row += '\n';
  return row;
}

/// Runs one resolved cell: pilot book, optional threshold calibration, then
/// the evaluation Monte-Carlo.
inline SweepRecord run_cell(const ExperimentConfig& cell_cfg, std::int64_t cell_index,
                            const SweepSpec& spec, const SweepOptions& opts) {
  const auto t0 = std::chrono::steady_clock::now();
  SweepRecord rec;
  rec.cell = cell_index;
  ExperimentConfig cfg = cell_cfg;
  if (opts.trials_override > 0) cfg.num_trials = opts.trials_override;

  const PilotBook book = make_pilot_book(
      cfg, derive_seed(cfg.master_seed, streams::kPilotBook,
                       static_cast<std::uint64_t>(cell_index)));

  if (cfg.stopping == StoppingMode::kResidualThreshold) {
    std::vector<double> grid = spec.epsilon_grid;
    if (grid.empty() && (spec.default_epsilon_grid || cfg.epsilon <= 0.0))
      grid = default_epsilon_grid(cfg, opts.grid_points);
    if (!grid.empty()) {
      const std::int64_t cal_trials = opts.calibration_trials_override > 0
                                          ? opts.calibration_trials_override
                                          : spec.calibration_trials;
      auto cal = calibrate_epsilon(cfg, book, grid, cal_trials, opts.workers);
      cfg.epsilon = cal.best_epsilon;
      rec.calibrated = true;
      rec.epsilon_grid = grid;
      rec.calibration = std::move(cal);
    } else if (cfg.epsilon <= 0.0) {
      throw ValidationError("cell " + std::to_string(cell_index) +
                            ": residual stopping needs a positive epsilon or a grid");
    }
  }

  rec.summary = summarize(
      run_monte_carlo(cfg, book, streams::kEvaluation, cfg.num_trials, opts.workers));
  rec.config = cfg;
  rec.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return rec;
}

/// Expands and runs a sweep. CSV rows stream to `csv` as cells finish, in
/// expansion order (execution is per-cell sequential, trials within a cell
/// are parallel); partial output stays valid if a later cell fails.
inline std::vector<SweepRecord> run_sweep(const SweepSpec& spec,
                                          const SweepOptions& opts,
                                          std::ostream* csv = nullptr,
                                          std::ostream* log = nullptr) {
  auto expanded = expand(spec);
  if (!expanded.ok()) {
    std::string msg = "sweep expansion failed:";
    for (const auto& e : expanded.errors) msg += "\n  " + e;
    throw ValidationError(msg);
  }

  if (csv) *csv << csv_header() << std::flush;
  std::vector<SweepRecord> records;
  records.reserve(expanded.configs.size());
  for (std::size_t i = 0; i < expanded.configs.size(); ++i) {
    SweepRecord rec;
    try {
      rec = run_cell(expanded.configs[i], static_cast<std::int64_t>(i), spec, opts);
    } catch (const ValidationError&) {
      throw;
    } catch (const std::exception& ex) {
      throw std::runtime_error("sweep cell " + std::to_string(i) + " (" +
                               expanded.cell_descriptions[i] + ") failed: " + ex.what());
    }
    rec.axis_values = expanded.cell_axes[i];
    if (csv) *csv << csv_row(rec) << std::flush;
    if (log) {
      *log << "[cell " << (i + 1) << "/" << expanded.configs.size() << "]";
      for (const auto& [k, v] : rec.axis_values) *log << " " << k << "=" << v;
      if (rec.calibrated) *log << " eps=" << detail::fmt(rec.config.epsilon);
      *log << " mean=" << detail::fmt(rec.summary.mean_inaccuracy) << " se="
           << detail::fmt(rec.summary.std_error) << " ("
           << detail::fmt(rec.wall_seconds) << "s)\n";
      log->flush();
    }
    records.push_back(std::move(rec));
  }
  return records;
}

/// Run manifest: resolved configuration, seeds, grids and timings. Not
/// byte-stable across runs (it carries wall times); the CSV is.
inline nlohmann::json manifest_json(const SweepSpec& spec, const SweepOptions& opts,
                                    const std::vector<SweepRecord>& records,
                                    const std::string& command) {
  nlohmann::json j;
  j["tool"] = std::string(kToolName);
  j["version"] = std::string(kVersion);
  j["command"] = command;
  j["master_seed"] = spec.base.master_seed;
  j["workers"] = opts.workers;
  j["calibration_trials"] = spec.calibration_trials;

  nlohmann::json base;
  for (const auto& name : config_field_names()) base[name] = get_field(spec.base, name);
  j["base_config"] = base;

  nlohmann::json axes = nlohmann::json::array();
  for (const auto& ax : spec.axes)
    axes.push_back({{"field", ax.field}, {"values", ax.values}});
  j["axes"] = axes;

  double total = 0.0;
  nlohmann::json cells = nlohmann::json::array();
  for (const auto& rec : records) {
    nlohmann::json c;
    c["cell"] = rec.cell;
    nlohmann::json av = nlohmann::json::object();
    for (const auto& [k, v] : rec.axis_values) av[k] = v;
    c["axis_values"] = av;
    if (rec.config.stopping == StoppingMode::kResidualThreshold)
      c["epsilon"] = rec.config.epsilon;
    if (rec.calibrated) {
      c["epsilon_grid"] = rec.epsilon_grid;
      nlohmann::json table = nlohmann::json::array();
      for (const auto& p : rec.calibration->table)
        table.push_back({{"epsilon", p.epsilon},
                         {"mean_balanced_inaccuracy", p.mean_inaccuracy},
                         {"std_error", p.std_error}});
      c["calibration_table"] = table;
      c["calibration_trials"] = rec.calibration->trials;
    }
    c["trials"] = rec.summary.trials;
    c["mean_balanced_inaccuracy"] = rec.summary.mean_inaccuracy;
    c["std_error"] = rec.summary.std_error;
    c["wall_seconds"] = rec.wall_seconds;
    total += rec.wall_seconds;
    cells.push_back(std::move(c));
  }
  j["cells"] = cells;
  j["total_wall_seconds"] = total;
  return j;
}

}  // namespace audsim
