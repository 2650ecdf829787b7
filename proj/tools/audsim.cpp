// Command-line front end: run / sweep / calibrate / diagnose.

#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "audsim/audsim.hpp"

namespace fs = std::filesystem;
using namespace audsim;

namespace {

struct CommonArgs {
  std::string config_file;
  std::vector<std::pair<std::string, std::string>> overrides;  // parse order
  std::string epsilon_grid;  // comma list or "default"
  long calibration_trials = -1;
  int workers = 1;
  std::string out_dir;
};

void add_config_flags(CLI::App* cmd, CommonArgs& args) {
  cmd->add_option("-c,--config", args.config_file, "Experiment file (key = value)");
  for (const auto& name : config_field_names()) {
    cmd->add_option_function<std::string>(
        "--" + name,
        [&args, name](const std::string& v) { args.overrides.emplace_back(name, v); },
        "Override config field " + name);
  }
  cmd->add_option_function<std::string>(
      "--seed", [&args](const std::string& v) { args.overrides.emplace_back("master_seed", v); },
      "Alias for --master_seed");
  cmd->add_option_function<std::string>(
      "--trials", [&args](const std::string& v) { args.overrides.emplace_back("num_trials", v); },
      "Alias for --num_trials");
  cmd->add_option("--workers", args.workers, "Worker threads (default 1)");
  cmd->add_option("--out", args.out_dir, "Output directory for CSV and manifest");
  cmd->add_option("--epsilon-grid", args.epsilon_grid,
                  "Calibration grid: comma-separated list or 'default'");
  cmd->add_option("--calibration-trials", args.calibration_trials,
                  "Trials per calibration grid point");
}

SweepSpec load_spec(const CommonArgs& args) {
  SweepSpec spec;
  if (!args.config_file.empty()) {
    auto parsed = parse_experiment_file(args.config_file);
    if (!parsed.ok()) {
      std::string msg = "experiment file errors:";
      for (const auto& e : parsed.errors) msg += "\n  " + e;
      throw ValidationError(msg);
    }
    spec = *parsed.spec;
  }
  for (const auto& [k, v] : args.overrides) {
    if (auto err = set_field(spec.base, k, v)) throw ValidationError(*err);
  }
  if (!args.epsilon_grid.empty()) {
    spec.epsilon_grid.clear();
    spec.default_epsilon_grid = false;
    if (args.epsilon_grid == "default") {
      spec.default_epsilon_grid = true;
    } else {
      std::string cur;
      auto flush = [&] {
        if (cur.empty()) return;
        double d;
        if (!detail::parse_double(cur, d) || d < 0)
          throw ValidationError("bad --epsilon-grid entry '" + cur + "'");
        spec.epsilon_grid.push_back(d);
        cur.clear();
      };
      for (char ch : args.epsilon_grid) {
        if (ch == ',') flush();
        else cur += ch;
      }
      flush();
    }
  }
  if (args.calibration_trials > 0) spec.calibration_trials = args.calibration_trials;
  return spec;
}

ExperimentConfig validated_base(const SweepSpec& spec) {
  auto vr = validate(spec.base);
  for (const auto& w : vr.warnings) std::cerr << "warning: " << w << "\n";
  if (!vr.ok()) {
    std::string msg = "configuration invalid:";
    for (const auto& e : vr.errors) msg += "\n  [" + e.field + "] " + e.message;
    throw ValidationError(msg);
  }
  return *vr.config;
}

std::string command_line(int argc, char** argv) {
  std::string s;
  for (int i = 0; i < argc; ++i) {
    if (i) s += ' ';
    s += argv[i];
  }
  return s;
}

void write_outputs(const CommonArgs& args, const SweepSpec& spec,
                   const SweepOptions& opts, const std::vector<SweepRecord>& records,
                   const std::string& stem, const std::string& command) {
  if (args.out_dir.empty()) return;
  fs::create_directories(args.out_dir);
  const fs::path csv_path = fs::path(args.out_dir) / (stem + ".csv");
  std::ofstream csv(csv_path, std::ios::binary);
  csv << csv_header();
  for (const auto& rec : records) csv << csv_row(rec);
  const fs::path man_path = fs::path(args.out_dir) / (stem + ".manifest.json");
  std::ofstream man(man_path);
  man << manifest_json(spec, opts, records, command).dump(2) << "\n";
  std::cerr << "wrote " << csv_path.string() << " and " << man_path.string() << "\n";
}

void print_summary(const SweepRecord& rec) {
  std::cout << "trials:                    " << rec.summary.trials << "\n";
  if (rec.config.stopping == StoppingMode::kResidualThreshold)
    std::cout << "epsilon:                   " << detail::fmt(rec.config.epsilon)
              << (rec.calibrated ? " (calibrated)" : " (fixed)") << "\n";
  std::cout << "mean balanced inaccuracy:  " << detail::fmt(rec.summary.mean_inaccuracy)
            << "\n"
            << "std error:                 " << detail::fmt(rec.summary.std_error) << "\n"
            << "confusion totals:          TP=" << rec.summary.true_pos
            << " FP=" << rec.summary.false_pos << " TN=" << rec.summary.true_neg
            << " FN=" << rec.summary.false_neg << "\n";
}

int cmd_run(const CommonArgs& args, bool union_score, const std::string& command) {
  SweepSpec spec = load_spec(args);
  if (!spec.axes.empty())
    throw ValidationError("'run' takes a single configuration; use 'sweep' for axes");
  spec.base = validated_base(spec);

  SweepOptions opts;
  opts.workers = args.workers;
  auto records = run_sweep(spec, opts, nullptr, &std::cerr);
  const auto& rec = records.front();
  print_summary(rec);

  if (union_score) {
    // comparison metric: per-channel union reading of the balanced accuracy
    const auto cfg = rec.config;
    const PilotBook book =
        make_pilot_book(cfg, derive_seed(cfg.master_seed, streams::kPilotBook, 0));
    Aggregator agg;
    std::vector<double> vals(static_cast<std::size_t>(cfg.num_trials));
    detail::parallel_for(cfg.num_trials, opts.workers, [&](std::int64_t b, std::int64_t e) {
      for (std::int64_t t = b; t < e; ++t) {
        TrialSeed seed{cfg.master_seed, streams::kEvaluation, static_cast<std::uint64_t>(t)};
        Rng rng(seed.value());
        auto activity = sample_activity(book.total_users(), cfg.activation_prob, rng);
        auto frame = synthesize_frame(book, activity, cfg, rng);
        auto outcome = detect(book, frame, cfg.fusion, detail::stopping_rule_of(cfg),
                              cfg.iterative_order, &rng);
        vals[static_cast<std::size_t>(t)] =
            score_channel_union(outcome, activity, book).second.balanced_inaccuracy;
      }
    });
    for (double v : vals) agg.add(v);
    std::cout << "channel-union inaccuracy:  " << detail::fmt(agg.mean()) << " (se "
              << detail::fmt(agg.std_error()) << ")\n";
  }

  write_outputs(args, spec, opts, records, "run", command);
  return 0;
}

int cmd_sweep(const CommonArgs& args, const std::string& spec_file,
              const std::string& command) {
  CommonArgs a = args;
  a.config_file = spec_file;
  SweepSpec spec = load_spec(a);
  validated_base(spec);  // surface base-config problems before expanding

  SweepOptions opts;
  opts.workers = args.workers;

  const std::string stem = fs::path(spec_file).stem().string();
  std::ofstream csv;
  std::ostream* csv_out = nullptr;
  fs::path csv_path;
  if (!args.out_dir.empty()) {
    fs::create_directories(args.out_dir);
    csv_path = fs::path(args.out_dir) / (stem + ".csv");
    csv.open(csv_path, std::ios::binary);
    if (!csv) throw std::runtime_error("cannot open " + csv_path.string());
    csv_out = &csv;
  }

  auto records = run_sweep(spec, opts, csv_out ? csv_out : nullptr, &std::cerr);
  if (!csv_out) {
    std::cout << csv_header();
    for (const auto& rec : records) std::cout << csv_row(rec);
  } else {
    csv.close();
    const fs::path man_path = fs::path(args.out_dir) / (stem + ".manifest.json");
    std::ofstream man(man_path);
    man << manifest_json(spec, opts, records, command).dump(2) << "\n";
    std::cerr << "wrote " << csv_path.string() << " and " << man_path.string() << "\n";
  }
  return 0;
}

int cmd_calibrate(const CommonArgs& args, const std::string& command) {
  SweepSpec spec = load_spec(args);
  ExperimentConfig cfg = validated_base(spec);
  if (cfg.stopping != StoppingMode::kResidualThreshold)
    throw ValidationError("calibrate requires stopping = residual");

  std::vector<double> grid = spec.epsilon_grid;
  if (grid.empty()) grid = default_epsilon_grid(cfg);

  const PilotBook book =
      make_pilot_book(cfg, derive_seed(cfg.master_seed, streams::kPilotBook, 0));
  auto cal = calibrate_epsilon(cfg, book, grid, spec.calibration_trials, args.workers);

  std::cout << "epsilon,mean_balanced_inaccuracy,std_error\n";
  for (const auto& p : cal.table)
    std::cout << detail::fmt(p.epsilon) << "," << detail::fmt(p.mean_inaccuracy) << ","
              << detail::fmt(p.std_error) << "\n";
  std::cout << "# best epsilon: " << detail::fmt(cal.best_epsilon) << " ("
            << cal.trials << " trials per point)\n";

  if (!args.out_dir.empty()) {
    fs::create_directories(args.out_dir);
    const fs::path p = fs::path(args.out_dir) / "calibration.csv";
    std::ofstream f(p, std::ios::binary);
    f << "epsilon,mean_balanced_inaccuracy,std_error\n";
    for (const auto& pt : cal.table)
      f << detail::fmt(pt.epsilon) << "," << detail::fmt(pt.mean_inaccuracy) << ","
        << detail::fmt(pt.std_error) << "\n";
    nlohmann::json j;
    j["tool"] = std::string(kToolName);
    j["version"] = std::string(kVersion);
    j["command"] = command;
    j["best_epsilon"] = cal.best_epsilon;
    j["grid"] = grid;
    j["trials_per_point"] = cal.trials;
    nlohmann::json base;
    for (const auto& name : config_field_names()) base[name] = get_field(cfg, name);
    j["config"] = base;
    std::ofstream man(fs::path(args.out_dir) / "calibration.manifest.json");
    man << j.dump(2) << "\n";
    std::cerr << "wrote " << p.string() << "\n";
  }
  return 0;
}

struct DiagnoseArgs {
  int toy_users = 12;
  int toy_pilot_length = 8;
  int max_order = 2;
  int sparsity = 1;  // K for the recovery bound
  std::uint64_t cap = kDefaultRipSubsetCap;
  std::string dump_binary;
  std::string dump_csv;
};

int cmd_diagnose(const CommonArgs& args, const DiagnoseArgs& d) {
  SweepSpec spec = load_spec(args);
  ExperimentConfig cfg = validated_base(spec);

  std::ostringstream out;
  out << "# diagnostics (toy instances)\n";

  // RIP brute force on a fresh toy pilot matrix
  Rng rng(derive_seed(cfg.master_seed, streams::kPilotBook, 9999));
  const auto toy = generate_pilots(d.toy_users, d.toy_pilot_length, rng);
  out << "\n[rip] matrix " << d.toy_pilot_length << "x" << d.toy_users << "\n";
  for (int order = 1; order <= d.max_order; ++order) {
    const auto rep = isometry_constant(toy, order, d.cap);
    out << "  order " << order << ": delta = " << detail::fmt(rep.delta) << "  ("
        << rep.subsets << " subsets)\n";
  }
  double coh = 0.0;
  for (int i = 0; i < d.toy_users; ++i)
    for (int j = i + 1; j < d.toy_users; ++j)
      coh = std::max(coh, std::abs((toy.col(i).adjoint() * toy.col(j))(0, 0)));
  out << "  max pairwise coherence = " << detail::fmt(coh)
      << "  (equals the order-2 delta for unit-norm columns)\n";

  // MAR of a sample frame with the first K users forced active
  ExperimentConfig toy_cfg = cfg;
  toy_cfg.users_per_channel_base = d.toy_users;
  toy_cfg.num_channels = 1;
  toy_cfg.num_copies = 1;
  toy_cfg.fusion = FusionStrategy::kSingleChannel;
  toy_cfg.pilot_length = d.toy_pilot_length;
  const PilotBook toy_book = make_pilot_book(toy_cfg, derive_seed(cfg.master_seed, streams::kPilotBook, 9998));
  ActivityRealization act;
  act.population = d.toy_users;
  act.active.assign(d.toy_users, 0);
  for (int q = 0; q < std::min(d.sparsity, d.toy_users); ++q) {
    act.active[q] = 1;
    act.active_set.push_back(q);
  }
  auto frame = synthesize_frame(toy_book, act, toy_cfg, rng);
  const double frame_mar = mar(frame.system[0]);
  out << "\n[mar] sample frame with K=" << act.active_set.size()
      << " forced actives: MAR = " << detail::fmt(frame_mar) << "\n";

  // necessary-SNR threshold from the measured toy delta
  const int order = std::min(d.sparsity + 1, std::min(d.toy_pilot_length, d.toy_users));
  const auto rep = isometry_constant(toy, order, d.cap);
  const double bound = recovery_snr_bound(rep.delta, d.sparsity, frame_mar);
  out << "\n[snr-bound] K=" << d.sparsity << ", delta_{K+1}=" << detail::fmt(rep.delta)
      << ", MAR=" << detail::fmt(frame_mar) << "\n  Gamma threshold = " << detail::fmt(bound);
  if (std::isfinite(bound)) out << " (" << detail::fmt(10.0 * std::log10(bound)) << " dB)";
  out << "\n";

  out << "\n[sparsity] expected per-channel actives p*Q*C = "
      << detail::fmt(expected_sparsity_check(cfg.activation_prob,
                                             cfg.users_per_channel_base, cfg.num_copies))
      << "\n";

  if (!d.dump_binary.empty() || !d.dump_csv.empty()) {
    const PilotBook book =
        make_pilot_book(cfg, derive_seed(cfg.master_seed, streams::kPilotBook, 0));
    if (!d.dump_binary.empty()) {
      dump_pilot_book_binary(book, d.dump_binary);
      out << "\n[pilot-book] wrote binary dump to " << d.dump_binary << "\n";
    }
    if (!d.dump_csv.empty()) {
      dump_pilot_book_csv(book, d.dump_csv);
      out << "\n[pilot-book] wrote csv dump to " << d.dump_csv << "\n";
    }
  }

  std::cout << out.str();
  if (!args.out_dir.empty()) {
    fs::create_directories(args.out_dir);
    std::ofstream f(fs::path(args.out_dir) / "diagnostics.txt");
    f << out.str();
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Monte-Carlo link simulator for compressed-sensing active user "
               "detection with multi-channel frequency diversity"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(kToolName) + " " + std::string(kVersion));

  CommonArgs run_args, sweep_args, cal_args, diag_args;
  bool union_score = false;
  std::string sweep_file;
  DiagnoseArgs d;

  auto* run = app.add_subcommand("run", "Run one configuration");
  add_config_flags(run, run_args);
  run->add_flag("--channel-union-score", union_score,
                "Also report the per-channel union reading of the metric");

  auto* sweep = app.add_subcommand("sweep", "Run every cell of an experiment file");
  sweep->add_option("spec", sweep_file, "Experiment file with sweep axes")->required();
  add_config_flags(sweep, sweep_args);

  auto* cal = app.add_subcommand("calibrate", "Tabulate the epsilon grid for one configuration");
  add_config_flags(cal, cal_args);

  auto* diag = app.add_subcommand("diagnose", "RIP / MAR / SNR-bound diagnostics on toy instances");
  add_config_flags(diag, diag_args);
  diag->add_option("--toy-users", d.toy_users, "Columns of the toy pilot matrix");
  diag->add_option("--toy-pilot-length", d.toy_pilot_length, "Rows of the toy pilot matrix");
  diag->add_option("--max-order", d.max_order, "Largest isometry order to compute");
  diag->add_option("--sparsity", d.sparsity, "K for the recovery-SNR bound");
  diag->add_option("--cap", d.cap, "Subset cap for the brute-force RIP search");
  diag->add_option("--dump-pilots", d.dump_binary, "Write the pilot book as binary");
  diag->add_option("--dump-pilots-csv", d.dump_csv, "Write the pilot book as CSV");

  CLI11_PARSE(app, argc, argv);

  const std::string command = command_line(argc, argv);
  try {
    if (run->parsed()) return cmd_run(run_args, union_score, command);
    if (sweep->parsed()) return cmd_sweep(sweep_args, sweep_file, command);
    if (cal->parsed()) return cmd_calibrate(cal_args, command);
    if (diag->parsed()) return cmd_diagnose(diag_args, d);
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
