#pragma once

#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace audsim {

enum class StoppingMode { kKnownK, kResidualThreshold };

enum class FusionStrategy {
  kSingleChannel,
  kStrict,
  kIterative,
  kSuperChannel,
  kIndependentUnion,
};

enum class ChannelAssignment { kRoundRobin, kRandomBalanced };
enum class PilotMode { kPerExperiment, kPerTrial };
enum class IterativeOrder { kAscending, kRandom };

/// All scalar experiment parameters. Immutable once validated; shared
/// read-only across trial workers.
struct ExperimentConfig {
  int users_per_channel_base = 256;  // Q, single-copy per-channel user count
  int num_channels = 1;              // F
  int num_copies = 1;                // C
  int num_antennas = 1;              // M
  int pilot_length = 8;              // T_p, symbols
  double activation_prob = 1.0 / 256.0;
  double snr_db = 20.0;
  StoppingMode stopping = StoppingMode::kKnownK;
  double epsilon = 0.0;  // residual threshold; 0 means "to be calibrated"
  FusionStrategy fusion = FusionStrategy::kSingleChannel;
  long num_trials = 10000;
  std::uint64_t master_seed = 1;

  ChannelAssignment channel_assignment = ChannelAssignment::kRoundRobin;
  PilotMode pilot_mode = PilotMode::kPerExperiment;
  IterativeOrder iterative_order = IterativeOrder::kAscending;

  // Q' = Q*C users share each channel.
  int per_channel_users() const { return users_per_channel_base * num_copies; }
  long total_users() const {
    return static_cast<long>(users_per_channel_base) * num_channels;
  }
  double snr_linear() const { return std::pow(10.0, snr_db / 10.0); }
};

struct ValidationIssue {
  std::string field;
  std::string message;
};

struct ValidationResult {
  std::optional<ExperimentConfig> config;  // normalized config when valid
  std::vector<ValidationIssue> errors;     // every violated invariant
  std::vector<std::string> warnings;
  bool ok() const { return errors.empty(); }
};

namespace detail {

inline std::string trim(std::string_view s) {
  const char* ws = " \t\r\n";
  auto b = s.find_first_not_of(ws);
  if (b == std::string_view::npos) return {};
  auto e = s.find_last_not_of(ws);
  return std::string(s.substr(b, e - b + 1));
}

inline bool parse_long(const std::string& s, long& out) {
  const char* b = s.data();
  const char* e = s.data() + s.size();
  auto [p, ec] = std::from_chars(b, e, out);
  return ec == std::errc() && p == e;
}

inline bool parse_u64(const std::string& s, std::uint64_t& out) {
  const char* b = s.data();
  const char* e = s.data() + s.size();
  auto [p, ec] = std::from_chars(b, e, out);
  return ec == std::errc() && p == e;
}

inline bool parse_double(const std::string& s, double& out) {
  if (s.empty()) return false;
  try {
    std::size_t pos = 0;
    out = std::stod(s, &pos);
    return pos == s.size();
  } catch (...) {
    return false;
  }
}

}  // namespace detail

inline std::string to_string(StoppingMode m) {
  return m == StoppingMode::kKnownK ? "known_k" : "residual";
}

inline std::string to_string(FusionStrategy f) {
  switch (f) {
    case FusionStrategy::kSingleChannel: return "single_channel";
    case FusionStrategy::kStrict: return "strict";
    case FusionStrategy::kIterative: return "iterative";
    case FusionStrategy::kSuperChannel: return "super_channel";
    case FusionStrategy::kIndependentUnion: return "independent_union";
  }
  return "?";
}

inline std::string to_string(ChannelAssignment a) {
  return a == ChannelAssignment::kRoundRobin ? "round_robin" : "random_balanced";
}

inline std::string to_string(PilotMode m) {
  return m == PilotMode::kPerExperiment ? "per_experiment" : "per_trial";
}

inline std::string to_string(IterativeOrder o) {
  return o == IterativeOrder::kAscending ? "ascending" : "random";
}

inline std::optional<StoppingMode> stopping_from_string(const std::string& s) {
  if (s == "known_k") return StoppingMode::kKnownK;
  if (s == "residual") return StoppingMode::kResidualThreshold;
  return std::nullopt;
}

inline std::optional<FusionStrategy> fusion_from_string(const std::string& s) {
  if (s == "single_channel") return FusionStrategy::kSingleChannel;
  if (s == "strict") return FusionStrategy::kStrict;
  if (s == "iterative") return FusionStrategy::kIterative;
  if (s == "super_channel") return FusionStrategy::kSuperChannel;
  if (s == "independent_union") return FusionStrategy::kIndependentUnion;
  return std::nullopt;
}

/// Sets one config field from its textual value. Field names match the
/// experiment-file keys and the CLI flags one-to-one. Returns an error
/// message on unknown field or malformed value.
inline std::optional<std::string> set_field(ExperimentConfig& cfg,
                                            const std::string& name,
                                            const std::string& value) {
  auto bad = [&](const char* what) {
    return std::optional<std::string>("field '" + name + "': expected " + what +
                                      ", got '" + value + "'");
  };
  auto set_int = [&](int& dst) -> std::optional<std::string> {
    long v;
    if (!detail::parse_long(value, v) || v < -(1L << 30) || v > (1L << 30))
      return bad("integer");
    dst = static_cast<int>(v);
    return std::nullopt;
  };

  if (name == "users_per_channel_base") return set_int(cfg.users_per_channel_base);
  if (name == "num_channels") return set_int(cfg.num_channels);
  if (name == "num_copies") return set_int(cfg.num_copies);
  if (name == "num_antennas") return set_int(cfg.num_antennas);
  if (name == "pilot_length") return set_int(cfg.pilot_length);
  if (name == "activation_prob") {
    if (!detail::parse_double(value, cfg.activation_prob)) return bad("real");
    return std::nullopt;
  }
  if (name == "snr_db") {
    if (!detail::parse_double(value, cfg.snr_db)) return bad("real");
    return std::nullopt;
  }
  if (name == "stopping") {
    auto m = stopping_from_string(value);
    if (!m) return bad("known_k|residual");
    cfg.stopping = *m;
    return std::nullopt;
  }
  if (name == "epsilon") {
    if (!detail::parse_double(value, cfg.epsilon)) return bad("real");
    return std::nullopt;
  }
  if (name == "fusion") {
    auto f = fusion_from_string(value);
    if (!f) return bad("single_channel|strict|iterative|super_channel|independent_union");
    cfg.fusion = *f;
    return std::nullopt;
  }
  if (name == "num_trials") {
    if (!detail::parse_long(value, cfg.num_trials)) return bad("integer");
    return std::nullopt;
  }
  if (name == "master_seed") {
    if (!detail::parse_u64(value, cfg.master_seed)) return bad("unsigned integer");
    return std::nullopt;
  }
  if (name == "channel_assignment") {
    if (value == "round_robin") cfg.channel_assignment = ChannelAssignment::kRoundRobin;
    else if (value == "random_balanced") cfg.channel_assignment = ChannelAssignment::kRandomBalanced;
    else return bad("round_robin|random_balanced");
    return std::nullopt;
  }
  if (name == "pilot_mode") {
    if (value == "per_experiment") cfg.pilot_mode = PilotMode::kPerExperiment;
    else if (value == "per_trial") cfg.pilot_mode = PilotMode::kPerTrial;
    else return bad("per_experiment|per_trial");
    return std::nullopt;
  }
  if (name == "iterative_order") {
    if (value == "ascending") cfg.iterative_order = IterativeOrder::kAscending;
    else if (value == "random") cfg.iterative_order = IterativeOrder::kRandom;
    else return bad("ascending|random");
    return std::nullopt;
  }
  return "unknown field '" + name + "'";
}

namespace detail {
inline std::string fmt_double(double v) {
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  (void)ec;
  return std::string(buf, p);
}
}  // namespace detail

/// Textual value of a field, inverse of set_field.
inline std::string get_field(const ExperimentConfig& cfg, const std::string& name) {
  if (name == "users_per_channel_base") return std::to_string(cfg.users_per_channel_base);
  if (name == "num_channels") return std::to_string(cfg.num_channels);
  if (name == "num_copies") return std::to_string(cfg.num_copies);
  if (name == "num_antennas") return std::to_string(cfg.num_antennas);
  if (name == "pilot_length") return std::to_string(cfg.pilot_length);
  if (name == "activation_prob") return detail::fmt_double(cfg.activation_prob);
  if (name == "snr_db") return detail::fmt_double(cfg.snr_db);
  if (name == "stopping") return to_string(cfg.stopping);
  if (name == "epsilon") return detail::fmt_double(cfg.epsilon);
  if (name == "fusion") return to_string(cfg.fusion);
  if (name == "num_trials") return std::to_string(cfg.num_trials);
  if (name == "master_seed") return std::to_string(cfg.master_seed);
  if (name == "channel_assignment") return to_string(cfg.channel_assignment);
  if (name == "pilot_mode") return to_string(cfg.pilot_mode);
  if (name == "iterative_order") return to_string(cfg.iterative_order);
  return {};
}

inline const std::vector<std::string>& config_field_names() {
  static const std::vector<std::string> names = {
      "users_per_channel_base", "num_channels", "num_copies", "num_antennas",
      "pilot_length", "activation_prob", "snr_db", "stopping", "epsilon",
      "fusion", "num_trials", "master_seed", "channel_assignment",
      "pilot_mode", "iterative_order"};
  return names;
}

/// Checks every invariant and returns all violations, not just the first.
/// single_channel fusion normalizes F and C to 1 (with a warning when it
/// actually changed something).
inline ValidationResult validate(ExperimentConfig cfg) {
  ValidationResult r;
  auto err = [&](const char* field, std::string msg) {
    r.errors.push_back({field, std::move(msg)});
  };

  if (cfg.fusion == FusionStrategy::kSingleChannel &&
      (cfg.num_channels != 1 || cfg.num_copies != 1)) {
    r.warnings.push_back(
        "fusion=single_channel forces num_channels=1 and num_copies=1");
    cfg.num_channels = 1;
    cfg.num_copies = 1;
  }

  if (cfg.users_per_channel_base < 1)
    err("users_per_channel_base", "must be a positive integer");
  if (cfg.num_channels < 1) err("num_channels", "must be a positive integer");
  if (cfg.num_copies < 1) err("num_copies", "must be a positive integer");
  if (cfg.num_antennas < 1) err("num_antennas", "must be a positive integer");
  if (cfg.pilot_length < 1) err("pilot_length", "must be a positive integer");
  if (!(cfg.activation_prob > 0.0 && cfg.activation_prob < 1.0))
    err("activation_prob", "must lie in (0,1)");
  if (cfg.num_trials < 1) err("num_trials", "must be a positive integer");
  if (cfg.num_copies > cfg.num_channels)
    err("num_copies", "C <= F violated (num_copies must not exceed num_channels)");
  if (cfg.num_channels == 1 && cfg.fusion != FusionStrategy::kSingleChannel)
    err("fusion", "num_channels=1 requires fusion=single_channel");
  if (cfg.num_channels == 1 && cfg.num_copies != 1)
    err("num_copies", "num_channels=1 requires num_copies=1");
  if (cfg.epsilon < 0.0) err("epsilon", "must be non-negative");

  if (r.errors.empty()) {
    if (cfg.per_channel_users() > cfg.pilot_length) {
      r.warnings.push_back(
          "under-determined regime: per-channel users Q'=" +
          std::to_string(cfg.per_channel_users()) +
          " exceeds pilot_length=" + std::to_string(cfg.pilot_length));
    }
    r.config = cfg;
  }
  return r;
}

struct SweepAxis {
  std::string field;
  std::vector<std::string> values;  // textual, applied through set_field
};

/// A base config plus sweep axes and an optional epsilon calibration grid.
struct SweepSpec {
  ExperimentConfig base;
  std::vector<SweepAxis> axes;
  std::vector<double> epsilon_grid;  // explicit grid; empty = none
  bool default_epsilon_grid = false;  // "epsilon_grid = default"
  long calibration_trials = 1500;
};

struct ExpandResult {
  std::vector<ExperimentConfig> configs;
  // per cell: the (axis, value) pairs that produced it, and a short label
  std::vector<std::vector<std::pair<std::string, std::string>>> cell_axes;
  std::vector<std::string> cell_descriptions;
  std::vector<std::string> errors;  // non-empty aborts expansion
  bool ok() const { return errors.empty(); }
};

/// Cartesian product of axis values over the base config. First axis is the
/// outermost loop; values keep their listed order. Every produced config is
/// validated; a failing cell aborts with the offending cell identified.
inline ExpandResult expand(const SweepSpec& spec) {
  ExpandResult out;
  for (const auto& ax : spec.axes) {
    if (ax.values.empty()) {
      out.errors.push_back("sweep axis '" + ax.field + "' has no values");
      return out;
    }
  }

  const std::size_t n_axes = spec.axes.size();
  std::size_t total = 1;
  for (const auto& ax : spec.axes) total *= ax.values.size();

  // stride[a] = product of sizes of all later axes; first axis outermost
  std::vector<std::size_t> stride(n_axes, 1);
  for (std::size_t a = n_axes; a-- > 1;)
    stride[a - 1] = stride[a] * spec.axes[a].values.size();

  for (std::size_t cell = 0; cell < total; ++cell) {
    ExperimentConfig cfg = spec.base;
    std::string cell_desc;
    std::vector<std::pair<std::string, std::string>> axes_of_cell;
    std::optional<std::string> apply_err;
    for (std::size_t a = 0; a < n_axes && !apply_err; ++a) {
      const auto& ax = spec.axes[a];
      const auto& v = ax.values[(cell / stride[a]) % ax.values.size()];
      if (!cell_desc.empty()) cell_desc += ", ";
      cell_desc += ax.field + "=" + v;
      axes_of_cell.emplace_back(ax.field, v);
      apply_err = set_field(cfg, ax.field, v);
    }
    if (apply_err) {
      out.errors.push_back("cell (" + cell_desc + "): " + *apply_err);
      return out;
    }
    auto vr = validate(cfg);
    if (!vr.ok()) {
      std::string msg = "cell (" + cell_desc + ") failed validation:";
      for (const auto& e : vr.errors) msg += " [" + e.field + "] " + e.message + ";";
      out.errors.push_back(msg);
      return out;
    }
    out.configs.push_back(*vr.config);
    out.cell_axes.push_back(std::move(axes_of_cell));
    out.cell_descriptions.push_back(cell_desc.empty() ? "base" : cell_desc);
  }
  return out;
}

struct ParseResult {
  std::optional<SweepSpec> spec;
  std::vector<std::string> errors;
  bool ok() const { return errors.empty(); }
};

/// Parses the declarative experiment format:
///
///   # comment
///   key = value
///   sweep key = [v1, v2, v3]
///   epsilon_grid = [0.5, 1.0, 2.0]   (or: epsilon_grid = default)
///   calibration_trials = 2000
///
/// Unknown keys and duplicate keys are errors.
inline ParseResult parse_experiment_text(const std::string& text) {
  ParseResult out;
  SweepSpec spec;
  std::vector<std::string> seen_keys;
  std::vector<std::string> seen_axes;

  auto seen = [](const std::vector<std::string>& v, const std::string& k) {
    for (const auto& s : v)
      if (s == k) return true;
    return false;
  };
  auto split_list = [](const std::string& body) {
    std::vector<std::string> items;
    std::string cur;
    for (char ch : body) {
      if (ch == ',' || ch == ' ' || ch == '\t') {
        if (!cur.empty()) items.push_back(cur);
        cur.clear();
      } else {
        cur += ch;
      }
    }
    if (!cur.empty()) items.push_back(cur);
    return items;
  };

  std::istringstream in(text);
  std::string raw;
  int lineno = 0;
  while (std::getline(in, raw)) {
    ++lineno;
    auto hash = raw.find('#');
    if (hash != std::string::npos) raw.erase(hash);
    std::string line = detail::trim(raw);
    if (line.empty()) continue;
    auto where = [&] { return "line " + std::to_string(lineno) + ": "; };

    auto eq = line.find('=');
    if (eq == std::string::npos) {
      out.errors.push_back(where() + "expected 'key = value'");
      continue;
    }
    std::string key = detail::trim(line.substr(0, eq));
    std::string value = detail::trim(line.substr(eq + 1));

    bool is_sweep = false;
    if (key.rfind("sweep ", 0) == 0 || key.rfind("sweep\t", 0) == 0) {
      is_sweep = true;
      key = detail::trim(key.substr(6));
    }

    if (is_sweep) {
      if (value.size() < 2 || value.front() != '[' || value.back() != ']') {
        out.errors.push_back(where() + "sweep values must be a [list]");
        continue;
      }
      if (seen(seen_axes, key)) {
        out.errors.push_back(where() + "duplicate sweep axis '" + key + "'");
        continue;
      }
      auto values = split_list(value.substr(1, value.size() - 2));
      if (values.empty()) {
        out.errors.push_back(where() + "sweep axis '" + key + "' is empty");
        continue;
      }
      // probe field name and value syntax against a scratch config
      ExperimentConfig probe = spec.base;
      bool bad = false;
      for (const auto& v : values) {
        if (auto e = set_field(probe, key, v)) {
          out.errors.push_back(where() + *e);
          bad = true;
          break;
        }
      }
      if (bad) continue;
      seen_axes.push_back(key);
      spec.axes.push_back({key, values});
      continue;
    }

    if (seen(seen_keys, key)) {
      out.errors.push_back(where() + "duplicate key '" + key + "'");
      continue;
    }
    seen_keys.push_back(key);

    if (key == "epsilon_grid") {
      if (value == "default") {
        spec.default_epsilon_grid = true;
        continue;
      }
      if (value.size() < 2 || value.front() != '[' || value.back() != ']') {
        out.errors.push_back(where() + "epsilon_grid must be a [list] or 'default'");
        continue;
      }
      for (const auto& v : split_list(value.substr(1, value.size() - 2))) {
        double d;
        if (!detail::parse_double(v, d) || d < 0) {
          out.errors.push_back(where() + "bad epsilon_grid entry '" + v + "'");
          break;
        }
        spec.epsilon_grid.push_back(d);
      }
      continue;
    }
    if (key == "calibration_trials") {
      long n;
      if (!detail::parse_long(value, n) || n < 1) {
        out.errors.push_back(where() + "calibration_trials must be a positive integer");
        continue;
      }
      spec.calibration_trials = n;
      continue;
    }

    if (auto e = set_field(spec.base, key, value)) {
      out.errors.push_back(where() + *e);
    }
  }

  if (out.errors.empty()) out.spec = std::move(spec);
  return out;
}

inline ParseResult parse_experiment_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) {
    ParseResult r;
    r.errors.push_back("cannot open experiment file '" + path + "'");
    return r;
  }
  std::ostringstream ss;
  ss << f.rdbuf();
  return parse_experiment_text(ss.str());
}

/// Echo of a config in the experiment-file format (results carry this in
/// their manifest).
inline std::string serialize_config(const ExperimentConfig& cfg) {
  std::string out;
  for (const auto& name : config_field_names())
    out += name + " = " + get_field(cfg, name) + "\n";
  return out;
}

}  // namespace audsim
