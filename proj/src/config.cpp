#include "tempscone/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "tempscone/metrics.hpp"

namespace tempscone {
namespace {

using Setter = std::function<void(ExperimentSpec&, const std::string&)>;
using Getter = std::function<std::string(const ExperimentSpec&)>;

struct Field {
  std::string section;
  std::string key;
  Setter set;
  Getter get;  // empty for parse-only aliases
};

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> items;
  std::string item;
  std::istringstream in(text);
  while (std::getline(in, item, ',')) {
    item = trim(item);
    if (!item.empty()) items.push_back(item);
  }
  return items;
}

double to_double(const std::string& v) {
  const std::string s = trim(v);
  double out = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), out);
  if (s.empty() || res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw ConfigError("expected a number, got '" + v + "'");
  }
  return out;
}

template <typename Int>
Int to_int(const std::string& v) {
  const std::string s = trim(v);
  Int out = 0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), out);
  if (s.empty() || res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw ConfigError("expected an integer, got '" + v + "'");
  }
  return out;
}

std::vector<double> to_doubles(const std::string& v) {
  std::vector<double> out;
  for (const auto& item : split_list(v)) out.push_back(to_double(item));
  return out;
}

std::vector<int> to_ints(const std::string& v) {
  std::vector<int> out;
  for (const auto& item : split_list(v)) out.push_back(to_int<int>(item));
  return out;
}

template <typename T>
std::string join(const std::vector<T>& xs) {
  std::string out;
  for (const auto& x : xs) {
    if (!out.empty()) out += ", ";
    if constexpr (std::is_floating_point_v<T>) {
      out += format_double(x);
    } else {
      out += std::to_string(x);
    }
  }
  return out;
}

template <typename Enum>
struct EnumNames {
  std::vector<std::pair<Enum, std::string>> names;

  Enum parse(const std::string& v) const {
    const std::string s = trim(v);
    for (const auto& [e, n] : names)
      if (n == s) return e;
    std::string allowed;
    for (const auto& [e, n] : names) allowed += (allowed.empty() ? "" : ", ") + n;
    throw ConfigError("unknown value '" + s + "' (expected one of: " + allowed + ")");
  }
  std::string name(Enum e) const {
    for (const auto& [x, n] : names)
      if (x == e) return n;
    return "?";
  }
};

const EnumNames<Regime> kRegimes{{{Regime::Dynamic, "dynamic"}, {Regime::Distinct, "distinct"}}};
const EnumNames<Emit> kEmits{{{Emit::Csv, "csv"}, {Emit::Json, "json"}, {Emit::Both, "both"}}};
const EnumNames<ScoreKind> kScoreKinds{
    {{ScoreKind::MaxConfidence, "max_confidence"}, {ScoreKind::NegEntropy, "neg_entropy"}}};
const EnumNames<DeltaMode> kDeltaModes{
    {{DeltaMode::FitOnce, "fit_once"}, {DeltaMode::Refit, "refit"}, {DeltaMode::Fixed, "fixed"}}};

std::vector<Method> to_methods(const std::string& v) {
  std::vector<Method> out;
  for (const auto& item : split_list(v)) {
    try {
      out.push_back(parse_method(item));
    } catch (const std::invalid_argument& e) {
      throw ConfigError(e.what());
    }
  }
  return out;
}

std::string join_methods(const std::vector<Method>& ms) {
  std::string out;
  for (Method m : ms) out += (out.empty() ? "" : ", ") + to_string(m);
  return out;
}

#define TS_DOUBLE(section, key, member)                                               \
  Field {                                                                             \
    section, key, [](ExperimentSpec& s, const std::string& v) { member = to_double(v); }, \
        [](const ExperimentSpec& s) { return format_double(member); }                 \
  }
#define TS_INT(section, key, member)                                                       \
  Field {                                                                                  \
    section, key,                                                                          \
        [](ExperimentSpec& s, const std::string& v) { member = to_int<decltype(member)>(v); }, \
        [](const ExperimentSpec& s) { return std::to_string(member); }                      \
  }

const std::vector<Field>& fields() {
  static const std::vector<Field> table{
      {"experiment", "methods",
       [](ExperimentSpec& s, const std::string& v) { s.methods = to_methods(v); },
       [](const ExperimentSpec& s) { return join_methods(s.methods); }},
      {"experiment", "method",
       [](ExperimentSpec& s, const std::string& v) { s.methods = to_methods(v); }, {}},
      {"experiment", "seeds",
       [](ExperimentSpec& s, const std::string& v) { s.seeds = parse_seed_list(v); },
       [](const ExperimentSpec& s) { return join(s.seeds); }},
      {"experiment", "output_dir",
       [](ExperimentSpec& s, const std::string& v) { s.output_dir = trim(v); },
       [](const ExperimentSpec& s) { return s.output_dir; }},
      {"experiment", "emit",
       [](ExperimentSpec& s, const std::string& v) { s.emit = kEmits.parse(v); },
       [](const ExperimentSpec& s) { return kEmits.name(s.emit); }},

      TS_INT("stream", "num_timesteps", s.base.stream.num_timesteps),
      TS_INT("stream", "num_classes", s.base.stream.num_classes),
      TS_INT("stream", "input_dim", s.base.stream.input_dim),
      {"stream", "regime",
       [](ExperimentSpec& s, const std::string& v) { s.base.stream.regime = kRegimes.parse(v); },
       [](const ExperimentSpec& s) { return kRegimes.name(s.base.stream.regime); }},
      {"stream", "pi_cov",
       [](ExperimentSpec& s, const std::string& v) { s.base.stream.pi_cov_schedule = to_doubles(v); },
       [](const ExperimentSpec& s) { return join(s.base.stream.pi_cov_schedule); }},
      {"stream", "pi_sem",
       [](ExperimentSpec& s, const std::string& v) { s.base.stream.pi_sem_schedule = to_doubles(v); },
       [](const ExperimentSpec& s) { return join(s.base.stream.pi_sem_schedule); }},
      {"stream", "corruption_sigma",
       [](ExperimentSpec& s, const std::string& v) {
         s.base.stream.corruption_sigma_schedule = to_doubles(v);
       },
       [](const ExperimentSpec& s) { return join(s.base.stream.corruption_sigma_schedule); }},
      TS_DOUBLE("stream", "drift_angle", s.base.stream.drift_angle_per_step),
      TS_INT("stream", "samples_per_split", s.base.stream.samples_per_split),
      TS_DOUBLE("stream", "class_cov_scale", s.base.stream.class_cov_scale),

      TS_DOUBLE("optimizer", "base_lr", s.base.optimizer.base_lr),
      TS_DOUBLE("optimizer", "momentum", s.base.optimizer.momentum),
      TS_DOUBLE("optimizer", "weight_decay", s.base.optimizer.weight_decay),
      TS_INT("optimizer", "batch_size", s.base.optimizer.batch_size),
      {"optimizer", "decay_milestones",
       [](ExperimentSpec& s, const std::string& v) {
         s.base.optimizer.decay_milestones = to_doubles(v);
       },
       [](const ExperimentSpec& s) { return join(s.base.optimizer.decay_milestones); }},
      TS_DOUBLE("optimizer", "decay_factor", s.base.optimizer.decay_factor),
      TS_DOUBLE("optimizer", "distinct_lr_multiplier", s.base.distinct_lr_multiplier),

      TS_DOUBLE("hyper", "eta", s.base.hyper.eta),
      TS_DOUBLE("hyper", "lambda_out", s.base.hyper.lambda_out),
      TS_DOUBLE("hyper", "lambda_in", s.base.hyper.lambda_in_penalty),
      TS_DOUBLE("hyper", "lambda_base", s.base.hyper.lambda_base),
      {"hyper", "lambda_temp",
       [](ExperimentSpec& s, const std::string& v) { s.base.hyper.lambda_base = to_double(v); },
       {}},
      TS_DOUBLE("hyper", "delta_max", s.base.hyper.delta_max),
      TS_DOUBLE("hyper", "epsilon", s.base.hyper.epsilon),
      TS_DOUBLE("hyper", "delta", s.base.hyper.delta),
      TS_DOUBLE("hyper", "omega", s.base.hyper.omega),
      TS_DOUBLE("hyper", "fpr_cutoff", s.base.hyper.fpr_cutoff),
      TS_DOUBLE("hyper", "ce_tol", s.base.hyper.ce_tol),
      TS_DOUBLE("hyper", "lr_lambda", s.base.hyper.lr_lambda),
      TS_DOUBLE("hyper", "alpha", s.base.hyper.alpha),
      TS_DOUBLE("hyper", "tau", s.base.hyper.tau),
      {"hyper", "score_kind",
       [](ExperimentSpec& s, const std::string& v) { s.base.hyper.score_kind = kScoreKinds.parse(v); },
       [](const ExperimentSpec& s) { return kScoreKinds.name(s.base.hyper.score_kind); }},
      {"hyper", "delta_mode",
       [](ExperimentSpec& s, const std::string& v) { s.base.hyper.delta_mode = kDeltaModes.parse(v); },
       [](const ExperimentSpec& s) { return kDeltaModes.name(s.base.hyper.delta_mode); }},

      TS_INT("train", "epochs_per_timestep", s.base.epochs_per_timestep),
      TS_INT("train", "probe_size", s.base.probe_size),
      {"train", "hidden_widths",
       [](ExperimentSpec& s, const std::string& v) { s.base.hidden_widths = to_ints(v); },
       [](const ExperimentSpec& s) { return join(s.base.hidden_widths); }},
  };
  return table;
}

#undef TS_DOUBLE
#undef TS_INT

const Field* find_field(const std::string& section, const std::string& key) {
  for (const auto& f : fields())
    if (f.section == section && f.key == key) return &f;
  return nullptr;
}

void broadcast(std::vector<double>& schedule, int num_timesteps) {
  if (schedule.size() == 1 && num_timesteps > 1) {
    schedule.assign(static_cast<std::size_t>(num_timesteps), schedule.front());
  }
}

}  // namespace

void ExperimentSpec::validate() const {
  if (methods.empty()) throw ConfigError("experiment.methods: at least one method is required");
  if (seeds.empty()) throw ConfigError("experiment.seeds: at least one seed is required");
  if (output_dir.empty()) throw ConfigError("experiment.output_dir: must not be empty");
  try {
    base.validate();
  } catch (const ConfigError&) {
    throw;
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("invalid configuration: ") + e.what());
  }
}

RunConfig ExperimentSpec::run_config(Method method, std::uint64_t seed) const {
  RunConfig cfg = base;
  cfg.method = method;
  cfg.seed = seed;
  cfg.stream.seed = seed;
  return cfg;
}

std::vector<RunConfig> ExperimentSpec::run_configs() const {
  std::vector<RunConfig> out;
  for (Method m : methods) out.push_back(run_config(m, seeds.front()));
  return out;
}

std::vector<std::uint64_t> parse_seed_list(const std::string& text) {
  std::vector<std::uint64_t> seeds;
  for (const auto& item : split_list(text)) seeds.push_back(to_int<std::uint64_t>(item));
  if (seeds.empty()) throw ConfigError("seed list is empty");
  return seeds;
}

ExperimentSpec parse_config_text(const std::string& text) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  std::istringstream in(text);
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError("line " + std::to_string(e.line()) + ": " + e.message());
  }

  ExperimentSpec spec;
  for (const auto& [section, body] : tree) {
    if (body.empty()) {
      throw ConfigError(section + ": keys must appear inside a [section]");
    }
    for (const auto& [key, value] : body) {
      const std::string path = section + "." + key;
      const Field* f = find_field(section, key);
      if (f == nullptr) throw ConfigError(path + ": unknown key");
      try {
        f->set(spec, value.data());
      } catch (const std::exception& e) {
        throw ConfigError(path + ": " + e.what());
      }
    }
  }
  broadcast(spec.base.stream.pi_cov_schedule, spec.base.stream.num_timesteps);
  broadcast(spec.base.stream.pi_sem_schedule, spec.base.stream.num_timesteps);
  broadcast(spec.base.stream.corruption_sigma_schedule, spec.base.stream.num_timesteps);
  spec.validate();
  return spec;
}

ExperimentSpec parse_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  std::ostringstream text;
  text << in.rdbuf();
  return parse_config_text(text.str());
}

std::string serialize_config(const ExperimentSpec& spec) {
  std::string out;
  std::string current;
  for (const auto& f : fields()) {
    if (!f.get) continue;
    if (f.section != current) {
      if (!current.empty()) out += '\n';
      out += "[" + f.section + "]\n";
      current = f.section;
    }
    out += f.key + " = " + f.get(spec) + "\n";
  }
  return out;
}

}  // namespace tempscone
