#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tempscone/trainer.hpp"

namespace tempscone {

enum class Emit { Csv, Json, Both };

/// A set of runs to execute: every method over every seed, sharing one base
/// configuration.
struct ExperimentSpec {
  RunConfig base;
  std::vector<Method> methods{Method::TempSconeATC};
  std::vector<std::uint64_t> seeds{0};
  std::string output_dir = "results";
  Emit emit = Emit::Both;

  void validate() const;
  /// The base configuration specialised to `method` and `seed` (the seed
  /// drives both the stream and the model).
  RunConfig run_config(Method method, std::uint64_t seed) const;
  /// One configuration per method, at the first seed.
  std::vector<RunConfig> run_configs() const;

  bool operator==(const ExperimentSpec&) const = default;
};

/// Thrown for unknown keys, malformed values and invariant violations.
/// what() starts with the offending key path when there is one.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

ExperimentSpec parse_config_text(const std::string& text);
ExperimentSpec parse_config(const std::string& path);

/// Writes every field (defaults included) in the grammar parse_config reads.
std::string serialize_config(const ExperimentSpec& spec);

std::vector<std::uint64_t> parse_seed_list(const std::string& text);

}  // namespace tempscone
