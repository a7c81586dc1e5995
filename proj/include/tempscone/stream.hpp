#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "tempscone/model.hpp"

namespace tempscone {

enum class Regime { Dynamic, Distinct };

/// Synthetic open-world stream. Empty schedules fall back to the defaults
/// (pi_cov = 0.3, pi_sem = 0.2, corruption sigma rising linearly 0 -> 1).
struct StreamConfig {
  int num_timesteps = 10;
  int num_classes = 4;
  int input_dim = 8;
  Regime regime = Regime::Dynamic;
  std::vector<double> pi_cov_schedule;
  std::vector<double> pi_sem_schedule;
  std::vector<double> corruption_sigma_schedule;
  double drift_angle_per_step = 0.15;  // radians
  int samples_per_split = 1024;
  double class_cov_scale = 1.0;
  std::uint64_t seed = 0;

  double pi_cov(int t) const;
  double pi_sem(int t) const;
  double corruption_sigma(int t) const;

  void validate() const;
  bool operator==(const StreamConfig&) const = default;
};

inline constexpr double kIdRadius = 4.0;
inline constexpr double kSemRadius = 8.0;

struct DomainSnapshot {
  int t = 0;
  std::vector<Vector> id_class_means;
  std::vector<Vector> sem_class_means;
  double class_cov_scale = 1.0;
  double corruption_sigma = 0.0;

  int num_classes() const { return static_cast<int>(id_class_means.size()); }
  int input_dim() const {
    return id_class_means.empty() ? 0 : static_cast<int>(id_class_means.front().size());
  }
  /// Smallest distance between any semantic mean and any ID mean.
  double min_sem_id_distance() const;
};

/// Deterministic sub-generator keyed on (seed, t, purpose).
std::mt19937_64 sub_rng(std::uint64_t seed, int t, std::uint32_t purpose);

DomainSnapshot make_snapshot(const StreamConfig& cfg, int t);

struct LabeledSet {
  Matrix features;
  std::vector<int> labels;

  Eigen::Index size() const { return features.rows(); }
};

/// Balanced isotropic Gaussian blobs: label i is i mod K.
LabeledSet sample_labeled(const DomainSnapshot& snap, int n, std::mt19937_64& rng);

/// Adds i.i.d. N(0, sigma^2) noise to every coordinate.
Matrix corrupt(const Matrix& features, double sigma, std::mt19937_64& rng);

enum class Provenance { ID, Cov, Sem };

/// Wild mixture sample. Provenance and labels are for evaluation code only;
/// training code receives WildPools.
struct WildBatch {
  Matrix features;
  std::vector<Provenance> provenance;
  std::vector<int> labels;  // -1 for semantic samples
  int count_id = 0;
  int count_cov = 0;
  int count_sem = 0;
};

WildBatch sample_wild(const DomainSnapshot& snap, int m, double pi_cov,
                      double pi_sem, std::mt19937_64& rng);

/// Unlabelled feature pools of a wild sample, one per source. Carries no
/// labels and no per-row tags.
struct WildPools {
  Matrix id;
  Matrix cov;
  Matrix sem;
};

WildPools strip_labels(const WildBatch& batch);

/// Which split of a timestep a sample came from. Every split is drawn from
/// its own sub-generator, so splits never share samples.
enum class SplitTag : std::uint32_t {
  Train = 1,
  Wild = 2,
  Validation = 3,
  ProbeId = 4,
  ProbeCov = 5,
  TestId = 6,
  TestCov = 7,
  TestSem = 8,
};

bool is_test_split(SplitTag tag);

struct TaggedMatrix {
  SplitTag tag;
  Matrix features;
};

struct TaggedLabeled {
  SplitTag tag;
  LabeledSet data;
};

/// Held-out evaluation splits of one timestep.
struct EvalSplits {
  int t = 0;
  TaggedLabeled id;
  TaggedLabeled cov;
  TaggedMatrix sem;
};

/// Everything the trainer consumes for one timestep.
struct TrainingSplits {
  int t = 0;
  TaggedLabeled train;
  WildPools wild;
  TaggedLabeled validation;
  TaggedMatrix probe_id;
  TaggedMatrix probe_cov;
};

TrainingSplits make_training_splits(const StreamConfig& cfg,
                                    const DomainSnapshot& snap, int probe_size);
EvalSplits make_eval_splits(const StreamConfig& cfg, const DomainSnapshot& snap);

/// Column layout of a user-supplied feature table.
struct TableSchema {
  std::vector<std::string> feature_columns;
  std::string label_column;
  std::optional<std::string> split_column;
  int num_classes = 2;
};

struct Dataset {
  LabeledSet samples;
  std::vector<std::string> splits;  // empty unless the schema has a split column
};

/// Reads a comma-separated table with a one-line header.
Dataset ingest_table(const std::string& path, const TableSchema& schema);

}  // namespace tempscone
