#include "tempscone/stream.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>
#include <stdexcept>

namespace tempscone {
namespace {

constexpr std::uint32_t kSnapshotPurpose = 100;

double schedule_at(const std::vector<double>& schedule, int t, double fallback) {
  return schedule.empty() ? fallback : schedule.at(static_cast<std::size_t>(t));
}

Vector circle_point(double radius, double angle, int dim) {
  Vector v = Vector::Zero(dim);
  v(0) = radius * std::cos(angle);
  v(1) = radius * std::sin(angle);
  return v;
}

Matrix gaussian_matrix(Eigen::Index rows, Eigen::Index cols, double sigma,
                       std::mt19937_64& rng) {
  Matrix m(rows, cols);
  if (sigma == 0.0) {
    m.setZero();
    return m;
  }
  std::normal_distribution<double> normal(0.0, sigma);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = normal(rng);
  return m;
}

// Draws n points around `means`, choosing the mean of row i by `pick(i)`.
template <typename Pick>
Matrix blob_rows(const std::vector<Vector>& means, int n, double scale,
                 std::mt19937_64& rng, Pick pick) {
  const auto dim = means.front().size();
  Matrix x = gaussian_matrix(n, dim, scale, rng);
  for (int i = 0; i < n; ++i) x.row(i) += means[static_cast<std::size_t>(pick(i))].transpose();
  return x;
}

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return std::string(s.substr(first, last - first + 1));
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) cells.push_back(trim(cell));
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

}  // namespace

double StreamConfig::pi_cov(int t) const { return schedule_at(pi_cov_schedule, t, 0.3); }

double StreamConfig::pi_sem(int t) const { return schedule_at(pi_sem_schedule, t, 0.2); }

double StreamConfig::corruption_sigma(int t) const {
  const double linear =
      num_timesteps > 1 ? static_cast<double>(t) / (num_timesteps - 1) : 0.0;
  return schedule_at(corruption_sigma_schedule, t, linear);
}

void StreamConfig::validate() const {
  auto require = [](bool ok, const std::string& msg) {
    if (!ok) throw std::invalid_argument(msg);
  };
  require(num_timesteps >= 1, "num_timesteps must be >= 1");
  require(num_classes >= 2, "num_classes must be >= 2");
  require(input_dim >= 2, "input_dim must be >= 2");
  require(samples_per_split >= 1, "samples_per_split must be >= 1");
  require(class_cov_scale > 0.0, "class_cov_scale must be positive");
  require(std::isfinite(drift_angle_per_step), "drift_angle_per_step must be finite");
  const auto t_count = static_cast<std::size_t>(num_timesteps);
  for (const auto* s : {&pi_cov_schedule, &pi_sem_schedule, &corruption_sigma_schedule}) {
    require(s->empty() || s->size() == t_count,
            "schedules must have one entry per timestep");
  }
  for (int t = 0; t < num_timesteps; ++t) {
    const double pc = pi_cov(t);
    const double ps = pi_sem(t);
    require(pc >= 0.0 && pc < 1.0, "pi_cov must lie in [0, 1)");
    require(ps >= 0.0 && ps < 1.0, "pi_sem must lie in [0, 1)");
    require(pc + ps < 1.0, "pi_cov + pi_sem must be < 1 at every timestep");
    require(corruption_sigma(t) >= 0.0, "corruption sigma must be non-negative");
  }
}

double DomainSnapshot::min_sem_id_distance() const {
  double best = std::numeric_limits<double>::infinity();
  for (const auto& s : sem_class_means)
    for (const auto& m : id_class_means) best = std::min(best, (s - m).norm());
  return best;
}

std::mt19937_64 sub_rng(std::uint64_t seed, int t, std::uint32_t purpose) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed & 0xffffffffu),
                    static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(t), purpose};
  return std::mt19937_64(seq);
}

DomainSnapshot make_snapshot(const StreamConfig& cfg, int t) {
  if (t < 0 || t >= cfg.num_timesteps) {
    throw std::out_of_range("timestep " + std::to_string(t) + " outside [0, " +
                            std::to_string(cfg.num_timesteps) + ")");
  }
  const int k = cfg.num_classes;
  const int d = cfg.input_dim;
  const double two_pi = 2.0 * std::numbers::pi;
  std::uniform_real_distribution<double> angle(0.0, two_pi);

  // Dynamic: one base draw, rotated by t * drift. Distinct: a fresh draw
  // (phase and class-to-position assignment) for every t.
  auto rng = sub_rng(cfg.seed, cfg.regime == Regime::Dynamic ? 0 : t, kSnapshotPurpose);
  double phase = angle(rng);
  std::vector<int> slot(static_cast<std::size_t>(k));
  for (int c = 0; c < k; ++c) slot[static_cast<std::size_t>(c)] = c;
  if (cfg.regime == Regime::Distinct) {
    std::shuffle(slot.begin(), slot.end(), rng);
  } else {
    phase += t * cfg.drift_angle_per_step;
  }

  DomainSnapshot snap;
  snap.t = t;
  snap.class_cov_scale = cfg.class_cov_scale;
  snap.corruption_sigma = cfg.corruption_sigma(t);
  for (int c = 0; c < k; ++c) {
    const double a = phase + two_pi * slot[static_cast<std::size_t>(c)] / k;
    snap.id_class_means.push_back(circle_point(kIdRadius, a, d));
    snap.sem_class_means.push_back(circle_point(kSemRadius, a + std::numbers::pi / k, d));
  }
  // The radii differ by 4, so separation only fails for wide blobs.
  if (snap.min_sem_id_distance() < 3.0 * cfg.class_cov_scale) {
    throw std::invalid_argument(
        "class_cov_scale too large: semantic means must be at least 3 blob "
        "widths from every ID mean");
  }
  return snap;
}

LabeledSet sample_labeled(const DomainSnapshot& snap, int n, std::mt19937_64& rng) {
  if (n < 1) throw std::invalid_argument("sample_labeled: n must be >= 1");
  const int k = snap.num_classes();
  LabeledSet out;
  out.labels.resize(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) out.labels[static_cast<std::size_t>(i)] = i % k;
  out.features = blob_rows(snap.id_class_means, n, snap.class_cov_scale, rng,
                           [k](int i) { return i % k; });
  return out;
}

Matrix corrupt(const Matrix& features, double sigma, std::mt19937_64& rng) {
  if (!(sigma >= 0.0)) throw std::invalid_argument("corrupt: sigma must be >= 0");
  if (sigma == 0.0) return features;
  return features + gaussian_matrix(features.rows(), features.cols(), sigma, rng);
}

WildBatch sample_wild(const DomainSnapshot& snap, int m, double pi_cov,
                      double pi_sem, std::mt19937_64& rng) {
  if (!(pi_cov >= 0.0 && pi_sem >= 0.0 && pi_cov + pi_sem < 1.0)) {
    throw std::invalid_argument("sample_wild: mixture weights must be >= 0 and sum below 1");
  }
  if (m < 1) throw std::invalid_argument("sample_wild: m must be >= 1");
  const int k = snap.num_classes();
  const int d = snap.input_dim();
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_int_distribution<int> cls(0, k - 1);
  std::normal_distribution<double> normal(0.0, 1.0);

  WildBatch batch;
  batch.features.resize(m, d);
  batch.provenance.resize(static_cast<std::size_t>(m));
  batch.labels.resize(static_cast<std::size_t>(m));
  for (int i = 0; i < m; ++i) {
    const double u = unit(rng);
    const auto idx = static_cast<std::size_t>(i);
    Provenance tag = Provenance::ID;
    if (u < pi_sem) {
      tag = Provenance::Sem;
    } else if (u < pi_sem + pi_cov) {
      tag = Provenance::Cov;
    }
    const int c = cls(rng);
    const Vector& mean =
        tag == Provenance::Sem ? snap.sem_class_means[static_cast<std::size_t>(c)]
                               : snap.id_class_means[static_cast<std::size_t>(c)];
    for (int j = 0; j < d; ++j)
      batch.features(i, j) = mean(j) + snap.class_cov_scale * normal(rng);
    if (tag == Provenance::Cov && snap.corruption_sigma > 0.0) {
      std::normal_distribution<double> noise(0.0, snap.corruption_sigma);
      for (int j = 0; j < d; ++j) batch.features(i, j) += noise(rng);
    }
    batch.provenance[idx] = tag;
    batch.labels[idx] = tag == Provenance::Sem ? -1 : c;
    switch (tag) {
      case Provenance::ID: ++batch.count_id; break;
      case Provenance::Cov: ++batch.count_cov; break;
      case Provenance::Sem: ++batch.count_sem; break;
    }
  }
  return batch;
}

WildPools strip_labels(const WildBatch& batch) {
  const auto d = batch.features.cols();
  WildPools pools{Matrix(batch.count_id, d), Matrix(batch.count_cov, d),
                  Matrix(batch.count_sem, d)};
  Eigen::Index a = 0, b = 0, c = 0;
  for (Eigen::Index i = 0; i < batch.features.rows(); ++i) {
    switch (batch.provenance[static_cast<std::size_t>(i)]) {
      case Provenance::ID: pools.id.row(a++) = batch.features.row(i); break;
      case Provenance::Cov: pools.cov.row(b++) = batch.features.row(i); break;
      case Provenance::Sem: pools.sem.row(c++) = batch.features.row(i); break;
    }
  }
  return pools;
}

bool is_test_split(SplitTag tag) {
  return tag == SplitTag::TestId || tag == SplitTag::TestCov || tag == SplitTag::TestSem;
}

TrainingSplits make_training_splits(const StreamConfig& cfg,
                                    const DomainSnapshot& snap, int probe_size) {
  if (probe_size < 1) throw std::invalid_argument("probe_size must be >= 1");
  const int t = snap.t;
  const int n = cfg.samples_per_split;
  auto rng_for = [&](SplitTag tag) {
    return sub_rng(cfg.seed, t, static_cast<std::uint32_t>(tag));
  };
  TrainingSplits s;
  s.t = t;
  {
    auto rng = rng_for(SplitTag::Train);
    s.train = {SplitTag::Train, sample_labeled(snap, n, rng)};
  }
  {
    auto rng = rng_for(SplitTag::Wild);
    s.wild = strip_labels(sample_wild(snap, n, cfg.pi_cov(t), cfg.pi_sem(t), rng));
  }
  {
    auto rng = rng_for(SplitTag::Validation);
    s.validation = {SplitTag::Validation, sample_labeled(snap, n, rng)};
  }
  {
    auto rng = rng_for(SplitTag::ProbeId);
    s.probe_id = {SplitTag::ProbeId, sample_labeled(snap, probe_size, rng).features};
  }
  {
    auto rng = rng_for(SplitTag::ProbeCov);
    Matrix clean = sample_labeled(snap, probe_size, rng).features;
    s.probe_cov = {SplitTag::ProbeCov, corrupt(clean, snap.corruption_sigma, rng)};
  }
  return s;
}

EvalSplits make_eval_splits(const StreamConfig& cfg, const DomainSnapshot& snap) {
  const int t = snap.t;
  const int n = cfg.samples_per_split;
  EvalSplits e;
  e.t = t;
  {
    auto rng = sub_rng(cfg.seed, t, static_cast<std::uint32_t>(SplitTag::TestId));
    e.id = {SplitTag::TestId, sample_labeled(snap, n, rng)};
  }
  {
    // Covariate test set: the ID test set under Gaussian corruption.
    auto rng = sub_rng(cfg.seed, t, static_cast<std::uint32_t>(SplitTag::TestCov));
    LabeledSet cov = e.id.data;
    cov.features = corrupt(cov.features, snap.corruption_sigma, rng);
    e.cov = {SplitTag::TestCov, std::move(cov)};
  }
  {
    auto rng = sub_rng(cfg.seed, t, static_cast<std::uint32_t>(SplitTag::TestSem));
    const int k = snap.num_classes();
    e.sem = {SplitTag::TestSem,
             blob_rows(snap.sem_class_means, n, snap.class_cov_scale, rng,
                       [k](int i) { return i % k; })};
  }
  return e;
}

Dataset ingest_table(const std::string& path, const TableSchema& schema) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  if (schema.feature_columns.empty()) {
    throw std::invalid_argument("schema declares no feature columns");
  }

  std::string line;
  if (!std::getline(in, line) || trim(line).empty()) {
    throw std::runtime_error(path + ": no rows");
  }
  const auto header = split_csv_line(line);
  auto column = [&](const std::string& name) {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw std::runtime_error(path + ": missing column '" + name + "'");
    return static_cast<std::size_t>(it - header.begin());
  };
  std::vector<std::size_t> feature_idx;
  for (const auto& name : schema.feature_columns) feature_idx.push_back(column(name));
  const std::size_t label_idx = column(schema.label_column);
  std::optional<std::size_t> split_idx;
  if (schema.split_column) split_idx = column(*schema.split_column);

  std::vector<std::vector<double>> rows;
  std::vector<int> labels;
  std::vector<std::string> splits;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto cells = split_csv_line(line);
    const std::string where = path + ": line " + std::to_string(line_no);
    if (cells.size() != header.size()) {
      throw std::runtime_error(where + ": expected " + std::to_string(header.size()) +
                               " fields, got " + std::to_string(cells.size()));
    }
    std::vector<double> values;
    for (std::size_t j : feature_idx) {
      const auto& cell = cells[j];
      double v = 0.0;
      const auto res = std::from_chars(cell.data(), cell.data() + cell.size(), v);
      if (res.ec != std::errc() || res.ptr != cell.data() + cell.size() || !std::isfinite(v)) {
        throw std::runtime_error(where + ": column '" + header[j] +
                                 "' is not a finite number: '" + cell + "'");
      }
      values.push_back(v);
    }
    const auto& lcell = cells[label_idx];
    int label = 0;
    const auto lres = std::from_chars(lcell.data(), lcell.data() + lcell.size(), label);
    if (lres.ec != std::errc() || lres.ptr != lcell.data() + lcell.size()) {
      throw std::runtime_error(where + ": label is not an integer: '" + lcell + "'");
    }
    if (label < 0 || label >= schema.num_classes) {
      throw std::out_of_range(where + ": label " + std::to_string(label) +
                              " outside [0, " + std::to_string(schema.num_classes) + ")");
    }
    rows.push_back(std::move(values));
    labels.push_back(label);
    if (split_idx) splits.push_back(cells[*split_idx]);
  }
  if (rows.empty()) throw std::runtime_error(path + ": no rows");

  Dataset ds;
  ds.samples.features.resize(static_cast<Eigen::Index>(rows.size()),
                             static_cast<Eigen::Index>(feature_idx.size()));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < rows[i].size(); ++j)
      ds.samples.features(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
  ds.samples.labels = std::move(labels);
  ds.splits = std::move(splits);
  return ds;
}

}  // namespace tempscone
