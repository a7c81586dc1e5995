#pragma once

#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "tempscone/losses.hpp"
#include "tempscone/model.hpp"
#include "tempscone/scores.hpp"
#include "tempscone/stream.hpp"

namespace tempscone {

/// One evaluation row per timestep.
struct MetricsRecord {
  int t = 0;
  double id_acc = 0.0;
  double ood_acc = 0.0;
  double fpr95 = 0.0;
  double lambda_threshold = 0.0;
  double atc_in = 0.0;
  double atc_cov = 0.0;
  double ac_in = 0.0;
  double ac_cov = 0.0;
  double drift_d_id = 0.0;
  double drift_d_cov = 0.0;
  double lambda_in_mult = 0.0;
  double lambda_ce_mult = 0.0;
  LossBreakdown loss;
};

/// Detection threshold admitting target_tpr of the ID scores under the rule
/// "ID iff score > lambda". Scores follow the higher-is-more-ID convention
/// (-energy). Needs at least 20 scores.
double fit_threshold(std::span<const double> id_scores, double target_tpr = 0.95);

/// Fraction of OOD scores classified as ID at the threshold fitted on the ID
/// scores.
double fpr_at_tpr(std::span<const double> id_scores,
                  std::span<const double> ood_scores, double target_tpr = 0.95);

/// Argmax accuracy; ties resolve to the lowest class index.
double accuracy(const Logits& logits, std::span<const int> labels);

/// Detection scores -E(x) for a feature matrix.
std::vector<double> detection_scores(const ModelParams& params, const Matrix& features);

/// Evaluates params on held-out splits. The loss and multiplier fields are
/// left for the trainer; drift fields come from the last history entry of
/// `temporal` at this timestep, if any.
MetricsRecord evaluate_timestep(const ModelParams& params, const EvalSplits& splits,
                                const Hyperparams& hp, double atc_delta,
                                const TemporalState& temporal);

/// Frozen CSV layout. Changing it is a breaking change.
const std::vector<std::string>& metrics_csv_columns();
std::string metrics_csv_header();
std::string to_csv_row(const MetricsRecord& r);
/// The numeric columns after "t", in header order.
std::vector<double> metric_values(const MetricsRecord& r);
nlohmann::json to_json(const MetricsRecord& r);

/// Shortest decimal text that parses back to the same double.
std::string format_double(double v);

}  // namespace tempscone
