#pragma once

#include "xrot/dataset.hpp"
#include "xrot/harness/pair_data.hpp"
#include "xrot/model/network.hpp"

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

namespace xrot {

struct MetricsRow {
  OverlapClass overlap = OverlapClass::Large;
  std::size_t count = 0;
  double avg_deg = 0.0;
  double med_deg = 0.0;
  double pct_under_10 = 0.0;
};

struct PairError {
  std::string pair_id;
  double error_deg = 0.0;
  OverlapClass overlap = OverlapClass::Large;
};

struct EvalReport {
  std::vector<MetricsRow> rows;  // one per class present, in Large/Small/None order
  std::vector<PairError> pairs;  // in data order
};

/// Predicted relative rotation for pair `index` of the evaluated data.
/// Must be safe to call concurrently.
using Predictor = std::function<UnitQuaternion(std::size_t index)>;

struct EvalOptions {
  unsigned threads = 1;
  // Replace each prediction by its zero-roll heading before scoring.
  bool project_roll = false;
};

/// Geodesic error of every pair, grouped by stored overlap class.
/// Throws EmptySplit when `data` is empty.
EvalReport evaluate(const PairData& data, const Predictor& predictor, const EvalOptions& opts = {});

/// Eval-mode model predictions; leaves the model untouched.
template <typename T>
Predictor model_predictor(RotationNet<T>& net, const PairData& data);
/// Returns the stored ground truth.
Predictor oracle_predictor(const PairData& data);

std::vector<MetricsRow> summarize(const std::vector<PairError>& pairs);
double median(std::vector<double> values);

/// `overlap,avg_deg,med_deg,pct_under_10`
void write_metrics_csv(const std::filesystem::path& path, const std::vector<MetricsRow>& rows);
/// `pair_id,error_deg,overlap`
void write_pair_errors_csv(const std::filesystem::path& path, const std::vector<PairError>& pairs);
std::vector<PairError> read_pair_errors_csv(const std::filesystem::path& path);
/// Fixed-width table for terminals.
std::string format_table(const std::vector<MetricsRow>& rows);

/// Zero-roll rotation with the same heading.
UnitQuaternion project_roll(const UnitQuaternion& q);

/// Errors of a predictor that guesses an independent draw from the pair
/// distribution of `spec`, over `samples` Monte Carlo pairs.
std::vector<double> random_baseline_errors(const DatasetSpec& spec, std::size_t samples, std::uint64_t seed);

}  // namespace xrot
