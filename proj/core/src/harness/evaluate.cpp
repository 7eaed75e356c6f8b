#include "xrot/harness/evaluate.hpp"

#include "xrot/error.hpp"
#include "xrot/seeding.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <thread>

namespace xrot {

EvalReport evaluate(const PairData& data, const Predictor& predictor, const EvalOptions& opts) {
  if (data.empty()) raise(ErrorCode::EmptySplit, "evaluation split has no pairs");
  EvalReport report;
  report.pairs.resize(data.size());
  const unsigned workers = std::max(1u, std::min<unsigned>(opts.threads, static_cast<unsigned>(data.size())));
  std::vector<std::exception_ptr> errors(workers);
  {
    std::vector<std::jthread> pool;
    for (unsigned w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        try {
          for (std::size_t i = w; i < data.size(); i += workers) {
            UnitQuaternion pred = predictor(i);
            if (opts.project_roll) pred = project_roll(pred);
            const PairSample& s = data[i];
            report.pairs[i] = {s.pair_id, geodesic_error_deg(quat_to_matrix(pred), quat_to_matrix(s.rel_quat)),
                               s.overlap};
          }
        } catch (...) {
          errors[w] = std::current_exception();
        }
      });
    }
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  report.rows = summarize(report.pairs);
  return report;
}

template <typename T>
Predictor model_predictor(RotationNet<T>& net, const PairData& data) {
  if (data.image_size() != net.config().image_size && !data.empty()) {
    raise(ErrorCode::InvalidConfig, "crops are " + std::to_string(data.image_size()) + " px but the model expects " +
                                        std::to_string(net.config().image_size));
  }
  return [&net, &data](std::size_t i) {
    const PairSample& s = data[i];
    return predict(net, image_tensor<T>(s.image_a), image_tensor<T>(s.image_b));
  };
}

Predictor oracle_predictor(const PairData& data) {
  return [&data](std::size_t i) { return data[i].rel_quat; };
}

double median(std::vector<double> values) {
  if (values.empty()) return 0.0;
  const std::size_t mid = values.size() / 2;
  std::nth_element(values.begin(), values.begin() + static_cast<long>(mid), values.end());
  const double upper = values[mid];
  if (values.size() % 2 == 1) return upper;
  const double lower = *std::max_element(values.begin(), values.begin() + static_cast<long>(mid));
  return 0.5 * (lower + upper);
}

std::vector<MetricsRow> summarize(const std::vector<PairError>& pairs) {
  std::vector<MetricsRow> rows;
  for (OverlapClass c : {OverlapClass::Large, OverlapClass::Small, OverlapClass::None}) {
    std::vector<double> errs;
    for (const auto& p : pairs) {
      if (p.overlap == c) errs.push_back(p.error_deg);
    }
    if (errs.empty()) continue;
    MetricsRow row;
    row.overlap = c;
    row.count = errs.size();
    double total = 0.0;
    std::size_t under = 0;
    for (double e : errs) {
      total += e;
      if (e < 10.0) ++under;
    }
    row.avg_deg = total / static_cast<double>(errs.size());
    row.pct_under_10 = 100.0 * static_cast<double>(under) / static_cast<double>(errs.size());
    row.med_deg = median(std::move(errs));
    rows.push_back(row);
  }
  return rows;
}

namespace {

std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) raise(ErrorCode::IoFailure, "cannot write " + path.string());
  return os;
}

}  // namespace

void write_metrics_csv(const std::filesystem::path& path, const std::vector<MetricsRow>& rows) {
  auto os = open_out(path);
  os << "overlap,avg_deg,med_deg,pct_under_10\n";
  for (const auto& r : rows) {
    os << to_string(r.overlap) << ',' << fmt17(r.avg_deg) << ',' << fmt17(r.med_deg) << ','
       << fmt17(r.pct_under_10) << '\n';
  }
  if (!os) raise(ErrorCode::IoFailure, "short write to " + path.string());
}

void write_pair_errors_csv(const std::filesystem::path& path, const std::vector<PairError>& pairs) {
  auto os = open_out(path);
  os << "pair_id,error_deg,overlap\n";
  for (const auto& p : pairs) os << p.pair_id << ',' << fmt17(p.error_deg) << ',' << to_string(p.overlap) << '\n';
  if (!os) raise(ErrorCode::IoFailure, "short write to " + path.string());
}

std::vector<PairError> read_pair_errors_csv(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) raise(ErrorCode::IoFailure, "cannot open " + path.string());
  std::string line;
  std::getline(is, line);
  std::vector<PairError> out;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::string id, err, cls;
    if (!std::getline(ss, id, ',') || !std::getline(ss, err, ',') || !std::getline(ss, cls)) {
      raise(ErrorCode::CorruptFile, "malformed line in " + path.string() + ": " + line);
    }
    const auto overlap = overlap_from_string(cls);
    if (!overlap) raise(ErrorCode::CorruptFile, "unknown overlap class '" + cls + "' in " + path.string());
    out.push_back({id, std::stod(err), *overlap});
  }
  return out;
}

std::string format_table(const std::vector<MetricsRow>& rows) {
  std::ostringstream os;
  char buf[128];
  std::snprintf(buf, sizeof buf, "%-8s %7s %9s %9s %9s\n", "overlap", "pairs", "avg_deg", "med_deg", "<10deg_%");
  os << buf;
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%-8s %7zu %9.2f %9.2f %9.1f\n", std::string(to_string(r.overlap)).c_str(),
                  r.count, r.avg_deg, r.med_deg, r.pct_under_10);
    os << buf;
  }
  return os.str();
}

UnitQuaternion project_roll(const UnitQuaternion& q) {
  return yaw_pitch_to_quat(matrix_to_yaw_pitch(quat_to_matrix(q)));
}

std::vector<double> random_baseline_errors(const DatasetSpec& spec, std::size_t samples, std::uint64_t seed) {
  std::mt19937_64 rng(derive_seed(seed, 31, 0));
  std::vector<double> errs;
  errs.reserve(samples);
  for (std::size_t i = 0; i < samples; ++i) {
    const PairPose truth = sample_pair_pose(rng, spec);
    const PairPose guess = sample_pair_pose(rng, spec);
    errs.push_back(geodesic_error_deg(quat_to_matrix(guess.rel_quat), quat_to_matrix(truth.rel_quat)));
  }
  return errs;
}

template Predictor model_predictor<float>(RotationNet<float>&, const PairData&);
template Predictor model_predictor<double>(RotationNet<double>&, const PairData&);

}  // namespace xrot
