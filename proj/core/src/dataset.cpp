#include "xrot/dataset.hpp"

#include "xrot/error.hpp"
#include "xrot/seeding.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>
#include <thread>

namespace xrot {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr std::uint64_t kPanoramaStream = 1;
constexpr std::uint64_t kPoseStream = 2;
constexpr std::uint64_t kSplitStream = 3;

json quat_json(const UnitQuaternion& q) { return json::array({q.w(), q.x(), q.y(), q.z()}); }

UnitQuaternion quat_from_json(const json& j) {
  if (!j.is_array() || j.size() != 4) throw std::invalid_argument("quaternion must have 4 entries");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>(), j[3].get<double>()};
}

std::string crop_name(const std::string& pano, std::size_t k) {
  return "crops/" + pano + "_" + std::to_string(k) + ".png";
}

}  // namespace

void DatasetSpec::validate() const {
  auto fail = [](const std::string& m) { raise(ErrorCode::InvalidConfig, m); };
  if (n_panoramas == 0) fail("dataset.n_panoramas must be positive");
  if (crops_per_panorama < 2 || crops_per_panorama % 2 != 0) {
    fail("dataset.crops_per_panorama must be a positive even number (crops are paired off)");
  }
  if (crop_size == 0) fail("dataset.crop_size must be positive");
  if (!(fov_deg > 0.0 && fov_deg < 180.0)) fail("dataset.fov_deg must lie in (0, 180)");
  if (!(pitch_limit_deg >= 0.0 && pitch_limit_deg < 90.0)) fail("dataset.pitch_limit_deg must lie in [0, 90)");
  if (!(max_rel_yaw_deg >= 0.0 && max_rel_yaw_deg <= 180.0)) fail("dataset.max_rel_yaw_deg must lie in [0, 180]");
  if (!(split_fraction >= 0.0 && split_fraction <= 1.0)) fail("dataset.split_fraction must lie in [0, 1]");
  if (panorama_height < 4) fail("dataset.panorama_height must be at least 4");
}

PairPose sample_pair_pose(std::mt19937_64& rng, const DatasetSpec& spec) {
  std::uniform_real_distribution<double> yaw_dist(-180.0, 180.0);
  std::uniform_real_distribution<double> pitch_dist(-spec.pitch_limit_deg, spec.pitch_limit_deg);
  std::uniform_real_distribution<double> offset_dist(-spec.max_rel_yaw_deg, spec.max_rel_yaw_deg);

  PairPose p;
  p.a.heading.yaw_deg = yaw_dist(rng);
  p.a.heading.pitch_deg = pitch_dist(rng);
  p.b.heading.yaw_deg = wrap_deg(p.a.heading.yaw_deg + offset_dist(rng));
  p.b.heading.pitch_deg = pitch_dist(rng);
  p.a.rotation = yaw_pitch_to_quat(p.a.heading);
  p.b.rotation = yaw_pitch_to_quat(p.b.heading);

  const RotationMatrix rel = relative_rotation(quat_to_matrix(p.a.rotation), quat_to_matrix(p.b.rotation));
  p.rel_quat = matrix_to_quat(rel);
  p.rel_angle_deg = geodesic_error_deg(RotationMatrix::identity(), rel);
  p.overlap = classify_overlap(p.rel_angle_deg);
  return p;
}

ImagePair sample_pair(const PanoramaImage& pano, std::mt19937_64& rng, const DatasetSpec& spec,
                      std::string source_id) {
  const PairPose pose = sample_pair_pose(rng, spec);
  return {render_crop(pano, pose.a.rotation, spec.fov_deg, spec.crop_size),
          render_crop(pano, pose.b.rotation, spec.fov_deg, spec.crop_size),
          pose.rel_quat,
          pose.rel_angle_deg,
          pose.overlap,
          std::move(source_id)};
}

std::string_view to_string(Split s) { return s == Split::Train ? "train" : "test"; }

Split split_from_string(std::string_view s) {
  if (s == "train") return Split::Train;
  if (s == "test") return Split::Test;
  raise(ErrorCode::InvalidArgument, "unknown split '" + std::string(s) + "' (expected train or test)");
}

std::string to_json_line(const PairRecord& r) {
  json j;
  j["pair_id"] = r.pair_id;
  j["crop_a"] = r.crop_a;
  j["crop_b"] = r.crop_b;
  j["quat_rel"] = quat_json(r.quat_rel);
  j["angle_deg"] = r.angle_deg;
  j["overlap"] = std::string(to_string(r.overlap));
  j["split"] = std::string(to_string(r.split));
  j["source_id"] = r.source_id;
  j["quat_a"] = quat_json(r.quat_a);
  j["quat_b"] = quat_json(r.quat_b);
  return j.dump();
}

PairRecord parse_pair_record(const std::string& line) {
  try {
    const json j = json::parse(line);
    PairRecord r;
    r.pair_id = j.at("pair_id").get<std::string>();
    r.crop_a = j.at("crop_a").get<std::string>();
    r.crop_b = j.at("crop_b").get<std::string>();
    r.quat_rel = quat_from_json(j.at("quat_rel"));
    r.angle_deg = j.at("angle_deg").get<double>();
    const auto overlap = overlap_from_string(j.at("overlap").get<std::string>());
    if (!overlap) throw std::invalid_argument("bad overlap class");
    r.overlap = *overlap;
    r.split = split_from_string(j.at("split").get<std::string>());
    r.source_id = j.value("source_id", std::string());
    r.quat_a = j.contains("quat_a") ? quat_from_json(j["quat_a"]) : UnitQuaternion::identity();
    r.quat_b = j.contains("quat_b") ? quat_from_json(j["quat_b"]) : r.quat_rel;
    return r;
  } catch (const Error&) {
    throw;
  } catch (const std::exception& e) {
    raise(ErrorCode::CorruptFile, std::string("malformed index record: ") + e.what());
  }
}

std::vector<const PairRecord*> DatasetIndex::select(Split split) const {
  std::vector<const PairRecord*> out;
  for (const PairRecord& r : pairs) {
    if (r.split == split) out.push_back(&r);
  }
  return out;
}

const PairRecord* DatasetIndex::find(const std::string& pair_id) const {
  for (const PairRecord& r : pairs) {
    if (r.pair_id == pair_id) return &r;
  }
  return nullptr;
}

std::string panorama_id(std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "p%04zu", index);
  return buf;
}

void partition_panoramas(const DatasetSpec& spec, std::vector<std::size_t>& train,
                         std::vector<std::size_t>& test) {
  std::vector<std::size_t> order(spec.n_panoramas);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(derive_seed(spec.seed, kSplitStream, 0));
  std::shuffle(order.begin(), order.end(), rng);
  const auto n_train = static_cast<std::size_t>(
      std::llround(spec.split_fraction * static_cast<double>(spec.n_panoramas)));
  train.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
  test.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train), order.end());
  std::sort(train.begin(), train.end());
  std::sort(test.begin(), test.end());
}

double max_reachable_angle_deg(const DatasetSpec& spec) {
  return std::min(180.0, spec.max_rel_yaw_deg + 2.0 * spec.pitch_limit_deg);
}

DatasetIndex build_dataset(const DatasetSpec& spec, const fs::path& out, unsigned threads) {
  spec.validate();
  std::error_code ec;
  fs::create_directories(out / "panos", ec);
  fs::create_directories(out / "crops", ec);
  if (ec || !fs::is_directory(out / "crops")) {
    raise(ErrorCode::IoFailure, "cannot create dataset directories under " + out.string());
  }

  std::vector<std::size_t> train_ids, test_ids;
  partition_panoramas(spec, train_ids, test_ids);
  std::vector<Split> split_of(spec.n_panoramas, Split::Train);
  for (std::size_t i : test_ids) split_of[i] = Split::Test;

  const std::size_t pairs_per_pano = spec.crops_per_panorama / 2;
  std::vector<std::vector<PairRecord>> per_pano(spec.n_panoramas);
  std::vector<std::exception_ptr> failures(spec.n_panoramas);

  auto render_one = [&](std::size_t index) {
    try {
      const std::string id = panorama_id(index);
      const PanoramaImage pano =
          synth_panorama(derive_seed(spec.seed, kPanoramaStream, index), spec.style, spec.panorama_height);
      write_png(out / "panos" / (id + ".png"), pano.image());

      std::mt19937_64 rng(derive_seed(spec.seed, kPoseStream, index));
      auto& records = per_pano[index];
      records.reserve(pairs_per_pano);
      for (std::size_t k = 0; k < pairs_per_pano; ++k) {
        const PairPose pose = sample_pair_pose(rng, spec);
        PairRecord r;
        char pid[48];
        std::snprintf(pid, sizeof(pid), "%s_%03zu", id.c_str(), k);
        r.pair_id = pid;
        r.crop_a = crop_name(id, 2 * k);
        r.crop_b = crop_name(id, 2 * k + 1);
        r.quat_rel = pose.rel_quat;
        r.angle_deg = pose.rel_angle_deg;
        r.overlap = pose.overlap;
        r.split = split_of[index];
        r.source_id = id;
        r.quat_a = pose.a.rotation;
        r.quat_b = pose.b.rotation;
        write_png(out / r.crop_a, render_crop(pano, pose.a.rotation, spec.fov_deg, spec.crop_size).pixels);
        write_png(out / r.crop_b, render_crop(pano, pose.b.rotation, spec.fov_deg, spec.crop_size).pixels);
        records.push_back(std::move(r));
      }
    } catch (...) {
      failures[index] = std::current_exception();
    }
  };

  const unsigned workers = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(spec.n_panoramas)));
  if (workers == 1) {
    for (std::size_t i = 0; i < spec.n_panoramas; ++i) render_one(i);
  } else {
    std::vector<std::jthread> pool;
    for (unsigned w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        for (std::size_t i = w; i < spec.n_panoramas; i += workers) render_one(i);
      });
    }
  }
  for (const auto& f : failures) {
    if (f) std::rethrow_exception(f);
  }

  DatasetIndex index;
  index.root = out;
  for (std::size_t i : train_ids) index.train_panoramas.push_back(panorama_id(i));
  for (std::size_t i : test_ids) index.test_panoramas.push_back(panorama_id(i));
  for (auto& records : per_pano) {
    for (auto& r : records) {
      auto& counts = r.split == Split::Train ? index.train_counts : index.test_counts;
      ++counts.by_class[static_cast<std::size_t>(r.overlap)];
      index.pairs.push_back(std::move(r));
    }
  }

  const double reach = max_reachable_angle_deg(spec);
  const std::array<double, 3> class_floor{0.0, 45.0, 90.0};
  for (std::size_t c = 0; c < 3; ++c) {
    const bool reachable = c == 0 || reach > class_floor[c];
    if (reachable && index.train_counts.by_class[c] + index.test_counts.by_class[c] == 0) {
      raise(ErrorCode::EmptyClass, "overlap class '" + std::string(to_string(static_cast<OverlapClass>(c))) +
                                       "' received no pairs; increase n_panoramas or crops_per_panorama");
    }
  }

  std::ofstream os(out / "index.jsonl", std::ios::binary | std::ios::trunc);
  if (!os) raise(ErrorCode::IoFailure, "cannot write " + (out / "index.jsonl").string());
  for (const PairRecord& r : index.pairs) os << to_json_line(r) << '\n';
  os.flush();
  if (!os) raise(ErrorCode::IoFailure, "short write to " + (out / "index.jsonl").string());
  return index;
}

DatasetIndex read_index(const fs::path& root) {
  std::ifstream is(root / "index.jsonl");
  if (!is) raise(ErrorCode::IoFailure, "cannot open " + (root / "index.jsonl").string());
  DatasetIndex index;
  index.root = root;
  std::string line;
  std::vector<std::string> train, test;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    PairRecord r = parse_pair_record(line);
    auto& counts = r.split == Split::Train ? index.train_counts : index.test_counts;
    ++counts.by_class[static_cast<std::size_t>(r.overlap)];
    auto& ids = r.split == Split::Train ? train : test;
    if (ids.empty() || ids.back() != r.source_id) ids.push_back(r.source_id);
    index.pairs.push_back(std::move(r));
  }
  auto uniq = [](std::vector<std::string>& v) {
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
  };
  uniq(train);
  uniq(test);
  index.train_panoramas = std::move(train);
  index.test_panoramas = std::move(test);
  return index;
}

}  // namespace xrot
