#pragma once

#include "xrot/geometry.hpp"
#include "xrot/panorama.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

namespace xrot {

/// Pair-generation protocol. Every crop gets yaw ~ U(-180, 180) and
/// pitch ~ U(-pitch_limit, pitch_limit) with zero roll; the second crop of a
/// pair is drawn with yaw offset ~ U(-max_rel_yaw, max_rel_yaw) from the first
/// (180 makes the two yaws independent).
struct DatasetSpec {
  std::size_t n_panoramas = 10;
  std::size_t crops_per_panorama = 200;
  std::size_t crop_size = 128;
  double fov_deg = 90.0;
  double pitch_limit_deg = 45.0;
  double max_rel_yaw_deg = 180.0;
  std::uint64_t seed = 0;
  double split_fraction = 0.8;
  PanoramaStyle style = PanoramaStyle::Street;
  std::size_t panorama_height = 256;

  /// Throws InvalidConfig on out-of-range fields.
  void validate() const;
};

struct CropPose {
  YawPitch heading;
  UnitQuaternion rotation;  // canonical, world-to-camera
};

struct PairPose {
  CropPose a;
  CropPose b;
  UnitQuaternion rel_quat;  // canonical
  double rel_angle_deg = 0.0;
  OverlapClass overlap = OverlapClass::Large;
};

PairPose sample_pair_pose(std::mt19937_64& rng, const DatasetSpec& spec);

struct ImagePair {
  PerspectiveCrop crop1;
  PerspectiveCrop crop2;
  UnitQuaternion rel_quat;
  double rel_angle_deg = 0.0;
  OverlapClass overlap = OverlapClass::Large;
  std::string source_id;
};

/// Samples a pose pair and renders both crops from `pano`.
ImagePair sample_pair(const PanoramaImage& pano, std::mt19937_64& rng, const DatasetSpec& spec,
                      std::string source_id = {});

enum class Split { Train, Test };
std::string_view to_string(Split s);
Split split_from_string(std::string_view s);

/// One line of index.jsonl. Paths are relative to the dataset root.
struct PairRecord {
  std::string pair_id;
  std::string crop_a;
  std::string crop_b;
  UnitQuaternion quat_rel;
  double angle_deg = 0.0;
  OverlapClass overlap = OverlapClass::Large;
  Split split = Split::Train;
  std::string source_id;
  UnitQuaternion quat_a;
  UnitQuaternion quat_b;
};

std::string to_json_line(const PairRecord& r);
/// Throws CorruptFile on malformed input.
PairRecord parse_pair_record(const std::string& line);

struct ClassCounts {
  std::array<std::size_t, 3> by_class{};  // indexed by OverlapClass
  std::size_t total() const { return by_class[0] + by_class[1] + by_class[2]; }
};

struct DatasetIndex {
  std::filesystem::path root;
  std::vector<PairRecord> pairs;
  std::vector<std::string> train_panoramas;
  std::vector<std::string> test_panoramas;
  ClassCounts train_counts;
  ClassCounts test_counts;

  std::vector<const PairRecord*> select(Split split) const;
  const PairRecord* find(const std::string& pair_id) const;
};

std::string panorama_id(std::size_t index);

/// Deterministic train/test partition of panorama indices.
void partition_panoramas(const DatasetSpec& spec, std::vector<std::size_t>& train,
                         std::vector<std::size_t>& test);

/// Renders panoramas and crops into `out` (panos/, crops/, index.jsonl).
/// Panoramas may be rendered on `threads` workers; the index is written in a
/// fixed order. Throws IoFailure, or EmptyClass when an overlap class that the
/// spec's pose distribution can reach ends up with no pairs.
DatasetIndex build_dataset(const DatasetSpec& spec, const std::filesystem::path& out,
                           unsigned threads = 1);

/// Loads `<root>/index.jsonl`. Throws IoFailure / CorruptFile.
DatasetIndex read_index(const std::filesystem::path& root);

/// Largest relative rotation angle the sampler can produce under these dataset settings.
double max_reachable_angle_deg(const DatasetSpec& spec);

}  // namespace xrot
