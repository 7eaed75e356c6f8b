#include "xrot/harness/checkpoint.hpp"

#include "xrot/error.hpp"
#include "xrot/run_config.hpp"

#include <json.hpp>
#include <zlib.h>

#include <bit>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

namespace xrot {

namespace fs = std::filesystem;
using nlohmann::json;

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace {

constexpr const char* kFormat = "xrot-checkpoint";
constexpr const char* kManifestSuffix = ".manifest.json";
constexpr const char* kWeightsSuffix = ".weights.bin";

bool ends_with(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

std::uint32_t crc_of(const void* data, std::size_t bytes) {
  uLong crc = crc32(0L, Z_NULL, 0);
  const auto* p = static_cast<const Bytef*>(data);
  while (bytes > 0) {
    const uInt chunk = static_cast<uInt>(std::min<std::size_t>(bytes, 1u << 30));
    crc = crc32(crc, p, chunk);
    p += chunk;
    bytes -= chunk;
  }
  return static_cast<std::uint32_t>(crc);
}

template <typename T>
std::string dtype_name() {
  return sizeof(T) == 4 ? "f32" : "f64";
}

void write_file(const fs::path& path, const std::string& bytes) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) raise(ErrorCode::IoFailure, "cannot write " + tmp.string());
    os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!os) raise(ErrorCode::IoFailure, "short write to " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) raise(ErrorCode::IoFailure, "cannot move " + tmp.string() + " to " + path.string() + ": " + ec.message());
}

std::string read_file(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) raise(ErrorCode::IoFailure, "cannot open " + path.string());
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

json read_manifest(const fs::path& base) {
  const fs::path path = manifest_path(base);
  const std::string text = read_file(path);
  json m;
  try {
    m = json::parse(text);
  } catch (const json::exception& e) {
    raise(ErrorCode::CorruptFile, path.string() + " is not valid JSON: " + e.what());
  }
  if (!m.is_object() || m.value("format", "") != kFormat) {
    raise(ErrorCode::CorruptFile, path.string() + " is not a checkpoint manifest");
  }
  if (!m.contains("version") || !m["version"].is_number_integer()) {
    raise(ErrorCode::CorruptFile, path.string() + " has no version");
  }
  if (m["version"].get<int>() != kCheckpointVersion) {
    raise(ErrorCode::VersionMismatch, path.string() + " has format version " + m["version"].dump() +
                                          ", this build reads version " + std::to_string(kCheckpointVersion));
  }
  return m;
}

}  // namespace

fs::path checkpoint_base(const fs::path& path) {
  const std::string s = path.string();
  if (ends_with(s, kManifestSuffix)) return s.substr(0, s.size() - std::strlen(kManifestSuffix));
  if (ends_with(s, kWeightsSuffix)) return s.substr(0, s.size() - std::strlen(kWeightsSuffix));
  return path;
}

fs::path manifest_path(const fs::path& base) { return base.string() + kManifestSuffix; }
fs::path weights_path(const fs::path& base) { return base.string() + kWeightsSuffix; }

template <typename T>
void save_checkpoint(const fs::path& base, RotationNet<T>& net, const ad::Adam<T>* optimizer, std::uint64_t step,
                     std::uint64_t seed) {
  std::string blob;
  json entries = json::array();
  auto append = [&](const std::string& name, const std::string& kind, const ad::Shape& shape,
                    std::span<const T> values) {
    const std::size_t bytes = values.size() * sizeof(T);
    entries.push_back({{"name", name},
                       {"kind", kind},
                       {"shape", shape},
                       {"offset", blob.size()},
                       {"bytes", bytes},
                       {"crc32", crc_of(values.data(), bytes)}});
    blob.append(reinterpret_cast<const char*>(values.data()), bytes);
  };

  std::vector<std::pair<std::string, ad::Shape>> trainable;
  for (const auto& nt : net.named_tensors()) {
    append(nt.name, nt.trainable ? "param" : "buffer", nt.tensor->shape(), nt.tensor->data());
    if (nt.trainable) trainable.emplace_back(nt.name, nt.tensor->shape());
  }
  json manifest;
  manifest["format"] = kFormat;
  manifest["version"] = kCheckpointVersion;
  manifest["dtype"] = dtype_name<T>();
  manifest["model_config"] = json::parse(model_config_to_json(net.config()));
  manifest["step"] = step;
  manifest["seed"] = seed;
  if (optimizer) {
    if (optimizer->size() != trainable.size()) {
      raise(ErrorCode::ShapeMismatch, "optimizer tracks " + std::to_string(optimizer->size()) +
                                          " tensors but the model has " + std::to_string(trainable.size()));
    }
    for (std::size_t i = 0; i < trainable.size(); ++i) {
      append(trainable[i].first, "adam_m", trainable[i].second, optimizer->first_moments()[i]);
    }
    for (std::size_t i = 0; i < trainable.size(); ++i) {
      append(trainable[i].first, "adam_v", trainable[i].second, optimizer->second_moments()[i]);
    }
    const ad::AdamConfig& c = optimizer->config();
    manifest["adam"] = {{"t", optimizer->t()}, {"lr", c.lr}, {"beta1", c.beta1}, {"beta2", c.beta2}, {"eps", c.eps}};
  } else {
    manifest["adam"] = nullptr;
  }
  manifest["weights_file"] = weights_path(base).filename().string();
  manifest["weights_bytes"] = blob.size();
  manifest["tensors"] = std::move(entries);

  if (base.has_parent_path()) fs::create_directories(base.parent_path());
  write_file(weights_path(base), blob);
  write_file(manifest_path(base), manifest.dump(1) + "\n");
}

CheckpointInfo read_checkpoint_info(const fs::path& base_in) {
  const fs::path base = checkpoint_base(base_in);
  const json m = read_manifest(base);
  CheckpointInfo info;
  try {
    info.model = model_config_from_json(m.at("model_config").dump());
    info.step = m.at("step").get<std::uint64_t>();
    info.seed = m.at("seed").get<std::uint64_t>();
    const json& a = m.at("adam");
    info.has_optimizer = !a.is_null();
    if (info.has_optimizer) {
      info.adam_t = a.at("t").get<std::uint64_t>();
      info.adam = {a.at("lr").get<double>(), a.at("beta1").get<double>(), a.at("beta2").get<double>(),
                   a.at("eps").get<double>()};
    }
    const std::string dtype = m.at("dtype").get<std::string>();
    if (dtype != to_string(info.model.precision)) {
      raise(ErrorCode::CorruptFile, "manifest dtype " + dtype + " disagrees with its model config");
    }
  } catch (const json::exception& e) {
    raise(ErrorCode::CorruptFile, manifest_path(base).string() + ": " + e.what());
  } catch (const Error& e) {
    if (e.code() == ErrorCode::InvalidConfig) raise(ErrorCode::CorruptFile, e.what());
    throw;
  }
  return info;
}

template <typename T>
LoadedCheckpoint<T> load_checkpoint(const fs::path& base_in) {
  const fs::path base = checkpoint_base(base_in);
  LoadedCheckpoint<T> out;
  out.info = read_checkpoint_info(base);
  if (out.info.model.precision != (sizeof(T) == 4 ? Precision::F32 : Precision::F64)) {
    raise(ErrorCode::InvalidArgument, "checkpoint stores " + std::string(to_string(out.info.model.precision)) +
                                          " weights, requested " + dtype_name<T>());
  }
  const json m = read_manifest(base);
  const std::string blob = read_file(weights_path(base));
  const std::string where = weights_path(base).string();
  std::uint64_t expected_bytes = 0;
  try {
    expected_bytes = m.at("weights_bytes").get<std::uint64_t>();
  } catch (const json::exception& e) {
    raise(ErrorCode::CorruptFile, manifest_path(base).string() + ": " + e.what());
  }
  if (blob.size() != expected_bytes) {
    raise(ErrorCode::CorruptFile, where + " holds " + std::to_string(blob.size()) + " bytes, manifest expects " +
                                      std::to_string(expected_bytes) + " (truncated or overwritten)");
  }

  struct Entry {
    ad::Shape shape;
    std::size_t offset;
    std::size_t bytes;
  };
  std::map<std::pair<std::string, std::string>, Entry> entries;
  try {
    for (const json& e : m.at("tensors")) {
      Entry en{e.at("shape").get<ad::Shape>(), e.at("offset").get<std::size_t>(), e.at("bytes").get<std::size_t>()};
      if (en.offset > blob.size() || en.bytes > blob.size() - en.offset || en.bytes != ad::numel(en.shape) * sizeof(T)) {
        raise(ErrorCode::CorruptFile, where + ": tensor " + e.at("name").get<std::string>() + " lies outside the file");
      }
      if (crc_of(blob.data() + en.offset, en.bytes) != e.at("crc32").get<std::uint32_t>()) {
        raise(ErrorCode::CorruptFile, where + ": checksum mismatch for " + e.at("name").get<std::string>());
      }
      entries[{e.at("kind").get<std::string>(), e.at("name").get<std::string>()}] = en;
    }
  } catch (const json::exception& e) {
    raise(ErrorCode::CorruptFile, manifest_path(base).string() + ": " + e.what());
  }

  auto fetch = [&](const std::string& kind, const std::string& name, const ad::Shape& shape) {
    auto it = entries.find({kind, name});
    if (it == entries.end()) raise(ErrorCode::CorruptFile, where + ": missing " + kind + " " + name);
    if (it->second.shape != shape) {
      raise(ErrorCode::CorruptFile, where + ": " + name + " has shape " + ad::shape_str(it->second.shape) +
                                        ", model expects " + ad::shape_str(shape));
    }
    std::vector<T> values(ad::numel(shape));
    std::memcpy(values.data(), blob.data() + it->second.offset, it->second.bytes);
    return values;
  };

  out.net = std::make_unique<RotationNet<T>>(out.info.model);
  for (auto& nt : out.net->named_tensors()) {
    const auto values = fetch(nt.trainable ? "param" : "buffer", nt.name, nt.tensor->shape());
    std::copy(values.begin(), values.end(), nt.tensor->data().begin());
    if (out.info.has_optimizer && nt.trainable) {
      out.adam_m.push_back(fetch("adam_m", nt.name, nt.tensor->shape()));
      out.adam_v.push_back(fetch("adam_v", nt.name, nt.tensor->shape()));
    }
  }
  return out;
}

template void save_checkpoint<float>(const fs::path&, RotationNet<float>&, const ad::Adam<float>*, std::uint64_t,
                                     std::uint64_t);
template void save_checkpoint<double>(const fs::path&, RotationNet<double>&, const ad::Adam<double>*,
                                      std::uint64_t, std::uint64_t);
template LoadedCheckpoint<float> load_checkpoint<float>(const fs::path&);
template LoadedCheckpoint<double> load_checkpoint<double>(const fs::path&);

}  // namespace xrot
