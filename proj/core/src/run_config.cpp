#include "xrot/run_config.hpp"

#include "xrot/error.hpp"

#include <json.hpp>

#include <fstream>
#include <set>
#include <sstream>

namespace xrot {

using nlohmann::json;

namespace {

/// Reads the keys of one JSON object, rejecting any key not consumed.
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) fail(path_, "must be a JSON object");
  }

  [[noreturn]] static void fail(const std::string& key, const std::string& what) {
    raise(ErrorCode::InvalidConfig, "config key '" + key + "' " + what);
  }

  bool has(const std::string& key) const { return j_.contains(key); }
  void mark(const std::string& key) { seen_.insert(key); }

  template <typename V>
  void read(const std::string& key, V& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    const json& v = j_.at(key);
    try {
      if constexpr (std::is_same_v<V, bool>) {
        if (!v.is_boolean()) fail(name(key), "must be true or false");
        out = v.get<bool>();
      } else if constexpr (std::is_integral_v<V>) {
        if (!v.is_number_integer() || (!v.is_number_unsigned() && v.get<long long>() < 0)) {
          fail(name(key), "must be a non-negative integer");
        }
        out = v.get<V>();
      } else if constexpr (std::is_floating_point_v<V>) {
        if (!v.is_number()) fail(name(key), "must be a number");
        out = v.get<V>();
      } else {
        if (!v.is_string()) fail(name(key), "must be a string");
        out = v.get<V>();
      }
    } catch (const json::exception& e) {
      fail(name(key), std::string("has the wrong type: ") + e.what());
    }
  }

  std::string read_string(const std::string& key, const std::string& fallback) {
    std::string s = fallback;
    read(key, s);
    return s;
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!seen_.count(it.key())) fail(name(it.key()), "is not recognized");
    }
  }

  std::string name(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

void read_dataset(Section& s, DatasetSpec& d) {
  s.read("n_panoramas", d.n_panoramas);
  s.read("crops_per_panorama", d.crops_per_panorama);
  s.read("crop_size", d.crop_size);
  s.read("fov_deg", d.fov_deg);
  const std::string style = s.read_string("style", std::string(to_string(d.style)));
  try {
    d.style = panorama_style_from_string(style);
  } catch (const Error&) {
    Section::fail(s.name("style"), "must be \"room\" or \"street\"");
  }
  if (d.style == PanoramaStyle::Room && !s.has("pitch_limit_deg")) d.pitch_limit_deg = 30.0;
  s.read("pitch_limit_deg", d.pitch_limit_deg);
  s.read("max_rel_yaw_deg", d.max_rel_yaw_deg);
  s.read("seed", d.seed);
  s.read("split_fraction", d.split_fraction);
  s.read("panorama_height", d.panorama_height);
  s.finish();
}

bool read_model(Section& s, ModelConfig& m) {
  const std::string preset = s.read_string("preset", "paper");
  bool toy = false;
  if (preset == "toy") {
    m = ModelConfig::toy();
    toy = true;
  } else if (preset == "paper") {
    m = ModelConfig{};
  } else {
    Section::fail(s.name("preset"), "must be \"paper\" or \"toy\"");
  }
  s.read("image_size", m.image_size);
  s.read("stem_channels", m.stem_channels);
  s.read("residual_blocks", m.residual_blocks);
  s.read("conv_a_channels", m.conv_a_channels);
  s.read("conv_b_channels", m.conv_b_channels);
  s.read("feature_channels", m.feature_channels);
  s.read("encoder_layers", m.encoder_layers);
  s.read("attention_heads", m.attention_heads);
  s.read("feedforward_width", m.feedforward_width);
  s.read("encoder_width", m.encoder_width);
  s.read("dropout", m.dropout);
  s.read("positional_embedding", m.positional_embedding);
  m.rotation_mode = rotation_mode_from_string(s.read_string("rotation_mode", std::string(to_string(m.rotation_mode))));
  m.precision = precision_from_string(s.read_string("precision", std::string(to_string(m.precision))));
  s.read("init_seed", m.init_seed);
  s.finish();
  return toy;
}

void read_train(Section& s, TrainConfig& t) {
  s.read("lr", t.lr);
  s.read("beta1", t.beta1);
  s.read("beta2", t.beta2);
  s.read("eps", t.eps);
  s.read("batch_size", t.batch_size);
  s.read("max_steps", t.max_steps);
  s.read("seed", t.seed);
  s.read("eval_interval", t.eval_interval);
  s.read("checkpoint_interval", t.checkpoint_interval);
  s.read("checkpoint_dir", t.checkpoint_dir);
  s.finish();
}

json model_json(const ModelConfig& m) {
  return json{{"image_size", m.image_size},
              {"stem_channels", m.stem_channels},
              {"residual_blocks", m.residual_blocks},
              {"conv_a_channels", m.conv_a_channels},
              {"conv_b_channels", m.conv_b_channels},
              {"feature_channels", m.feature_channels},
              {"encoder_layers", m.encoder_layers},
              {"attention_heads", m.attention_heads},
              {"feedforward_width", m.feedforward_width},
              {"encoder_width", m.encoder_width},
              {"dropout", m.dropout},
              {"positional_embedding", m.positional_embedding},
              {"rotation_mode", to_string(m.rotation_mode)},
              {"precision", to_string(m.precision)},
              {"init_seed", m.init_seed}};
}

json parse_json(const std::string& text) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    raise(ErrorCode::InvalidConfig, std::string("config is not valid JSON: ") + e.what());
  }
}

}  // namespace

RunConfig parse_run_config(const std::string& json_text) {
  const json root = parse_json(json_text);
  Section top(root, "");
  RunConfig cfg;
  bool toy = false;
  {
    static const json empty = json::object();
    const json& m = root.contains("model") ? root["model"] : empty;
    Section s(m, "model");
    toy = read_model(s, cfg.model);
  }
  if (toy) cfg.train = TrainConfig::toy();
  if (root.contains("dataset")) {
    Section s(root["dataset"], "dataset");
    read_dataset(s, cfg.dataset);
  }
  if (root.contains("train")) {
    Section s(root["train"], "train");
    read_train(s, cfg.train);
  }
  for (const char* key : {"dataset", "model", "train"}) top.mark(key);
  top.finish();
  cfg.dataset.validate();
  cfg.model.validate();
  cfg.train.validate();
  return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) raise(ErrorCode::IoFailure, "cannot open config " + path.string());
  std::stringstream ss;
  ss << is.rdbuf();
  return parse_run_config(ss.str());
}

std::string dump_run_config(const RunConfig& cfg) {
  const DatasetSpec& d = cfg.dataset;
  const TrainConfig& t = cfg.train;
  json j;
  j["dataset"] = {{"n_panoramas", d.n_panoramas},         {"crops_per_panorama", d.crops_per_panorama},
                  {"crop_size", d.crop_size},             {"fov_deg", d.fov_deg},
                  {"pitch_limit_deg", d.pitch_limit_deg}, {"max_rel_yaw_deg", d.max_rel_yaw_deg},
                  {"seed", d.seed},                       {"split_fraction", d.split_fraction},
                  {"style", to_string(d.style)},          {"panorama_height", d.panorama_height}};
  j["model"] = model_json(cfg.model);
  j["train"] = {{"lr", t.lr},
                {"beta1", t.beta1},
                {"beta2", t.beta2},
                {"eps", t.eps},
                {"batch_size", t.batch_size},
                {"max_steps", t.max_steps},
                {"seed", t.seed},
                {"eval_interval", t.eval_interval},
                {"checkpoint_interval", t.checkpoint_interval},
                {"checkpoint_dir", t.checkpoint_dir}};
  return j.dump(2) + "\n";
}

void write_run_config(const std::filesystem::path& path, const RunConfig& cfg) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) raise(ErrorCode::IoFailure, "cannot write " + path.string());
  os << dump_run_config(cfg);
  if (!os) raise(ErrorCode::IoFailure, "short write to " + path.string());
}

std::string model_config_to_json(const ModelConfig& cfg) { return model_json(cfg).dump(); }

ModelConfig model_config_from_json(const std::string& json_text) {
  const json j = parse_json(json_text);
  Section s(j, "model");
  ModelConfig m;
  // A stored config is complete; the preset only matters for partial input.
  read_model(s, m);
  m.validate();
  return m;
}

}  // namespace xrot
