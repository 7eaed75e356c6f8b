#include "support.hpp"

#include "xrot/error.hpp"
#include "xrot/harness/checkpoint.hpp"
#include "xrot/harness/trainer.hpp"

#include <nlohmann/json.hpp>
#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

using namespace xrot;
namespace fs = std::filesystem;

namespace {

DatasetSpec toy_spec() {
  DatasetSpec spec;
  spec.crop_size = 64;
  return spec;
}

ErrorCode load_error(const fs::path& base) {
  try {
    load_checkpoint<float>(base);
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "load succeeded";
  return ErrorCode::InvalidArgument;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::ostringstream os;
  os << is.rdbuf();
  return os.str();
}

void spit(const fs::path& p, const std::string& s) {
  std::ofstream os(p, std::ios::binary | std::ios::trunc);
  os << s;
}

template <typename T>
std::vector<T> all_values(RotationNet<T>& net) {
  std::vector<T> out;
  for (auto& nt : net.named_tensors()) out.insert(out.end(), nt.tensor->data().begin(), nt.tensor->data().end());
  return out;
}

}  // namespace

TEST(Checkpoint, PathHelpers) {
  EXPECT_EQ(checkpoint_base("run/final.manifest.json"), fs::path("run/final"));
  EXPECT_EQ(checkpoint_base("run/final.weights.bin"), fs::path("run/final"));
  EXPECT_EQ(checkpoint_base("run/final"), fs::path("run/final"));
  EXPECT_EQ(manifest_path("a/b"), fs::path("a/b.manifest.json"));
  EXPECT_EQ(weights_path("a/b"), fs::path("a/b.weights.bin"));
}

TEST(Checkpoint, RoundTripPredictsBitwise) {
  test::TempDir dir("ckpt");
  const auto data = test::make_pairs(10, 1, toy_spec());
  RotationNet<float> net(ModelConfig::toy());
  {
    // A few steps so that batch-norm buffers and moments are nontrivial.
    TrainConfig cfg = TrainConfig::toy();
    cfg.max_steps = 2;
    Trainer<float> trainer(net, data, cfg);
    trainer.run();
    save_checkpoint(dir.path() / "ck", net, &trainer.optimizer(), 2, cfg.seed);
  }
  auto loaded = load_checkpoint<float>(dir.path() / "ck");
  EXPECT_EQ(loaded.info.step, 2u);
  EXPECT_TRUE(loaded.info.has_optimizer);
  EXPECT_EQ(loaded.info.adam_t, 2u);
  EXPECT_EQ(loaded.info.model, ModelConfig::toy());
  EXPECT_EQ(all_values(*loaded.net), all_values(net));
  EXPECT_EQ(loaded.adam_m.size(), net.parameters().size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto a = image_tensor<float>(data[i].image_a), b = image_tensor<float>(data[i].image_b);
    EXPECT_EQ(predict(net, a, b).coeffs(), predict(*loaded.net, a, b).coeffs());
  }
}

TEST(Checkpoint, WithoutOptimizer) {
  test::TempDir dir("ckpt_plain");
  RotationNet<double> net([] {
    auto c = ModelConfig::toy();
    c.precision = Precision::F64;
    return c;
  }());
  save_checkpoint<double>(dir.path() / "plain", net, nullptr, 0, 4);
  const auto info = read_checkpoint_info(dir.path() / "plain");
  EXPECT_FALSE(info.has_optimizer);
  EXPECT_EQ(info.seed, 4u);
  auto loaded = load_checkpoint<double>(dir.path() / "plain");
  EXPECT_TRUE(loaded.adam_m.empty());
  EXPECT_EQ(all_values(*loaded.net), all_values(net));
  try {
    load_checkpoint<float>(dir.path() / "plain");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::InvalidArgument);
  }
}

TEST(Checkpoint, DetectsDamage) {
  test::TempDir dir("ckpt_bad");
  RotationNet<float> net(ModelConfig::toy());
  const fs::path base = dir.path() / "ck";
  save_checkpoint<float>(base, net, nullptr, 0, 0);
  const std::string weights = slurp(weights_path(base));
  const std::string manifest = slurp(manifest_path(base));

  spit(weights_path(base), weights.substr(0, weights.size() / 2));
  EXPECT_EQ(load_error(base), ErrorCode::CorruptFile);

  std::string flipped = weights;
  flipped[flipped.size() / 3] = static_cast<char>(flipped[flipped.size() / 3] ^ 0x40);
  spit(weights_path(base), flipped);
  EXPECT_EQ(load_error(base), ErrorCode::CorruptFile);
  spit(weights_path(base), weights);

  auto j = nlohmann::json::parse(manifest);
  j["version"] = 99;
  spit(manifest_path(base), j.dump());
  EXPECT_EQ(load_error(base), ErrorCode::VersionMismatch);

  spit(manifest_path(base), "{ not json");
  EXPECT_EQ(load_error(base), ErrorCode::CorruptFile);

  j = nlohmann::json::parse(manifest);
  j["tensors"].erase(j["tensors"].begin());
  spit(manifest_path(base), j.dump());
  EXPECT_EQ(load_error(base), ErrorCode::CorruptFile);

  spit(manifest_path(base), manifest);
  EXPECT_NO_THROW(load_checkpoint<float>(base));
  EXPECT_EQ(load_error(dir.path() / "missing"), ErrorCode::IoFailure);
}

TEST(Checkpoint, ResumedTrainingMatchesUnbroken) {
  test::TempDir dir("ckpt_resume");
  const auto data = test::make_pairs(12, 2, toy_spec());
  ModelConfig mcfg = ModelConfig::toy();
  mcfg.precision = Precision::F64;
  TrainConfig cfg = TrainConfig::toy();
  cfg.batch_size = 4;
  cfg.max_steps = 6;
  cfg.seed = 9;

  std::vector<double> unbroken;
  {
    RotationNet<double> net(mcfg);
    Trainer<double> trainer(net, data, cfg);
    for (const auto& r : trainer.run()) unbroken.push_back(r.loss);
  }

  std::vector<double> resumed;
  {
    RotationNet<double> net(mcfg);
    TrainConfig first = cfg;
    first.max_steps = 3;
    Trainer<double> trainer(net, data, first);
    for (const auto& r : trainer.run()) resumed.push_back(r.loss);
    save_checkpoint(dir.path() / "mid", net, &trainer.optimizer(), trainer.steps_done(), cfg.seed);
  }
  {
    auto ck = load_checkpoint<double>(dir.path() / "mid");
    Trainer<double> trainer(*ck.net, data, cfg);
    trainer.restore(ck.info.step, ck.info.adam_t, std::move(ck.adam_m), std::move(ck.adam_v));
    for (const auto& r : trainer.run()) resumed.push_back(r.loss);
  }
  EXPECT_EQ(resumed, unbroken);
}
