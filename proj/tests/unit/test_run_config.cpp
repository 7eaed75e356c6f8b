#include "support.hpp"

#include "xrot/error.hpp"
#include "xrot/run_config.hpp"

#include <gtest/gtest.h>

using namespace xrot;

namespace {

std::string config_error(const std::string& text) {
  try {
    parse_run_config(text);
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::InvalidConfig) << e.what();
    return e.what();
  }
  ADD_FAILURE() << "accepted: " << text;
  return {};
}

}  // namespace

TEST(RunConfig, EmptyObjectGivesDefaults) {
  const auto cfg = parse_run_config("{}");
  EXPECT_EQ(cfg.model, ModelConfig{});
  EXPECT_EQ(cfg.train, TrainConfig{});
  EXPECT_EQ(cfg.dataset.crops_per_panorama, 200u);
  EXPECT_EQ(cfg.dataset.pitch_limit_deg, 45.0);
}

TEST(RunConfig, ToyPresetAndOverrides) {
  const auto cfg = parse_run_config(R"({"model": {"preset": "toy", "dropout": 0.0},
                                        "train": {"max_steps": 5000, "lr": 1e-3}})");
  ModelConfig expected = ModelConfig::toy();
  expected.dropout = 0.0;
  EXPECT_EQ(cfg.model, expected);
  EXPECT_EQ(cfg.model.image_size, 64u);
  EXPECT_EQ(cfg.model.feature_channels, 32u);
  EXPECT_EQ(cfg.model.encoder_layers, 1u);
  EXPECT_EQ(cfg.model.attention_heads, 2u);
  EXPECT_EQ(cfg.train.batch_size, TrainConfig::toy().batch_size);
  EXPECT_EQ(cfg.train.max_steps, 5000u);
  EXPECT_EQ(cfg.train.lr, 1e-3);
  const auto sized = parse_run_config(R"({"model": {"preset": "toy"}, "train": {"batch_size": 3}})");
  EXPECT_EQ(sized.train.batch_size, 3u);
}

TEST(RunConfig, RoomStyleLowersPitchLimit) {
  EXPECT_EQ(parse_run_config(R"({"dataset": {"style": "room"}})").dataset.pitch_limit_deg, 30.0);
  EXPECT_EQ(parse_run_config(R"({"dataset": {"style": "room", "pitch_limit_deg": 10}})").dataset.pitch_limit_deg,
            10.0);
  EXPECT_EQ(parse_run_config(R"({"dataset": {"style": "street"}})").dataset.pitch_limit_deg, 45.0);
}

TEST(RunConfig, UnknownKeysAreNamed) {
  EXPECT_NE(config_error(R"({"dataset": {"pich_limit": 10}})").find("dataset.pich_limit"), std::string::npos);
  EXPECT_NE(config_error(R"({"trian": {}})").find("trian"), std::string::npos);
  EXPECT_NE(config_error(R"({"model": {"heads": 4}})").find("model.heads"), std::string::npos);
}

TEST(RunConfig, BadValuesAreNamed) {
  EXPECT_NE(config_error(R"({"train": {"lr": "fast"}})").find("train.lr"), std::string::npos);
  EXPECT_NE(config_error(R"({"dataset": {"crop_size": -4}})").find("dataset.crop_size"), std::string::npos);
  EXPECT_NE(config_error(R"({"dataset": {"style": "forest"}})").find("dataset.style"), std::string::npos);
  EXPECT_NE(config_error(R"({"model": {"preset": "huge"}})").find("model.preset"), std::string::npos);
  config_error(R"({"model": {"rotation_mode": "matrix"}})");
  config_error(R"({"model": {"attention_heads": 3}})");
  config_error(R"({"dataset": {"pitch_limit_deg": 95}})");
  config_error(R"({"train": {"batch_size": 0}})");
  config_error("[1, 2]");
  config_error("{ broken");
}

TEST(RunConfig, DumpParsesBackToSameValues) {
  auto cfg = parse_run_config(R"({"dataset": {"n_panoramas": 32, "crops_per_panorama": 50, "crop_size": 64,
                                               "pitch_limit_deg": 0, "max_rel_yaw_deg": 60, "seed": 7},
                                  "model": {"preset": "toy", "rotation_mode": "euler-classification"},
                                  "train": {"max_steps": 123, "checkpoint_dir": "ck"}})");
  const auto back = parse_run_config(dump_run_config(cfg));
  EXPECT_EQ(back.model, cfg.model);
  EXPECT_EQ(back.train, cfg.train);
  EXPECT_EQ(back.dataset.n_panoramas, 32u);
  EXPECT_EQ(back.dataset.max_rel_yaw_deg, 60.0);
  EXPECT_EQ(back.dataset.pitch_limit_deg, 0.0);
  EXPECT_EQ(back.dataset.seed, 7u);
  EXPECT_EQ(back.dataset.style, cfg.dataset.style);
  EXPECT_EQ(model_config_from_json(model_config_to_json(cfg.model)), cfg.model);
}

TEST(RunConfig, FileRoundTrip) {
  test::TempDir dir("runcfg");
  RunConfig cfg;
  cfg.train.max_steps = 77;
  write_run_config(dir.path() / "config.json", cfg);
  EXPECT_EQ(load_run_config(dir.path() / "config.json").train.max_steps, 77u);
  try {
    load_run_config(dir.path() / "absent.json");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::IoFailure);
  }
}
