#pragma once

#include "xrot/dataset.hpp"
#include "xrot/harness/trainer.hpp"
#include "xrot/model/config.hpp"

#include <filesystem>
#include <string>

namespace xrot {

/// Contents of a run configuration file: sections `dataset`, `model` and
/// `train`, every key optional. `model.preset` ("paper" or "toy") selects the
/// base values before the other model keys apply; `train.batch_size`
/// follows the preset unless given. A `dataset.style` of "room" lowers the
/// default pitch limit to 30 degrees.
struct RunConfig {
  DatasetSpec dataset;
  ModelConfig model;
  TrainConfig train;
};

/// Throws InvalidConfig naming the offending key (unknown key, wrong type,
/// invalid value) or describing the JSON syntax error.
RunConfig parse_run_config(const std::string& json_text);
/// Throws IoFailure when the file cannot be read.
RunConfig load_run_config(const std::filesystem::path& path);

/// Every resolved field, as pretty-printed JSON.
std::string dump_run_config(const RunConfig& cfg);
void write_run_config(const std::filesystem::path& path, const RunConfig& cfg);

std::string model_config_to_json(const ModelConfig& cfg);
ModelConfig model_config_from_json(const std::string& json_text);

}  // namespace xrot
