#include "cli.hpp"

#include "xrot/dataset.hpp"
#include "xrot/error.hpp"
#include "xrot/harness/checkpoint.hpp"
#include "xrot/harness/evaluate.hpp"
#include "xrot/harness/pair_data.hpp"
#include "xrot/harness/trainer.hpp"
#include "xrot/harness/visualize.hpp"
#include "xrot/run_config.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <fstream>
#include <ostream>
#include <sstream>

namespace xrot::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Options {
  unsigned threads = 1;

  std::string config;
  std::string out;
  std::string data;
  std::string checkpoint;
  std::string split = "test";
  std::string pair;
  std::string image_a;
  std::string image_b;
  std::string resume;
  bool oracle = false;
  bool project_roll = false;
  bool per_head = false;

  std::uint64_t seed = 0;
  std::size_t n_panoramas = 0;
  std::size_t crops_per_panorama = 0;
  std::size_t max_steps = 0;
  std::size_t batch_size = 0;
  double lr = 0.0;
  double fov = 0.0;
};

bool given(CLI::App* app, const std::string& name) { return app->count(name) > 0; }

template <typename F>
decltype(auto) with_precision(Precision p, F&& f) {
  if (p == Precision::F32) return f(float{});
  return f(double{});
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) raise(ErrorCode::IoFailure, "cannot create " + dir.string() + ": " + ec.message());
}

void write_json(const fs::path& path, const json& j) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) raise(ErrorCode::IoFailure, "cannot write " + path.string());
  os << j.dump(2) << '\n';
}

RunConfig base_config(const Options& o) { return o.config.empty() ? parse_run_config("{}") : load_run_config(o.config); }

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

const PairRecord& find_pair(const DatasetIndex& index, const std::string& id) {
  const PairRecord* r = index.find(id);
  if (!r) raise(ErrorCode::InvalidArgument, "pair '" + id + "' is not in " + (index.root / "index.jsonl").string());
  return *r;
}

// Field of view recorded by gen-data, unless overridden.
double dataset_fov(const fs::path& data, double override_fov) {
  if (override_fov > 0.0) return override_fov;
  const fs::path cfg = data / "config.json";
  if (!fs::exists(cfg)) return DatasetSpec{}.fov_deg;
  return load_run_config(cfg).dataset.fov_deg;
}

void print_counts(std::ostream& out, const DatasetIndex& index) {
  char buf[128];
  std::snprintf(buf, sizeof buf, "%-6s %7s %7s %7s %7s\n", "split", "pairs", "large", "small", "none");
  out << buf;
  for (const auto& [name, c] : {std::pair{"train", index.train_counts}, std::pair{"test", index.test_counts}}) {
    std::snprintf(buf, sizeof buf, "%-6s %7zu %7zu %7zu %7zu\n", name, c.total(), c.by_class[0], c.by_class[1],
                  c.by_class[2]);
    out << buf;
  }
}

int cmd_gen_data(CLI::App* sub, const Options& o, std::ostream& out) {
  RunConfig cfg = base_config(o);
  if (given(sub, "--seed")) cfg.dataset.seed = o.seed;
  if (given(sub, "--n-panoramas")) cfg.dataset.n_panoramas = o.n_panoramas;
  if (given(sub, "--crops-per-panorama")) cfg.dataset.crops_per_panorama = o.crops_per_panorama;
  cfg.dataset.validate();
  ensure_dir(o.out);
  const DatasetIndex index = build_dataset(cfg.dataset, o.out, o.threads);
  write_run_config(fs::path(o.out) / "config.json", cfg);
  print_counts(out, index);
  return 0;
}

template <typename T>
void run_training(const RunConfig& cfg, const Options& o, std::ostream& out) {
  const fs::path out_dir = o.out;
  const DatasetIndex index = read_index(o.data);
  const PairData train_data = PairData::load(index, Split::Train, o.threads);
  const PairData test_data =
      cfg.train.eval_interval > 0 ? PairData::load(index, Split::Test, o.threads) : PairData();

  std::unique_ptr<RotationNet<T>> net;
  LoadedCheckpoint<T> resumed;
  if (!o.resume.empty()) {
    resumed = load_checkpoint<T>(o.resume);
    if (!resumed.info.has_optimizer) {
      raise(ErrorCode::InvalidArgument, "checkpoint " + o.resume + " has no optimizer state to resume from");
    }
    if (resumed.info.seed != cfg.train.seed) {
      raise(ErrorCode::InvalidArgument, "checkpoint was trained with seed " + std::to_string(resumed.info.seed) +
                                            ", config asks for " + std::to_string(cfg.train.seed));
    }
    net = std::move(resumed.net);
  } else {
    net = std::make_unique<RotationNet<T>>(cfg.model);
  }
  Trainer<T> trainer(*net, train_data, cfg.train);
  if (!o.resume.empty()) {
    trainer.restore(resumed.info.step, resumed.info.adam_t, std::move(resumed.adam_m), std::move(resumed.adam_v));
  }

  std::ofstream log(out_dir / "train_log.csv", std::ios::trunc);
  if (!log) raise(ErrorCode::IoFailure, "cannot write " + (out_dir / "train_log.csv").string());
  log << "step,loss,wall_ms\n";
  std::ofstream eval_log;
  if (cfg.train.eval_interval > 0) {
    eval_log.open(out_dir / "eval_log.csv", std::ios::trunc);
    if (!eval_log) raise(ErrorCode::IoFailure, "cannot write " + (out_dir / "eval_log.csv").string());
    eval_log << "step,overlap,avg_deg,med_deg,pct_under_10\n";
  }
  const fs::path ckpt_dir = out_dir / cfg.train.checkpoint_dir;

  double last_loss = 0.0;
  trainer.run([&](const StepRecord& r) {
    last_loss = r.loss;
    log << r.step << ',' << fmt("%.9g", r.loss) << ',' << fmt("%.1f", r.wall_ms) << '\n';
    if (cfg.train.eval_interval > 0 && r.step % cfg.train.eval_interval == 0 && !test_data.empty()) {
      const EvalReport rep = evaluate(test_data, model_predictor(*net, test_data), {o.threads, false});
      for (const auto& row : rep.rows) {
        eval_log << r.step << ',' << to_string(row.overlap) << ',' << fmt("%.6f", row.avg_deg) << ','
                 << fmt("%.6f", row.med_deg) << ',' << fmt("%.3f", row.pct_under_10) << '\n';
      }
      eval_log.flush();
    }
    if (cfg.train.checkpoint_interval > 0 && r.step % cfg.train.checkpoint_interval == 0) {
      save_checkpoint(ckpt_dir / ("step_" + std::to_string(r.step)), *net, &trainer.optimizer(), r.step,
                      cfg.train.seed);
    }
  });
  if (!log) raise(ErrorCode::IoFailure, "short write to " + (out_dir / "train_log.csv").string());

  const fs::path final_base = out_dir / "final";
  save_checkpoint(final_base, *net, &trainer.optimizer(), trainer.steps_done(), cfg.train.seed);
  out << "trained " << trainer.steps_done() << " steps, last loss " << fmt("%.6g", last_loss) << "\n"
      << "checkpoint " << final_base.string() << "\n";
}

int cmd_train(CLI::App* sub, const Options& o, std::ostream& out) {
  RunConfig cfg = base_config(o);
  if (given(sub, "--max-steps")) cfg.train.max_steps = o.max_steps;
  if (given(sub, "--batch-size")) cfg.train.batch_size = o.batch_size;
  if (given(sub, "--lr")) cfg.train.lr = o.lr;
  if (given(sub, "--seed")) cfg.train.seed = o.seed;
  cfg.train.validate();
  if (!o.resume.empty()) cfg.model = read_checkpoint_info(o.resume).model;
  ensure_dir(o.out);
  write_run_config(fs::path(o.out) / "config.json", cfg);
  with_precision(cfg.model.precision, [&](auto tag) { run_training<decltype(tag)>(cfg, o, out); });
  return 0;
}

int cmd_eval(const Options& o, std::ostream& out) {
  const Split split = split_from_string(o.split);
  if (!o.oracle && o.checkpoint.empty()) raise(ErrorCode::InvalidArgument, "--checkpoint is required without --oracle");
  const DatasetIndex index = read_index(o.data);
  const PairData data = PairData::load(index, split, o.threads);
  const EvalOptions opts{o.threads, o.project_roll};

  json resolved = {{"data", o.data},       {"split", o.split},   {"oracle", o.oracle},
                   {"project_roll", o.project_roll}, {"threads", o.threads}};
  EvalReport report;
  if (o.oracle) {
    report = evaluate(data, oracle_predictor(data), opts);
  } else {
    const CheckpointInfo info = read_checkpoint_info(o.checkpoint);
    resolved["checkpoint"] = o.checkpoint;
    resolved["model"] = json::parse(model_config_to_json(info.model));
    report = with_precision(info.model.precision, [&](auto tag) {
      using T = decltype(tag);
      LoadedCheckpoint<T> ck = load_checkpoint<T>(o.checkpoint);
      return evaluate(data, model_predictor(*ck.net, data), opts);
    });
  }
  const fs::path dir = o.out;
  ensure_dir(dir);
  write_json(dir / "config.json", resolved);
  write_metrics_csv(dir / "metrics.csv", report.rows);
  write_pair_errors_csv(dir / "pair_errors.csv", report.pairs);
  out << format_table(report.rows);
  return 0;
}

int cmd_infer(const Options& o, std::ostream& out) {
  const CheckpointInfo info = read_checkpoint_info(o.checkpoint);
  const Image a = read_png(o.image_a);
  const Image b = read_png(o.image_b);
  const UnitQuaternion q = with_precision(info.model.precision, [&](auto tag) {
    using T = decltype(tag);
    LoadedCheckpoint<T> ck = load_checkpoint<T>(o.checkpoint);
    const std::size_t s = info.model.image_size;
    for (const Image* img : {&a, &b}) {
      if (img->height() != s || img->width() != s) {
        raise(ErrorCode::InvalidArgument, "images must be " + std::to_string(s) + "x" + std::to_string(s) +
                                              ", got " + std::to_string(img->height()) + "x" +
                                              std::to_string(img->width()));
      }
    }
    return predict(*ck.net, image_tensor<T>(a), image_tensor<T>(b));
  });
  const YawPitch yp = matrix_to_yaw_pitch(quat_to_matrix(q));
  char buf[160];
  std::snprintf(buf, sizeof buf, "%.9f %.9f %.9f %.9f %.6f %.6f\n", q.w(), q.x(), q.y(), q.z(), yp.yaw_deg,
                yp.pitch_deg);
  out << buf;
  return 0;
}

int cmd_attend(const Options& o, std::ostream& out) {
  const DatasetIndex index = read_index(o.data);
  const PairRecord& r = find_pair(index, o.pair);
  const Image a = read_png(index.root / r.crop_a);
  const Image b = read_png(index.root / r.crop_b);
  const CheckpointInfo info = read_checkpoint_info(o.checkpoint);
  const auto written = with_precision(info.model.precision, [&](auto tag) {
    using T = decltype(tag);
    LoadedCheckpoint<T> ck = load_checkpoint<T>(o.checkpoint);
    return export_attention(*ck.net, a, b, o.out, o.per_head);
  });
  write_json(fs::path(o.out) / "config.json", {{"checkpoint", o.checkpoint},
                                               {"data", o.data},
                                               {"pair", o.pair},
                                               {"per_head", o.per_head},
                                               {"model", json::parse(model_config_to_json(info.model))}});
  for (const auto& p : written) out << p.string() << "\n";
  return 0;
}

int cmd_footprint(const Options& o, std::ostream& out) {
  if (!o.oracle && o.checkpoint.empty()) raise(ErrorCode::InvalidArgument, "--checkpoint is required without --oracle");
  const DatasetIndex index = read_index(o.data);
  const PairRecord& r = find_pair(index, o.pair);
  const double fov = dataset_fov(o.data, o.fov);
  UnitQuaternion q_pred = r.quat_rel;
  json resolved = {{"data", o.data}, {"pair", o.pair}, {"fov_deg", fov}, {"oracle", o.oracle}};
  if (!o.oracle) {
    const CheckpointInfo info = read_checkpoint_info(o.checkpoint);
    resolved["checkpoint"] = o.checkpoint;
    resolved["model"] = json::parse(model_config_to_json(info.model));
    q_pred = with_precision(info.model.precision, [&](auto tag) {
      using T = decltype(tag);
      LoadedCheckpoint<T> ck = load_checkpoint<T>(o.checkpoint);
      return predict(*ck.net, image_tensor<T>(read_png(index.root / r.crop_a)),
                     image_tensor<T>(read_png(index.root / r.crop_b)));
    });
  }
  const Image pano = read_png(index.root / "panos" / (r.source_id + ".png"));
  const fs::path dir = o.out;
  ensure_dir(dir);
  const fs::path png = dir / ("footprint_" + r.pair_id + ".png");
  export_footprints(pano, make_footprints(r.quat_a, r.quat_b, q_pred, fov), png);
  write_json(dir / "config.json", resolved);
  out << png.string() << "\n";
  return 0;
}

int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidConfig:
    case ErrorCode::InvalidArgument:
    case ErrorCode::IoFailure:
    case ErrorCode::CorruptFile:
    case ErrorCode::VersionMismatch:
    case ErrorCode::EmptySplit:
    case ErrorCode::EmptyClass:
    case ErrorCode::OutOfRange:
    case ErrorCode::NonFiniteInput:
      return 1;
    default:
      return 2;
  }
}

std::string one_line(std::string s) {
  for (char& c : s) {
    if (c == '\n' || c == '\r') c = ' ';
  }
  return s;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  Options o;
  CLI::App app{"Relative rotation estimation from image pairs", "xrot"};
  app.require_subcommand(1);
  app.add_option("--threads", o.threads, "Worker threads for data generation, loading and evaluation")
      ->check(CLI::PositiveNumber);

  auto* gen = app.add_subcommand("gen-data", "Render a synthetic pair dataset");
  gen->add_option("--config", o.config, "Run configuration JSON")->check(CLI::ExistingFile);
  gen->add_option("--out", o.out, "Output directory")->required();
  gen->add_option("--seed", o.seed, "Overrides dataset.seed");
  gen->add_option("--n-panoramas", o.n_panoramas, "Overrides dataset.n_panoramas");
  gen->add_option("--crops-per-panorama", o.crops_per_panorama, "Overrides dataset.crops_per_panorama");

  auto* train = app.add_subcommand("train", "Train a model on a generated dataset");
  train->add_option("--config", o.config, "Run configuration JSON")->check(CLI::ExistingFile);
  train->add_option("--data", o.data, "Dataset directory")->required()->check(CLI::ExistingDirectory);
  train->add_option("--out", o.out, "Output directory")->required();
  train->add_option("--resume", o.resume, "Checkpoint to continue from");
  train->add_option("--max-steps", o.max_steps, "Overrides train.max_steps");
  train->add_option("--batch-size", o.batch_size, "Overrides train.batch_size");
  train->add_option("--lr", o.lr, "Overrides train.lr");
  train->add_option("--seed", o.seed, "Overrides train.seed");

  auto* eval = app.add_subcommand("eval", "Geodesic error statistics per overlap class");
  eval->add_option("--checkpoint", o.checkpoint, "Checkpoint base name or manifest path");
  eval->add_option("--data", o.data, "Dataset directory")->required()->check(CLI::ExistingDirectory);
  eval->add_option("--split", o.split, "train or test")->check(CLI::IsMember({"train", "test"}));
  eval->add_option("--out", o.out, "Directory for metrics.csv and pair_errors.csv")->default_val("eval");
  eval->add_flag("--oracle", o.oracle, "Score the ground truth instead of a model");
  eval->add_flag("--project-roll", o.project_roll, "Drop the roll of each prediction before scoring");

  auto* infer = app.add_subcommand("infer", "Predict the relative rotation of two images");
  infer->add_option("--checkpoint", o.checkpoint, "Checkpoint base name or manifest path")->required();
  infer->add_option("--image-a", o.image_a, "First image (PNG)")->required()->check(CLI::ExistingFile);
  infer->add_option("--image-b", o.image_b, "Second image (PNG)")->required()->check(CLI::ExistingFile);

  auto* attend = app.add_subcommand("attend", "Write cross-attention heatmaps for one pair");
  attend->add_option("--checkpoint", o.checkpoint, "Checkpoint base name or manifest path")->required();
  attend->add_option("--pair", o.pair, "Pair id from index.jsonl")->required();
  attend->add_option("--data", o.data, "Dataset directory")->required()->check(CLI::ExistingDirectory);
  attend->add_option("--out", o.out, "Output directory")->required();
  attend->add_flag("--per-head", o.per_head, "Also write one heatmap per layer and head");

  auto* foot = app.add_subcommand("footprint", "Draw true and predicted crop outlines on the panorama");
  foot->add_option("--checkpoint", o.checkpoint, "Checkpoint base name or manifest path");
  foot->add_option("--pair", o.pair, "Pair id from index.jsonl")->required();
  foot->add_option("--data", o.data, "Dataset directory")->required()->check(CLI::ExistingDirectory);
  foot->add_option("--out", o.out, "Output directory")->required();
  foot->add_option("--fov", o.fov, "Crop field of view in degrees (default: from the dataset config)");
  foot->add_flag("--oracle", o.oracle, "Use the ground-truth relative rotation as the prediction");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e, out, err);
    err << "error: InvalidArgument: " << one_line(e.what()) << "\n";
    return 1;
  }

  try {
    if (gen->parsed()) return cmd_gen_data(gen, o, out);
    if (train->parsed()) return cmd_train(train, o, out);
    if (eval->parsed()) return cmd_eval(o, out);
    if (infer->parsed()) return cmd_infer(o, out);
    if (attend->parsed()) return cmd_attend(o, out);
    if (foot->parsed()) return cmd_footprint(o, out);
  } catch (const Error& e) {
    err << "error: " << one_line(e.what()) << "\n";
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    err << "error: Internal: " << one_line(e.what()) << "\n";
    return 2;
  }
  return 2;
}

}  // namespace xrot::cli
