#include "eapo/pipeline.hpp"

#include <chrono>
#include <fstream>
#include <random>
#include <sstream>

#include <spdlog/spdlog.h>

#include "eapo/error.hpp"
#include "eapo/hashing.hpp"

namespace eapo {

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

namespace {

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open '" + path.string() + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

// Write-then-rename so an interrupted stage never leaves a truncated file.
void write_file(const fs::path& path, const std::string& content) {
  fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw Error("cannot write '" + tmp.string() + "'");
    out << content;
    if (!out) throw Error("write failed for '" + tmp.string() + "'");
  }
  fs::rename(tmp, path);
}

template <class T>
T get_or(const json& j, const char* key, T fallback) {
  if (!j.is_object() || !j.contains(key) || j.at(key).is_null()) return fallback;
  return j.at(key).get<T>();
}

ordered_json synthetic_json(const SyntheticConfig& s) {
  ordered_json j;
  j["dim"] = s.dim;
  j["n_train"] = s.n_train;
  j["n_test"] = s.n_test;
  j["positive_rate"] = s.positive_rate;
  j["shift_magnitude"] = s.shift_magnitude;
  j["class_separation"] = s.class_separation;
  j["intensity_log_mean"] = s.intensity_log_mean;
  j["intensity_log_std"] = s.intensity_log_std;
  j["intensity_margin_coupling"] = s.intensity_margin_coupling;
  j["seed"] = s.seed;
  return j;
}

SyntheticConfig synthetic_from(const json& j) {
  SyntheticConfig s;
  s.dim = get_or(j, "dim", s.dim);
  s.n_train = get_or(j, "n_train", s.n_train);
  s.n_test = get_or(j, "n_test", s.n_test);
  s.positive_rate = get_or(j, "positive_rate", s.positive_rate);
  s.shift_magnitude = get_or(j, "shift_magnitude", s.shift_magnitude);
  s.class_separation = get_or(j, "class_separation", s.class_separation);
  s.intensity_log_mean = get_or(j, "intensity_log_mean", s.intensity_log_mean);
  s.intensity_log_std = get_or(j, "intensity_log_std", s.intensity_log_std);
  s.intensity_margin_coupling = get_or(j, "intensity_margin_coupling", s.intensity_margin_coupling);
  s.seed = get_or(j, "seed", s.seed);
  return s;
}

ordered_json focal_json(const FocalParams& f) {
  ordered_json j;
  j["gamma"] = f.gamma;
  j["alpha"] = f.alpha;
  j["alpha_weighting"] = f.alpha_weighting;
  return j;
}

FocalParams focal_from(const json& j) {
  FocalParams f;
  f.gamma = get_or(j, "gamma", f.gamma);
  f.alpha = get_or(j, "alpha", f.alpha);
  f.alpha_weighting = get_or(j, "alpha_weighting", f.alpha_weighting);
  return f;
}

ordered_json standardizer_json(const Standardizer& s) {
  ordered_json j;
  j["means"] = s.means;
  j["stds"] = s.stds;
  return j;
}

Standardizer standardizer_from(const json& j) {
  Standardizer s;
  s.means = j.at("means").get<std::vector<double>>();
  s.stds = j.at("stds").get<std::vector<double>>();
  if (s.means.size() != s.stds.size()) throw Error("malformed standardizer file");
  for (double sd : s.stds) s.constant_mask.push_back(sd == 0.0);
  return s;
}

std::string short_hash(const std::string& text) { return sha256_hex(text).substr(0, 16); }

double ms_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
}

std::string format_double(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

EpochCallback checkpoint_callback(const ExperimentConfig& cfg, const fs::path& dir) {
  if (cfg.checkpoint_interval == 0) return {};
  return [interval = cfg.checkpoint_interval, dir](const Classifier& m, EpochRecord& rec) {
    if ((rec.epoch + 1) % interval == 0) {
      write_file(dir / ("checkpoint-epoch-" + std::to_string(rec.epoch + 1) + ".json"),
                 to_checkpoint(m));
    }
  };
}

}  // namespace

ExperimentConfig ExperimentConfig::from_json(const json& root, const fs::path& base_dir) {
  const json& j = root.contains("format") && root.at("format") == "eapo-manifest" ? root.at("config")
                                                                                   : root;
  ExperimentConfig cfg;
  const json data = j.value("data", json::object());
  if (data.contains("synthetic")) cfg.synthetic = synthetic_from(data.at("synthetic"));
  if (data.contains("files")) {
    const json& f = data.at("files");
    FileSource src;
    auto resolve = [&](const std::string& p) {
      fs::path path(p);
      return path.is_relative() && !base_dir.empty() ? base_dir / path : path;
    };
    src.train = resolve(f.at("train").get<std::string>());
    src.test = resolve(f.at("test").get<std::string>());
    const json schema = f.value("schema", json::object());
    src.schema.feature_columns = schema.at("features").get<std::vector<std::string>>();
    if (schema.contains("label")) src.schema.label_column = schema.at("label").get<std::string>();
    if (schema.contains("dm")) src.schema.dm_column = schema.at("dm").get<std::string>();
    const auto delim = get_or<std::string>(schema, "delimiter", ",");
    if (delim.size() != 1) throw InvalidArgument("schema delimiter must be one character");
    src.schema.delimiter = delim[0];
    cfg.files = std::move(src);
  }
  if (!cfg.synthetic && !cfg.files) cfg.synthetic = SyntheticConfig{};

  const json model = j.value("model", json::object());
  cfg.model.kind = parse_model_kind(get_or<std::string>(model, "kind", "mlp"));
  cfg.model.hidden = get_or(model, "hidden",
                            cfg.model.kind == ModelKind::mlp ? cfg.model.hidden
                                                             : std::vector<std::size_t>{});
  cfg.model.seed = get_or(model, "seed", cfg.model.seed);

  const json pre = j.value("pretrain", json::object());
  cfg.pretrain.loss = parse_loss_kind(get_or<std::string>(pre, "loss", "focal"));
  cfg.pretrain.focal = focal_from(pre.value("focal", json::object()));
  cfg.pretrain.epochs = get_or(pre, "epochs", PretrainConfig::default_epochs(cfg.pretrain.loss));
  cfg.pretrain.learning_rate = get_or(pre, "learning_rate", cfg.pretrain.learning_rate);
  cfg.pretrain.batch_size = get_or(pre, "batch_size", cfg.pretrain.batch_size);
  cfg.pretrain.seed = get_or(pre, "seed", cfg.pretrain.seed);

  const json ft = j.value("finetune", json::object());
  cfg.finetune.mode = parse_finetune_mode(get_or<std::string>(ft, "mode", "eapo"));
  cfg.finetune.k = get_or(ft, "k", cfg.finetune.k);
  cfg.finetune.weights.beta = get_or(ft, "beta", cfg.finetune.weights.beta);
  cfg.finetune.weights.lambda1 = get_or(ft, "lambda1", cfg.finetune.weights.lambda1);
  cfg.finetune.weights.lambda2 = get_or(ft, "lambda2", cfg.finetune.weights.lambda2);
  cfg.finetune.sft_loss = parse_loss_kind(
      get_or<std::string>(ft, "sft_loss", std::string(to_string(cfg.pretrain.loss))));
  cfg.finetune.focal = ft.contains("focal") ? focal_from(ft.at("focal")) : cfg.pretrain.focal;
  cfg.finetune.epochs = get_or(ft, "epochs", cfg.finetune.epochs);
  cfg.finetune.learning_rate = get_or(ft, "learning_rate", cfg.finetune.learning_rate);
  cfg.finetune.batch_size = get_or(ft, "batch_size", cfg.finetune.batch_size);
  cfg.finetune.seed = get_or(ft, "seed", cfg.finetune.seed);
  cfg.query_subsample = get_or(ft, "query_subsample", cfg.query_subsample);

  const json ev = j.value("evaluation", json::object());
  cfg.bin_width = get_or(ev, "bin_width", cfg.bin_width);

  cfg.checkpoint_interval = get_or(j, "checkpoint_interval", cfg.checkpoint_interval);
  if (j.contains("output_dir")) {
    fs::path out(j.at("output_dir").get<std::string>());
    cfg.output_dir = out.is_relative() && !base_dir.empty() ? base_dir / out : out;
  }
  if (j.contains("seed")) cfg.override_seed(j.at("seed").get<std::uint64_t>());
  return cfg;
}

ExperimentConfig ExperimentConfig::load(const fs::path& path) {
  json j;
  try {
    j = json::parse(read_file(path));
    return from_json(j, path.parent_path());
  } catch (const json::exception& e) {
    throw InvalidArgument("invalid config '" + path.string() + "': " + e.what());
  }
}

ordered_json ExperimentConfig::to_json() const {
  ordered_json j;
  ordered_json data;
  if (synthetic) data["synthetic"] = synthetic_json(*synthetic);
  if (files) {
    ordered_json f;
    f["train"] = fs::absolute(files->train).lexically_normal().string();
    f["test"] = fs::absolute(files->test).lexically_normal().string();
    ordered_json schema;
    schema["features"] = files->schema.feature_columns;
    if (files->schema.label_column) schema["label"] = *files->schema.label_column;
    if (files->schema.dm_column) schema["dm"] = *files->schema.dm_column;
    schema["delimiter"] = std::string(1, files->schema.delimiter);
    f["schema"] = schema;
    data["files"] = f;
  }
  j["data"] = data;
  j["model"] = {{"kind", std::string(to_string(model.kind))},
                {"hidden", model.hidden},
                {"seed", model.seed}};
  ordered_json pre;
  pre["loss"] = std::string(to_string(pretrain.loss));
  pre["focal"] = focal_json(pretrain.focal);
  pre["epochs"] = pretrain.epochs;
  pre["learning_rate"] = pretrain.learning_rate;
  pre["batch_size"] = pretrain.batch_size;
  pre["seed"] = pretrain.seed;
  j["pretrain"] = pre;
  ordered_json ft;
  ft["mode"] = std::string(to_string(finetune.mode));
  ft["k"] = finetune.k;
  ft["beta"] = finetune.weights.beta;
  ft["lambda1"] = finetune.weights.lambda1;
  ft["lambda2"] = finetune.weights.lambda2;
  ft["sft_loss"] = std::string(to_string(finetune.sft_loss));
  ft["focal"] = focal_json(finetune.focal);
  ft["epochs"] = finetune.epochs;
  ft["learning_rate"] = finetune.learning_rate;
  ft["batch_size"] = finetune.batch_size;
  ft["seed"] = finetune.seed;
  ft["query_subsample"] = query_subsample;
  j["finetune"] = ft;
  j["evaluation"] = {{"bin_width", bin_width}};
  j["checkpoint_interval"] = checkpoint_interval;
  j["output_dir"] = output_dir.string();
  return j;
}

void ExperimentConfig::validate() const {
  if (synthetic.has_value() == files.has_value()) {
    throw InvalidArgument("config must name exactly one data source (synthetic or files)");
  }
  if (synthetic) synthetic->validate();
  if (files) {
    for (const auto& p : {files->train, files->test}) {
      if (!fs::exists(p)) throw InvalidArgument("data file '" + p.string() + "' does not exist");
    }
    if (files->schema.label_column.has_value() == files->schema.dm_column.has_value()) {
      throw InvalidArgument("schema must name exactly one of label or dm");
    }
  }
  if (model.kind == ModelKind::logistic && !model.hidden.empty()) {
    throw InvalidArgument("a logistic model takes no hidden layers");
  }
  if (model.kind == ModelKind::mlp && model.hidden.empty()) {
    throw InvalidArgument("an mlp needs hidden layer widths");
  }
  pretrain.validate();
  finetune.validate();
  if (!(bin_width > 0.0)) throw InvalidArgument("bin_width must be positive");
}

void ExperimentConfig::override_seed(std::uint64_t seed) {
  if (synthetic) synthetic->seed = seed;
  model.seed = seed;
  pretrain.seed = seed;
  finetune.seed = seed;
}

PreparedData prepare_data(const ExperimentConfig& cfg) {
  cfg.validate();
  PreparedData d;
  if (cfg.synthetic) {
    auto [train, test] = generate_synthetic(*cfg.synthetic);
    d.train_raw = std::move(train);
    d.test_raw = std::move(test);
  } else {
    d.train_raw = load_table(cfg.files->train, cfg.files->schema);
    d.test_raw = load_table(cfg.files->test, cfg.files->schema);
  }
  if (d.train_raw.empty()) throw DataError("training table has no rows");
  if (d.test_raw.empty()) throw DataError("test table has no rows");
  d.standardizer = fit_standardizer(d.train_raw);
  d.train = apply_standardizer(d.standardizer, d.train_raw);
  d.test = apply_standardizer(d.standardizer, d.test_raw);
  return d;
}

TrainResult run_pretrain(const ExperimentConfig& cfg, const PreparedData& data) {
  auto model = Classifier::init(cfg.model.kind, data.train.dim(), cfg.model.hidden, cfg.model.seed);
  return pretrain(std::move(model), data.train, cfg.pretrain);
}

namespace {

std::vector<std::vector<double>> retrieval_queries(const ExperimentConfig& cfg,
                                                   const PreparedData& data) {
  auto queries = data.test.features();  // labels of the test split are never read here
  if (cfg.query_subsample > 0 && cfg.query_subsample < queries.size()) {
    std::seed_seq seq{static_cast<std::uint32_t>(cfg.finetune.seed),
                      static_cast<std::uint32_t>(cfg.finetune.seed >> 32), 31u};
    std::mt19937_64 rng(seq);
    std::vector<std::vector<double>> picked;
    std::sample(queries.begin(), queries.end(), std::back_inserter(picked), cfg.query_subsample, rng);
    return picked;
  }
  return queries;
}

AdaptResult adapt_with(const ExperimentConfig& cfg, const PreparedData& data,
                       const Classifier& pretrained, const EpochCallback& cb) {
  AdaptResult out;
  out.manifold = build_local_manifold(retrieval_queries(cfg, data), data.train, cfg.finetune.k);
  out.extreme = extract_extreme(out.manifold);
  spdlog::info("local manifold: {} records from {} queries, {} extreme", out.manifold.records.size(),
               out.manifold.query_count, out.extreme.records.size());
  const auto ref = freeze_reference(pretrained);
  out.trained = finetune(pretrained, ref, out.manifold, out.extreme, cfg.finetune, cb);
  return out;
}

}  // namespace

AdaptResult run_adapt(const ExperimentConfig& cfg, const PreparedData& data,
                      const Classifier& pretrained) {
  return adapt_with(cfg, data, pretrained, {});
}

ModelEvaluation evaluate_model(const ExperimentConfig& cfg, const PreparedData& data,
                               const Classifier& model) {
  ModelEvaluation ev;
  const auto train_scores = predict_probabilities(model, data.train);
  const auto train_labels = data.train.labels();
  const double threshold = select_threshold_pr(train_scores, train_labels);

  const auto test_scores = predict_probabilities(model, data.test);
  const auto test_labels = data.test.labels();
  ev.report = metrics_at_threshold(test_scores, test_labels, threshold);
  if (!ev.report.roc_auc) {
    ev.warnings.push_back("test split has a single class; roc_auc disabled");
  }

  std::vector<std::optional<double>> intensities;
  bool have_intensity = data.test.positive_count() > 0;
  for (const auto& r : data.test.records()) {
    if (r.label == 1 && !r.intensity) have_intensity = false;
    intensities.push_back(r.intensity);
  }
  if (have_intensity) {
    ev.breakdown =
        intensity_breakdown(test_scores, test_labels, intensities, threshold, cfg.bin_width);
  } else {
    ev.warnings.push_back("test positives lack intensities; no intensity breakdown");
  }
  for (const auto& w : ev.warnings) spdlog::warn("{}", w);
  return ev;
}

StageKeys stage_keys(const ExperimentConfig& cfg, const PreparedData& data) {
  const auto j = cfg.to_json();
  StageKeys k;
  k.data = sha256_hex(format_table(data.train_raw) + "\x1e" + format_table(data.test_raw));
  k.pretrain = short_hash(k.data + j["model"].dump() + j["pretrain"].dump());
  k.adapt = short_hash(k.pretrain + j["finetune"].dump());
  k.eval = short_hash(k.adapt + j["evaluation"].dump());
  return k;
}

StagePaths stage_paths(const ExperimentConfig& cfg, const StageKeys& keys) {
  StagePaths p;
  p.data_dir = cfg.output_dir / "data";
  p.pretrain_dir = cfg.output_dir / ("pretrain-" + keys.pretrain);
  p.adapt_dir = cfg.output_dir / ("adapt-" + keys.adapt);
  p.eval_dir = cfg.output_dir / ("eval-" + keys.eval);
  p.manifest = cfg.output_dir / "manifest.json";
  return p;
}

SynthOutputs cmd_synth(const ExperimentConfig& cfg) {
  cfg.validate();
  if (!cfg.synthetic) throw InvalidArgument("synth requires a synthetic data source");
  auto [train, test] = generate_synthetic(*cfg.synthetic);
  SynthOutputs out{cfg.output_dir / "data" / "train.csv", cfg.output_dir / "data" / "test.csv"};
  write_file(out.train, format_table(train));
  write_file(out.test, format_table(test));
  spdlog::info("wrote {} train and {} test rows", train.size(), test.size());
  return out;
}

namespace {

fs::path do_pretrain(const ExperimentConfig& cfg, const PreparedData& data, const StagePaths& p) {
  auto model = Classifier::init(cfg.model.kind, data.train.dim(), cfg.model.hidden, cfg.model.seed);
  auto result = pretrain(std::move(model), data.train, cfg.pretrain,
                         checkpoint_callback(cfg, p.pretrain_dir));
  write_file(p.pretrain_dir / "standardizer.json", standardizer_json(data.standardizer).dump(1) + "\n");
  write_file(p.pretrain_dir / "history.csv", result.history.to_table());
  const auto ckpt = p.pretrain_dir / "checkpoint.json";
  write_file(ckpt, to_checkpoint(result.model));
  spdlog::info("pretrained checkpoint: {}", ckpt.string());
  return ckpt;
}

Classifier load_pretrained(const StagePaths& p) {
  const auto ckpt = p.pretrain_dir / "checkpoint.json";
  if (!fs::exists(ckpt)) {
    throw Error("pretrained checkpoint '" + ckpt.string() +
                "' not found for this config; run the pretrain stage first");
  }
  return load_checkpoint(ckpt);
}

fs::path do_adapt(const ExperimentConfig& cfg, const PreparedData& data, const StagePaths& p) {
  const auto pretrained = load_pretrained(p);
  const auto stored = standardizer_from(json::parse(read_file(p.pretrain_dir / "standardizer.json")));
  if (!(stored.means == data.standardizer.means && stored.stds == data.standardizer.stds)) {
    throw Error("stored standardizer does not match the current training data");
  }
  auto result = adapt_with(cfg, data, pretrained, checkpoint_callback(cfg, p.adapt_dir));

  std::vector<Record> local_raw;
  for (auto idx : result.manifold.source_indices) local_raw.push_back(data.train_raw[idx]);
  std::vector<Record> extreme_raw;
  for (const auto& r : result.extreme.records) extreme_raw.push_back(data.train_raw[r.index]);
  write_file(p.adapt_dir / "local_manifold.csv",
             format_audit_table(local_raw, data.train_raw.feature_names()));
  write_file(p.adapt_dir / "extreme_subset.csv",
             format_audit_table(extreme_raw, data.train_raw.feature_names()));
  write_file(p.adapt_dir / "history.csv", result.trained.history.to_table());
  const auto ckpt = p.adapt_dir / "checkpoint.json";
  write_file(ckpt, to_checkpoint(result.trained.model));
  spdlog::info("adapted checkpoint: {}", ckpt.string());
  return ckpt;
}

std::vector<std::pair<std::string, std::string>> report_extras(const std::string& which,
                                                               const fs::path& ckpt,
                                                               const PreparedData& data,
                                                               const StageKeys& keys,
                                                               const ModelEvaluation& ev) {
  std::vector<std::pair<std::string, std::string>> extra{
      {"model", which},
      {"threshold_source", "train"},
      {"checkpoint_sha256", sha256_file(ckpt)},
      {"data_sha256", keys.data},
      {"n_train", std::to_string(data.train.size())},
      {"n_test", std::to_string(data.test.size())},
      {"n_test_positive", std::to_string(data.test.positive_count())},
  };
  for (std::size_t i = 0; i < ev.warnings.size(); ++i) {
    extra.emplace_back("warning_" + std::to_string(i), ev.warnings[i]);
  }
  return extra;
}

EvalOutputs do_eval(const ExperimentConfig& cfg, const PreparedData& data, const StageKeys& keys,
                    const StagePaths& p) {
  EvalOutputs out;
  auto emit = [&](const std::string& which, const fs::path& ckpt) {
    const auto model = load_checkpoint(ckpt);
    auto ev = evaluate_model(cfg, data, model);
    const auto report = p.eval_dir / (which + "_report.txt");
    write_file(report, format_report(ev.report, report_extras(which, ckpt, data, keys, ev)));
    out.files.push_back(report);
    if (ev.breakdown) {
      const auto bins = p.eval_dir / (which + "_intensity_bins.csv");
      write_file(bins, ev.breakdown->to_table());
      out.files.push_back(bins);
    }
    return ev;
  };
  out.pretrained = emit("pretrained", p.pretrain_dir / "checkpoint.json");
  const auto adapted = p.adapt_dir / "checkpoint.json";
  if (fs::exists(adapted)) {
    out.adapted = emit("adapted", adapted);
  } else {
    spdlog::warn("no adapted checkpoint for this config; evaluating the pretrained model only");
  }
  return out;
}

}  // namespace

fs::path cmd_pretrain(const ExperimentConfig& cfg) {
  const auto data = prepare_data(cfg);
  const auto keys = stage_keys(cfg, data);
  return do_pretrain(cfg, data, stage_paths(cfg, keys));
}

fs::path cmd_adapt(const ExperimentConfig& cfg) {
  const auto data = prepare_data(cfg);
  const auto keys = stage_keys(cfg, data);
  return do_adapt(cfg, data, stage_paths(cfg, keys));
}

EvalOutputs cmd_eval(const ExperimentConfig& cfg) {
  const auto data = prepare_data(cfg);
  const auto keys = stage_keys(cfg, data);
  const auto p = stage_paths(cfg, keys);
  load_pretrained(p);  // fails early with the stage hint when missing
  return do_eval(cfg, data, keys, p);
}

ordered_json cmd_run_all(const ExperimentConfig& cfg) {
  ordered_json durations;
  auto t0 = std::chrono::steady_clock::now();
  if (cfg.synthetic) cmd_synth(cfg);
  const auto data = prepare_data(cfg);
  const auto keys = stage_keys(cfg, data);
  const auto p = stage_paths(cfg, keys);
  durations["data_ms"] = ms_since(t0);

  t0 = std::chrono::steady_clock::now();
  const auto pre_ckpt = do_pretrain(cfg, data, p);
  durations["pretrain_ms"] = ms_since(t0);

  t0 = std::chrono::steady_clock::now();
  const auto ada_ckpt = do_adapt(cfg, data, p);
  durations["adapt_ms"] = ms_since(t0);

  t0 = std::chrono::steady_clock::now();
  const auto eval = do_eval(cfg, data, keys, p);
  durations["eval_ms"] = ms_since(t0);

  std::vector<fs::path> artifacts;
  if (cfg.synthetic) {
    artifacts.push_back(p.data_dir / "train.csv");
    artifacts.push_back(p.data_dir / "test.csv");
  }
  for (const auto& name : {"checkpoint.json", "history.csv", "standardizer.json"}) {
    artifacts.push_back(p.pretrain_dir / name);
  }
  for (const auto& name :
       {"checkpoint.json", "history.csv", "local_manifold.csv", "extreme_subset.csv"}) {
    artifacts.push_back(p.adapt_dir / name);
  }
  artifacts.insert(artifacts.end(), eval.files.begin(), eval.files.end());

  ordered_json m;
  m["format"] = "eapo-manifest";
  m["version"] = kVersion;
  m["config"] = cfg.to_json();
  m["config_sha256"] = sha256_hex(m["config"].dump());
  m["stage_keys"] = {{"data", keys.data},
                     {"pretrain", keys.pretrain},
                     {"adapt", keys.adapt},
                     {"eval", keys.eval}};
  m["seeds"] = {{"data", cfg.synthetic ? cfg.synthetic->seed : 0},
                {"model", cfg.model.seed},
                {"pretrain", cfg.pretrain.seed},
                {"finetune", cfg.finetune.seed}};
  m["threshold_source"] = "train";
  ordered_json hashes;
  for (const auto& a : artifacts) {
    hashes[fs::relative(a, cfg.output_dir).generic_string()] = sha256_file(a);
  }
  m["artifacts"] = hashes;
  ordered_json summary;
  summary["pretrained_roc_auc"] = eval.pretrained.report.roc_auc ? ordered_json(*eval.pretrained.report.roc_auc) : ordered_json();
  if (eval.adapted) {
    summary["adapted_roc_auc"] = eval.adapted->report.roc_auc ? ordered_json(*eval.adapted->report.roc_auc) : ordered_json();
  }
  m["summary"] = summary;
  m["durations_ms"] = durations;
  write_file(p.manifest, m.dump(2) + "\n");
  spdlog::info("manifest: {} (pretrained auc {}, adapted auc {})", p.manifest.string(),
               eval.pretrained.report.roc_auc ? format_double(*eval.pretrained.report.roc_auc) : "NA",
               eval.adapted && eval.adapted->report.roc_auc ? format_double(*eval.adapted->report.roc_auc)
                                                            : "NA");
  return m;
}

std::vector<std::string> verify_manifest(const fs::path& manifest_path) {
  const auto m = json::parse(read_file(manifest_path));
  const auto root = manifest_path.parent_path();
  std::vector<std::string> bad;
  for (const auto& [rel, digest] : m.at("artifacts").items()) {
    const auto path = root / rel;
    if (!fs::exists(path) || sha256_file(path) != digest.get<std::string>()) bad.push_back(rel);
  }
  return bad;
}

}  // namespace eapo
