#include "vsd/commands.hpp"

#include <cmath>
#include <filesystem>

#include "vsd/diagnostics.hpp"

namespace vsd {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

std::string join(const std::string& dir, const char* file) { return (fs::path(dir) / file).string(); }

std::string default_out_dir(const std::string& out_dir, const std::string& checkpoint_path) {
  if (!out_dir.empty()) return out_dir;
  const fs::path parent = fs::path(checkpoint_path).parent_path();
  return parent.empty() ? "." : parent.string();
}

void require_test_rows(const DatasetHandle& d) {
  if (d.test.size() == 0) throw DataError(d.source + ": the test split is empty");
}

void write_report(const MetricsReport& report, const std::string& dir, const char* json_file, const char* csv_file) {
  write_file_atomic(join(dir, json_file), report.to_json().dump(2) + "\n");
  write_file_atomic(join(dir, csv_file), report.to_csv());
}

}  // namespace

Model build_model(const ExperimentConfig& config, const DatasetHandle& data) {
  const Likelihood lik = config.likelihood();
  if (lik == Likelihood::Categorical && data.regression()) {
    throw ConfigError("categorical likelihood on the regression dataset " + data.source);
  }
  if (lik == Likelihood::Gaussian && !data.regression()) {
    throw ConfigError("gaussian likelihood on the classification dataset " + data.source);
  }
  Network net = [&] {
    try {
      return Network(data.input_shape, config.model.architecture, parse_variant(config.model.variant),
                     config.model.layers, config.train.seed);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(std::string("model.architecture: ") + e.what());
    }
  }();
  const std::size_t expected = lik == Likelihood::Categorical ? data.classes : data.train.targets.cols();
  if (net.output_dim() != expected) {
    throw ConfigError("model.architecture ends in " + std::to_string(net.output_dim()) + " outputs but the data needs " +
                      std::to_string(expected));
  }
  double log_precision = 0.0;
  const bool fixed = config.model.noise_variance > 0.0;
  if (fixed) {
    const double y_std = data.norm.y_std.empty() ? 1.0 : data.norm.y_std[0];
    log_precision = std::log(y_std * y_std / config.model.noise_variance);
  }
  return Model(std::move(net), lik, log_precision, fixed);
}

TrainOutcome cmd_train(const ExperimentConfig& config, std::ostream& log, bool resume) {
  config.validate();
  const std::string out = resolve_output_dir(config.output_dir);
  const DatasetHandle data = load_dataset(config.data);
  Model model = build_model(config, data);
  const json resolved = config_to_json(config);
  write_file_atomic(join(out, kResolvedConfigFile), resolved.dump(2) + "\n");

  Checkpoint ckpt;
  ckpt.spec_hash = spec_hash(config);
  ckpt.config = resolved;
  ckpt.normalization = data.norm;

  std::optional<TrainState> resume_state;
  const std::string ckpt_path = join(out, kCheckpointFile);
  if (resume && fs::exists(ckpt_path)) {
    Checkpoint prev = load_checkpoint(ckpt_path);
    if (prev.spec_hash != ckpt.spec_hash) {
      throw ConfigError(ckpt_path + " was written for a different configuration (spec hash " + prev.spec_hash + ")");
    }
    model.load_state(prev.parameters);
    resume_state = prev.state;
    log << "resuming from epoch " << prev.state.epoch << "\n";
  }

  TrainOptions options;
  options.lambda = config.lambda;
  if (resume_state) options.resume = &*resume_state;
  options.on_epoch = [&](const TrainState& s) {
    ckpt.state = s;
    ckpt.parameters = model.state();
    save_checkpoint(ckpt_path, ckpt);
    write_file_atomic(join(out, kTraceFile), trace_csv(s.trace));
    const EpochRecord& r = s.trace.back();
    log << "epoch " << r.epoch << " objective " << format_double(r.objective) << " data " << format_double(r.data_term)
        << " kl " << format_double(r.kl_term) << " lr " << format_double(r.lr) << "\n";
  };

  try {
    TrainState final_state = train(model, data.train, config.train, options);
    if (final_state.trace.empty()) {
      // Nothing to do (already trained or zero epochs): still leave a complete run behind.
      ckpt.state = final_state;
      ckpt.parameters = model.state();
      save_checkpoint(ckpt_path, ckpt);
      write_file_atomic(join(out, kTraceFile), trace_csv(final_state.trace));
    }
    return {out, final_state.trace};
  } catch (const DivergenceError&) {
    if (!fs::exists(ckpt_path)) {
      ckpt.parameters = model.state();
      save_checkpoint(ckpt_path, ckpt);
      write_file_atomic(join(out, kTraceFile), trace_csv({}));
    }
    throw;
  }
}

LoadedRun load_run(const std::string& checkpoint_path) {
  Checkpoint ckpt = load_checkpoint(checkpoint_path);
  ExperimentConfig config = config_from_json(ckpt.config);
  const DatasetHandle data = load_dataset(config.data, &ckpt.normalization);
  Model model = build_model(config, data);
  try {
    model.load_state(ckpt.parameters);
  } catch (const ShapeError& e) {
    throw DataError(checkpoint_path + ": " + e.what());
  }
  return {std::move(config), std::move(ckpt), std::move(model)};
}

MetricsReport cmd_eval(const std::string& checkpoint_path, const std::optional<DatasetConfig>& data_cfg,
                       std::size_t samples, const std::string& out_dir, std::ostream& log) {
  LoadedRun run = load_run(checkpoint_path);
  const DatasetHandle data = load_dataset(data_cfg ? *data_cfg : run.config.data, &run.checkpoint.normalization);
  require_test_rows(data);
  if (data.input_shape != run.model.network.input_shape()) throw DataError("evaluation data has a different input shape");
  const std::size_t s = samples > 0 ? samples : run.config.train.eval_samples;
  Rng local = Rng::stream(run.config.train.seed, 10);
  Rng global = Rng::stream(run.config.train.seed, 11);
  const std::string dir = resolve_output_dir(default_out_dir(out_dir, checkpoint_path));

  MetricsReport report;
  if (run.model.likelihood == Likelihood::Categorical) {
    report.task = "classification";
    const Tensor probs = predict_proba(run.model, data.test.x, s, local, global);
    std::size_t clamped = 0;
    report.nll = nll(probs, data.test.labels, &clamped);
    if (clamped > 0) log << "warning: " << clamped << " true-class probabilities clamped to 1e-12\n";
    report.error_rate = error_rate(probs, data.test.labels);
    report.ece = ece(probs, data.test.labels, run.config.eval.ece_bins);
    report.entropy = predictive_entropy(probs, run.config.eval.entropy_per_class, run.config.eval.entropy_bins);
    report.mean_predictive_entropy = report.entropy->mean;
    write_file_atomic(join(dir, kCalibrationFile),
                      calibration_csv(calibration_bins(probs, data.test.labels, run.config.eval.ece_bins)));
  } else {
    report.task = "regression";
    const RegressionPrediction pred =
        denormalize(predict_regression(run.model, data.test.x, s, local, global), data.norm);
    const Tensor targets = denormalize_targets(data.test.targets, data.norm);
    report.regression = regression_metrics(pred.mean, pred.variance, targets);
    std::string csv = "index,target,mean,variance\n";
    for (std::size_t i = 0; i < targets.size(); ++i) {
      csv += std::to_string(i) + "," + format_double(targets[i]) + "," + format_double(pred.mean[i]) + "," +
             format_double(pred.variance[i]) + "\n";
    }
    write_file_atomic(join(dir, kPredictionsFile), csv);
  }
  write_report(report, dir, kMetricsJsonFile, kMetricsCsvFile);
  log << "wrote " << join(dir, kMetricsJsonFile) << "\n";
  return report;
}

MetricsReport cmd_ood(const std::string& checkpoint_path, const DatasetConfig& out_cfg, std::size_t samples,
                      const std::string& out_dir, std::ostream& log) {
  LoadedRun run = load_run(checkpoint_path);
  if (run.model.likelihood != Likelihood::Categorical) throw ConfigError("ood needs a classification model");
  const DatasetHandle in_data = load_dataset(run.config.data, &run.checkpoint.normalization);
  const DatasetHandle out_data = load_dataset(out_cfg, &run.checkpoint.normalization);
  require_test_rows(in_data);
  require_test_rows(out_data);
  if (out_data.input_shape != in_data.input_shape) {
    throw DataError("out-of-distribution data has input shape " + shape_to_string(out_data.input_shape) +
                    ", the model expects " + shape_to_string(in_data.input_shape));
  }
  const std::size_t s = samples > 0 ? samples : run.config.train.eval_samples;
  Rng local = Rng::stream(run.config.train.seed, 12);
  Rng global = Rng::stream(run.config.train.seed, 13);
  const Tensor p_in = predict_proba(run.model, in_data.test.x, s, local, global);
  const Tensor p_out = predict_proba(run.model, out_data.test.x, s, local, global);
  const std::vector<double> s_in = max_probability(p_in);
  const std::vector<double> s_out = max_probability(p_out);

  MetricsReport report;
  report.task = "ood";
  report.ood = ood_metrics(s_in, s_out);
  const EntropyReport e_in = predictive_entropy(p_in, run.config.eval.entropy_per_class, run.config.eval.entropy_bins);
  report.entropy = predictive_entropy(p_out, run.config.eval.entropy_per_class, run.config.eval.entropy_bins);
  report.mean_predictive_entropy = report.entropy->mean;

  const std::string dir = resolve_output_dir(default_out_dir(out_dir, checkpoint_path));
  write_report(report, dir, kOodJsonFile, kOodCsvFile);
  write_file_atomic(join(dir, kEntropyInFile), entropy_csv(e_in));
  write_file_atomic(join(dir, kEntropyOutFile), entropy_csv(*report.entropy));
  log << "wrote " << join(dir, kOodJsonFile) << "\n";
  return report;
}

MetricsReport cmd_diagnose(const std::string& checkpoint_path, const std::string& out_dir, std::ostream& log) {
  LoadedRun run = load_run(checkpoint_path);
  const DatasetHandle data = load_dataset(run.config.data, &run.checkpoint.normalization);
  const Batch& source = data.test.size() > 0 ? data.test : data.train;
  std::vector<std::size_t> rows(std::min(source.size(), run.config.eval.regularizer_rows));
  for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = i;
  const Batch probe = take(source, rows);

  ordered_json layers = ordered_json::array();
  ordered_json regs = ordered_json::array();
  Network& net = run.model.network;
  Rng rng = Rng::stream(run.config.train.seed, 14);
  for (std::size_t i = 0; i < net.size(); ++i) {
    Layer& layer = net.layer(i);
    if (const Tensor* w = layer.weight()) {
      ordered_json entry;
      entry["layer"] = i;
      entry["kind"] = layer.kind();
      entry["shape"] = w->shape();
      entry["spectral_norm"] = spectral_norm(*w);
      entry["stable_rank"] = frobenius_norm(*w) > 0.0 ? stable_rank(*w) : 0.0;
      layers.push_back(entry);
    }
    if (auto* vsd = dynamic_cast<VsdDense*>(&layer); vsd != nullptr && !rows.empty()) {
      RegularizerProblem p;
      p.network = &net;
      p.layer = i;
      p.x = probe.x;
      p.loss = run.model.likelihood == Likelihood::Gaussian ? RegLoss::SquaredError : RegLoss::CrossEntropy;
      p.targets = probe.targets;
      p.labels = probe.labels;
      const Tensor alpha = exp(vsd->log_alpha().value);
      const RegularizerEstimate est =
          estimate_regularizer(p, alpha, vsd->chain().matrix(), run.config.eval.regularizer_samples, rng);
      ordered_json entry;
      entry["layer"] = i;
      entry["rows"] = rows.size();
      entry["samples"] = run.config.eval.regularizer_samples;
      entry["mc_value"] = est.mc_value;
      entry["analytic_value"] = est.analytic_value;
      entry["noise_scale"] = est.noise_scale;
      regs.push_back(entry);
    }
  }
  MetricsReport report;
  report.task = "diagnose";
  report.diagnostics["weights"] = layers;
  report.diagnostics["regularizer"] = regs;

  const std::string dir = resolve_output_dir(default_out_dir(out_dir, checkpoint_path));
  write_file_atomic(join(dir, kDiagnosticsFile), report.to_json().dump(2) + "\n");
  const std::string metrics_path = join(dir, kMetricsJsonFile);
  if (fs::exists(metrics_path)) {
    ordered_json metrics = ordered_json::parse(read_file(metrics_path), nullptr, false);
    if (!metrics.is_discarded() && metrics.is_object()) {
      metrics["diagnostics"] = report.diagnostics;
      write_file_atomic(metrics_path, metrics.dump(2) + "\n");
    }
  }
  log << "wrote " << join(dir, kDiagnosticsFile) << "\n";
  return report;
}

}  // namespace vsd
