// vsd: train, evaluate and inspect Variational Structured Dropout models.

#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "vsd/commands.hpp"

namespace {

using nlohmann::json;

// A dataset section taken from the checkpoint's config with `data.`-relative overrides.
vsd::DatasetConfig dataset_from(const vsd::Checkpoint& ckpt, const std::vector<std::string>& overrides) {
  json tree = ckpt.config;
  for (const std::string& o : overrides) vsd::apply_override(tree, "data." + o);
  return vsd::config_from_json(tree).data;
}

std::string default_out(const std::string& checkpoint) {
  const std::filesystem::path p(checkpoint);
  return p.has_parent_path() ? p.parent_path().string() : std::string(".");
}

int report(const char* kind, const std::exception& e, int code) {
  std::cerr << "vsd: " << kind << ": " << e.what() << "\n";
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Variational Structured Dropout for Bayesian neural networks"};
  app.require_subcommand(1);

  std::string config_path;
  std::vector<std::string> sets;
  std::optional<std::string> out_dir, variant;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> epochs;
  bool resume = false;
  auto* train = app.add_subcommand("train", "train a model and write checkpoint.json, trace.csv");
  train->add_option("-c,--config", config_path, "JSON config file");
  train->add_option("--set", sets, "override a config value, e.g. train.lr=0.01")->take_all();
  train->add_option("-o,--output", out_dir, "output directory");
  train->add_option("--variant", variant, "map|mcd|vd|ard-vd|bbb|vsd|vsd-hier");
  train->add_option("--seed", seed, "training seed");
  train->add_option("--epochs", epochs, "number of epochs");
  train->add_flag("--resume", resume, "continue from the checkpoint in the output directory");

  std::string checkpoint;
  std::size_t samples = 0;
  std::vector<std::string> data_sets;
  std::string eval_out;
  auto* eval = app.add_subcommand("eval", "evaluate on a test split");
  eval->add_option("checkpoint", checkpoint, "checkpoint.json")->required();
  eval->add_option("-S,--samples", samples, "Monte-Carlo passes (default from config)");
  eval->add_option("--data", data_sets, "dataset override, e.g. source=synthetic-moons")->take_all();
  eval->add_option("-o,--output", eval_out, "output directory (default: checkpoint directory)");

  std::vector<std::string> ood_sets;
  auto* ood = app.add_subcommand("ood", "out-of-distribution detection against a second dataset");
  ood->add_option("checkpoint", checkpoint, "checkpoint.json")->required();
  ood->add_option("-S,--samples", samples, "Monte-Carlo passes (default from config)");
  ood->add_option("--out-data", ood_sets, "out-of-distribution dataset, as overrides of the training data")
      ->take_all()
      ->required();
  ood->add_option("-o,--output", eval_out, "output directory (default: checkpoint directory)");

  auto* diagnose = app.add_subcommand("diagnose", "spectral norms, stable ranks and the dropout regularizer");
  diagnose->add_option("checkpoint", checkpoint, "checkpoint.json")->required();
  diagnose->add_option("-o,--output", eval_out, "output directory (default: checkpoint directory)");

  auto* verify = app.add_subcommand("verify", "run the built-in oracle checks");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? vsd::kExitOk : vsd::kExitUsage;
  }

  try {
    if (*train) {
      std::vector<std::string> overrides = sets;
      if (out_dir) overrides.push_back("output_dir=\"" + *out_dir + "\"");
      if (variant) overrides.push_back("model.variant=\"" + *variant + "\"");
      if (seed) overrides.push_back("train.seed=" + std::to_string(*seed));
      if (epochs) overrides.push_back("train.epochs=" + std::to_string(*epochs));
      const vsd::ExperimentConfig config = vsd::load_config(config_path, overrides);
      const vsd::TrainOutcome r = vsd::cmd_train(config, std::cerr, resume);
      std::cout << r.output_dir << "\n";
    } else if (*eval) {
      std::optional<vsd::DatasetConfig> data;
      if (!data_sets.empty()) data = dataset_from(vsd::load_checkpoint(checkpoint), data_sets);
      const std::string dir = eval_out.empty() ? default_out(checkpoint) : eval_out;
      const vsd::MetricsReport m = vsd::cmd_eval(checkpoint, data, samples, dir, std::cerr);
      std::cout << m.to_json().dump(2) << "\n";
    } else if (*ood) {
      const vsd::DatasetConfig data = dataset_from(vsd::load_checkpoint(checkpoint), ood_sets);
      const std::string dir = eval_out.empty() ? default_out(checkpoint) : eval_out;
      const vsd::MetricsReport m = vsd::cmd_ood(checkpoint, data, samples, dir, std::cerr);
      std::cout << m.to_json().dump(2) << "\n";
    } else if (*diagnose) {
      const std::string dir = eval_out.empty() ? default_out(checkpoint) : eval_out;
      const vsd::MetricsReport m = vsd::cmd_diagnose(checkpoint, dir, std::cerr);
      std::cout << m.to_json().dump(2) << "\n";
    } else if (*verify) {
      return vsd::cmd_verify(std::cout) ? vsd::kExitOk : vsd::kExitVerify;
    }
  } catch (const vsd::ConfigError& e) {
    return report("config error", e, vsd::kExitConfig);
  } catch (const vsd::DataError& e) {
    return report("data error", e, vsd::kExitData);
  } catch (const vsd::ShapeError& e) {
    return report("data error", e, vsd::kExitData);
  } catch (const vsd::DivergenceError& e) {
    return report("diverged", e, vsd::kExitDivergence);
  } catch (const std::exception& e) {
    return report("error", e, vsd::kExitUsage);
  }
  return vsd::kExitOk;
}
