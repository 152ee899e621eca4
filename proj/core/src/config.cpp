#include "vsd/config.hpp"

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

namespace vsd {

namespace {

using nlohmann::json;

const std::set<std::string> kSources{"synthetic-cubic",  "synthetic-two-cluster", "synthetic-moons",
                                     "csv-regression",   "csv-classification",    "idx-images"};

template <typename T>
void read(const json& j, const char* key, T& out, const std::string& section) {
  try {
    j.at(key).get_to(out);
  } catch (const json::exception& e) {
    throw ConfigError(section + "." + key + ": " + e.what());
  }
}

}  // namespace

Likelihood ExperimentConfig::likelihood() const {
  if (model.likelihood == "auto") {
    return data.source == "synthetic-cubic" || data.source == "synthetic-two-cluster" ||
                   data.source == "csv-regression"
               ? Likelihood::Gaussian
               : Likelihood::Categorical;
  }
  try {
    return parse_likelihood(model.likelihood);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("model.likelihood: ") + e.what());
  }
}

void ExperimentConfig::validate() const {
  try {
    (void)parse_variant(model.variant);
    train.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  (void)likelihood();
  if (model.architecture.empty()) throw ConfigError("model.architecture is empty");
  if (!(lambda >= 0.0)) throw ConfigError("lambda must be non-negative");
  if (model.noise_variance < 0.0) throw ConfigError("model.noise_variance must be non-negative");
  const LayerOptions& o = model.layers;
  if (!(o.init_alpha > 0.0)) throw ConfigError("model.init_alpha must be positive");
  if (!(o.mcd_drop_prob >= 0.0 && o.mcd_drop_prob < 1.0)) throw ConfigError("model.mcd_drop_prob must lie in [0, 1)");
  if (!(o.length_scale_sq >= 0.0)) throw ConfigError("model.length_scale_sq must be non-negative");
  if (!(o.bbb_prior_sigma > 0.0) || !(o.bbb_init_sigma > 0.0)) throw ConfigError("model.bbb sigmas must be positive");
  if (!(o.hyper_a > 0.0) || !(o.hyper_b > 0.0)) throw ConfigError("model.hyper_a and model.hyper_b must be positive");
  if (!(o.init_delta > 0.0)) throw ConfigError("model.init_delta must be positive");
  if (kSources.count(data.source) == 0) throw ConfigError("data.source: unknown source '" + data.source + "'");
  if (!(data.test_fraction >= 0.0 && data.test_fraction < 1.0)) throw ConfigError("data.test_fraction must lie in [0, 1)");
  if (eval.ece_bins == 0 || eval.entropy_bins == 0) throw ConfigError("eval bin counts must be positive");
  if (output_dir.empty()) throw ConfigError("output_dir is empty");
}

json config_to_json(const ExperimentConfig& c) {
  const LayerOptions& o = c.model.layers;
  json j;
  j["model"] = {{"architecture", c.model.architecture},
                {"variant", c.model.variant},
                {"likelihood", c.model.likelihood},
                {"noise_variance", c.model.noise_variance},
                {"transforms", o.transforms},
                {"householder_rank", o.householder_rank},
                {"init_alpha", o.init_alpha},
                {"mcd_drop_prob", o.mcd_drop_prob},
                {"length_scale_sq", o.length_scale_sq},
                {"bbb_prior_sigma", o.bbb_prior_sigma},
                {"bbb_init_sigma", o.bbb_init_sigma},
                {"hyper_a", o.hyper_a},
                {"hyper_b", o.hyper_b},
                {"init_gamma", o.init_gamma},
                {"init_delta", o.init_delta}};
  j["objective"] = {{"lambda", c.lambda}};
  const TrainSpec& t = c.train;
  j["train"] = {{"optimizer", t.optimizer},       {"lr", t.lr},
                {"beta1", t.beta1},               {"beta2", t.beta2},
                {"eps", t.eps},                   {"momentum", t.momentum},
                {"lr_gamma", t.lr_gamma},         {"lr_step", t.lr_step},
                {"milestones", t.milestones},     {"epochs", t.epochs},
                {"batch_size", t.batch_size},     {"seed", t.seed},
                {"eval_samples", t.eval_samples}, {"train_samples", t.train_samples}};
  const DatasetConfig& d = c.data;
  j["data"] = {{"source", d.source},
               {"path", d.path},
               {"labels_path", d.labels_path},
               {"test_path", d.test_path},
               {"test_labels_path", d.test_labels_path},
               {"target_column", d.target_column},
               {"n_train", d.n_train},
               {"n_test", d.n_test},
               {"test_fraction", d.test_fraction},
               {"noise", d.noise},
               {"seed", d.seed},
               {"split_index", d.split_index},
               {"normalize", d.normalize}};
  j["eval"] = {{"ece_bins", c.eval.ece_bins},
               {"entropy_bins", c.eval.entropy_bins},
               {"entropy_per_class", c.eval.entropy_per_class},
               {"regularizer_samples", c.eval.regularizer_samples},
               {"regularizer_rows", c.eval.regularizer_rows}};
  j["output_dir"] = c.output_dir;
  return j;
}

void merge_config(json& base, const json& patch, const std::string& where) {
  if (!patch.is_object()) throw ConfigError((where.empty() ? "config" : where) + ": expected an object");
  for (auto it = patch.begin(); it != patch.end(); ++it) {
    const std::string path = where.empty() ? it.key() : where + "." + it.key();
    if (!base.contains(it.key())) throw ConfigError("unknown config key '" + path + "'");
    json& target = base[it.key()];
    if (target.is_object()) {
      merge_config(target, it.value(), path);
    } else {
      target = it.value();
    }
  }
}

ExperimentConfig config_from_json(const json& j) {
  json full = config_to_json(ExperimentConfig{});
  merge_config(full, j);
  ExperimentConfig c;
  const json& m = full["model"];
  read(m, "architecture", c.model.architecture, "model");
  read(m, "variant", c.model.variant, "model");
  read(m, "likelihood", c.model.likelihood, "model");
  read(m, "noise_variance", c.model.noise_variance, "model");
  LayerOptions& o = c.model.layers;
  read(m, "transforms", o.transforms, "model");
  read(m, "householder_rank", o.householder_rank, "model");
  read(m, "init_alpha", o.init_alpha, "model");
  read(m, "mcd_drop_prob", o.mcd_drop_prob, "model");
  read(m, "length_scale_sq", o.length_scale_sq, "model");
  read(m, "bbb_prior_sigma", o.bbb_prior_sigma, "model");
  read(m, "bbb_init_sigma", o.bbb_init_sigma, "model");
  read(m, "hyper_a", o.hyper_a, "model");
  read(m, "hyper_b", o.hyper_b, "model");
  read(m, "init_gamma", o.init_gamma, "model");
  read(m, "init_delta", o.init_delta, "model");
  read(full["objective"], "lambda", c.lambda, "objective");
  const json& t = full["train"];
  read(t, "optimizer", c.train.optimizer, "train");
  read(t, "lr", c.train.lr, "train");
  read(t, "beta1", c.train.beta1, "train");
  read(t, "beta2", c.train.beta2, "train");
  read(t, "eps", c.train.eps, "train");
  read(t, "momentum", c.train.momentum, "train");
  read(t, "lr_gamma", c.train.lr_gamma, "train");
  read(t, "lr_step", c.train.lr_step, "train");
  read(t, "milestones", c.train.milestones, "train");
  read(t, "epochs", c.train.epochs, "train");
  read(t, "batch_size", c.train.batch_size, "train");
  read(t, "seed", c.train.seed, "train");
  read(t, "eval_samples", c.train.eval_samples, "train");
  read(t, "train_samples", c.train.train_samples, "train");
  const json& d = full["data"];
  read(d, "source", c.data.source, "data");
  read(d, "path", c.data.path, "data");
  read(d, "labels_path", c.data.labels_path, "data");
  read(d, "test_path", c.data.test_path, "data");
  read(d, "test_labels_path", c.data.test_labels_path, "data");
  read(d, "target_column", c.data.target_column, "data");
  read(d, "n_train", c.data.n_train, "data");
  read(d, "n_test", c.data.n_test, "data");
  read(d, "test_fraction", c.data.test_fraction, "data");
  read(d, "noise", c.data.noise, "data");
  read(d, "seed", c.data.seed, "data");
  read(d, "split_index", c.data.split_index, "data");
  read(d, "normalize", c.data.normalize, "data");
  const json& e = full["eval"];
  read(e, "ece_bins", c.eval.ece_bins, "eval");
  read(e, "entropy_bins", c.eval.entropy_bins, "eval");
  read(e, "entropy_per_class", c.eval.entropy_per_class, "eval");
  read(e, "regularizer_samples", c.eval.regularizer_samples, "eval");
  read(e, "regularizer_rows", c.eval.regularizer_rows, "eval");
  read(full, "output_dir", c.output_dir, "config");
  c.validate();
  return c;
}

void apply_override(json& tree, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("override '" + assignment + "' is not key=value");
  const std::string key = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  json value = json::parse(text, nullptr, false);
  if (value.is_discarded()) value = text;

  json patch = value;
  std::vector<std::string> parts;
  std::stringstream ss(key);
  std::string part;
  while (std::getline(ss, part, '.')) {
    if (part.empty()) throw ConfigError("override '" + assignment + "' has an empty key segment");
    parts.push_back(part);
  }
  for (auto it = parts.rbegin(); it != parts.rend(); ++it) patch = json{{*it, patch}};
  merge_config(tree, patch);
}

ExperimentConfig load_config(const std::string& path, const std::vector<std::string>& overrides) {
  json tree = config_to_json(ExperimentConfig{});
  if (!path.empty()) {
    std::ifstream in(path);
    if (!in) throw ConfigError(path + ": cannot open config file");
    json file = json::parse(in, nullptr, false, true);
    if (file.is_discarded()) throw ConfigError(path + ": not valid JSON");
    merge_config(tree, file);
  }
  for (const std::string& o : overrides) apply_override(tree, o);
  return config_from_json(tree);
}

std::string spec_hash(const ExperimentConfig& config) {
  json j = config_to_json(config);
  j.erase("output_dir");
  j.erase("eval");
  const std::string text = j.dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string resolve_output_dir(const std::string& output_dir) {
  const char* root = std::getenv("VSD_OUTPUT_ROOT");
  const std::filesystem::path p(output_dir);
  if (root == nullptr || *root == '\0' || p.is_absolute()) return output_dir;
  return (std::filesystem::path(root) / p).string();
}

}  // namespace vsd
