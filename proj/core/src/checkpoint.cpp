#include "vsd/checkpoint.hpp"

#include <charconv>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace vsd {

namespace {

using nlohmann::json;

json tensor_entry(const std::string& name, const Tensor& t) {
  return {{"name", name}, {"shape", t.shape()}, {"data", t.storage()}};
}

std::map<std::string, Tensor> tensor_map(const json& arr, const char* what) {
  std::map<std::string, Tensor> out;
  for (const json& e : arr) {
    Shape shape = e.at("shape").get<Shape>();
    std::vector<double> data = e.at("data").get<std::vector<double>>();
    if (shape_numel(shape) != data.size()) {
      throw DataError(std::string("checkpoint ") + what + " '" + e.at("name").get<std::string>() +
                      "': shape and data length disagree");
    }
    if (!out.emplace(e.at("name").get<std::string>(), Tensor(std::move(shape), std::move(data))).second) {
      throw DataError(std::string("checkpoint ") + what + ": duplicate name " + e.at("name").get<std::string>());
    }
  }
  return out;
}

json tensor_array(const std::map<std::string, Tensor>& m) {
  json arr = json::array();
  for (const auto& [name, t] : m) arr.push_back(tensor_entry(name, t));
  return arr;
}

}  // namespace

std::string format_double(double v) {
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  (void)ec;
  return std::string(buf, p);
}

std::string trace_csv(const std::vector<EpochRecord>& trace) {
  std::string out = "epoch,objective,data_term,kl_term,lr\n";
  for (const EpochRecord& r : trace) {
    out += std::to_string(r.epoch) + "," + format_double(r.objective) + "," + format_double(r.data_term) + "," +
           format_double(r.kl_term) + "," + format_double(r.lr) + "\n";
  }
  return out;
}

json checkpoint_to_json(const Checkpoint& c) {
  json trace = json::array();
  for (const EpochRecord& r : c.state.trace) {
    trace.push_back({{"epoch", r.epoch}, {"objective", r.objective}, {"data_term", r.data_term},
                     {"kl_term", r.kl_term}, {"lr", r.lr}});
  }
  return {{"format", "vsd-checkpoint"},
          {"version", kCheckpointVersion},
          {"epoch", c.state.epoch},
          {"spec_hash", c.spec_hash},
          {"config", c.config},
          {"normalization", c.normalization.to_json()},
          {"rng", {{"shuffle", c.state.shuffle_rng}, {"local", c.state.local_rng}, {"global", c.state.global_rng}}},
          {"optimizer", tensor_array(c.state.optimizer)},
          {"trace", trace},
          {"parameters", tensor_array(c.parameters)}};
}

Checkpoint checkpoint_from_json(const json& j) {
  try {
    if (j.at("format").get<std::string>() != "vsd-checkpoint") throw DataError("not a vsd checkpoint");
    const int version = j.at("version").get<int>();
    if (version != kCheckpointVersion) {
      throw DataError("unsupported checkpoint version " + std::to_string(version));
    }
    Checkpoint c;
    c.state.epoch = j.at("epoch").get<std::size_t>();
    c.spec_hash = j.at("spec_hash").get<std::string>();
    c.config = j.at("config");
    c.normalization = Normalization::from_json(j.at("normalization"));
    c.state.shuffle_rng = j.at("rng").at("shuffle").get<std::string>();
    c.state.local_rng = j.at("rng").at("local").get<std::string>();
    c.state.global_rng = j.at("rng").at("global").get<std::string>();
    c.state.optimizer = tensor_map(j.at("optimizer"), "optimizer entry");
    for (const json& r : j.at("trace")) {
      c.state.trace.push_back({r.at("epoch").get<std::size_t>(), r.at("objective").get<double>(),
                               r.at("data_term").get<double>(), r.at("kl_term").get<double>(),
                               r.at("lr").get<double>()});
    }
    c.parameters = tensor_map(j.at("parameters"), "parameter");
    return c;
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed checkpoint: ") + e.what());
  }
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  write_file_atomic(path, checkpoint_to_json(ckpt).dump() + "\n");
}

Checkpoint load_checkpoint(const std::string& path) {
  const json j = json::parse(read_file(path), nullptr, false);
  if (j.is_discarded()) throw DataError(path + ": checkpoint is not valid JSON");
  return checkpoint_from_json(j);
}

void write_file_atomic(const std::string& path, const std::string& content) {
  namespace fs = std::filesystem;
  const fs::path target(path);
  if (target.has_parent_path()) fs::create_directories(target.parent_path());
  const fs::path tmp = target.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error(tmp.string() + ": cannot open for writing");
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    out.flush();
    if (!out) throw std::runtime_error(tmp.string() + ": write failed");
  }
  fs::rename(tmp, target);
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError(path + ": cannot open");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace vsd
