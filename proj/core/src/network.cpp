#include "vsd/network.hpp"

#include <charconv>
#include <set>
#include <sstream>
#include <stdexcept>

namespace vsd {

namespace {

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, sep)) out.push_back(item);
  return out;
}

std::size_t parse_size(const std::string& text, const std::string& entry) {
  std::size_t v = 0;
  auto [p, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || p != text.data() + text.size()) {
    throw std::invalid_argument("architecture entry '" + entry + "': '" + text + "' is not a non-negative integer");
  }
  return v;
}

}  // namespace

Network::Network(Shape input_shape, const std::vector<std::string>& architecture, Variant variant,
                 const LayerOptions& options, std::uint64_t init_seed)
    : variant_(variant), input_shape_(std::move(input_shape)) {
  if (architecture.empty()) throw std::invalid_argument("architecture is empty");
  if (input_shape_.size() != 1 && input_shape_.size() != 3) {
    throw ShapeError("input shape must be [features] or [channels, height, width]");
  }
  Rng init(init_seed);
  Shape cur = input_shape_;
  for (std::size_t i = 0; i < architecture.size(); ++i) {
    const std::string& entry = architecture[i];
    const std::vector<std::string> parts = split(entry, ':');
    const std::string& type = parts.empty() ? entry : parts[0];
    const std::string prefix = "layer" + std::to_string(i);
    if (type == "dense") {
      if (parts.size() != 2) throw std::invalid_argument("expected dense:UNITS, got '" + entry + "'");
      if (cur.size() != 1) throw ShapeError("'" + entry + "' needs a flat input; add 'flatten' before it");
      const std::size_t units = parse_size(parts[1], entry);
      layers_.push_back(make_dense(variant, cur[0], units, options, init, prefix));
      cur = {units};
    } else if (type == "conv") {
      if (parts.size() < 3 || parts.size() > 5) {
        throw std::invalid_argument("expected conv:OUT:KERNEL[:STRIDE[:PADDING]], got '" + entry + "'");
      }
      if (cur.size() != 3) throw ShapeError("'" + entry + "' needs a [c, h, w] input");
      const std::size_t out = parse_size(parts[1], entry);
      const std::size_t k = parse_size(parts[2], entry);
      const std::size_t stride = parts.size() > 3 ? parse_size(parts[3], entry) : 1;
      const std::size_t pad = parts.size() > 4 ? parse_size(parts[4], entry) : 0;
      if (stride == 0 || cur[1] + 2 * pad < k || cur[2] + 2 * pad < k) {
        throw ShapeError("'" + entry + "' does not fit input " + shape_to_string(cur));
      }
      if (variant == Variant::Vsd || variant == Variant::VsdHier) {
        layers_.push_back(std::make_unique<VsdConv>(cur[0], out, k, stride, pad, options, init, prefix));
      } else {
        layers_.push_back(std::make_unique<MapConv>(cur[0], out, k, stride, pad, options.length_scale_sq, init, prefix));
      }
      cur = {out, (cur[1] + 2 * pad - k) / stride + 1, (cur[2] + 2 * pad - k) / stride + 1};
    } else if (type == "relu" && parts.size() == 1) {
      layers_.push_back(std::make_unique<ReluLayer>());
    } else if ((type == "maxpool" || type == "avgpool") && parts.size() == 1) {
      if (cur.size() != 3 || cur[1] < 2 || cur[2] < 2) throw ShapeError("'" + entry + "' needs a [c, h>=2, w>=2] input");
      layers_.push_back(std::make_unique<PoolLayer>(type == "maxpool"));
      cur = {cur[0], cur[1] / 2, cur[2] / 2};
    } else if (type == "flatten" && parts.size() == 1) {
      layers_.push_back(std::make_unique<FlattenLayer>());
      cur = {shape_numel(cur)};
    } else {
      throw std::invalid_argument("unknown architecture entry '" + entry + "'");
    }
  }
  if (dynamic_cast<DenseBase*>(layers_.back().get()) == nullptr) {
    throw std::invalid_argument("the last architecture entry must be dense:OUTPUTS");
  }
  output_dim_ = cur[0];
  std::set<std::string> names;
  for (Parameter* p : parameters()) {
    if (!names.insert(p->name).second) throw std::logic_error("duplicate parameter name " + p->name);
  }
}

Var Network::forward(Tape& tape, const Var& x, ForwardContext& ctx) {
  const Shape& s = x.shape();
  if (s.size() != input_shape_.size() + 1 || !std::equal(input_shape_.begin(), input_shape_.end(), s.begin() + 1)) {
    throw ShapeError("network expects [n x " + shape_to_string(input_shape_) + "], got " + shape_to_string(s));
  }
  Var h = x;
  for (auto& layer : layers_) h = layer->forward(tape, h, ctx);
  return h;
}

Var Network::kl(Tape& tape) {
  Var total = tape.constant(Tensor::scalar(0.0));
  for (auto& layer : layers_) {
    if (!layer->parameters().empty()) total = total + layer->kl(tape);
  }
  return total;
}

std::vector<Parameter*> Network::parameters() {
  std::vector<Parameter*> out;
  for (auto& layer : layers_) {
    for (Parameter* p : layer->parameters()) out.push_back(p);
  }
  return out;
}

void Network::post_step() {
  for (auto& layer : layers_) layer->post_step();
}

std::size_t Network::parameter_count() {
  std::size_t n = 0;
  for (Parameter* p : parameters()) n += p->value.size();
  return n;
}

std::map<std::string, Tensor> Network::state() {
  std::map<std::string, Tensor> out;
  for (Parameter* p : parameters()) out.emplace(p->name, p->value);
  return out;
}

void Network::load_state(const std::map<std::string, Tensor>& values) {
  for (Parameter* p : parameters()) {
    auto it = values.find(p->name);
    if (it == values.end()) throw ShapeError("missing parameter " + p->name);
    if (it->second.shape() != p->value.shape()) {
      throw ShapeError("parameter " + p->name + " has shape " + shape_to_string(it->second.shape()) + ", expected " +
                       shape_to_string(p->value.shape()));
    }
    p->value = it->second;
  }
  if (values.size() != parameters().size()) throw ShapeError("checkpoint holds parameters this network does not have");
}

}  // namespace vsd
