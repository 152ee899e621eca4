#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "vsd/layers.hpp"

namespace vsd {

/// Feed-forward stack of layers built from a compact description.
///
/// Each architecture entry is one of
///   dense:UNITS | conv:OUT:KERNEL[:STRIDE[:PADDING]] | relu | maxpool | avgpool | flatten
/// Dense layers take the network variant (width-1 inputs excepted). Conv
/// layers are VsdConv for vsd/vsd-hier and deterministic for every other variant.
/// The last layer must be dense and its width is the output dimension.
class Network {
 public:
  Network(Shape input_shape, const std::vector<std::string>& architecture, Variant variant,
          const LayerOptions& options, std::uint64_t init_seed);

  Network(const Network&) = delete;
  Network& operator=(const Network&) = delete;
  Network(Network&&) = default;
  Network& operator=(Network&&) = default;

  /// x is [n x features] or [n x c x h x w]; returns [n x outputs].
  Var forward(Tape& tape, const Var& x, ForwardContext& ctx);
  /// Sum of the per-layer KL terms.
  Var kl(Tape& tape);
  std::vector<Parameter*> parameters();
  void post_step();

  Variant variant() const noexcept { return variant_; }
  const Shape& input_shape() const noexcept { return input_shape_; }
  std::size_t output_dim() const noexcept { return output_dim_; }
  std::size_t size() const noexcept { return layers_.size(); }
  Layer& layer(std::size_t i) { return *layers_.at(i); }
  const Layer& layer(std::size_t i) const { return *layers_.at(i); }
  std::size_t parameter_count();

  /// Parameter values by name.
  std::map<std::string, Tensor> state();
  /// Restores values by name. Throws ShapeError on missing names or shape mismatches.
  void load_state(const std::map<std::string, Tensor>& values);

 private:
  Variant variant_;
  Shape input_shape_;
  std::size_t output_dim_ = 0;
  std::vector<std::unique_ptr<Layer>> layers_;
};

}  // namespace vsd
