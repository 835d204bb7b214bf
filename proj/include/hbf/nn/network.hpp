#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <vector>

#include "hbf/nn/layers.hpp"

namespace hbf::nn {

/// A sequential network. The last layer must be fully connected (linear
/// regression output).
class Network {
 public:
  Network(Shape input, std::vector<LayerSpec> specs, std::uint64_t seed);

  Network(const Network& other);
  Network& operator=(const Network& other);
  Network(Network&&) noexcept = default;
  Network& operator=(Network&&) noexcept = default;

  Shape input_shape() const { return input_; }
  Shape output_shape() const;
  std::size_t output_size() const { return output_shape().size(); }
  const std::vector<LayerSpec>& specs() const { return specs_; }
  std::size_t layer_count() const { return layers_.size(); }
  Layer& layer(std::size_t i) { return *layers_[i]; }

  /// Runs all layers and caches activations for backward().
  const Batch& forward(const Batch& x, Mode mode);
  std::vector<double> predict(std::span<const double> x);

  /// Back-propagates d(loss)/d(output) through the cached activations of the
  /// last forward call; parameter gradients accumulate.
  void backward(const Batch& grad_output);
  void zero_grad();

  std::vector<Parameter*> parameters();
  std::vector<std::vector<double>*> buffers();
  std::size_t parameter_count() const;

  /// Generator used for dropout masks.
  Rng& rng() { return rng_; }
  void reseed(std::uint64_t seed) { rng_.seed(seed); }

 private:
  void build(std::uint64_t seed);

  Shape input_;
  std::vector<LayerSpec> specs_;
  std::vector<std::unique_ptr<Layer>> layers_;
  std::vector<Batch> activations_;
  Rng rng_;
  std::uint64_t init_seed_ = 0;
};

/// Architecture knobs for the CNN; defaults give the full-size network
/// (two 256@2x2 conv layers, two 2048-unit FC layers, 50% dropout).
struct CnnArchitecture {
  int filters = 256;
  int kernel_h = 2;
  int kernel_w = 2;
  int fc_units = 2048;
  double dropout = 0.5;
};

/// conv-norm-relu, conv-norm-relu, flatten, [fc-relu-dropout] x2, fc(out).
std::vector<LayerSpec> cnn_mimo_layers(const CnnArchitecture& arch, int output_width);

/// flatten, [fc-relu-dropout] per hidden width, fc(out).
std::vector<LayerSpec> mlp_layers(const std::vector<int>& hidden, double dropout, int output_width);

/// C^2 (2 N_cv (w h + 1) + ([N_fc1 + 1] + [N_fc2 + 1]) * 50/100), evaluated
/// in exact integer arithmetic (the result is floored when odd).
std::int64_t paper_parameter_count(std::int64_t channels, std::int64_t kernel_w,
                                   std::int64_t kernel_h, std::int64_t conv_filters,
                                   std::int64_t fc1_units, std::int64_t fc2_units);

/// Layer-by-layer weight + bias count for `specs` applied to `input`, from
/// shape arithmetic alone (nothing is allocated). Throws ShapeError when the
/// layers do not chain.
std::int64_t count_parameters(Shape input, const std::vector<LayerSpec>& specs);

/// Mean over all elements of (output - target)^2.
double mse(const Batch& output, const Batch& target);
Batch mse_gradient(const Batch& output, const Batch& target);

}  // namespace hbf::nn
