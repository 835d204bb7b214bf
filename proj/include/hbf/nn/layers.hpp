#pragma once

// Layer set for the regression networks: valid 2-D convolution, batch
// normalization, ReLU, fully connected, inverted dropout and flatten.
// Tensors are NCHW batches of doubles.

#include <cstddef>
#include <memory>
#include <string>
#include <vector>

#include "hbf/types.hpp"

namespace hbf::nn {

struct Shape {
  int c = 1;
  int h = 1;
  int w = 1;

  std::size_t size() const { return static_cast<std::size_t>(c) * h * w; }
  bool operator==(const Shape&) const = default;
  std::string str() const;
};

struct Batch {
  int n = 0;
  Shape shape;
  std::vector<double> data;

  Batch() = default;
  Batch(int count, Shape s) : n(count), shape(s), data(static_cast<std::size_t>(count) * s.size(), 0.0) {}
  double* sample(int i) { return data.data() + static_cast<std::size_t>(i) * shape.size(); }
  const double* sample(int i) const { return data.data() + static_cast<std::size_t>(i) * shape.size(); }
};

class ShapeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Mode { kTrain, kInfer };

enum class LayerKind : std::uint32_t {
  kConv2d = 1,
  kNorm = 2,
  kRelu = 3,
  kFullyConnected = 4,
  kDropout = 5,
  kFlatten = 6,
};

const char* kind_name(LayerKind k);

struct LayerSpec {
  LayerKind kind = LayerKind::kRelu;
  int filters = 0;  // conv2d output channels
  int kernel_h = 0;
  int kernel_w = 0;
  int units = 0;    // fully connected width
  double drop = 0.0;

  static LayerSpec conv2d(int filters, int kernel_h, int kernel_w);
  static LayerSpec norm();
  static LayerSpec relu();
  static LayerSpec fully_connected(int units);
  static LayerSpec dropout(double p);
  static LayerSpec flatten();
};

struct Parameter {
  std::string name;
  std::vector<double> value;
  std::vector<double> grad;

  explicit Parameter(std::string n, std::size_t size)
      : name(std::move(n)), value(size, 0.0), grad(size, 0.0) {}
};

class Layer {
 public:
  virtual ~Layer() = default;

  virtual LayerKind kind() const = 0;
  virtual LayerSpec spec() const = 0;
  Shape input_shape() const { return in_; }
  Shape output_shape() const { return out_; }

  virtual void forward(const Batch& in, Batch& out, Mode mode, Rng& rng) = 0;
  /// Accumulates parameter gradients and, when `grad_in` is non-null, writes
  /// the gradient with respect to the input. Uses state cached by the last
  /// forward call.
  virtual void backward(const Batch& in, const Batch& grad_out, Batch* grad_in) = 0;

  virtual std::vector<Parameter*> parameters() { return {}; }
  /// Non-trainable tensors that belong in a checkpoint (running statistics).
  virtual std::vector<std::vector<double>*> buffers() { return {}; }

 protected:
  Shape in_;
  Shape out_;
};

/// Builds a layer for input shape `in`; weights use seeded fan-in-scaled
/// uniform initialization with bound sqrt(6 / fan_in), biases start at zero.
std::unique_ptr<Layer> make_layer(const LayerSpec& spec, Shape in, Rng& init_rng);

}  // namespace hbf::nn
