#include "hbf/nn/network.hpp"

namespace hbf::nn {

Network::Network(Shape input, std::vector<LayerSpec> specs, std::uint64_t seed)
    : input_(input), specs_(std::move(specs)) {
  build(seed);
}

void Network::build(std::uint64_t seed) {
  if (specs_.empty()) throw ShapeError("network: no layers");
  if (specs_.back().kind != LayerKind::kFullyConnected)
    throw ShapeError("network: output layer must be fully connected");
  init_seed_ = seed;
  Rng init(seed);
  Shape s = input_;
  layers_.clear();
  for (std::size_t i = 0; i < specs_.size(); ++i) {
    try {
      layers_.push_back(make_layer(specs_[i], s, init));
    } catch (const ShapeError& e) {
      throw ShapeError("layer " + std::to_string(i) + " (" + kind_name(specs_[i].kind) + "): " + e.what());
    }
    s = layers_.back()->output_shape();
  }
  rng_.seed(derive_seed(seed, 0xD1));
}

Network::Network(const Network& other)
    : input_(other.input_), specs_(other.specs_), rng_(other.rng_), init_seed_(other.init_seed_) {
  const Rng saved = rng_;
  build(init_seed_);
  rng_ = saved;
  auto dst = parameters();
  auto src = const_cast<Network&>(other).parameters();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i]->value = src[i]->value;
  auto db = buffers();
  auto sb = const_cast<Network&>(other).buffers();
  for (std::size_t i = 0; i < db.size(); ++i) *db[i] = *sb[i];
}

Network& Network::operator=(const Network& other) {
  if (this != &other) *this = Network(other);
  return *this;
}

Shape Network::output_shape() const { return layers_.back()->output_shape(); }

const Batch& Network::forward(const Batch& x, Mode mode) {
  if (!(x.shape == input_))
    throw ShapeError("network: expected input " + input_.str() + ", got " + x.shape.str());
  activations_.resize(layers_.size() + 1);
  activations_[0] = x;
  for (std::size_t i = 0; i < layers_.size(); ++i)
    layers_[i]->forward(activations_[i], activations_[i + 1], mode, rng_);
  return activations_.back();
}

std::vector<double> Network::predict(std::span<const double> x) {
  Batch in(1, input_);
  if (x.size() != in.data.size()) throw ShapeError("network: input length mismatch");
  std::copy(x.begin(), x.end(), in.data.begin());
  const Batch& out = forward(in, Mode::kInfer);
  return out.data;
}

void Network::backward(const Batch& grad_output) {
  if (activations_.size() != layers_.size() + 1)
    throw ShapeError("network: backward called before forward");
  Batch grad = grad_output;
  Batch next;
  for (std::size_t i = layers_.size(); i-- > 0;) {
    layers_[i]->backward(activations_[i], grad, i > 0 ? &next : nullptr);
    if (i > 0) std::swap(grad, next);
  }
}

void Network::zero_grad() {
  for (auto* p : parameters()) std::fill(p->grad.begin(), p->grad.end(), 0.0);
}

std::vector<Parameter*> Network::parameters() {
  std::vector<Parameter*> out;
  for (auto& l : layers_)
    for (auto* p : l->parameters()) out.push_back(p);
  return out;
}

std::vector<std::vector<double>*> Network::buffers() {
  std::vector<std::vector<double>*> out;
  for (auto& l : layers_)
    for (auto* b : l->buffers()) out.push_back(b);
  return out;
}

std::size_t Network::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers_)
    for (auto* p : l->parameters()) n += p->value.size();
  return n;
}

std::vector<LayerSpec> cnn_mimo_layers(const CnnArchitecture& a, int output_width) {
  return {
      LayerSpec::conv2d(a.filters, a.kernel_h, a.kernel_w),
      LayerSpec::norm(),
      LayerSpec::relu(),
      LayerSpec::conv2d(a.filters, a.kernel_h, a.kernel_w),
      LayerSpec::norm(),
      LayerSpec::relu(),
      LayerSpec::flatten(),
      LayerSpec::fully_connected(a.fc_units),
      LayerSpec::relu(),
      LayerSpec::dropout(a.dropout),
      LayerSpec::fully_connected(a.fc_units),
      LayerSpec::relu(),
      LayerSpec::dropout(a.dropout),
      LayerSpec::fully_connected(output_width),
  };
}

std::vector<LayerSpec> mlp_layers(const std::vector<int>& hidden, double dropout, int output_width) {
  std::vector<LayerSpec> specs{LayerSpec::flatten()};
  for (int h : hidden) {
    specs.push_back(LayerSpec::fully_connected(h));
    specs.push_back(LayerSpec::relu());
    if (dropout > 0.0) specs.push_back(LayerSpec::dropout(dropout));
  }
  specs.push_back(LayerSpec::fully_connected(output_width));
  return specs;
}

std::int64_t paper_parameter_count(std::int64_t channels, std::int64_t kernel_w,
                                   std::int64_t kernel_h, std::int64_t conv_filters,
                                   std::int64_t fc1_units, std::int64_t fc2_units) {
  if (channels < 1 || kernel_w < 1 || kernel_h < 1 || conv_filters < 1 || fc1_units < 1 || fc2_units < 1)
    throw InvalidArgument("paper_parameter_count: all arguments must be positive");
  // Scaled by 100 so the 50/100 factor stays integral.
  const std::int64_t inner = 100 * 2 * conv_filters * (kernel_w * kernel_h + 1) +
                             ((fc1_units + 1) + (fc2_units + 1)) * 50;
  return channels * channels * inner / 100;
}

std::int64_t count_parameters(Shape s, const std::vector<LayerSpec>& specs) {
  std::int64_t n = 0;
  for (std::size_t i = 0; i < specs.size(); ++i) {
    const LayerSpec& l = specs[i];
    switch (l.kind) {
      case LayerKind::kConv2d:
        if (l.filters < 1 || l.kernel_h < 1 || l.kernel_w < 1 || l.kernel_h > s.h || l.kernel_w > s.w)
          throw ShapeError("layer " + std::to_string(i) + " (conv2d): kernel does not fit " + s.str());
        n += std::int64_t{l.filters} * s.c * l.kernel_h * l.kernel_w + l.filters;
        s = Shape{l.filters, s.h - l.kernel_h + 1, s.w - l.kernel_w + 1};
        break;
      case LayerKind::kNorm:
        n += 2 * std::int64_t{s.c};
        break;
      case LayerKind::kFullyConnected:
        if (l.units < 1 || s.h != 1 || s.w != 1)
          throw ShapeError("layer " + std::to_string(i) + " (fully_connected): cannot follow " + s.str());
        n += std::int64_t{l.units} * static_cast<std::int64_t>(s.size()) + l.units;
        s = Shape{l.units, 1, 1};
        break;
      case LayerKind::kFlatten:
        s = Shape{static_cast<int>(s.size()), 1, 1};
        break;
      case LayerKind::kRelu:
      case LayerKind::kDropout:
        break;
    }
  }
  return n;
}

double mse(const Batch& output, const Batch& target) {
  if (output.data.size() != target.data.size()) throw ShapeError("mse: size mismatch");
  if (output.data.empty()) return 0.0;
  double s = 0.0;
  for (std::size_t i = 0; i < output.data.size(); ++i) {
    const double d = output.data[i] - target.data[i];
    s += d * d;
  }
  return s / static_cast<double>(output.data.size());
}

Batch mse_gradient(const Batch& output, const Batch& target) {
  if (output.data.size() != target.data.size()) throw ShapeError("mse: size mismatch");
  Batch g(output.n, output.shape);
  const double scale = 2.0 / static_cast<double>(output.data.size());
  for (std::size_t i = 0; i < g.data.size(); ++i) g.data[i] = scale * (output.data[i] - target.data[i]);
  return g;
}

}  // namespace hbf::nn
