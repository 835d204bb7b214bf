#include "hbf/nn/layers.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Dense>

namespace hbf::nn {

std::string Shape::str() const {
  return std::to_string(c) + "x" + std::to_string(h) + "x" + std::to_string(w);
}

const char* kind_name(LayerKind k) {
  switch (k) {
    case LayerKind::kConv2d: return "conv2d";
    case LayerKind::kNorm: return "norm";
    case LayerKind::kRelu: return "relu";
    case LayerKind::kFullyConnected: return "fully_connected";
    case LayerKind::kDropout: return "dropout";
    case LayerKind::kFlatten: return "flatten";
  }
  return "unknown";
}

LayerSpec LayerSpec::conv2d(int filters, int kernel_h, int kernel_w) {
  LayerSpec s;
  s.kind = LayerKind::kConv2d;
  s.filters = filters;
  s.kernel_h = kernel_h;
  s.kernel_w = kernel_w;
  return s;
}

LayerSpec LayerSpec::norm() {
  LayerSpec s;
  s.kind = LayerKind::kNorm;
  return s;
}

LayerSpec LayerSpec::relu() { return LayerSpec{}; }

LayerSpec LayerSpec::fully_connected(int units) {
  LayerSpec s;
  s.kind = LayerKind::kFullyConnected;
  s.units = units;
  return s;
}

LayerSpec LayerSpec::dropout(double p) {
  LayerSpec s;
  s.kind = LayerKind::kDropout;
  s.drop = p;
  return s;
}

LayerSpec LayerSpec::flatten() {
  LayerSpec s;
  s.kind = LayerKind::kFlatten;
  return s;
}

namespace {

using RowMajor = Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
using ConstRowMajor =
    Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
using ColMajor = Eigen::Map<Eigen::MatrixXd>;
using ConstColMajor = Eigen::Map<const Eigen::MatrixXd>;

void init_uniform(std::vector<double>& w, int fan_in, Rng& rng) {
  const double bound = std::sqrt(6.0 / fan_in);
  std::uniform_real_distribution<double> u(-bound, bound);
  for (double& v : w) v = u(rng);
}

void check_input(const Layer& layer, const Batch& in) {
  if (!(in.shape == layer.input_shape()))
    throw ShapeError(std::string(kind_name(layer.kind())) + ": expected input " +
                     layer.input_shape().str() + ", got " + in.shape.str());
}

// Valid (unpadded) stride-1 cross-correlation.
class Conv2d final : public Layer {
 public:
  Conv2d(const LayerSpec& s, Shape in, Rng& rng)
      : filters_(s.filters), kh_(s.kernel_h), kw_(s.kernel_w),
        weight_("weight", static_cast<std::size_t>(s.filters) * in.c * s.kernel_h * s.kernel_w),
        bias_("bias", static_cast<std::size_t>(s.filters)) {
    if (filters_ < 1 || kh_ < 1 || kw_ < 1) throw ShapeError("conv2d: filters and kernel must be >= 1");
    if (in.h < kh_ || in.w < kw_)
      throw ShapeError("conv2d: kernel " + std::to_string(kh_) + "x" + std::to_string(kw_) +
                       " larger than input " + in.str());
    in_ = in;
    out_ = {filters_, in.h - kh_ + 1, in.w - kw_ + 1};
    init_uniform(weight_.value, in.c * kh_ * kw_, rng);
  }

  LayerKind kind() const override { return LayerKind::kConv2d; }
  LayerSpec spec() const override { return LayerSpec::conv2d(filters_, kh_, kw_); }
  std::vector<Parameter*> parameters() override { return {&weight_, &bias_}; }

  void forward(const Batch& in, Batch& out, Mode, Rng&) override {
    check_input(*this, in);
    out = Batch(in.n, out_);
    const auto patch = static_cast<Eigen::Index>(in_.c) * kh_ * kw_;
    const auto pixels = static_cast<Eigen::Index>(out_.h) * out_.w;
    const ConstRowMajor w(weight_.value.data(), filters_, patch);
    const Eigen::Map<const Eigen::VectorXd> bias(bias_.value.data(), filters_);
    Eigen::MatrixXd cols(patch, pixels);
    for (int b = 0; b < in.n; ++b) {
      im2col(in.sample(b), cols);
      RowMajor y(out.sample(b), filters_, pixels);
      y.noalias() = w * cols;
      y.colwise() += bias;
    }
  }

  void backward(const Batch& in, const Batch& grad_out, Batch* grad_in) override {
    const auto patch = static_cast<Eigen::Index>(in_.c) * kh_ * kw_;
    const auto pixels = static_cast<Eigen::Index>(out_.h) * out_.w;
    const ConstRowMajor w(weight_.value.data(), filters_, patch);
    RowMajor gw(weight_.grad.data(), filters_, patch);
    Eigen::Map<Eigen::VectorXd> gb(bias_.grad.data(), filters_);
    if (grad_in) *grad_in = Batch(in.n, in_);
    Eigen::MatrixXd cols(patch, pixels);
    Eigen::MatrixXd gcols(patch, pixels);
    for (int b = 0; b < in.n; ++b) {
      const ConstRowMajor g(grad_out.sample(b), filters_, pixels);
      im2col(in.sample(b), cols);
      gw.noalias() += g * cols.transpose();
      gb += g.rowwise().sum();
      if (grad_in) {
        gcols.noalias() = w.transpose() * g;
        col2im(gcols, grad_in->sample(b));
      }
    }
  }

  // Patch matrix: row (c, ky, kx), column (oy, ox).
  void im2col(const double* x, Eigen::MatrixXd& cols) const {
    const int oh = out_.h, ow = out_.w;
    Eigen::Index r = 0;
    for (int c = 0; c < in_.c; ++c)
      for (int ky = 0; ky < kh_; ++ky)
        for (int kx = 0; kx < kw_; ++kx, ++r) {
          const double* xc = x + (static_cast<std::size_t>(c) * in_.h + ky) * in_.w + kx;
          for (int oy = 0; oy < oh; ++oy)
            for (int ox = 0; ox < ow; ++ox) cols(r, oy * ow + ox) = xc[oy * in_.w + ox];
        }
  }

  void col2im(const Eigen::MatrixXd& cols, double* gx) const {
    const int oh = out_.h, ow = out_.w;
    Eigen::Index r = 0;
    for (int c = 0; c < in_.c; ++c)
      for (int ky = 0; ky < kh_; ++ky)
        for (int kx = 0; kx < kw_; ++kx, ++r) {
          double* gc = gx + (static_cast<std::size_t>(c) * in_.h + ky) * in_.w + kx;
          for (int oy = 0; oy < oh; ++oy)
            for (int ox = 0; ox < ow; ++ox) gc[oy * in_.w + ox] += cols(r, oy * ow + ox);
        }
  }

 private:
  int filters_, kh_, kw_;
  Parameter weight_;
  Parameter bias_;
};

// Batch normalization per channel over (batch, h, w), learned scale/shift,
// exponential running statistics for inference.
class Norm final : public Layer {
 public:
  static constexpr double kEps = 1e-7;
  static constexpr double kMomentum = 0.1;

  explicit Norm(Shape in)
      : scale_("scale", static_cast<std::size_t>(in.c)), shift_("shift", static_cast<std::size_t>(in.c)),
        running_mean_(static_cast<std::size_t>(in.c), 0.0), running_var_(static_cast<std::size_t>(in.c), 1.0) {
    in_ = out_ = in;
    std::fill(scale_.value.begin(), scale_.value.end(), 1.0);
  }

  LayerKind kind() const override { return LayerKind::kNorm; }
  LayerSpec spec() const override { return LayerSpec::norm(); }
  std::vector<Parameter*> parameters() override { return {&scale_, &shift_}; }
  std::vector<std::vector<double>*> buffers() override { return {&running_mean_, &running_var_}; }

  void forward(const Batch& in, Batch& out, Mode mode, Rng&) override {
    check_input(*this, in);
    out = Batch(in.n, out_);
    const std::size_t plane = static_cast<std::size_t>(in_.h) * in_.w;
    const double count = static_cast<double>(in.n) * plane;
    if (mode == Mode::kTrain) {
      xhat_.assign(in.data.size(), 0.0);
      inv_std_.assign(in_.c, 0.0);
    }
    for (int c = 0; c < in_.c; ++c) {
      double mean, var;
      if (mode == Mode::kTrain) {
        double s = 0.0;
        for (int b = 0; b < in.n; ++b) {
          const double* x = in.sample(b) + c * plane;
          for (std::size_t i = 0; i < plane; ++i) s += x[i];
        }
        mean = s / count;
        double ss = 0.0;
        for (int b = 0; b < in.n; ++b) {
          const double* x = in.sample(b) + c * plane;
          for (std::size_t i = 0; i < plane; ++i) ss += (x[i] - mean) * (x[i] - mean);
        }
        var = ss / count;
        running_mean_[c] = (1.0 - kMomentum) * running_mean_[c] + kMomentum * mean;
        running_var_[c] = (1.0 - kMomentum) * running_var_[c] + kMomentum * var;
      } else {
        mean = running_mean_[c];
        var = running_var_[c];
      }
      const double inv = 1.0 / std::sqrt(var + kEps);
      if (mode == Mode::kTrain) inv_std_[c] = inv;
      const double g = scale_.value[c], bt = shift_.value[c];
      for (int b = 0; b < in.n; ++b) {
        const double* x = in.sample(b) + c * plane;
        double* y = out.sample(b) + c * plane;
        double* xh = mode == Mode::kTrain ? xhat_.data() + (x - in.data.data()) : nullptr;
        for (std::size_t i = 0; i < plane; ++i) {
          const double n = (x[i] - mean) * inv;
          if (xh) xh[i] = n;
          y[i] = g * n + bt;
        }
      }
    }
  }

  void backward(const Batch& in, const Batch& grad_out, Batch* grad_in) override {
    const std::size_t plane = static_cast<std::size_t>(in_.h) * in_.w;
    const double count = static_cast<double>(in.n) * plane;
    if (grad_in) *grad_in = Batch(in.n, in_);
    for (int c = 0; c < in_.c; ++c) {
      double sum_g = 0.0, sum_gx = 0.0;
      for (int b = 0; b < in.n; ++b) {
        const std::size_t o = static_cast<std::size_t>(b) * in_.size() + c * plane;
        for (std::size_t i = 0; i < plane; ++i) {
          sum_g += grad_out.data[o + i];
          sum_gx += grad_out.data[o + i] * xhat_[o + i];
        }
      }
      scale_.grad[c] += sum_gx;
      shift_.grad[c] += sum_g;
      if (!grad_in) continue;
      const double k = scale_.value[c] * inv_std_[c] / count;
      for (int b = 0; b < in.n; ++b) {
        const std::size_t o = static_cast<std::size_t>(b) * in_.size() + c * plane;
        for (std::size_t i = 0; i < plane; ++i)
          grad_in->data[o + i] = k * (count * grad_out.data[o + i] - sum_g - xhat_[o + i] * sum_gx);
      }
    }
  }

 private:
  Parameter scale_;
  Parameter shift_;
  std::vector<double> running_mean_;
  std::vector<double> running_var_;
  std::vector<double> xhat_;
  std::vector<double> inv_std_;
};

class Relu final : public Layer {
 public:
  explicit Relu(Shape in) { in_ = out_ = in; }
  LayerKind kind() const override { return LayerKind::kRelu; }
  LayerSpec spec() const override { return LayerSpec::relu(); }

  void forward(const Batch& in, Batch& out, Mode, Rng&) override {
    check_input(*this, in);
    out = Batch(in.n, out_);
    for (std::size_t i = 0; i < in.data.size(); ++i) out.data[i] = in.data[i] > 0.0 ? in.data[i] : 0.0;
  }

  void backward(const Batch& in, const Batch& grad_out, Batch* grad_in) override {
    if (!grad_in) return;
    *grad_in = Batch(in.n, in_);
    for (std::size_t i = 0; i < in.data.size(); ++i)
      grad_in->data[i] = in.data[i] > 0.0 ? grad_out.data[i] : 0.0;
  }
};

class FullyConnected final : public Layer {
 public:
  FullyConnected(const LayerSpec& s, Shape in, Rng& rng)
      : units_(s.units), weight_("weight", static_cast<std::size_t>(s.units) * in.size()),
        bias_("bias", static_cast<std::size_t>(s.units)) {
    if (units_ < 1) throw ShapeError("fully_connected: units must be >= 1");
    if (in.h != 1 || in.w != 1)
      throw ShapeError("fully_connected: input " + in.str() + " must be flattened first");
    in_ = in;
    out_ = {units_, 1, 1};
    init_uniform(weight_.value, in.c, rng);
  }

  LayerKind kind() const override { return LayerKind::kFullyConnected; }
  LayerSpec spec() const override { return LayerSpec::fully_connected(units_); }
  std::vector<Parameter*> parameters() override { return {&weight_, &bias_}; }

  void forward(const Batch& in, Batch& out, Mode, Rng&) override {
    check_input(*this, in);
    out = Batch(in.n, out_);
    const auto fan_in = static_cast<Eigen::Index>(in_.size());
    const ConstRowMajor w(weight_.value.data(), units_, fan_in);
    const Eigen::Map<const Eigen::VectorXd> bias(bias_.value.data(), units_);
    const ConstColMajor x(in.data.data(), fan_in, in.n);
    ColMajor y(out.data.data(), units_, in.n);
    y.noalias() = w * x;
    y.colwise() += bias;
  }

  void backward(const Batch& in, const Batch& grad_out, Batch* grad_in) override {
    const auto fan_in = static_cast<Eigen::Index>(in_.size());
    const ConstRowMajor w(weight_.value.data(), units_, fan_in);
    RowMajor gw(weight_.grad.data(), units_, fan_in);
    Eigen::Map<Eigen::VectorXd> gb(bias_.grad.data(), units_);
    const ConstColMajor x(in.data.data(), fan_in, in.n);
    const ConstColMajor g(grad_out.data.data(), units_, in.n);
    gw.noalias() += g * x.transpose();
    gb += g.rowwise().sum();
    if (grad_in) {
      *grad_in = Batch(in.n, in_);
      ColMajor gx(grad_in->data.data(), fan_in, in.n);
      gx.noalias() = w.transpose() * g;
    }
  }

 private:
  int units_;
  Parameter weight_;
  Parameter bias_;
};

// Inverted dropout: kept activations are scaled by 1/(1-p) during training.
class Dropout final : public Layer {
 public:
  Dropout(const LayerSpec& s, Shape in) : p_(s.drop) {
    if (!(p_ >= 0.0 && p_ < 1.0)) throw ShapeError("dropout: probability must lie in [0, 1)");
    in_ = out_ = in;
  }
  LayerKind kind() const override { return LayerKind::kDropout; }
  LayerSpec spec() const override { return LayerSpec::dropout(p_); }

  void forward(const Batch& in, Batch& out, Mode mode, Rng& rng) override {
    check_input(*this, in);
    out = in;
    if (mode == Mode::kInfer || p_ == 0.0) {
      mask_.assign(in.data.size(), 1.0);
      return;
    }
    const double keep = 1.0 - p_;
    std::bernoulli_distribution d(keep);
    mask_.resize(in.data.size());
    for (std::size_t i = 0; i < mask_.size(); ++i) {
      mask_[i] = d(rng) ? 1.0 / keep : 0.0;
      out.data[i] *= mask_[i];
    }
  }

  void backward(const Batch& in, const Batch& grad_out, Batch* grad_in) override {
    if (!grad_in) return;
    *grad_in = Batch(in.n, in_);
    for (std::size_t i = 0; i < mask_.size(); ++i) grad_in->data[i] = grad_out.data[i] * mask_[i];
  }

 private:
  double p_;
  std::vector<double> mask_;
};

class Flatten final : public Layer {
 public:
  explicit Flatten(Shape in) {
    in_ = in;
    out_ = {static_cast<int>(in.size()), 1, 1};
  }
  LayerKind kind() const override { return LayerKind::kFlatten; }
  LayerSpec spec() const override { return LayerSpec::flatten(); }

  void forward(const Batch& in, Batch& out, Mode, Rng&) override {
    check_input(*this, in);
    out.n = in.n;
    out.shape = out_;
    out.data = in.data;
  }

  void backward(const Batch& in, const Batch& grad_out, Batch* grad_in) override {
    if (!grad_in) return;
    grad_in->n = in.n;
    grad_in->shape = in_;
    grad_in->data = grad_out.data;
  }
};

}  // namespace

std::unique_ptr<Layer> make_layer(const LayerSpec& spec, Shape in, Rng& init_rng) {
  switch (spec.kind) {
    case LayerKind::kConv2d: return std::make_unique<Conv2d>(spec, in, init_rng);
    case LayerKind::kNorm: return std::make_unique<Norm>(in);
    case LayerKind::kRelu: return std::make_unique<Relu>(in);
    case LayerKind::kFullyConnected: return std::make_unique<FullyConnected>(spec, in, init_rng);
    case LayerKind::kDropout: return std::make_unique<Dropout>(spec, in);
    case LayerKind::kFlatten: return std::make_unique<Flatten>(in);
  }
  throw ShapeError("unknown layer kind");
}

}  // namespace hbf::nn
