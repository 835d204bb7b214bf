#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>

#include <unistd.h>

#include "hbf/nn/train.hpp"
#include "hbf/predict.hpp"

#include "gradcheck.hpp"

namespace hbf::nn {
namespace {

namespace fs = std::filesystem;

fs::path temp_file(const std::string& name) {
  return fs::temp_directory_path() / ("hbf_nn_" + std::to_string(::getpid()) + "_" + name);
}

using gradcheck::fill_uniform;
using gradcheck::kStep;
using gradcheck::random_batch;
using gradcheck::rel_err;

double layer_gradient_error(const LayerSpec& spec, Shape in, int n, std::uint64_t seed) {
  return gradcheck::layer_error(spec, in, n, seed);
}

TEST(Gradients, Conv2d) { EXPECT_LT(layer_gradient_error(LayerSpec::conv2d(3, 2, 2), {2, 4, 5}, 3, 1), 1e-4); }
TEST(Gradients, Norm) { EXPECT_LT(layer_gradient_error(LayerSpec::norm(), {3, 2, 3}, 4, 2), 1e-4); }
TEST(Gradients, Relu) { EXPECT_LT(layer_gradient_error(LayerSpec::relu(), {2, 3, 3}, 2, 3), 1e-4); }
TEST(Gradients, FullyConnected) {
  EXPECT_LT(layer_gradient_error(LayerSpec::fully_connected(5), {7, 1, 1}, 3, 4), 1e-4);
}
TEST(Gradients, Dropout) { EXPECT_LT(layer_gradient_error(LayerSpec::dropout(0.4), {6, 1, 1}, 5, 5), 1e-4); }
TEST(Gradients, Flatten) { EXPECT_LT(layer_gradient_error(LayerSpec::flatten(), {2, 2, 3}, 2, 6), 1e-4); }

CnnArchitecture tiny_arch() {
  CnnArchitecture a;
  a.filters = 3;
  a.fc_units = 8;
  a.dropout = 0.3;
  return a;
}

TEST(Gradients, WholeCnnUnderMse) {
  const Shape in{3, 3, 4};
  Network net(in, cnn_mimo_layers(tiny_arch(), 4), 21);
  ASSERT_LE(net.parameter_count(), 1000u);
  Rng rng(22);
  Batch x = random_batch(5, in, rng);
  Batch z(5, net.output_shape());
  fill_uniform(z.data, rng, 0.0, kTwoPi);

  const auto r = gradcheck::network_error(net, x, z);
  EXPECT_GT(r.checked, 100);
  EXPECT_LT(r.worst, 1e-4);
  EXPECT_EQ(r.zeros, 2 * tiny_arch().filters);
  EXPECT_LT(r.zero_analytic, 1e-12);
  EXPECT_LT(r.zero_numeric, 1e-8);
}

TEST(Gradients, ScalarRegression) {
  Network net({1, 1, 1}, {LayerSpec::fully_connected(1)}, 1);
  auto params = net.parameters();
  const double w = 0.7, x = 2.0, z = 3.0;
  params[0]->value = {w};
  params[1]->value = {0.0};
  Batch in(1, {1, 1, 1}), target(1, {1, 1, 1});
  in.data = {x};
  target.data = {z};
  net.zero_grad();
  net.backward(mse_gradient(net.forward(in, Mode::kTrain), target));
  EXPECT_NEAR(params[0]->grad[0], -2 * x * (z - w * x), 1e-14);
  EXPECT_NEAR(params[1]->grad[0], -2 * (z - w * x), 1e-14);
}

TEST(Gradients, ZeroResidualGivesZeroGradients) {
  Network net({4, 1, 1}, {LayerSpec::fully_connected(3), LayerSpec::fully_connected(2)}, 5);
  Rng rng(6);
  Batch x = random_batch(3, {4, 1, 1}, rng);
  const Batch target = net.forward(x, Mode::kTrain);
  net.zero_grad();
  net.backward(mse_gradient(net.forward(x, Mode::kTrain), target));
  for (auto* p : net.parameters())
    for (double g : p->grad) EXPECT_EQ(g, 0.0);
}

TEST(Forward, ZeroWeightsGiveZeroOutput) {
  const Shape in{3, 3, 4};
  Network net(in, cnn_mimo_layers(tiny_arch(), 6), 3);
  for (auto* p : net.parameters()) std::fill(p->value.begin(), p->value.end(), 0.0);
  Rng rng(4);
  const Batch x = random_batch(2, in, rng);
  for (double v : net.forward(x, Mode::kInfer).data) EXPECT_EQ(v, 0.0);
  for (double v : net.forward(x, Mode::kTrain).data) EXPECT_EQ(v, 0.0);
}

TEST(Forward, FullyConnectedWeightTwo) {
  Network net({1, 1, 1}, {LayerSpec::fully_connected(1)}, 1);
  net.parameters()[0]->value = {2.0};
  net.parameters()[1]->value = {0.0};
  const std::vector<double> x{3.0};
  EXPECT_EQ(net.predict(x), std::vector<double>{6.0});
}

TEST(Forward, ConvMatchesSlidingWindow) {
  const Shape in{2, 4, 4};
  Rng rng(8);
  auto conv = make_layer(LayerSpec::conv2d(3, 2, 2), in, rng);
  auto params = conv->parameters();
  fill_uniform(params[1]->value, rng);
  const auto& w = params[0]->value;
  const auto& bias = params[1]->value;
  Batch x = random_batch(2, in, rng);
  Batch y;
  conv->forward(x, y, Mode::kInfer, rng);
  ASSERT_EQ(y.shape, (Shape{3, 3, 3}));
  for (int b = 0; b < 2; ++b)
    for (int f = 0; f < 3; ++f)
      for (int oy = 0; oy < 3; ++oy)
        for (int ox = 0; ox < 3; ++ox) {
          double s = bias[f];
          for (int c = 0; c < 2; ++c)
            for (int ky = 0; ky < 2; ++ky)
              for (int kx = 0; kx < 2; ++kx)
                s += w[((f * 2 + c) * 2 + ky) * 2 + kx] * x.sample(b)[(c * 4 + oy + ky) * 4 + ox + kx];
          EXPECT_NEAR(y.sample(b)[(f * 3 + oy) * 3 + ox], s, 1e-12);
        }
}

TEST(Forward, ShapeErrorsNameTheLayer) {
  try {
    Network bad({3, 4, 4}, {LayerSpec::conv2d(2, 2, 2), LayerSpec::fully_connected(3)}, 1);
    FAIL() << "expected ShapeError";
  } catch (const ShapeError& e) {
    EXPECT_NE(std::string(e.what()).find("layer 1"), std::string::npos) << e.what();
  }
  EXPECT_THROW(Network({1, 2, 2}, {LayerSpec::conv2d(1, 3, 3), LayerSpec::flatten(), LayerSpec::fully_connected(1)}, 1),
               ShapeError);
  EXPECT_THROW(Network({1, 1, 1}, {LayerSpec::relu()}, 1), ShapeError);
  EXPECT_THROW(Network({3, 1, 1}, {LayerSpec::dropout(1.0), LayerSpec::fully_connected(1)}, 1), ShapeError);
  Network net({3, 1, 1}, {LayerSpec::fully_connected(2)}, 1);
  EXPECT_THROW(net.forward(Batch(1, {4, 1, 1}), Mode::kInfer), ShapeError);
}

TEST(Forward, InferenceIsDeterministic) {
  const Shape in{3, 3, 4};
  Network net(in, cnn_mimo_layers(tiny_arch(), 4), 9);
  Rng rng(1);
  const Batch x = random_batch(1, in, rng);
  const auto a = net.predict(x.data);
  const auto b = net.predict(x.data);
  EXPECT_EQ(a, b);
}

TEST(Dropout, ExpectationMatchesInference) {
  // Dropout feeds the linear output layer directly, so E[train] = infer exactly.
  const Shape in{5, 1, 1};
  Network net(in, {LayerSpec::fully_connected(6), LayerSpec::relu(), LayerSpec::dropout(0.5),
                   LayerSpec::fully_connected(3)}, 12);
  Rng rng(13);
  const Batch x = random_batch(1, in, rng);
  const std::vector<double> infer = net.forward(x, Mode::kInfer).data;
  const int passes = 10000;
  std::vector<double> sum(3, 0.0), sq(3, 0.0);
  for (int i = 0; i < passes; ++i) {
    const auto& y = net.forward(x, Mode::kTrain).data;
    for (int j = 0; j < 3; ++j) {
      sum[j] += y[j];
      sq[j] += y[j] * y[j];
    }
  }
  for (int j = 0; j < 3; ++j) {
    const double mean = sum[j] / passes;
    const double var = sq[j] / passes - mean * mean;
    const double se = std::sqrt(var / passes);
    EXPECT_LE(std::abs(mean - infer[j]), 3 * se) << "output " << j;
  }
}

TEST(Dropout, ZeroProbabilityIsIdentity) {
  Rng rng(3);
  auto d = make_layer(LayerSpec::dropout(0.0), {4, 1, 1}, rng);
  const Batch x = random_batch(3, {4, 1, 1}, rng);
  Batch y;
  d->forward(x, y, Mode::kTrain, rng);
  EXPECT_EQ(y.data, x.data);
}

TEST(Norm, TrainModeOutputIsStandardized) {
  const Shape in{3, 2, 2};
  Rng rng(31);
  auto norm = make_layer(LayerSpec::norm(), in, rng);
  auto params = norm->parameters();
  params[0]->value = {2.0, 0.5, -1.5};
  params[1]->value = {1.0, -3.0, 0.25};
  Batch x(8, in);
  std::normal_distribution<double> g(5.0, 3.0);
  for (double& v : x.data) v = g(rng);
  Batch y;
  norm->forward(x, y, Mode::kTrain, rng);
  for (int c = 0; c < in.c; ++c) {
    std::vector<double> v;
    for (int b = 0; b < x.n; ++b)
      for (int p = 0; p < 4; ++p) v.push_back((y.sample(b)[c * 4 + p] - params[1]->value[c]) / params[0]->value[c]);
    const double mean = std::accumulate(v.begin(), v.end(), 0.0) / v.size();
    double var = 0.0;
    for (double e : v) var += (e - mean) * (e - mean);
    var /= v.size();
    EXPECT_LT(std::abs(mean), 1e-6);
    EXPECT_LT(std::abs(var - 1.0), 1e-6);
  }
}

TEST(Norm, InferenceUsesRunningStatistics) {
  const Shape in{1, 1, 2};
  Rng rng(1);
  auto norm = make_layer(LayerSpec::norm(), in, rng);
  Batch x(1, in);
  x.data = {3.0, -4.0};
  Batch y;
  // fresh running stats are (0, 1): inference is the identity up to eps
  norm->forward(x, y, Mode::kInfer, rng);
  EXPECT_NEAR(y.data[0], 3.0, 1e-6);
  EXPECT_NEAR(y.data[1], -4.0, 1e-6);
  norm->forward(x, y, Mode::kTrain, rng);
  const auto bufs = norm->buffers();
  EXPECT_NEAR((*bufs[0])[0], 0.1 * -0.5, 1e-12);
  EXPECT_NEAR((*bufs[1])[0], 0.9 + 0.1 * 12.25, 1e-12);
}

TEST(Sgd, PlainStep) {
  Parameter p("w", 1);
  p.grad = {1.0};
  SgdMomentum opt(1.0, 0.0);
  opt.step({&p});
  EXPECT_EQ(p.value[0], -1.0);
}

TEST(Sgd, InertiaWithZeroGradient) {
  Parameter p("w", 1);
  SgdMomentum opt(0.1, 0.9);
  p.grad = {1.0};
  opt.step({&p});
  EXPECT_DOUBLE_EQ(p.value[0], -0.1);
  p.grad = {0.0};
  opt.step({&p});
  EXPECT_DOUBLE_EQ(p.value[0], -0.1 - 0.9 * 0.1);
}

TEST(Sgd, ConstantGradientGeometricSum) {
  const double lr = 0.05, mu = 0.8, g = 1.3;
  Parameter p("w", 2);
  SgdMomentum opt(lr, mu);
  for (int n = 1; n <= 6; ++n) {
    p.grad = {g, -g};
    opt.step({&p});
    // w_n = -lr g sum_{i=1..n} (1 - mu^i) / (1 - mu)
    double expect = 0.0;
    for (int i = 1; i <= n; ++i) expect += (1.0 - std::pow(mu, i)) / (1.0 - mu);
    expect *= -lr * g;
    EXPECT_NEAR(p.value[0], expect, 1e-14);
    EXPECT_NEAR(p.value[1], -expect, 1e-14);
  }
}

TEST(Sgd, RejectsBadHyperparameters) {
  EXPECT_THROW(SgdMomentum(0.0, 0.5), InvalidArgument);
  EXPECT_THROW(SgdMomentum(0.1, 1.0), InvalidArgument);
  TrainConfig c;
  c.batch_size = 0;
  EXPECT_THROW(c.validate(), InvalidArgument);
}

Dataset random_dataset(int count, int n_r, int n_t, int users, std::uint64_t seed) {
  Dataset d;
  d.n_r = n_r;
  d.n_t = n_t;
  d.users = users;
  Rng rng(seed);
  std::uniform_real_distribution<float> x(-1.0f, 1.0f), z(0.0f, static_cast<float>(kTwoPi));
  for (int i = 0; i < count; ++i) {
    TrainingSample s;
    s.x.resize(d.input_size());
    s.z.resize(d.label_size());
    for (float& v : s.x) v = x(rng);
    for (float& v : s.z) v = z(rng);
    d.samples.push_back(std::move(s));
  }
  return d;
}

std::vector<std::vector<double>> snapshot(Network& net) {
  std::vector<std::vector<double>> out;
  for (auto* p : net.parameters()) out.push_back(p->value);
  for (auto* b : net.buffers()) out.push_back(*b);
  return out;
}

TEST(Train, ZeroEpochsLeavesModelUnchanged) {
  const Dataset d = random_dataset(10, 3, 4, 1, 1);
  Network net(input_shape_of(d), cnn_mimo_layers(tiny_arch(), 7), 2);
  const auto before = snapshot(net);
  TrainConfig c;
  c.epochs = 0;
  const auto h = train(net, d, &d, c);
  EXPECT_TRUE(h.train_mse.empty());
  EXPECT_EQ(snapshot(net), before);
}

TEST(Train, SameSeedSameHistory) {
  const Dataset d = random_dataset(30, 3, 4, 1, 3);
  const Dataset v = random_dataset(8, 3, 4, 1, 4);
  TrainConfig c;
  c.epochs = 4;
  c.batch_size = 7;
  c.learning_rate = 0.01;
  c.seed = 17;
  Network a(input_shape_of(d), cnn_mimo_layers(tiny_arch(), 7), 5);
  Network b(input_shape_of(d), cnn_mimo_layers(tiny_arch(), 7), 5);
  const auto ha = train(a, d, &v, c);
  const auto hb = train(b, d, &v, c);
  ASSERT_EQ(ha.train_mse.size(), 4u);
  ASSERT_EQ(ha.val_mse.size(), 4u);
  EXPECT_EQ(ha.train_mse, hb.train_mse);
  EXPECT_EQ(ha.val_mse, hb.val_mse);
  EXPECT_EQ(snapshot(a), snapshot(b));

  c.seed = 18;
  Network other(input_shape_of(d), cnn_mimo_layers(tiny_arch(), 7), 5);
  EXPECT_NE(train(other, d, &v, c).train_mse, ha.train_mse);
}

TEST(Train, LossDecreasesOnTinySet) {
  const Dataset d = random_dataset(12, 2, 3, 1, 9);
  Network net(input_shape_of(d), mlp_layers({32}, 0.0, 5), 10);
  TrainConfig c;
  c.epochs = 300;
  c.batch_size = 4;
  c.learning_rate = 0.01;
  const auto h = train(net, d, nullptr, c);
  EXPECT_LT(h.train_mse.back(), 0.1 * h.train_mse.front());
  EXPECT_TRUE(h.val_mse.empty());
}

TEST(Train, RejectsMismatchedDataset) {
  const Dataset d = random_dataset(4, 2, 3, 1, 1);
  Network net({3, 2, 4}, mlp_layers({4}, 0.0, 6), 1);
  EXPECT_THROW(train(net, d, nullptr, TrainConfig{}), ShapeError);
}

TEST(Loss, MseProperties) {
  Batch a(2, {2, 1, 1}), b(2, {2, 1, 1});
  a.data = {1, 2, 3, 4};
  b.data = a.data;
  EXPECT_EQ(mse(a, b), 0.0);
  b.data = {1, 2, 3, 6};
  EXPECT_DOUBLE_EQ(mse(a, b), 1.0);
  EXPECT_GT(mse(a, b), 0.0);
  const Batch g = mse_gradient(a, b);
  EXPECT_EQ(g.data, (std::vector<double>{0, 0, 0, -1}));
  EXPECT_THROW(mse(a, Batch(1, {2, 1, 1})), ShapeError);
}

TEST(ParameterCount, FormulaValues) {
  EXPECT_EQ(paper_parameter_count(3, 2, 2, 256, 2048, 2048), 41481);
  EXPECT_EQ(paper_parameter_count(1, 1, 1, 1, 1, 1), 6);
  EXPECT_EQ(paper_parameter_count(2, 2, 2, 4, 8, 8), 196);
  EXPECT_THROW(paper_parameter_count(0, 2, 2, 256, 2048, 2048), InvalidArgument);
}

TEST(ParameterCount, StandardCounting) {
  EXPECT_EQ(Network({3, 1, 1}, {LayerSpec::fully_connected(2)}, 1).parameter_count(), 8u);
  Rng rng(1);
  auto conv = make_layer(LayerSpec::conv2d(256, 2, 2), {3, 9, 36}, rng);
  std::size_t n = 0;
  for (auto* p : conv->parameters()) n += p->value.size();
  EXPECT_EQ(n, 3328u);
}

TEST(ParameterCount, FullCnnLayerByLayer) {
  // 9 x 36 input, K = 3: 3->256 conv, norm, 256->256 conv, norm, flatten
  // 7 x 34 x 256 = 60928, fc 2048, fc 2048, fc 3 * 45 = 135.
  const std::int64_t expect = (256 * 3 * 4 + 256) + 2 * 256 + (256 * 256 * 4 + 256) + 2 * 256 +
                              (std::int64_t{60928} * 2048 + 2048) + (2048 * 2048 + 2048) +
                              (2048 * 135 + 135);
  EXPECT_EQ(count_parameters({3, 9, 36}, cnn_mimo_layers(CnnArchitecture{}, 135)), expect);
  EXPECT_EQ(expect, 129522311);
}

TEST(ParameterCount, ShapeArithmeticMatchesBuiltNetwork) {
  const Shape in{3, 4, 8};
  const auto cnn = cnn_mimo_layers(tiny_arch(), 24);
  EXPECT_EQ(count_parameters(in, cnn), static_cast<std::int64_t>(Network(in, cnn, 1).parameter_count()));
  const auto mlp = mlp_layers({10, 7}, 0.2, 24);
  EXPECT_EQ(count_parameters(in, mlp), static_cast<std::int64_t>(Network(in, mlp, 1).parameter_count()));
}

TEST(Checkpoint, RoundTripIsExact) {
  const Dataset d = random_dataset(16, 3, 4, 1, 2);
  Network net(input_shape_of(d), cnn_mimo_layers(tiny_arch(), 7), 7);
  TrainConfig c;
  c.epochs = 2;
  c.batch_size = 5;
  train(net, d, nullptr, c);
  const auto path = temp_file("rt.cmmw");
  save_checkpoint(net, path, &c);
  EXPECT_TRUE(fs::exists(path.string() + ".meta"));
  Network back = load_checkpoint(path);
  EXPECT_EQ(back.input_shape(), net.input_shape());
  EXPECT_EQ(back.specs().size(), net.specs().size());
  EXPECT_EQ(snapshot(back), snapshot(net));
  std::vector<double> x(d.samples[0].x.begin(), d.samples[0].x.end());
  EXPECT_EQ(back.predict(x), net.predict(x));
  fs::remove(path);
  fs::remove(path.string() + ".meta");
}

TEST(Checkpoint, CorruptionIsDetected) {
  Network net({3, 3, 4}, cnn_mimo_layers(tiny_arch(), 7), 7);
  const auto path = temp_file("bad.cmmw");
  save_checkpoint(net, path);
  std::vector<char> bytes;
  {
    std::ifstream in(path, std::ios::binary);
    bytes.assign(std::istreambuf_iterator<char>(in), {});
  }
  auto write = [&](const std::vector<char>& b) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out.write(b.data(), static_cast<std::streamsize>(b.size()));
  };

  auto flipped = bytes;
  flipped[flipped.size() / 2] ^= 0x10;
  write(flipped);
  EXPECT_THROW(load_checkpoint(path), FormatError);

  write(std::vector<char>(bytes.begin(), bytes.end() - 20));
  EXPECT_THROW(load_checkpoint(path), FormatError);

  auto magic = bytes;
  magic[0] = 'X';
  write(magic);
  try {
    load_checkpoint(path);
    FAIL() << "expected FormatError";
  } catch (const FormatError& e) {
    EXPECT_EQ(e.offset(), 0u);
  }
  fs::remove(path);
}

}  // namespace
}  // namespace hbf::nn

namespace hbf {
namespace {

TEST(Quantize, OneBitPhasesArePiOrTwoPi) {
  const int n_t = 4, n_r = 2, k = 2;
  Rng rng(5);
  std::uniform_real_distribution<double> u(-3.0, 9.0);
  std::vector<double> z(k * (n_t + n_r));
  for (double& v : z) v = u(rng);
  const auto bf = quantize_prediction(z, PhaseGrid(1), n_t, n_r, k);
  for (int i = 0; i < n_t; ++i)
    for (int j = 0; j < k; ++j) {
      const cdouble e = bf.f_rf(i, j) * std::sqrt(double(n_t));
      EXPECT_NEAR(std::abs(e.imag()), 0.0, 1e-12);
      EXPECT_NEAR(std::abs(e.real()), 1.0, 1e-12);
    }
  for (int i = 0; i < n_r; ++i)
    for (int j = 0; j < k; ++j) EXPECT_NEAR(std::abs(std::abs((bf.w_rf(i, j) * std::sqrt(double(n_r))).real())), 1.0, 1e-12);
}

std::vector<double> grid_label(int size, const PhaseGrid& grid, Rng& rng) {
  const auto values = grid.values();
  std::uniform_int_distribution<std::size_t> pick(0, values.size() - 1);
  std::vector<double> z(size);
  for (double& v : z) v = std::fmod(values[pick(rng)], kTwoPi);  // encode_label wraps 2pi to 0
  return z;
}

TEST(Quantize, LabelsAreFixedPoints) {
  const int n_t = 6, n_r = 3, k = 2;
  const PhaseGrid grid(3);
  Rng rng(7);
  for (int rep = 0; rep < 20; ++rep) {
    const auto z = grid_label(k * (n_t + n_r), grid, rng);
    const auto bf = quantize_prediction(z, grid, n_t, n_r, k);
    const auto back = encode_label(bf.f_rf, bf.w_rf);
    ASSERT_EQ(back.size(), z.size());
    for (std::size_t i = 0; i < z.size(); ++i) EXPECT_NEAR(back[i], z[i], 1e-12);
    const auto again = quantize_prediction(back, grid, n_t, n_r, k);
    EXPECT_LT((again.f_rf - bf.f_rf).norm(), 1e-12);
    EXPECT_LT((again.w_rf - bf.w_rf).norm(), 1e-12);
  }
}

TEST(Quantize, NetworkEmittingALabelReconstructsIt) {
  const int n_t = 4, n_r = 2, k = 1;
  const PhaseGrid grid(2);
  Rng rng(8);
  const auto z = grid_label(k * (n_t + n_r), grid, rng);
  nn::Network net({3, n_r, n_t}, nn::mlp_layers({3}, 0.0, k * (n_t + n_r)), 1);
  auto params = net.parameters();
  std::fill(params[2]->value.begin(), params[2]->value.end(), 0.0);
  params[3]->value = z;
  const std::vector<double> x(3 * n_r * n_t, 0.5);
  const auto bf = predict_and_quantize(net, x, grid, n_t, n_r, k);
  const auto [f, w] = decode_label(z, n_t, n_r, k);
  EXPECT_LT((bf.f_rf - f).norm(), 1e-12);
  EXPECT_LT((bf.w_rf - w).norm(), 1e-12);
}

TEST(Quantize, GapToUnquantizedShrinksWithBits) {
  const int n_t = 9, n_r = 4, k = 2;
  const auto tx = build_upa_for_count(n_t), rx = build_upa_for_count(n_r);
  const LinkBudget budget(1.0, 1.0, k);
  nn::Network net({3, n_r, n_t}, nn::mlp_layers({16}, 0.0, k * (n_t + n_r)), 3);
  Rng rng(9);
  std::vector<double> gap(7, 0.0);
  for (int rep = 0; rep < 40; ++rep) {
    const auto h = draw_channels(rng, tx, rx, Sector{}, k, 4).matrices();
    auto z = net.predict(encode_input(h[0]));
    for (double& v : z) v *= 10.0;  // spread the phases over several turns
    const auto [f, w] = decode_label(z, n_t, n_r, k);
    const double exact = evaluate_combination(h, f, w, budget).rate;
    for (int b : {1, 6}) {
      const auto q = quantize_prediction(z, PhaseGrid(b), n_t, n_r, k);
      gap[b] += std::abs(exact - evaluate_combination(h, q.f_rf, q.w_rf, budget).rate);
    }
  }
  EXPECT_LT(gap[6], gap[1]);
}

struct Instance {
  std::vector<CMatrix> h;
  std::vector<UserCandidates> candidates;
};

Instance draw_instance(std::uint64_t seed, int k) {
  const auto tx = build_upa_for_count(9), rx = build_upa_for_count(4);
  Rng rng(seed);
  const auto real = draw_channels(rng, tx, rx, Sector{}, k, 3);
  Instance inst{real.matrices(), {}};
  for (const auto& u : real.users) inst.candidates.push_back(build_user_candidates(tx, rx, u.paths, PhaseGrid(3)));
  return inst;
}

AnalogBeamformer combo(const Instance& inst, std::size_t q_f, std::size_t q_w) {
  return {combination(q_f, inst.candidates, Side::kTx), combination(q_w, inst.candidates, Side::kRx)};
}

TEST(Fusion, SingleCandidate) {
  const auto inst = draw_instance(1, 2);
  const auto r = fuse_user_predictions({combo(inst, 1, 2)}, inst.h, LinkBudget(1, 1, 2));
  EXPECT_EQ(r.chosen, 0u);
}

TEST(Fusion, IdenticalCandidatesPickFirst) {
  const auto inst = draw_instance(2, 2);
  const auto c = combo(inst, 4, 1);
  EXPECT_EQ(fuse_user_predictions({c, c, c}, inst.h, LinkBudget(1, 1, 2)).chosen, 0u);
}

TEST(Fusion, PlantedOptimumIsSelected) {
  const LinkBudget budget(1, 1, 3);
  for (std::uint64_t seed = 10; seed < 20; ++seed) {
    const auto inst = draw_instance(seed, 3);
    const auto best = exhaustive_search(inst.h, inst.candidates, budget);
    std::vector<AnalogBeamformer> cands;
    const std::size_t q_f_count = combination_count(inst.candidates, Side::kTx);
    const std::size_t q_w_count = combination_count(inst.candidates, Side::kRx);
    Rng rng(seed);
    for (int i = 0; i < 4; ++i) cands.push_back(combo(inst, rng() % q_f_count, rng() % q_w_count));
    cands.insert(cands.begin() + 2, combo(inst, best.best.q_f, best.best.q_w));
    const auto r = fuse_user_predictions(cands, inst.h, budget);
    EXPECT_NEAR(r.rate, best.best_rate, 1e-9 * std::abs(best.best_rate));
    for (const auto& c : cands) EXPECT_GE(r.rate, evaluate_combination(inst.h, c.f_rf, c.w_rf, budget).rate);
    if (r.chosen != 2u) {
      // only an earlier exact tie may displace the planted optimum
      EXPECT_LT(r.chosen, 2u);
    }
  }
}

TEST(Fusion, CompositeTakesOwnColumns) {
  const auto inst = draw_instance(3, 2);
  const auto a = combo(inst, 0, 0), b = combo(inst, 3, 3);
  const auto list = fusion_candidates({a, b}, LabelOrder::kShared);
  ASSERT_EQ(list.size(), 3u);
  EXPECT_EQ(list[2].f_rf.col(0), a.f_rf.col(0));
  EXPECT_EQ(list[2].f_rf.col(1), b.f_rf.col(1));
  EXPECT_EQ(list[2].w_rf.col(1), b.w_rf.col(1));
  EXPECT_EQ(fusion_candidates({a}, LabelOrder::kShared).size(), 1u);
}

}  // namespace
}  // namespace hbf
