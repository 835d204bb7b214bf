#include "hbf/nn/train.hpp"

#include <algorithm>
#include <numeric>

namespace hbf::nn {

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw InvalidArgument("TrainConfig: learning rate must be positive");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw InvalidArgument("TrainConfig: momentum must lie in [0, 1)");
  if (batch_size < 1) throw InvalidArgument("TrainConfig: batch size must be >= 1");
  if (epochs < 0) throw InvalidArgument("TrainConfig: epochs must be >= 0");
}

SgdMomentum::SgdMomentum(double learning_rate, double momentum) : lr_(learning_rate), mu_(momentum) {
  if (!(learning_rate > 0.0)) throw InvalidArgument("SgdMomentum: learning rate must be > 0");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw InvalidArgument("SgdMomentum: momentum must lie in [0, 1)");
}

void SgdMomentum::step(const std::vector<Parameter*>& params) {
  if (velocity_.size() != params.size()) {
    velocity_.clear();
    for (auto* p : params) velocity_.emplace_back(p->value.size(), 0.0);
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& v = velocity_[i];
    auto& w = params[i]->value;
    const auto& g = params[i]->grad;
    if (v.size() != w.size()) throw ShapeError("sgd: velocity/parameter size mismatch");
    for (std::size_t j = 0; j < w.size(); ++j) {
      v[j] = mu_ * v[j] - lr_ * g[j];
      w[j] += v[j];
    }
  }
}

Shape input_shape_of(const Dataset& d) { return {3, d.n_r, d.n_t}; }

void make_batches(const Dataset& d, std::span<const std::size_t> indices, Shape input, Batch& x,
                  Batch& z) {
  const int n = static_cast<int>(indices.size());
  x = Batch(n, input);
  z = Batch(n, Shape{static_cast<int>(d.label_size()), 1, 1});
  for (int b = 0; b < n; ++b) {
    const auto& s = d.samples[indices[b]];
    std::copy(s.x.begin(), s.x.end(), x.sample(b));
    std::copy(s.z.begin(), s.z.end(), z.sample(b));
  }
}

double evaluate_mse(Network& model, const Dataset& d, int batch_size) {
  if (d.size() == 0) return 0.0;
  std::vector<std::size_t> idx(d.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  double total = 0.0;
  Batch x, z;
  for (std::size_t b = 0; b < idx.size(); b += batch_size) {
    const std::size_t e = std::min(idx.size(), b + batch_size);
    make_batches(d, std::span(idx).subspan(b, e - b), model.input_shape(), x, z);
    total += mse(model.forward(x, Mode::kInfer), z) * static_cast<double>(e - b);
  }
  return total / static_cast<double>(idx.size());
}

TrainHistory train(Network& model, const Dataset& train_set, const Dataset* val_set,
                   const TrainConfig& cfg, const EpochCallback& on_epoch) {
  cfg.validate();
  TrainHistory history;
  if (cfg.epochs == 0) return history;
  if (train_set.size() == 0) throw InvalidArgument("train: empty training set");
  if (!(input_shape_of(train_set) == model.input_shape()) || train_set.label_size() != model.output_size())
    throw ShapeError("train: dataset dimensions do not match the model");

  SgdMomentum opt(cfg.learning_rate, cfg.momentum);
  model.reseed(derive_seed(cfg.seed, 0xD0));
  std::vector<std::size_t> order(train_set.size());
  Batch x, z;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng shuffle_rng(derive_seed(cfg.seed, 0x5F, static_cast<std::uint64_t>(epoch)));
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    for (std::size_t b = 0; b < order.size(); b += cfg.batch_size) {
      const std::size_t e = std::min(order.size(), b + static_cast<std::size_t>(cfg.batch_size));
      make_batches(train_set, std::span(order).subspan(b, e - b), model.input_shape(), x, z);
      model.zero_grad();
      const Batch& out = model.forward(x, Mode::kTrain);
      model.backward(mse_gradient(out, z));
      opt.step(model.parameters());
    }
    const double tr = evaluate_mse(model, train_set);
    const double va = val_set && val_set->size() ? evaluate_mse(model, *val_set) : 0.0;
    history.train_mse.push_back(tr);
    if (val_set && val_set->size()) history.val_mse.push_back(va);
    if (on_epoch) on_epoch(epoch, tr, va);
  }
  return history;
}

}  // namespace hbf::nn
