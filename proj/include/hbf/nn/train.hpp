#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <vector>

#include "hbf/dataset.hpp"
#include "hbf/nn/network.hpp"

namespace hbf::nn {

struct TrainConfig {
  double learning_rate = 0.005;
  double momentum = 0.9;
  int batch_size = 500;
  int epochs = 100;
  std::uint64_t seed = 1;

  void validate() const;
};

/// Classical (heavy-ball) momentum: v <- mu v - lr g; w <- w + v.
class SgdMomentum {
 public:
  SgdMomentum(double learning_rate, double momentum);
  void step(const std::vector<Parameter*>& params);
  const std::vector<std::vector<double>>& velocity() const { return velocity_; }

 private:
  double lr_;
  double mu_;
  std::vector<std::vector<double>> velocity_;
};

struct TrainHistory {
  std::vector<double> train_mse;  // inference-mode MSE over the training set, per epoch
  std::vector<double> val_mse;    // empty when no validation set is given
};

/// Packs samples [begin, end) of `indices` into input/target batches.
void make_batches(const Dataset& d, std::span<const std::size_t> indices, Shape input, Batch& x,
                  Batch& z);

/// Shape of a dataset's inputs: 3 x N_R x N_T.
Shape input_shape_of(const Dataset& d);

double evaluate_mse(Network& model, const Dataset& d, int batch_size = 256);

using EpochCallback = std::function<void(int epoch, double train_mse, double val_mse)>;

TrainHistory train(Network& model, const Dataset& train_set, const Dataset* val_set,
                   const TrainConfig& cfg, const EpochCallback& on_epoch = {});

/// CMMW checkpoint with a `<path>.meta` TrainConfig sidecar.
void save_checkpoint(Network& model, const std::filesystem::path& path, const TrainConfig* cfg = nullptr);
Network load_checkpoint(const std::filesystem::path& path);

}  // namespace hbf::nn
