#pragma once

// Turning network outputs into realizable analog beamformers and combining
// the K per-user predictions into one hybrid beamformer.

#include <vector>

#include "hbf/beamformer.hpp"
#include "hbf/dataset.hpp"
#include "hbf/nn/network.hpp"

namespace hbf {

struct AnalogBeamformer {
  CMatrix f_rf;  // N_T x K
  CMatrix w_rf;  // N_R x K
};

/// Quantizes every phase of a raw network output on `grid` and rebuilds
/// F_RF (modulus 1/sqrt(N_T)) and W_RF (modulus 1/sqrt(N_R)).
AnalogBeamformer quantize_prediction(std::span<const double> z, const PhaseGrid& grid, int n_t,
                                     int n_r, int users);

/// Inference-mode forward pass on one encoded channel, then quantize_prediction.
AnalogBeamformer predict_and_quantize(nn::Network& model, std::span<const double> x,
                                      const PhaseGrid& grid, int n_t, int n_r, int users);

struct FusionResult {
  HybridBeamformer beamformer;
  std::size_t chosen = 0;
  double rate = 0.0;  // log-det rate on the channels used for selection
};

/// Evaluates each candidate's ZF log-det sum-rate on `channels` and returns
/// the best; ties go to the lowest index.
FusionResult fuse_user_predictions(const std::vector<AnalogBeamformer>& candidates,
                                   const std::vector<CMatrix>& channels, const LinkBudget& budget);

/// Candidate list built from K per-user predictions: each prediction with its
/// columns restored to natural user order, followed by the per-column
/// composite whose column k comes from user k's own prediction.
std::vector<AnalogBeamformer> fusion_candidates(const std::vector<AnalogBeamformer>& per_user,
                                                LabelOrder order);

/// One complete learned decision: encode each estimated channel, predict,
/// fuse on the estimates. Returns analog beamformers only.
AnalogBeamformer learned_decision(nn::Network& model, const std::vector<CMatrix>& estimates,
                                  const PhaseGrid& grid, LabelOrder order, const LinkBudget& budget);

}  // namespace hbf
