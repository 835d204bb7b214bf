#include "hbf/predict.hpp"

#include <limits>

namespace hbf {

AnalogBeamformer quantize_prediction(std::span<const double> z, const PhaseGrid& grid, int n_t,
                                     int n_r, int users) {
  std::vector<double> q(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) q[i] = quantize_phase(z[i], grid);
  auto [f, w] = decode_label(q, n_t, n_r, users);
  return {std::move(f), std::move(w)};
}

AnalogBeamformer predict_and_quantize(nn::Network& model, std::span<const double> x,
                                      const PhaseGrid& grid, int n_t, int n_r, int users) {
  const auto z = model.predict(x);
  return quantize_prediction(z, grid, n_t, n_r, users);
}

FusionResult fuse_user_predictions(const std::vector<AnalogBeamformer>& candidates,
                                   const std::vector<CMatrix>& channels, const LinkBudget& budget) {
  if (candidates.empty()) throw InvalidArgument("fuse_user_predictions: no candidates");
  FusionResult best;
  best.rate = -std::numeric_limits<double>::infinity();
  bool found = false;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    const auto ev = evaluate_combination(channels, candidates[i].f_rf, candidates[i].w_rf, budget);
    if (!found || ev.rate > best.rate) {
      found = true;
      best.rate = ev.rate;
      best.chosen = i;
      best.beamformer.f_rf = candidates[i].f_rf;
      best.beamformer.w_rf = candidates[i].w_rf;
      best.beamformer.f_bb = ev.f_bb;
    }
  }
  return best;
}

std::vector<AnalogBeamformer> fusion_candidates(const std::vector<AnalogBeamformer>& per_user,
                                                LabelOrder order) {
  const auto k = static_cast<int>(per_user.size());
  std::vector<AnalogBeamformer> out;
  out.reserve(per_user.size() + 1);
  for (int u = 0; u < k; ++u) {
    if (order == LabelOrder::kShared) {
      out.push_back(per_user[u]);
    } else {
      // slot s of user u's prediction belongs to user (u + s) mod K
      AnalogBeamformer natural{per_user[u].f_rf, per_user[u].w_rf};
      for (int s = 0; s < k; ++s) {
        natural.f_rf.col((u + s) % k) = per_user[u].f_rf.col(s);
        natural.w_rf.col((u + s) % k) = per_user[u].w_rf.col(s);
      }
      out.push_back(std::move(natural));
    }
  }
  if (k > 1) {
    AnalogBeamformer composite{out[0].f_rf, out[0].w_rf};
    for (int u = 0; u < k; ++u) {
      composite.f_rf.col(u) = out[u].f_rf.col(u);
      composite.w_rf.col(u) = out[u].w_rf.col(u);
    }
    out.push_back(std::move(composite));
  }
  return out;
}

AnalogBeamformer learned_decision(nn::Network& model, const std::vector<CMatrix>& estimates,
                                  const PhaseGrid& grid, LabelOrder order, const LinkBudget& budget) {
  if (estimates.empty()) throw InvalidArgument("learned_decision: no channels");
  const int n_r = static_cast<int>(estimates[0].rows());
  const int n_t = static_cast<int>(estimates[0].cols());
  const int k = static_cast<int>(estimates.size());
  if (model.output_size() != static_cast<std::size_t>(k) * (n_t + n_r))
    throw InvalidArgument("learned_decision: model output width does not match K (N_T + N_R)");
  std::vector<AnalogBeamformer> per_user;
  per_user.reserve(estimates.size());
  for (const auto& h : estimates)
    per_user.push_back(predict_and_quantize(model, encode_input(h), grid, n_t, n_r, k));
  const auto fused = fuse_user_predictions(fusion_candidates(per_user, order), estimates, budget);
  return {fused.beamformer.f_rf, fused.beamformer.w_rf};
}

}  // namespace hbf
