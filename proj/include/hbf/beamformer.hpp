#pragma once

// Zero-forcing hybrid precoding: effective channels, baseband precoders,
// sum-rate evaluation and the exhaustive codebook search.

#include <cstddef>
#include <optional>
#include <vector>

#include "hbf/codebook.hpp"

namespace hbf {

/// Transmit power P, noise variance sigma^2 and user count K.
struct LinkBudget {
  double power = 1.0;
  double noise_variance = 1.0;
  int users = 1;

  LinkBudget() = default;
  LinkBudget(double p, double sigma2, int k);
  /// P = 10^(snr_db/10) with sigma^2 = 1.
  static LinkBudget from_snr_db(double snr_db, int k);
};

struct HybridBeamformer {
  CMatrix f_rf;  // N_T x K
  CMatrix w_rf;  // N_R x K
  CMatrix f_bb;  // K x K
  std::size_t q_f = 0;
  std::size_t q_w = 0;
};

struct ZeroForcing {
  CMatrix f_bb;
  int rank = 0;
  bool rank_deficient = false;
};

struct SearchOptions {
  int threads = 1;
  bool keep_rate_table = false;
};

struct SearchResult {
  HybridBeamformer best;
  double best_rate = 0.0;
  std::size_t visited = 0;
  /// rate_table[q_f * Q_W + q_w] when kept; -inf marks degenerate combinations.
  std::vector<double> rate_table;
};

/// Row k is w_k^H H_k F.
CMatrix effective_channel(const CMatrix& w_rf, const std::vector<CMatrix>& channels,
                          const CMatrix& f_rf);

/// Moore-Penrose pseudo-inverse; singular values below
/// max(rows, cols) * eps * sigma_max are dropped.
ZeroForcing zf_baseband(const CMatrix& h_eff);

/// Scales each column of F_BB so F_RF f_BB_k has unit norm.
/// Throws DegenerateBeamformer on a vanishing column.
CMatrix normalize_baseband(const CMatrix& f_rf, const CMatrix& f_bb);

/// log2 det(I + P/(K sigma^2) H_eff F_BB F_BB^H H_eff^H), via Cholesky.
double sum_rate_zf(const CMatrix& h_eff, const CMatrix& f_bb, const LinkBudget& budget);

/// Per-user SINR rates with interference sum_{n != k} |w_k^H H_k F_RF f_BB_n|^2.
std::vector<double> per_user_rates(const std::vector<CMatrix>& channels, const CMatrix& f_rf,
                                   const CMatrix& f_bb, const CMatrix& w_rf,
                                   const LinkBudget& budget);

double sum_rate(const std::vector<CMatrix>& channels, const HybridBeamformer& bf,
                const LinkBudget& budget);

/// ZF + normalization + log-det rate for fixed analog beamformers evaluated
/// against `channels`. Returns -inf for degenerate combinations.
struct ComboEvaluation {
  CMatrix f_bb;
  double rate = 0.0;
};
ComboEvaluation evaluate_combination(const std::vector<CMatrix>& channels, const CMatrix& f_rf,
                                     const CMatrix& w_rf, const LinkBudget& budget);

/// Completes analog beamformers with the ZF baseband computed on `channels`.
/// Degenerate inputs get a zero F_BB.
HybridBeamformer complete_with_zf(const std::vector<CMatrix>& channels, CMatrix f_rf,
                                  CMatrix w_rf);

/// Rates closer than this (relative to the maximum) count as ties. Candidate
/// vectors that differ only by a common phase give equal rates in exact
/// arithmetic that differ in the last bits numerically.
inline constexpr double kRateTieTolerance = 1e-12;

/// Exhaustive search over all (q_F, q_W). Ties resolve to the smallest
/// (q_F, q_W) in lexicographic order, independent of the thread count.
SearchResult exhaustive_search(const std::vector<CMatrix>& channels,
                               const std::vector<UserCandidates>& candidates,
                               const LinkBudget& budget, const SearchOptions& options = {});

/// sum_k log2(1 + P/(K sigma^2) sigma_max(H_k)^2).
double no_interference_bound(const std::vector<CMatrix>& channels, const LinkBudget& budget);

}  // namespace hbf
