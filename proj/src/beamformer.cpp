#include "hbf/beamformer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <thread>

namespace hbf {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

void check_finite(const CMatrix& m, const char* what) {
  if (!m.allFinite()) throw InvalidArgument(std::string(what) + ": non-finite input");
}

}  // namespace

LinkBudget::LinkBudget(double p, double sigma2, int k) : power(p), noise_variance(sigma2), users(k) {
  if (!(p > 0.0) || !(sigma2 > 0.0) || k < 1)
    throw InvalidArgument("LinkBudget: require P > 0, sigma^2 > 0, K >= 1");
}

LinkBudget LinkBudget::from_snr_db(double snr_db, int k) {
  return {std::pow(10.0, snr_db / 10.0), 1.0, k};
}

CMatrix effective_channel(const CMatrix& w_rf, const std::vector<CMatrix>& channels,
                          const CMatrix& f_rf) {
  const auto k = static_cast<Eigen::Index>(channels.size());
  if (w_rf.cols() != k || f_rf.cols() != k)
    throw InvalidArgument("effective_channel: beamformer column count must equal user count");
  CMatrix h_eff(k, k);
  for (Eigen::Index u = 0; u < k; ++u) {
    const CMatrix& h = channels[u];
    if (h.rows() != w_rf.rows() || h.cols() != f_rf.rows())
      throw InvalidArgument("effective_channel: channel dimensions do not match beamformers");
    h_eff.row(u) = (w_rf.col(u).adjoint() * h) * f_rf;
  }
  return h_eff;
}

ZeroForcing zf_baseband(const CMatrix& h_eff) {
  check_finite(h_eff, "zf_baseband");
  ZeroForcing out;
  Eigen::JacobiSVD<CMatrix> svd(h_eff, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const auto& s = svd.singularValues();
  const double smax = s.size() ? s.maxCoeff() : 0.0;
  const double tol = static_cast<double>(std::max(h_eff.rows(), h_eff.cols())) *
                     std::numeric_limits<double>::epsilon() * smax;
  Eigen::VectorXd inv = Eigen::VectorXd::Zero(s.size());
  for (Eigen::Index i = 0; i < s.size(); ++i) {
    if (s[i] > tol && s[i] > 0.0) {
      inv[i] = 1.0 / s[i];
      ++out.rank;
    }
  }
  out.rank_deficient = out.rank < std::min(h_eff.rows(), h_eff.cols());
  const Eigen::Index r = s.size();
  out.f_bb = svd.matrixV().leftCols(r) * inv.asDiagonal() * svd.matrixU().leftCols(r).adjoint();
  return out;
}

CMatrix normalize_baseband(const CMatrix& f_rf, const CMatrix& f_bb) {
  if (f_rf.cols() != f_bb.rows())
    throw InvalidArgument("normalize_baseband: F_RF columns must equal F_BB rows");
  CMatrix out = f_bb;
  const CMatrix prod = f_rf * f_bb;
  for (Eigen::Index k = 0; k < f_bb.cols(); ++k) {
    const double n = prod.col(k).norm();
    if (!(n > 0.0) || !std::isfinite(n))
      throw DegenerateBeamformer("normalize_baseband: column " + std::to_string(k) +
                                 " of F_RF F_BB vanishes");
    out.col(k) /= n;
  }
  return out;
}

double sum_rate_zf(const CMatrix& h_eff, const CMatrix& f_bb, const LinkBudget& budget) {
  check_finite(h_eff, "sum_rate_zf");
  check_finite(f_bb, "sum_rate_zf");
  const CMatrix g = h_eff * f_bb;
  const double snr = budget.power / (budget.users * budget.noise_variance);
  CMatrix a = CMatrix::Identity(g.rows(), g.rows());
  a.noalias() += snr * g * g.adjoint();
  Eigen::LLT<CMatrix> llt(a);
  if (llt.info() != Eigen::Success) throw InvalidArgument("sum_rate_zf: argument not positive definite");
  double logdet = 0.0;
  const CMatrix& l = llt.matrixLLT();
  for (Eigen::Index i = 0; i < l.rows(); ++i) logdet += 2.0 * std::log(l(i, i).real());
  return std::max(0.0, logdet / std::log(2.0));
}

std::vector<double> per_user_rates(const std::vector<CMatrix>& channels, const CMatrix& f_rf,
                                   const CMatrix& f_bb, const CMatrix& w_rf,
                                   const LinkBudget& budget) {
  const auto k = static_cast<Eigen::Index>(channels.size());
  if (f_bb.rows() != f_rf.cols() || f_bb.cols() != k || w_rf.cols() != k)
    throw InvalidArgument("per_user_rates: dimension mismatch");
  const CMatrix precoder = f_rf * f_bb;  // N_T x K
  const double per_stream = budget.power / budget.users;
  std::vector<double> rates(channels.size());
  for (Eigen::Index u = 0; u < k; ++u) {
    const CMatrix& h = channels[u];
    if (h.rows() != w_rf.rows() || h.cols() != f_rf.rows())
      throw InvalidArgument("per_user_rates: channel dimensions do not match beamformers");
    const Eigen::RowVectorXcd g = (w_rf.col(u).adjoint() * h) * precoder;
    const double signal = per_stream * std::norm(g[u]);
    double interference = 0.0;
    for (Eigen::Index n = 0; n < k; ++n)
      if (n != u) interference += std::norm(g[n]);
    rates[u] = std::log2(1.0 + signal / (per_stream * interference + budget.noise_variance));
  }
  return rates;
}

double sum_rate(const std::vector<CMatrix>& channels, const HybridBeamformer& bf,
                const LinkBudget& budget) {
  double total = 0.0;
  for (double r : per_user_rates(channels, bf.f_rf, bf.f_bb, bf.w_rf, budget)) total += r;
  return total;
}

ComboEvaluation evaluate_combination(const std::vector<CMatrix>& channels, const CMatrix& f_rf,
                                     const CMatrix& w_rf, const LinkBudget& budget) {
  const CMatrix h_eff = effective_channel(w_rf, channels, f_rf);
  ComboEvaluation ev;
  const ZeroForcing zf = zf_baseband(h_eff);
  if (zf.rank_deficient) {
    ev.f_bb = CMatrix::Zero(h_eff.cols(), h_eff.rows());
    ev.rate = kNegInf;
    return ev;
  }
  try {
    ev.f_bb = normalize_baseband(f_rf, zf.f_bb);
  } catch (const DegenerateBeamformer&) {
    ev.f_bb = CMatrix::Zero(h_eff.cols(), h_eff.rows());
    ev.rate = kNegInf;
    return ev;
  }
  ev.rate = sum_rate_zf(h_eff, ev.f_bb, budget);
  return ev;
}

HybridBeamformer complete_with_zf(const std::vector<CMatrix>& channels, CMatrix f_rf,
                                  CMatrix w_rf) {
  HybridBeamformer bf;
  const CMatrix h_eff = effective_channel(w_rf, channels, f_rf);
  const ZeroForcing zf = zf_baseband(h_eff);
  bf.f_bb = CMatrix::Zero(h_eff.cols(), h_eff.rows());
  if (!zf.rank_deficient) {
    try {
      bf.f_bb = normalize_baseband(f_rf, zf.f_bb);
    } catch (const DegenerateBeamformer&) {
    }
  }
  bf.f_rf = std::move(f_rf);
  bf.w_rf = std::move(w_rf);
  return bf;
}

SearchResult exhaustive_search(const std::vector<CMatrix>& channels,
                               const std::vector<UserCandidates>& candidates,
                               const LinkBudget& budget, const SearchOptions& options) {
  if (candidates.empty() || candidates.size() != channels.size())
    throw InvalidArgument("exhaustive_search: need one candidate set per user");
  for (const auto& c : candidates)
    if (c.tx.empty() || c.rx.empty()) throw InvalidArgument("exhaustive_search: empty candidate list");

  const std::size_t q_f_count = combination_count(candidates, Side::kTx);
  const std::size_t q_w_count = combination_count(candidates, Side::kRx);

  // W combinations are reused for every q_F.
  std::vector<CMatrix> w_sets(q_w_count);
  for (std::size_t q = 0; q < q_w_count; ++q) w_sets[q] = combination(q, candidates, Side::kRx);

  SearchResult result;
  result.visited = q_f_count * q_w_count;
  std::vector<double> rates(result.visited, kNegInf);

  auto scan = [&](std::size_t begin, std::size_t end) {
    for (std::size_t qf = begin; qf < end; ++qf) {
      const CMatrix f_rf = combination(qf, candidates, Side::kTx);
      for (std::size_t qw = 0; qw < q_w_count; ++qw)
        rates[qf * q_w_count + qw] = evaluate_combination(channels, f_rf, w_sets[qw], budget).rate;
    }
  };

  const int workers = std::clamp<int>(options.threads, 1, static_cast<int>(q_f_count));
  if (workers == 1) {
    scan(0, q_f_count);
  } else {
    std::vector<std::thread> pool;
    const std::size_t chunk = (q_f_count + workers - 1) / workers;
    for (int w = 0; w < workers; ++w) {
      const std::size_t b = std::min(q_f_count, w * chunk);
      const std::size_t e = std::min(q_f_count, b + chunk);
      pool.emplace_back([&, b, e] { scan(b, e); });
    }
    for (auto& t : pool) t.join();
  }

  // Smallest flat index whose rate is within the tie tolerance of the max;
  // flat order is lexicographic in (q_F, q_W).
  const double top = *std::max_element(rates.begin(), rates.end());
  std::size_t pick = 0;
  if (std::isfinite(top)) {
    const double floor = top - kRateTieTolerance * std::abs(top);
    while (rates[pick] < floor) ++pick;
  }
  struct {
    double rate;
    std::size_t q_f, q_w;
  } best{rates[pick], pick / q_w_count, pick % q_w_count};
  if (options.keep_rate_table) result.rate_table = std::move(rates);

  result.best_rate = best.rate;
  result.best.q_f = best.q_f;
  result.best.q_w = best.q_w;
  result.best.f_rf = combination(best.q_f, candidates, Side::kTx);
  result.best.w_rf = w_sets[best.q_w];
  result.best.f_bb =
      evaluate_combination(channels, result.best.f_rf, result.best.w_rf, budget).f_bb;
  return result;
}

double no_interference_bound(const std::vector<CMatrix>& channels, const LinkBudget& budget) {
  const double snr = budget.power / (budget.users * budget.noise_variance);
  double total = 0.0;
  for (const auto& h : channels) {
    check_finite(h, "no_interference_bound");
    if (h.size() == 0) continue;
    Eigen::JacobiSVD<CMatrix> svd(h);
    const double smax = svd.singularValues()(0);
    total += std::log2(1.0 + snr * smax * smax);
  }
  return total;
}

}  // namespace hbf
