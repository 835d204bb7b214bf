#pragma once

// Independent reference implementations used as test oracles. They share
// no code with the library beyond the plain data types: loops instead of
// Eigen products, LU inversion instead of SVD pseudo-inverses, eigenvalue
// sums instead of Cholesky log-dets, power iteration instead of SVD.

#include <cmath>
#include <limits>
#include <vector>

#include <Eigen/Dense>

#include "hbf/codebook.hpp"

namespace oracle {

using hbf::CMatrix;
using hbf::cdouble;

inline CMatrix effective_channel(const CMatrix& w, const std::vector<CMatrix>& h, const CMatrix& f) {
  const auto k = static_cast<Eigen::Index>(h.size());
  CMatrix out = CMatrix::Zero(k, f.cols());
  for (Eigen::Index u = 0; u < k; ++u)
    for (Eigen::Index n = 0; n < f.cols(); ++n) {
      cdouble acc{};
      for (Eigen::Index r = 0; r < h[u].rows(); ++r)
        for (Eigen::Index c = 0; c < h[u].cols(); ++c) acc += std::conj(w(r, u)) * h[u](r, c) * f(c, n);
      out(u, n) = acc;
    }
  return out;
}

/// sum_i log2(1 + lambda_i), lambda_i eigenvalues of snr * A A^H.
inline double logdet_rate(const CMatrix& a, double snr) {
  const CMatrix g = snr * a * a.adjoint();
  Eigen::SelfAdjointEigenSolver<CMatrix> es(g);
  double r = 0.0;
  for (Eigen::Index i = 0; i < es.eigenvalues().size(); ++i) r += std::log2(1.0 + std::max(0.0, es.eigenvalues()(i)));
  return r;
}

/// Largest singular value by power iteration on H^H H.
inline double sigma_max(const CMatrix& h, int iterations = 2000) {
  hbf::CVector v = hbf::CVector::Ones(h.cols());
  double lambda = 0.0;
  for (int i = 0; i < iterations; ++i) {
    const hbf::CVector w = h.adjoint() * (h * v);
    const double n = w.norm();
    if (n == 0.0) return 0.0;
    lambda = n / v.norm();
    v = w / n;
  }
  return std::sqrt(lambda);
}

/// Column k of the analog matrix for flat selection index q: user k's
/// candidate (q / prod_{j<k} C_j) mod C_k, scaled to modulus 1/sqrt(N).
inline CMatrix analog(std::size_t q, const std::vector<hbf::UserCandidates>& users, bool tx) {
  const auto& first = tx ? users[0].tx : users[0].rx;
  const auto n = first[0].size();
  CMatrix m(n, static_cast<Eigen::Index>(users.size()));
  std::size_t stride = 1;
  for (std::size_t k = 0; k < users.size(); ++k) {
    const auto& set = tx ? users[k].tx : users[k].rx;
    const std::size_t l = (q / stride) % set.size();
    stride *= set.size();
    for (Eigen::Index i = 0; i < n; ++i) m(i, static_cast<Eigen::Index>(k)) = set[l](i) / std::sqrt(double(n));
  }
  return m;
}

struct Best {
  std::size_t q_f = 0;
  std::size_t q_w = 0;
  double rate = -std::numeric_limits<double>::infinity();
};

/// Flat enumeration over every (q_F, q_W). Returns the earliest index whose
/// rate is within `tie` (relative) of the maximum.
inline Best search(const std::vector<CMatrix>& h, const std::vector<hbf::UserCandidates>& users,
                   double power, double noise, double tie = 1e-12) {
  std::size_t qf_count = 1, qw_count = 1;
  for (const auto& u : users) {
    qf_count *= u.tx.size();
    qw_count *= u.rx.size();
  }
  const double snr = power / (static_cast<double>(users.size()) * noise);
  std::vector<double> rates(qf_count * qw_count, -std::numeric_limits<double>::infinity());
  for (std::size_t flat = 0; flat < qf_count * qw_count; ++flat) {
    const std::size_t qf = flat / qw_count, qw = flat % qw_count;
    const CMatrix f = analog(qf, users, true);
    const CMatrix w = analog(qw, users, false);
    const CMatrix he = effective_channel(w, h, f);
    Eigen::FullPivLU<CMatrix> lu(he);
    if (!lu.isInvertible()) continue;
    CMatrix fbb = lu.inverse();
    for (Eigen::Index c = 0; c < fbb.cols(); ++c) {
      double nn = 0.0;
      const hbf::CVector col = f * fbb.col(c);
      for (Eigen::Index i = 0; i < col.size(); ++i) nn += std::norm(col(i));
      fbb.col(c) /= std::sqrt(nn);
    }
    rates[flat] = logdet_rate(he * fbb, snr);
  }
  double top = rates[0];
  for (double r : rates) top = std::max(top, r);
  Best best;
  for (std::size_t flat = 0; flat < rates.size(); ++flat)
    if (rates[flat] >= top - tie * std::abs(top)) {
      best = {flat / qw_count, flat % qw_count, rates[flat]};
      break;
    }
  return best;
}

}  // namespace oracle
