#include "hbf/codebook.hpp"

#include <cmath>
#include <string>

namespace hbf {

PhaseGrid::PhaseGrid(int b) : bits(b) {
  if (b < 1 || b > 30) throw InvalidArgument("PhaseGrid: bits must be in [1, 30]");
}

std::vector<double> PhaseGrid::values() const {
  std::vector<double> v(levels());
  for (std::size_t b = 1; b <= levels(); ++b) v[b - 1] = static_cast<double>(b) * step();
  return v;
}

double quantize_phase(double phi, const PhaseGrid& grid) {
  const std::size_t m = grid.levels();
  double x = std::fmod(phi, kTwoPi);
  if (x < 0) x += kTwoPi;
  const double t = x / grid.step();
  auto lo = static_cast<std::size_t>(std::floor(t));
  if (lo >= m) lo = m - 1;
  const std::size_t hi = lo + 1;
  const double d_lo = t - static_cast<double>(lo);
  const double d_hi = static_cast<double>(hi) - t;
  // grid index b of the point at k*step: 0 is represented by b = m (2pi)
  const std::size_t b_lo = lo == 0 ? m : lo;
  const std::size_t b_hi = hi;
  std::size_t b;
  if (d_lo < d_hi)
    b = b_lo;
  else if (d_hi < d_lo)
    b = b_hi;
  else
    b = std::min(b_lo, b_hi);
  return static_cast<double>(b) * grid.step();
}

CVector quantize_vector(const CVector& v, const PhaseGrid& grid) {
  CVector out(v.size());
  for (Eigen::Index n = 0; n < v.size(); ++n) {
    if (v[n] == cdouble{})
      throw InvalidArgument("quantize_vector: zero entry at index " + std::to_string(n));
    out[n] = std::polar(1.0, quantize_phase(std::arg(v[n]), grid));
  }
  return out;
}

std::vector<AnglePair> DirectionGrid::points() const {
  std::vector<AnglePair> pts;
  pts.reserve(static_cast<std::size_t>(n_az) * n_el);
  for (int i = 0; i < n_az; ++i)
    for (int j = 0; j < n_el; ++j)
      pts.emplace_back(sector.az_min + (i + 0.5) * az_step(), sector.el_min + (j + 0.5) * el_step());
  return pts;
}

AnglePair DirectionGrid::snap(const AnglePair& a) const {
  auto cell = [](double v, double lo, double step, int n) {
    if (step <= 0) return 0;
    int i = static_cast<int>(std::floor((v - lo) / step));
    return std::clamp(i, 0, n - 1);
  };
  const int i = cell(a.azimuth, sector.az_min, az_step(), n_az);
  const int j = cell(a.elevation, sector.el_min, el_step(), n_el);
  return {sector.az_min + (i + 0.5) * az_step(), sector.el_min + (j + 0.5) * el_step()};
}

DirectionGrid build_direction_grid(int n_az, int n_el, const Sector& sector) {
  if (n_az < 1 || n_el < 1) throw InvalidArgument("build_direction_grid: sizes must be >= 1");
  return {sector, n_az, n_el};
}

CVector quantized_steering(const ArrayGeometry& geom, const AnglePair& angle,
                           const PhaseGrid& grid, PhaseReference reference) {
  CVector a = steering_vector(geom, angle);
  if (reference == PhaseReference::kArrayCentre) {
    Vec3 c{0.0, 0.0, 0.0};
    for (const auto& p : geom.positions)
      for (int d = 0; d < 3; ++d) c[d] += p[d] / geom.size();
    const Vec3 r = direction_vector(angle);
    const double proj = c[0] * r[0] + c[1] * r[1] + c[2] * r[2];
    a *= std::polar(1.0, kPi + kTwoPi * proj);
  }
  return quantize_vector(a, grid);
}

UserCandidates build_user_candidates(const ArrayGeometry& tx, const ArrayGeometry& rx,
                                     const PathSet& paths, const PhaseGrid& grid,
                                     const CandidateOptions& options) {
  if (paths.empty()) throw InvalidArgument("build_user_candidates: empty path set");
  UserCandidates c;
  c.tx.reserve(paths.size());
  c.rx.reserve(paths.size());
  for (const auto& p : paths) {
    AnglePair ta = p.tx_angle;
    AnglePair ra = p.rx_angle;
    if (options.snap) {
      ta = options.snap->snap(ta);
      ra = options.snap->snap(ra);
    }
    c.tx.push_back(quantized_steering(tx, ta, grid, options.reference));
    c.rx.push_back(quantized_steering(rx, ra, grid, options.reference));
  }
  return c;
}

std::vector<std::size_t> radices(const std::vector<UserCandidates>& users, Side side) {
  std::vector<std::size_t> r;
  r.reserve(users.size());
  for (const auto& u : users) r.push_back(side == Side::kTx ? u.tx.size() : u.rx.size());
  return r;
}

std::size_t combination_count(const std::vector<UserCandidates>& users, Side side) {
  if (users.empty()) return 0;
  std::size_t q = 1;
  for (std::size_t r : radices(users, side)) q *= r;
  return q;
}

std::vector<std::size_t> decode_combination(std::size_t q, std::span<const std::size_t> radix) {
  std::size_t total = 1;
  for (std::size_t r : radix) {
    if (r == 0) throw InvalidArgument("decode_combination: zero radix");
    total *= r;
  }
  if (q >= total)
    throw InvalidArgument("decode_combination: index " + std::to_string(q) + " out of range [0, " +
                          std::to_string(total) + ")");
  std::vector<std::size_t> sel(radix.size());
  for (std::size_t k = 0; k < radix.size(); ++k) {
    sel[k] = q % radix[k];
    q /= radix[k];
  }
  return sel;
}

std::size_t encode_combination(std::span<const std::size_t> selection,
                               std::span<const std::size_t> radix) {
  if (selection.size() != radix.size())
    throw InvalidArgument("encode_combination: selection/radix length mismatch");
  std::size_t q = 0;
  for (std::size_t k = radix.size(); k-- > 0;) {
    if (selection[k] >= radix[k]) throw InvalidArgument("encode_combination: digit out of range");
    q = q * radix[k] + selection[k];
  }
  return q;
}

CMatrix combination(std::size_t q, const std::vector<UserCandidates>& users, Side side) {
  if (users.empty()) throw InvalidArgument("combination: no users");
  const auto r = radices(users, side);
  const auto sel = decode_combination(q, r);
  const auto& first = side == Side::kTx ? users[0].tx : users[0].rx;
  const Eigen::Index n = first.front().size();
  const double scale = 1.0 / std::sqrt(static_cast<double>(n));
  CMatrix m(n, static_cast<Eigen::Index>(users.size()));
  for (std::size_t k = 0; k < users.size(); ++k) {
    const auto& list = side == Side::kTx ? users[k].tx : users[k].rx;
    const CVector& v = list[sel[k]];
    if (v.size() != n) throw InvalidArgument("combination: candidate length mismatch across users");
    m.col(static_cast<Eigen::Index>(k)) = v * scale;
  }
  return m;
}

}  // namespace hbf
