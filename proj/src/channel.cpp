#include "hbf/channel.hpp"

#include <cmath>

namespace hbf {

double wrap_angle(double a) {
  double w = std::remainder(a, kTwoPi);  // [-pi, pi]
  if (w <= -kPi) w += kTwoPi;
  return w;
}

AnglePair::AnglePair(double az, double el) : azimuth(wrap_angle(az)), elevation(wrap_angle(el)) {}

bool Sector::contains(const AnglePair& a) const {
  return a.azimuth >= az_min && a.azimuth <= az_max && a.elevation >= el_min &&
         a.elevation <= el_max;
}

Sector Sector::symmetric_deg(double az_half_deg, double el_half_deg) {
  return {-deg2rad(az_half_deg), deg2rad(az_half_deg), -deg2rad(el_half_deg),
          deg2rad(el_half_deg)};
}

std::vector<CMatrix> ChannelRealization::matrices() const {
  std::vector<CMatrix> out;
  out.reserve(users.size());
  for (const auto& u : users) out.push_back(u.h);
  return out;
}

ArrayGeometry build_upa(int n_x, int n_y, double spacing) {
  if (n_x < 1 || n_y < 1) throw InvalidArgument("build_upa: grid dimensions must be positive");
  if (!(spacing > 0.0)) throw InvalidArgument("build_upa: spacing must be positive");
  ArrayGeometry g;
  g.n_x = n_x;
  g.n_y = n_y;
  g.spacing = spacing;
  g.positions.reserve(static_cast<std::size_t>(n_x) * n_y);
  for (int i = 0; i < n_x; ++i)
    for (int j = 0; j < n_y; ++j) g.positions.push_back({0.0, i * spacing, j * spacing});
  return g;
}

ArrayGeometry build_upa_for_count(int n, double spacing) {
  if (n < 1) throw InvalidArgument("build_upa_for_count: element count must be positive");
  const int n_x = static_cast<int>(std::ceil(std::sqrt(static_cast<double>(n)) - 1e-12));
  if (n % n_x != 0)
    throw InvalidArgument("build_upa_for_count: " + std::to_string(n) +
                          " has no near-square factorization");
  return build_upa(n_x, n / n_x, spacing);
}

Vec3 direction_vector(const AnglePair& angle) {
  const double ce = std::cos(angle.elevation);
  return {ce * std::cos(angle.azimuth), ce * std::sin(angle.azimuth), std::sin(angle.elevation)};
}

CVector steering_vector(const ArrayGeometry& geom, const AnglePair& angle) {
  const Vec3 r = direction_vector(angle);
  CVector a(geom.size());
  for (int n = 0; n < geom.size(); ++n) {
    const auto& p = geom.positions[n];
    const double proj = p[0] * r[0] + p[1] * r[1] + p[2] * r[2];
    a[n] = std::polar(1.0, -kTwoPi * proj);
  }
  return a;
}

std::vector<AnglePair> sample_user_angles(Rng& rng, const Sector& sector, int count) {
  if (count < 1) throw InvalidArgument("sample_user_angles: path count must be >= 1");
  if (sector.az_min > sector.az_max || sector.el_min > sector.el_max)
    throw InvalidArgument("sample_user_angles: empty sector interval");
  std::vector<AnglePair> out;
  out.reserve(count);
  for (int l = 0; l < count; ++l) {
    const double az = sector.az_min + (sector.az_max - sector.az_min) *
                                          std::uniform_real_distribution<double>(0.0, 1.0)(rng);
    const double el = sector.el_min + (sector.el_max - sector.el_min) *
                                          std::uniform_real_distribution<double>(0.0, 1.0)(rng);
    out.emplace_back(az, el);
  }
  return out;
}

PathSet sample_paths(Rng& rng, const Sector& sector, int count) {
  const auto tx = sample_user_angles(rng, sector, count);
  const auto rx = sample_user_angles(rng, sector, count);
  PathSet paths(count);
  for (int l = 0; l < count; ++l) {
    paths[l].gain = complex_gaussian(rng);
    paths[l].tx_angle = tx[l];
    paths[l].rx_angle = rx[l];
    paths[l].tx_gain = sector.contains(tx[l]) ? 1.0 : 0.0;
    paths[l].rx_gain = sector.contains(rx[l]) ? 1.0 : 0.0;
  }
  return paths;
}

CMatrix synthesize_channel(const ArrayGeometry& tx, const ArrayGeometry& rx, const PathSet& paths) {
  if (paths.empty()) throw InvalidArgument("synthesize_channel: empty path set");
  if (tx.size() < 1 || rx.size() < 1)
    throw InvalidArgument("synthesize_channel: empty array geometry");
  if (tx.size() != tx.n_x * tx.n_y || rx.size() != rx.n_x * rx.n_y)
    throw InvalidArgument("synthesize_channel: geometry size does not match its grid");
  const double gamma =
      std::sqrt(static_cast<double>(tx.size()) * rx.size() / static_cast<double>(paths.size()));
  CMatrix h = CMatrix::Zero(rx.size(), tx.size());
  for (const auto& p : paths) {
    const cdouble scale = gamma * p.gain * p.rx_gain * p.tx_gain;
    if (scale == cdouble{}) continue;
    h.noalias() += scale * steering_vector(rx, p.rx_angle) * steering_vector(tx, p.tx_angle).adjoint();
  }
  return h;
}

ChannelRealization draw_channels(Rng& rng, const ArrayGeometry& tx, const ArrayGeometry& rx,
                                 const Sector& sector, int users, int paths_per_user) {
  if (users < 1) throw InvalidArgument("draw_channels: user count must be >= 1");
  ChannelRealization c;
  c.gamma = std::sqrt(static_cast<double>(tx.size()) * rx.size() / paths_per_user);
  c.users.reserve(users);
  for (int k = 0; k < users; ++k) {
    UserChannel u;
    u.paths = sample_paths(rng, sector, paths_per_user);
    u.h = synthesize_channel(tx, rx, u.paths);
    c.users.push_back(std::move(u));
  }
  return c;
}

double corruption_variance(const CMatrix& h, double snr_db) {
  if (h.size() == 0) return 0.0;
  const double mean_power = h.cwiseAbs2().sum() / static_cast<double>(h.size());
  return mean_power * std::pow(10.0, -snr_db / 20.0);
}

CMatrix corrupt_channel(const CMatrix& h, double snr_db, Rng& rng) {
  if (std::isinf(snr_db) && snr_db > 0) return h;
  const double var = corruption_variance(h, snr_db);
  CMatrix out = h;
  for (Eigen::Index j = 0; j < out.cols(); ++j)
    for (Eigen::Index i = 0; i < out.rows(); ++i) out(i, j) += complex_gaussian(rng, var);
  return out;
}

}  // namespace hbf
