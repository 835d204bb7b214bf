#pragma once

// Array geometry, steering vectors and the multi-user geometric channel.

#include <array>
#include <limits>
#include <vector>

#include "hbf/types.hpp"

namespace hbf {

using Vec3 = std::array<double, 3>;

/// Uniform planar array in the y-z plane; positions are in carrier wavelengths.
struct ArrayGeometry {
  std::vector<Vec3> positions;
  int n_x = 0;
  int n_y = 0;
  double spacing = 0.5;

  int size() const { return static_cast<int>(positions.size()); }
};

/// Azimuth/elevation in radians, wrapped to (-pi, pi].
struct AnglePair {
  double azimuth = 0.0;
  double elevation = 0.0;

  AnglePair() = default;
  AnglePair(double az, double el);
};

double wrap_angle(double a);

/// Rectangular angular sector (radians, inclusive bounds).
struct Sector {
  double az_min = -kPi / 6.0;
  double az_max = kPi / 6.0;
  double el_min = -kPi / 9.0;
  double el_max = kPi / 9.0;

  bool contains(const AnglePair& a) const;
  static Sector symmetric_deg(double az_half_deg, double el_half_deg);
};

struct Path {
  cdouble gain{1.0, 0.0};
  AnglePair tx_angle;
  AnglePair rx_angle;
  double tx_gain = 1.0;
  double rx_gain = 1.0;
};

using PathSet = std::vector<Path>;

struct UserChannel {
  CMatrix h;  // N_R x N_T
  PathSet paths;
};

struct ChannelRealization {
  std::vector<UserChannel> users;
  double gamma = 0.0;

  std::vector<CMatrix> matrices() const;
};

ArrayGeometry build_upa(int n_x, int n_y, double spacing = 0.5);

/// Near-square factorization of an element count: n_x = ceil(sqrt(n)),
/// n_y = n / n_x, exact division required.
ArrayGeometry build_upa_for_count(int n, double spacing = 0.5);

/// Unit propagation direction; boresight (0, 0) is +x.
Vec3 direction_vector(const AnglePair& angle);

/// Element n = exp(-j 2pi p_n . r(angle)); unit modulus, not normalized.
CVector steering_vector(const ArrayGeometry& geom, const AnglePair& angle);

std::vector<AnglePair> sample_user_angles(Rng& rng, const Sector& sector, int count);

/// Draws `count` paths with CN(0,1) gains and independent tx/rx angles in
/// the sector. Antenna gains are the sector indicator.
PathSet sample_paths(Rng& rng, const Sector& sector, int count);

/// gamma * sum_l alpha_l g_R g_T a_R a_T^H with gamma = sqrt(N_T N_R / L).
CMatrix synthesize_channel(const ArrayGeometry& tx, const ArrayGeometry& rx, const PathSet& paths);

ChannelRealization draw_channels(Rng& rng, const ArrayGeometry& tx, const ArrayGeometry& rx,
                                 const Sector& sector, int users, int paths_per_user);

/// No-corruption sentinel for corrupt_channel.
inline constexpr double kNoCorruption = std::numeric_limits<double>::infinity();

/// Noise variance used by corrupt_channel: mean|H_ij|^2 * 10^(-snr_db/20).
double corruption_variance(const CMatrix& h, double snr_db);

/// H + E, E_ij ~ CN(0, corruption_variance(H, snr_db)).
CMatrix corrupt_channel(const CMatrix& h, double snr_db, Rng& rng);

}  // namespace hbf
