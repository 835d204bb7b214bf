#pragma once

// Phase quantizer, direction grid, per-user candidate sets and lazy
// enumeration of the candidate combinations searched by the hybrid precoder.

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "hbf/channel.hpp"

namespace hbf {

/// The 2^B phase-shifter settings {2 pi b / 2^B : b = 1..2^B}.
struct PhaseGrid {
  int bits = 3;

  explicit PhaseGrid(int b = 3);
  std::size_t levels() const { return std::size_t{1} << bits; }
  double step() const { return kTwoPi / static_cast<double>(levels()); }
  std::vector<double> values() const;
};

/// Nearest grid phase in circular distance, returned in (0, 2pi]. Ties go to
/// the smaller grid index b.
double quantize_phase(double phi, const PhaseGrid& grid);

/// exp(j Q(arg v_n)) entrywise. Throws InvalidArgument on a zero entry.
CVector quantize_vector(const CVector& v, const PhaseGrid& grid);

/// Cell-centred uniform grid of n_az x n_el directions over a sector.
struct DirectionGrid {
  Sector sector;
  int n_az = 1;
  int n_el = 1;

  double az_step() const { return (sector.az_max - sector.az_min) / n_az; }
  double el_step() const { return (sector.el_max - sector.el_min) / n_el; }
  std::vector<AnglePair> points() const;
  AnglePair snap(const AnglePair& a) const;
};

DirectionGrid build_direction_grid(int n_az, int n_el, const Sector& sector);

/// Where a candidate's zero phase sits. kFirstElement keeps Q(a) literally;
/// kArrayCentre rotates each vector so the array centroid has phase pi, which
/// keeps label phases away from the 0/2pi seam. The rotation is a common
/// scalar per column and does not change any rate.
enum class PhaseReference { kFirstElement, kArrayCentre };

struct CandidateOptions {
  std::optional<DirectionGrid> snap;
  PhaseReference reference = PhaseReference::kFirstElement;
};

/// Quantized, unimodular steering vectors for one user, one per path.
struct UserCandidates {
  std::vector<CVector> tx;
  std::vector<CVector> rx;
};

CVector quantized_steering(const ArrayGeometry& geom, const AnglePair& angle,
                           const PhaseGrid& grid, PhaseReference reference);

UserCandidates build_user_candidates(const ArrayGeometry& tx, const ArrayGeometry& rx,
                                     const PathSet& paths, const PhaseGrid& grid,
                                     const CandidateOptions& options = {});

enum class Side { kTx, kRx };

std::vector<std::size_t> radices(const std::vector<UserCandidates>& users, Side side);

/// Q_F (kTx) or Q_W (kRx): product of the per-user candidate counts.
std::size_t combination_count(const std::vector<UserCandidates>& users, Side side);

/// Little-endian mixed radix: user 0 varies fastest. Indices are 0-based.
std::vector<std::size_t> decode_combination(std::size_t q, std::span<const std::size_t> radix);
std::size_t encode_combination(std::span<const std::size_t> selection,
                               std::span<const std::size_t> radix);

/// Analog beamformer for combination q: column k is user k's selected
/// candidate scaled by 1/sqrt(N), so every entry has modulus 1/sqrt(N).
CMatrix combination(std::size_t q, const std::vector<UserCandidates>& users, Side side);

}  // namespace hbf
