#pragma once

// Training-set generation from corrupted channels with exhaustive-search
// labels, the (|H|, Re H, Im H) input encoding, the phase label encoding and
// the CMM1 dataset file format.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "hbf/beamformer.hpp"
#include "hbf/config.hpp"

namespace hbf {

/// Which channels Algorithm 1 sees when labelling.
enum class LabelSource {
  kCleanChannel,      // one search per scenario on the uncorrupted channels
  kCorruptedChannel,  // one search per (scenario, corruption) on corrupted channels
};

/// Column order of the label attached to user k's sample.
enum class LabelOrder {
  kShared,    // natural user order; all K samples of a group share one label
  kOwnFirst,  // cyclic rotation so the fed user's beams occupy slot 0
};

struct DatasetConfig {
  int scenarios = 1;                           // N
  int corruptions = 1;                         // G, per SNR level
  int users = 3;                               // K
  std::vector<double> snr_train_db{15.0, 20.0, 25.0};
  int paths = 10;                              // L
  int bits = 3;                                // B
  int n_t = 36;
  int n_r = 9;
  double spacing = 0.5;
  Sector sector;
  std::optional<DirectionGrid> snap;
  PhaseReference reference = PhaseReference::kArrayCentre;
  LabelSource labels = LabelSource::kCleanChannel;
  LabelOrder order = LabelOrder::kShared;
  double search_snr_db = 0.0;                  // operating SNR used by the labelling search
  std::uint64_t seed = 1;
  int threads = 1;

  void validate() const;
  /// N * G * K * |SNR_TRAIN|.
  std::size_t total_samples() const;
};

struct TrainingSample {
  std::vector<float> x;  // 3 * N_R * N_T, channel-major then row-major
  std::vector<float> z;  // K (N_T + N_R) phases in [0, 2pi)
};

struct Dataset {
  int n_r = 0;
  int n_t = 0;
  int users = 0;
  std::vector<TrainingSample> samples;
  std::optional<DatasetConfig> config;

  std::size_t input_size() const { return 3u * n_r * n_t; }
  std::size_t label_size() const { return static_cast<std::size_t>(users) * (n_t + n_r); }
  std::size_t size() const { return samples.size(); }
};

/// [|H|, Re H, Im H] planes, each row-major N_R x N_T.
std::vector<double> encode_input(const CMatrix& h);

/// [arg vec(F_RF); arg vec(W_RF)], column-major, wrapped to [0, 2pi).
std::vector<double> encode_label(const CMatrix& f_rf, const CMatrix& w_rf);

/// Inverse of encode_label; entries get moduli 1/sqrt(N_T) and 1/sqrt(N_R).
std::pair<CMatrix, CMatrix> decode_label(std::span<const double> z, int n_t, int n_r, int users);

/// Moves column (k + s) mod K into slot s.
CMatrix rotate_users(const CMatrix& m, int first_user);

Dataset generate_dataset(const DatasetConfig& cfg);

/// The clean channels of scenario n, exactly as drawn by generate_dataset.
ChannelRealization scenario_channels(const DatasetConfig& cfg, int n);

/// Shuffled disjoint split; the first part has floor(fraction * T) samples.
std::pair<Dataset, Dataset> split_dataset(const Dataset& d, double train_fraction,
                                          std::uint64_t seed);

std::uint64_t fnv1a64(std::span<const std::uint8_t> bytes, std::uint64_t hash = 0xcbf29ce484222325ULL);

/// Config <-> key=value form (keys under system., dataset., seed).
KeyValueConfig to_key_values(const DatasetConfig& cfg);
DatasetConfig dataset_config_from(const KeyValueConfig& kv);

/// Binary CMM1 file plus a `<path>.meta` key=value sidecar when a config is attached.
void write_dataset(const Dataset& d, const std::filesystem::path& path);
Dataset read_dataset(const std::filesystem::path& path);

/// Header (24 bytes) + records + checksum (8 bytes).
std::uint64_t dataset_file_size(int n_r, int n_t, int users, std::uint64_t samples);

}  // namespace hbf
