#pragma once

// Seeded Monte Carlo sweeps over the system parameters, per-decision
// latency measurement and CSV output.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "hbf/config.hpp"
#include "hbf/dataset.hpp"
#include "hbf/nn/network.hpp"

namespace hbf {

enum class SweepAxis { kSnr, kSnrTest, kBits, kUsers, kBsAntennas };

const char* axis_name(SweepAxis a);
SweepAxis parse_axis(const std::string& s);

inline const std::vector<std::string> kAllMethods = {"algorithm1", "cnn_mimo", "mlp",
                                                     "no_interference", "random_codebook"};

struct ExperimentConfig {
  // system
  int n_t = 36;
  int n_r = 9;
  int users = 3;
  int paths = 10;
  int bits = 3;
  double spacing = 0.5;
  Sector sector;
  std::optional<DirectionGrid> snap;
  PhaseReference reference = PhaseReference::kArrayCentre;
  LabelOrder label_order = LabelOrder::kShared;

  // sweep
  SweepAxis axis = SweepAxis::kSnr;
  std::vector<double> values{0.0};
  int trials = 100;
  double snr_db = 0.0;        // operating SNR 10 log10(P / sigma^2), sigma^2 = 1
  double snr_test_db = 20.0;  // corruption of the channels fed to learned methods
  std::vector<std::string> methods{"algorithm1", "no_interference"};
  bool timing = false;
  /// When set, trial t reuses the clean channels of scenario t mod N of this
  /// dataset configuration (fresh SNR_TEST corruption) instead of a fresh
  /// draw. System dimensions always follow the sweep.
  std::optional<DatasetConfig> scenario_pool;

  // models
  std::string cnn_model;
  std::string mlp_model;
  nn::CnnArchitecture cnn_arch;
  std::vector<int> mlp_hidden{512, 256};
  double mlp_dropout = 0.5;

  std::uint64_t seed = 1;
  int threads = 1;

  void validate() const;
};

ExperimentConfig experiment_config_from(const KeyValueConfig& kv);

struct ResultRow {
  double sweep = 0.0;
  std::string method;
  double mean_rate = 0.0;
  double std_rate = 0.0;
  int trials = 0;
  double time_ms = 0.0;  // NaN when timing is disabled
};

/// Loaded networks for the learned methods; empty members are loaded from the
/// paths in the config on demand.
struct Models {
  std::optional<nn::Network> cnn;
  std::optional<nn::Network> mlp;
};

std::vector<ResultRow> run_sweep(const ExperimentConfig& cfg, Models models = {});

/// Median wall time (ms) of one beamforming decision, after 3 discarded
/// warm-up runs. `method` is any of kAllMethods.
double measure_latency(const std::string& method, const ExperimentConfig& cfg, int repetitions,
                       Models models = {});

/// Median over repetitions of an arbitrary decision callable.
double median_latency_ms(const std::function<void()>& decision, int repetitions, int warmup = 3);

void emit_csv(const std::vector<ResultRow>& rows, const std::filesystem::path& path);
std::string csv_text(const std::vector<ResultRow>& rows);
std::vector<ResultRow> parse_csv(const std::string& text);

/// Network for a learned method: loaded from disk when a path is configured,
/// otherwise freshly initialized with the configured architecture.
nn::Network network_for(const std::string& method, const ExperimentConfig& cfg);

}  // namespace hbf
