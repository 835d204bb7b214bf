#include "hbf/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>
#include <thread>

#include "hbf/nn/train.hpp"
#include "hbf/predict.hpp"

namespace hbf {

const char* axis_name(SweepAxis a) {
  switch (a) {
    case SweepAxis::kSnr: return "snr";
    case SweepAxis::kSnrTest: return "snr_test";
    case SweepAxis::kBits: return "bits";
    case SweepAxis::kUsers: return "users";
    case SweepAxis::kBsAntennas: return "bs_antennas";
  }
  return "?";
}

SweepAxis parse_axis(const std::string& s) {
  for (auto a : {SweepAxis::kSnr, SweepAxis::kSnrTest, SweepAxis::kBits, SweepAxis::kUsers,
                 SweepAxis::kBsAntennas})
    if (s == axis_name(a)) return a;
  throw ConfigError("unknown sweep axis '" + s + "'");
}

void ExperimentConfig::validate() const {
  if (values.empty()) throw ConfigError("sweep.values must not be empty");
  if (trials < 1) throw ConfigError("sweep.trials must be >= 1");
  if (n_t < 1 || n_r < 1 || users < 1 || paths < 1) throw ConfigError("system sizes must be >= 1");
  if (bits < 1 || bits > 30) throw ConfigError("system.bits must lie in [1, 30]");
  for (const auto& m : methods)
    if (std::find(kAllMethods.begin(), kAllMethods.end(), m) == kAllMethods.end())
      throw ConfigError("unknown method '" + m + "'");
}

ExperimentConfig experiment_config_from(const KeyValueConfig& kv) {
  ExperimentConfig c;
  // System keys are shared with dataset generation.
  const DatasetConfig sys = dataset_config_from(kv);
  c.n_t = sys.n_t;
  c.n_r = sys.n_r;
  c.users = sys.users;
  c.paths = sys.paths;
  c.bits = sys.bits;
  c.spacing = sys.spacing;
  c.sector = sys.sector;
  c.snap = sys.snap;
  c.reference = sys.reference;
  c.label_order = sys.order;

  c.axis = parse_axis(kv.get_string("sweep.axis", axis_name(c.axis)));
  c.values = kv.get_doubles("sweep.values", c.values);
  c.trials = kv.get_int("sweep.trials", c.trials);
  c.snr_db = kv.get_double("sweep.snr_db", c.snr_db);
  c.snr_test_db = kv.get_double("sweep.snr_test_db", c.snr_test_db);
  c.methods = kv.get_strings("sweep.methods", c.methods);
  c.timing = kv.get_bool("sweep.timing", c.timing);
  const auto channels = kv.get_string("sweep.channels", "fresh");
  if (channels == "dataset")
    c.scenario_pool = sys;
  else if (channels != "fresh")
    throw ConfigError("sweep.channels must be fresh or dataset");

  c.cnn_model = kv.get_string("sweep.cnn_model", c.cnn_model);
  c.mlp_model = kv.get_string("sweep.mlp_model", c.mlp_model);
  c.cnn_arch.filters = kv.get_int("model.filters", c.cnn_arch.filters);
  c.cnn_arch.kernel_h = kv.get_int("model.kernel_h", c.cnn_arch.kernel_h);
  c.cnn_arch.kernel_w = kv.get_int("model.kernel_w", c.cnn_arch.kernel_w);
  c.cnn_arch.fc_units = kv.get_int("model.fc_units", c.cnn_arch.fc_units);
  c.cnn_arch.dropout = kv.get_double("model.dropout", c.cnn_arch.dropout);
  c.mlp_hidden = kv.get_ints("model.mlp_hidden", c.mlp_hidden);
  c.mlp_dropout = kv.get_double("model.mlp_dropout", c.mlp_dropout);

  c.seed = kv.get_u64("seed", c.seed);
  c.threads = kv.get_int("threads", c.threads);
  c.validate();
  return c;
}

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
constexpr const char* kCsvHeader = "sweep,method,mean_rate,std_rate,trials,time_ms";

bool is_learned(const std::string& m) { return m == "cnn_mimo" || m == "mlp"; }

ExperimentConfig at_value(const ExperimentConfig& cfg, double v) {
  ExperimentConfig c = cfg;
  switch (cfg.axis) {
    case SweepAxis::kSnr: c.snr_db = v; break;
    case SweepAxis::kSnrTest: c.snr_test_db = v; break;
    case SweepAxis::kBits: c.bits = static_cast<int>(std::lround(v)); break;
    case SweepAxis::kUsers: c.users = static_cast<int>(std::lround(v)); break;
    case SweepAxis::kBsAntennas: c.n_t = static_cast<int>(std::lround(v)); break;
  }
  if (c.scenario_pool) {
    c.scenario_pool->n_t = c.n_t;
    c.scenario_pool->n_r = c.n_r;
    c.scenario_pool->users = c.users;
    c.scenario_pool->paths = c.paths;
    c.scenario_pool->spacing = c.spacing;
    c.scenario_pool->sector = c.sector;
  }
  return c;
}

void check_model_dims(const nn::Network& net, const std::string& method, const ExperimentConfig& c) {
  const nn::Shape want{3, c.n_r, c.n_t};
  const auto out = static_cast<std::size_t>(c.users) * (c.n_t + c.n_r);
  if (!(net.input_shape() == want) || net.output_size() != out)
    throw ConfigError(method + " model expects input " + net.input_shape().str() + " and output " +
                      std::to_string(net.output_size()) + ", but the sweep needs " + want.str() +
                      " -> " + std::to_string(out));
}

// One fully prepared Monte Carlo instance.
struct Instance {
  std::vector<CMatrix> truth;
  std::vector<CMatrix> estimates;
  ChannelRealization realization;
};

Instance draw_instance(const ExperimentConfig& c, int trial, std::uint64_t trial_seed,
                       const ArrayGeometry& tx, const ArrayGeometry& rx) {
  Instance inst;
  if (c.scenario_pool) {
    inst.realization = scenario_channels(*c.scenario_pool, trial % c.scenario_pool->scenarios);
  } else {
    Rng rng(trial_seed);
    inst.realization = draw_channels(rng, tx, rx, c.sector, c.users, c.paths);
  }
  inst.truth = inst.realization.matrices();
  Rng noise(derive_seed(trial_seed, 1));
  for (const auto& h : inst.truth) inst.estimates.push_back(corrupt_channel(h, c.snr_test_db, noise));
  return inst;
}

std::vector<UserCandidates> true_candidates(const ExperimentConfig& c, const Instance& inst,
                                            const ArrayGeometry& tx, const ArrayGeometry& rx) {
  CandidateOptions opts;
  opts.snap = c.snap;
  opts.reference = c.reference;
  const PhaseGrid grid(c.bits);
  std::vector<UserCandidates> cands;
  for (const auto& u : inst.realization.users)
    cands.push_back(build_user_candidates(tx, rx, u.paths, grid, opts));
  return cands;
}

// Returns the sum-rate on the true channels for one method's decision.
double run_method(const std::string& method, const ExperimentConfig& c, const Instance& inst,
                  const ArrayGeometry& tx, const ArrayGeometry& rx, std::uint64_t trial_seed,
                  nn::Network* cnn, nn::Network* mlp) {
  const LinkBudget budget = LinkBudget::from_snr_db(c.snr_db, c.users);
  if (method == "no_interference") return no_interference_bound(inst.truth, budget);
  if (method == "algorithm1") {
    const auto cands = true_candidates(c, inst, tx, rx);
    const auto res = exhaustive_search(inst.truth, cands, budget);
    return sum_rate(inst.truth, res.best, budget);
  }
  if (method == "random_codebook") {
    // Channel-blind reference: every beam is drawn uniformly from the grid
    // codebook over the sector, independently per user and side.
    const DirectionGrid dirs = c.snap ? *c.snap : build_direction_grid(60, 20, c.sector);
    const auto points = dirs.points();
    const PhaseGrid grid(c.bits);
    Rng pick(derive_seed(trial_seed, 2));
    std::uniform_int_distribution<std::size_t> uni(0, points.size() - 1);
    std::vector<UserCandidates> beams(c.users);
    for (auto& u : beams) {
      u.tx.push_back(quantized_steering(tx, points[uni(pick)], grid, c.reference));
      u.rx.push_back(quantized_steering(rx, points[uni(pick)], grid, c.reference));
    }
    const auto bf = complete_with_zf(inst.truth, combination(0, beams, Side::kTx),
                                     combination(0, beams, Side::kRx));
    return sum_rate(inst.truth, bf, budget);
  }
  nn::Network* net = method == "cnn_mimo" ? cnn : mlp;
  if (!net) throw ConfigError(method + ": no model loaded");
  const auto analog = learned_decision(*net, inst.estimates, PhaseGrid(c.bits), c.label_order, budget);
  const auto bf = complete_with_zf(inst.truth, analog.f_rf, analog.w_rf);
  return sum_rate(inst.truth, bf, budget);
}

struct TrialResult {
  std::vector<double> rate;     // per method
  std::vector<double> time_ms;  // per method
};

}  // namespace

nn::Network network_for(const std::string& method, const ExperimentConfig& cfg) {
  const std::string& path = method == "cnn_mimo" ? cfg.cnn_model : cfg.mlp_model;
  if (!path.empty()) {
    if (!std::filesystem::exists(path))
      throw ConfigError(method + " model file '" + path + "' does not exist");
    return nn::load_checkpoint(path);
  }
  const int out = cfg.users * (cfg.n_t + cfg.n_r);
  const nn::Shape in{3, cfg.n_r, cfg.n_t};
  if (method == "cnn_mimo") return nn::Network(in, nn::cnn_mimo_layers(cfg.cnn_arch, out), cfg.seed);
  return nn::Network(in, nn::mlp_layers(cfg.mlp_hidden, cfg.mlp_dropout, out), cfg.seed);
}

std::vector<ResultRow> run_sweep(const ExperimentConfig& cfg, Models models) {
  cfg.validate();
  std::vector<std::string> methods = cfg.methods;
  std::sort(methods.begin(), methods.end());
  methods.erase(std::unique(methods.begin(), methods.end()), methods.end());

  for (const auto& m : methods) {
    if (!is_learned(m)) continue;
    auto& slot = m == "cnn_mimo" ? models.cnn : models.mlp;
    const std::string& path = m == "cnn_mimo" ? cfg.cnn_model : cfg.mlp_model;
    if (!slot) {
      if (path.empty()) throw ConfigError(m + " requested but no model file configured");
      slot = network_for(m, cfg);
    }
    for (double v : cfg.values) check_model_dims(*slot, m, at_value(cfg, v));
  }

  std::vector<ResultRow> rows;
  for (std::size_t vi = 0; vi < cfg.values.size(); ++vi) {
    const ExperimentConfig c = at_value(cfg, cfg.values[vi]);
    const ArrayGeometry tx = build_upa_for_count(c.n_t, c.spacing);
    const ArrayGeometry rx = build_upa_for_count(c.n_r, c.spacing);
    std::vector<TrialResult> results(c.trials);

    auto work = [&](int worker, int stride) {
      std::optional<nn::Network> cnn, mlp;
      if (models.cnn) cnn = *models.cnn;
      if (models.mlp) mlp = *models.mlp;
      for (int t = worker; t < c.trials; t += stride) {
        const std::uint64_t seed = derive_seed(cfg.seed, vi, static_cast<std::uint64_t>(t));
        const Instance inst = draw_instance(c, t, seed, tx, rx);
        TrialResult& r = results[t];
        for (const auto& m : methods) {
          const auto t0 = std::chrono::steady_clock::now();
          const double rate = run_method(m, c, inst, tx, rx, seed, cnn ? &*cnn : nullptr,
                                         mlp ? &*mlp : nullptr);
          const auto t1 = std::chrono::steady_clock::now();
          r.rate.push_back(rate);
          r.time_ms.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
        }
      }
    };
    const int workers = std::clamp(cfg.threads, 1, c.trials);
    if (workers == 1) {
      work(0, 1);
    } else {
      std::vector<std::thread> pool;
      for (int w = 0; w < workers; ++w) pool.emplace_back(work, w, workers);
      for (auto& th : pool) th.join();
    }

    for (std::size_t mi = 0; mi < methods.size(); ++mi) {
      double sum = 0.0, time = 0.0;
      for (const auto& r : results) {
        sum += r.rate[mi];
        time += r.time_ms[mi];
      }
      const double mean = sum / c.trials;
      double ss = 0.0;
      for (const auto& r : results) ss += (r.rate[mi] - mean) * (r.rate[mi] - mean);
      ResultRow row;
      row.sweep = cfg.values[vi];
      row.method = methods[mi];
      row.mean_rate = mean;
      row.std_rate = c.trials > 1 ? std::sqrt(ss / (c.trials - 1)) : 0.0;
      row.trials = c.trials;
      row.time_ms = cfg.timing ? time / c.trials : kNaN;
      rows.push_back(row);
    }
  }
  std::stable_sort(rows.begin(), rows.end(), [](const ResultRow& a, const ResultRow& b) {
    return a.sweep != b.sweep ? a.sweep < b.sweep : a.method < b.method;
  });
  return rows;
}

double median_latency_ms(const std::function<void()>& decision, int repetitions, int warmup) {
  if (repetitions < 1) throw InvalidArgument("median_latency_ms: repetitions must be >= 1");
  for (int i = 0; i < warmup; ++i) decision();
  std::vector<double> times(repetitions);
  for (auto& t : times) {
    const auto t0 = std::chrono::steady_clock::now();
    decision();
    const auto t1 = std::chrono::steady_clock::now();
    t = std::chrono::duration<double, std::milli>(t1 - t0).count();
  }
  std::sort(times.begin(), times.end());
  const std::size_t n = times.size();
  return n % 2 ? times[n / 2] : 0.5 * (times[n / 2 - 1] + times[n / 2]);
}

double measure_latency(const std::string& method, const ExperimentConfig& cfg, int repetitions,
                       Models models) {
  if (repetitions < 5) throw InvalidArgument("measure_latency: repetitions must be >= 5");
  const ArrayGeometry tx = build_upa_for_count(cfg.n_t, cfg.spacing);
  const ArrayGeometry rx = build_upa_for_count(cfg.n_r, cfg.spacing);
  const std::uint64_t seed = derive_seed(cfg.seed, 0xA7);
  const Instance inst = draw_instance(cfg, 0, seed, tx, rx);
  std::optional<nn::Network> net;
  if (is_learned(method)) {
    auto& slot = method == "cnn_mimo" ? models.cnn : models.mlp;
    net = slot ? *slot : network_for(method, cfg);
    check_model_dims(*net, method, cfg);
  }
  volatile double sink = 0.0;
  const LinkBudget budget = LinkBudget::from_snr_db(cfg.snr_db, cfg.users);
  std::function<void()> decision;
  if (method == "algorithm1") {
    decision = [&] {
      const auto cands = true_candidates(cfg, inst, tx, rx);
      sink = exhaustive_search(inst.truth, cands, budget).best_rate;
    };
  } else if (is_learned(method)) {
    const PhaseGrid grid(cfg.bits);
    decision = [&, grid] {
      const auto a = learned_decision(*net, inst.estimates, grid, cfg.label_order, budget);
      sink = std::abs(a.f_rf(0, 0));
    };
  } else {
    decision = [&] {
      sink = run_method(method, cfg, inst, tx, rx, seed, nullptr, nullptr);
    };
  }
  return median_latency_ms(decision, repetitions);
}

std::string csv_text(const std::vector<ResultRow>& rows) {
  std::string out = std::string(kCsvHeader) + "\n";
  char buf[256];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%.6g,%s,%.6g,%.6g,%d,%.6g\n", r.sweep, r.method.c_str(),
                  r.mean_rate, r.std_rate, r.trials, r.time_ms);
    out += buf;
  }
  return out;
}

void emit_csv(const std::vector<ResultRow>& rows, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("emit_csv: cannot open '" + path.string() + "'");
  out << csv_text(rows);
  if (!out) throw std::runtime_error("emit_csv: write failed for '" + path.string() + "'");
}

std::vector<ResultRow> parse_csv(const std::string& text) {
  std::vector<ResultRow> rows;
  std::size_t pos = 0;
  bool header = true;
  while (pos < text.size()) {
    const std::size_t eol = std::min(text.find('\n', pos), text.size());
    const std::string line = text.substr(pos, eol - pos);
    const std::size_t at = pos;
    pos = eol + 1;
    if (header) {
      if (line != kCsvHeader) throw FormatError("parse_csv: unexpected header '" + line + "'", at);
      header = false;
      continue;
    }
    if (line.empty()) continue;
    const auto f = split_list(line);
    if (f.size() != 6) throw FormatError("parse_csv: expected 6 fields in '" + line + "'", at);
    auto number = [&](const std::string& field) {
      char* end = nullptr;
      const double v = std::strtod(field.c_str(), &end);
      if (field.empty() || *end != '\0') throw FormatError("parse_csv: bad number '" + field + "'", at);
      return v;
    };
    ResultRow r;
    r.sweep = number(f[0]);
    r.method = f[1];
    r.mean_rate = number(f[2]);
    r.std_rate = number(f[3]);
    r.trials = static_cast<int>(number(f[4]));
    r.time_ms = number(f[5]);
    rows.push_back(r);
  }
  return rows;
}

}  // namespace hbf
