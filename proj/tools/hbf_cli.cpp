// hbf: dataset generation, training, single searches, sweeps and latency
// measurements from flat key=value configuration files.
//
// Exit codes: 0 success, 1 configuration or usage error, 2 runtime error.

#include <CLI11.hpp>

#include <cstdio>
#include <exception>
#include <iostream>
#include <optional>
#include <string>

#include "hbf/beamformer.hpp"
#include "hbf/codebook.hpp"
#include "hbf/config.hpp"
#include "hbf/dataset.hpp"
#include "hbf/harness.hpp"
#include "hbf/nn/train.hpp"

namespace {

struct Flags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string methods;
  std::optional<int> threads;
};

hbf::KeyValueConfig load_config(const Flags& f) {
  hbf::KeyValueConfig kv = hbf::KeyValueConfig::load(f.config);
  if (f.seed) kv.set("seed", std::to_string(*f.seed));
  if (f.threads) kv.set("threads", std::to_string(*f.threads));
  if (!f.methods.empty()) kv.set("sweep.methods", f.methods);
  return kv;
}

std::string output_path(const Flags& f, const hbf::KeyValueConfig& kv, const std::string& key) {
  std::string p = f.out.empty() ? kv.get_string(key, "") : f.out;
  if (p.empty()) throw hbf::ConfigError("no output path: pass --out or set " + key);
  return p;
}

int gen_dataset(const Flags& f) {
  const auto kv = load_config(f);
  const auto cfg = hbf::dataset_config_from(kv);
  const auto path = output_path(f, kv, "dataset.path");
  try {
    cfg.validate();
  } catch (const hbf::InvalidArgument& e) {
    throw hbf::ConfigError(e.what());
  }
  const auto d = hbf::generate_dataset(cfg);
  hbf::write_dataset(d, path);
  std::cout << "wrote " << d.size() << " samples to " << path << "\n";
  return 0;
}

hbf::nn::TrainConfig train_config_from(const hbf::KeyValueConfig& kv) {
  hbf::nn::TrainConfig t;
  t.learning_rate = kv.get_double("train.learning_rate", t.learning_rate);
  t.momentum = kv.get_double("train.momentum", t.momentum);
  t.batch_size = kv.get_int("train.batch_size", t.batch_size);
  t.epochs = kv.get_int("train.epochs", t.epochs);
  t.seed = kv.get_u64("seed", t.seed);
  try {
    t.validate();
  } catch (const hbf::InvalidArgument& e) {
    throw hbf::ConfigError(e.what());
  }
  return t;
}

int train(const Flags& f) {
  const auto kv = load_config(f);
  const auto tcfg = train_config_from(kv);
  const std::string data_path = kv.get_string("train.dataset", "");
  if (data_path.empty()) throw hbf::ConfigError("train.dataset is not set");
  if (!std::filesystem::exists(data_path))
    throw hbf::ConfigError("dataset file '" + data_path + "' does not exist");
  const std::string method = kv.get_string("train.model", "cnn_mimo");
  if (method != "cnn_mimo" && method != "mlp")
    throw hbf::ConfigError("train.model must be cnn_mimo or mlp");
  const double val_fraction = kv.get_double("train.val_fraction", 0.1);
  if (!(val_fraction >= 0.0 && val_fraction < 1.0))
    throw hbf::ConfigError("train.val_fraction must lie in [0, 1)");
  const auto out = output_path(f, kv, "train.out");

  const auto data = hbf::read_dataset(data_path);
  auto ecfg = hbf::experiment_config_from(kv);
  ecfg.n_t = data.n_t;
  ecfg.n_r = data.n_r;
  ecfg.users = data.users;
  ecfg.cnn_model.clear();
  ecfg.mlp_model.clear();
  auto model = hbf::network_for(method, ecfg);

  const auto [train_set, val_set] = hbf::split_dataset(data, 1.0 - val_fraction, tcfg.seed);
  const bool log = kv.get_bool("train.verbose", true);
  const auto history = hbf::nn::train(
      model, train_set, val_set.size() ? &val_set : nullptr, tcfg,
      [&](int epoch, double tr, double va) {
        if (log) std::printf("epoch %d train_mse %.6g val_mse %.6g\n", epoch + 1, tr, va);
      });
  hbf::nn::save_checkpoint(model, out, &tcfg);
  std::cout << "saved " << method << " (" << model.parameter_count() << " parameters) to " << out
            << "\n";
  return history.train_mse.empty() && tcfg.epochs > 0 ? 2 : 0;
}

int search(const Flags& f) {
  const auto kv = load_config(f);
  const auto cfg = hbf::experiment_config_from(kv);
  const auto tx = hbf::build_upa_for_count(cfg.n_t, cfg.spacing);
  const auto rx = hbf::build_upa_for_count(cfg.n_r, cfg.spacing);
  hbf::Rng rng(cfg.seed);
  const auto real = hbf::draw_channels(rng, tx, rx, cfg.sector, cfg.users, cfg.paths);
  const auto channels = real.matrices();
  hbf::CandidateOptions opts;
  opts.snap = cfg.snap;
  opts.reference = cfg.reference;
  const hbf::PhaseGrid grid(cfg.bits);
  std::vector<hbf::UserCandidates> cands;
  for (const auto& u : real.users) cands.push_back(hbf::build_user_candidates(tx, rx, u.paths, grid, opts));
  hbf::SearchOptions so;
  so.threads = cfg.threads;
  const auto budget = hbf::LinkBudget::from_snr_db(cfg.snr_db, cfg.users);
  const auto res = hbf::exhaustive_search(channels, cands, budget, so);

  hbf::KeyValueConfig result;
  result.set("q_f", std::to_string(res.best.q_f));
  result.set("q_w", std::to_string(res.best.q_w));
  result.set("sum_rate", hbf::format_double(res.best_rate));
  result.set("visited", std::to_string(res.visited));
  result.set("no_interference", hbf::format_double(hbf::no_interference_bound(channels, budget)));
  if (f.out.empty())
    std::cout << result.to_string();
  else
    result.save(f.out);
  return 0;
}

int sweep(const Flags& f) {
  const auto kv = load_config(f);
  const auto cfg = hbf::experiment_config_from(kv);
  const auto path = output_path(f, kv, "sweep.out");
  const auto rows = hbf::run_sweep(cfg);
  hbf::emit_csv(rows, path);
  hbf::KeyValueConfig meta = kv;
  meta.set("snr_convention", "snr_db = 10 log10(P / sigma^2), sigma^2 = 1");
  meta.set("rate_evaluation", "zero-forcing baseband on the true channels");
  meta.save(path + ".meta");
  std::cout << hbf::csv_text(rows);
  return 0;
}

int latency(const Flags& f) {
  const auto kv = load_config(f);
  const auto cfg = hbf::experiment_config_from(kv);
  const int reps = kv.get_int("latency.repetitions", 20);
  if (reps < 5) throw hbf::ConfigError("latency.repetitions must be >= 5");
  std::string text = "method,n_t,median_ms\n";
  for (const auto& m : cfg.methods) {
    char buf[128];
    std::snprintf(buf, sizeof buf, "%s,%d,%.6g\n", m.c_str(), cfg.n_t,
                  hbf::measure_latency(m, cfg, reps));
    text += buf;
  }
  std::cout << text;
  if (!f.out.empty()) {
    std::ofstream o(f.out, std::ios::binary | std::ios::trunc);
    o << text;
    if (!o) throw std::runtime_error("cannot write '" + f.out + "'");
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-user hybrid beamforming simulator"};
  app.require_subcommand(1);
  Flags flags;
  int (*action)(const Flags&) = nullptr;

  auto add = [&](const char* name, const char* help, int (*fn)(const Flags&)) {
    auto* sub = app.add_subcommand(name, help);
    sub->add_option("--config", flags.config, "configuration file (key=value)")->required();
    sub->add_option("--seed", flags.seed, "override the master seed");
    sub->add_option("--out", flags.out, "output path");
    sub->add_option("--methods", flags.methods, "comma-separated method list");
    sub->add_option("--threads", flags.threads, "worker threads")->check(CLI::PositiveNumber);
    sub->callback([&action, fn] { action = fn; });
  };
  add("gen-dataset", "generate a labelled training set", gen_dataset);
  add("train", "train a CNN-MIMO or MLP model on a dataset", train);
  add("search", "run the exhaustive search on one seeded channel draw", search);
  add("sweep", "Monte Carlo sweep; writes a CSV", sweep);
  add("latency", "median per-decision latency of each method", latency);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }
  try {
    return action(flags);
  } catch (const hbf::ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
