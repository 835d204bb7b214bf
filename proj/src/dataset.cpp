#include "hbf/dataset.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <thread>

#include "hbf/config.hpp"

namespace hbf {

namespace {

constexpr char kMagic[4] = {'C', 'M', 'M', '1'};
constexpr std::uint32_t kVersion = 1;
constexpr std::uint64_t kHeaderBytes = 4 + 5 * 4;

double wrap_phase(double p) {
  double w = std::fmod(p, kTwoPi);
  if (w < 0) w += kTwoPi;
  if (w >= kTwoPi) w = 0.0;
  return w;
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_f32(std::vector<std::uint8_t>& out, float f) { put_u32(out, std::bit_cast<std::uint32_t>(f)); }

std::uint32_t get_u32(const std::uint8_t* p) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(p[i]) << (8 * i);
  return v;
}

std::uint64_t get_u64(const std::uint8_t* p) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  return v;
}

const char* to_string(LabelSource s) { return s == LabelSource::kCleanChannel ? "clean" : "corrupted"; }
const char* to_string(LabelOrder o) { return o == LabelOrder::kShared ? "shared" : "own_first"; }
const char* to_string(PhaseReference r) {
  return r == PhaseReference::kFirstElement ? "first_element" : "array_centre";
}

}  // namespace

KeyValueConfig to_key_values(const DatasetConfig& c) {
  KeyValueConfig kv;
  kv.set("dataset.scenarios", std::to_string(c.scenarios));
  kv.set("dataset.corruptions", std::to_string(c.corruptions));
  kv.set("system.k", std::to_string(c.users));
  std::string levels;
  for (std::size_t i = 0; i < c.snr_train_db.size(); ++i)
    levels += (i ? "," : "") + format_double(c.snr_train_db[i]);
  kv.set("dataset.snr_train_db", levels);
  kv.set("system.paths", std::to_string(c.paths));
  kv.set("system.bits", std::to_string(c.bits));
  kv.set("system.n_t", std::to_string(c.n_t));
  kv.set("system.n_r", std::to_string(c.n_r));
  kv.set("system.spacing", format_double(c.spacing));
  kv.set("system.sector_az_min", format_double(c.sector.az_min));
  kv.set("system.sector_az_max", format_double(c.sector.az_max));
  kv.set("system.sector_el_min", format_double(c.sector.el_min));
  kv.set("system.sector_el_max", format_double(c.sector.el_max));
  if (c.snap) {
    kv.set("system.grid_az", std::to_string(c.snap->n_az));
    kv.set("system.grid_el", std::to_string(c.snap->n_el));
  }
  kv.set("system.phase_reference", to_string(c.reference));
  kv.set("dataset.labels", to_string(c.labels));
  kv.set("dataset.label_order", to_string(c.order));
  kv.set("dataset.search_snr_db", format_double(c.search_snr_db));
  kv.set("seed", std::to_string(c.seed));
  return kv;
}

namespace {

template <class E>
E parse_choice(const KeyValueConfig& kv, const std::string& key, E fallback,
               std::initializer_list<std::pair<const char*, E>> choices) {
  if (!kv.has(key)) return fallback;
  const auto v = kv.get_string(key, "");
  std::string names;
  for (const auto& [name, value] : choices) {
    if (v == name) return value;
    names += names.empty() ? name : std::string(" | ") + name;
  }
  throw ConfigError("config key '" + key + "': '" + v + "' is not one of " + names);
}

}  // namespace

DatasetConfig dataset_config_from(const KeyValueConfig& kv) {
  DatasetConfig c;
  c.scenarios = kv.get_int("dataset.scenarios", c.scenarios);
  c.corruptions = kv.get_int("dataset.corruptions", c.corruptions);
  c.users = kv.get_int("system.k", c.users);
  c.snr_train_db = kv.get_doubles("dataset.snr_train_db", c.snr_train_db);
  c.paths = kv.get_int("system.paths", c.paths);
  c.bits = kv.get_int("system.bits", c.bits);
  c.n_t = kv.get_int("system.n_t", c.n_t);
  c.n_r = kv.get_int("system.n_r", c.n_r);
  c.spacing = kv.get_double("system.spacing", c.spacing);
  if (kv.has("system.sector_az_deg") || kv.has("system.sector_el_deg"))
    c.sector = Sector::symmetric_deg(kv.get_double("system.sector_az_deg", 30.0),
                                     kv.get_double("system.sector_el_deg", 20.0));
  c.sector.az_min = kv.get_double("system.sector_az_min", c.sector.az_min);
  c.sector.az_max = kv.get_double("system.sector_az_max", c.sector.az_max);
  c.sector.el_min = kv.get_double("system.sector_el_min", c.sector.el_min);
  c.sector.el_max = kv.get_double("system.sector_el_max", c.sector.el_max);
  if (kv.has("system.grid_az"))
    c.snap = build_direction_grid(kv.get_int("system.grid_az", 1), kv.get_int("system.grid_el", 1),
                                  c.sector);
  c.reference = parse_choice(kv, "system.phase_reference", c.reference,
                             {{"first_element", PhaseReference::kFirstElement},
                              {"array_centre", PhaseReference::kArrayCentre}});
  c.labels = parse_choice(kv, "dataset.labels", c.labels,
                          {{"clean", LabelSource::kCleanChannel},
                           {"corrupted", LabelSource::kCorruptedChannel}});
  c.order = parse_choice(kv, "dataset.label_order", c.order,
                         {{"shared", LabelOrder::kShared}, {"own_first", LabelOrder::kOwnFirst}});
  c.search_snr_db = kv.get_double("dataset.search_snr_db", c.search_snr_db);
  c.seed = kv.get_u64("seed", c.seed);
  c.threads = kv.get_int("threads", c.threads);
  return c;
}

namespace {

std::filesystem::path sidecar_path(const std::filesystem::path& p) {
  return std::filesystem::path(p.string() + ".meta");
}

}  // namespace

void DatasetConfig::validate() const {
  if (scenarios < 1 || corruptions < 1 || users < 1 || paths < 1 || n_t < 1 || n_r < 1)
    throw InvalidArgument("DatasetConfig: counts must be >= 1");
  if (snr_train_db.empty()) throw InvalidArgument("DatasetConfig: no SNR_TRAIN levels");
  if (bits < 1 || bits > 30) throw InvalidArgument("DatasetConfig: bits must be in [1, 30]");
}

std::size_t DatasetConfig::total_samples() const {
  return static_cast<std::size_t>(scenarios) * corruptions * users * snr_train_db.size();
}

std::vector<double> encode_input(const CMatrix& h) {
  const auto rows = h.rows();
  const auto cols = h.cols();
  const auto plane = static_cast<std::size_t>(rows * cols);
  std::vector<double> x(3 * plane);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) {
      const std::size_t o = static_cast<std::size_t>(i * cols + j);
      x[o] = std::abs(h(i, j));
      x[plane + o] = h(i, j).real();
      x[2 * plane + o] = h(i, j).imag();
    }
  return x;
}

std::vector<double> encode_label(const CMatrix& f_rf, const CMatrix& w_rf) {
  std::vector<double> z;
  z.reserve(static_cast<std::size_t>(f_rf.size() + w_rf.size()));
  for (const CMatrix* m : {&f_rf, &w_rf})
    for (Eigen::Index j = 0; j < m->cols(); ++j)
      for (Eigen::Index i = 0; i < m->rows(); ++i) {
        const cdouble v = (*m)(i, j);
        if (v == cdouble{})
          throw InvalidArgument("encode_label: zero entry, phase undefined");
        z.push_back(wrap_phase(std::arg(v)));
      }
  return z;
}

std::pair<CMatrix, CMatrix> decode_label(std::span<const double> z, int n_t, int n_r, int users) {
  if (z.size() != static_cast<std::size_t>(users) * (n_t + n_r))
    throw InvalidArgument("decode_label: label length does not match K (N_T + N_R)");
  CMatrix f(n_t, users);
  CMatrix w(n_r, users);
  const double ft = 1.0 / std::sqrt(static_cast<double>(n_t));
  const double wr = 1.0 / std::sqrt(static_cast<double>(n_r));
  std::size_t o = 0;
  for (int j = 0; j < users; ++j)
    for (int i = 0; i < n_t; ++i) f(i, j) = std::polar(ft, z[o++]);
  for (int j = 0; j < users; ++j)
    for (int i = 0; i < n_r; ++i) w(i, j) = std::polar(wr, z[o++]);
  return {f, w};
}

CMatrix rotate_users(const CMatrix& m, int first_user) {
  const auto k = m.cols();
  CMatrix out(m.rows(), k);
  for (Eigen::Index s = 0; s < k; ++s) out.col(s) = m.col((first_user + s) % k);
  return out;
}

namespace {

std::vector<TrainingSample> generate_scenario(const DatasetConfig& cfg, int n,
                                              const ArrayGeometry& tx, const ArrayGeometry& rx) {
  Rng rng(derive_seed(cfg.seed, static_cast<std::uint64_t>(n)));
  const PhaseGrid grid(cfg.bits);
  const LinkBudget budget = LinkBudget::from_snr_db(cfg.search_snr_db, cfg.users);
  const ChannelRealization clean = draw_channels(rng, tx, rx, cfg.sector, cfg.users, cfg.paths);
  const auto clean_h = clean.matrices();

  CandidateOptions opts;
  opts.snap = cfg.snap;
  opts.reference = cfg.reference;
  std::vector<UserCandidates> cands;
  for (const auto& u : clean.users) cands.push_back(build_user_candidates(tx, rx, u.paths, grid, opts));

  SearchResult clean_label;
  if (cfg.labels == LabelSource::kCleanChannel) clean_label = exhaustive_search(clean_h, cands, budget);

  const int levels = static_cast<int>(cfg.snr_train_db.size());
  const int groups = cfg.corruptions * levels;
  std::vector<TrainingSample> out;
  out.reserve(static_cast<std::size_t>(groups) * cfg.users);
  for (int g = 0; g < groups; ++g) {
    const double snr = cfg.snr_train_db[g % levels];
    std::vector<CMatrix> noisy;
    noisy.reserve(cfg.users);
    for (const auto& h : clean_h) noisy.push_back(corrupt_channel(h, snr, rng));
    const SearchResult label = cfg.labels == LabelSource::kCleanChannel
                                   ? clean_label
                                   : exhaustive_search(noisy, cands, budget);
    const auto shared = encode_label(label.best.f_rf, label.best.w_rf);
    for (int k = 0; k < cfg.users; ++k) {
      TrainingSample s;
      const auto x = encode_input(noisy[k]);
      s.x.assign(x.begin(), x.end());
      if (cfg.order == LabelOrder::kShared) {
        s.z.assign(shared.begin(), shared.end());
      } else {
        const auto z = encode_label(rotate_users(label.best.f_rf, k), rotate_users(label.best.w_rf, k));
        s.z.assign(z.begin(), z.end());
      }
      out.push_back(std::move(s));
    }
  }
  return out;
}

}  // namespace

ChannelRealization scenario_channels(const DatasetConfig& cfg, int n) {
  const ArrayGeometry tx = build_upa_for_count(cfg.n_t, cfg.spacing);
  const ArrayGeometry rx = build_upa_for_count(cfg.n_r, cfg.spacing);
  Rng rng(derive_seed(cfg.seed, static_cast<std::uint64_t>(n)));
  return draw_channels(rng, tx, rx, cfg.sector, cfg.users, cfg.paths);
}

Dataset generate_dataset(const DatasetConfig& cfg) {
  cfg.validate();
  const ArrayGeometry tx = build_upa_for_count(cfg.n_t, cfg.spacing);
  const ArrayGeometry rx = build_upa_for_count(cfg.n_r, cfg.spacing);

  std::vector<std::vector<TrainingSample>> per_scenario(cfg.scenarios);
  const int workers = std::clamp(cfg.threads, 1, cfg.scenarios);
  if (workers == 1) {
    for (int n = 0; n < cfg.scenarios; ++n) per_scenario[n] = generate_scenario(cfg, n, tx, rx);
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w)
      pool.emplace_back([&, w] {
        for (int n = w; n < cfg.scenarios; n += workers)
          per_scenario[n] = generate_scenario(cfg, n, tx, rx);
      });
    for (auto& t : pool) t.join();
  }

  Dataset d;
  d.n_r = cfg.n_r;
  d.n_t = cfg.n_t;
  d.users = cfg.users;
  d.config = cfg;
  d.samples.reserve(cfg.total_samples());
  for (auto& s : per_scenario)
    for (auto& sample : s) d.samples.push_back(std::move(sample));
  return d;
}

std::pair<Dataset, Dataset> split_dataset(const Dataset& d, double train_fraction,
                                          std::uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0))
    throw InvalidArgument("split_dataset: fraction must lie in (0, 1)");
  std::vector<std::size_t> idx(d.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  Rng rng(seed);
  std::shuffle(idx.begin(), idx.end(), rng);
  const auto n_train = static_cast<std::size_t>(std::floor(train_fraction * static_cast<double>(d.size())));
  Dataset a, b;
  for (Dataset* p : {&a, &b}) {
    p->n_r = d.n_r;
    p->n_t = d.n_t;
    p->users = d.users;
    p->config = d.config;
  }
  for (std::size_t i = 0; i < idx.size(); ++i)
    (i < n_train ? a : b).samples.push_back(d.samples[idx[i]]);
  return {std::move(a), std::move(b)};
}

std::uint64_t fnv1a64(std::span<const std::uint8_t> bytes, std::uint64_t hash) {
  for (std::uint8_t b : bytes) {
    hash ^= b;
    hash *= 0x100000001b3ULL;
  }
  return hash;
}

std::uint64_t dataset_file_size(int n_r, int n_t, int users, std::uint64_t samples) {
  const std::uint64_t record = 4ULL * (3ULL * n_r * n_t + static_cast<std::uint64_t>(users) * (n_t + n_r));
  return kHeaderBytes + samples * record + 8;
}

void write_dataset(const Dataset& d, const std::filesystem::path& path) {
  std::vector<std::uint8_t> buf;
  buf.reserve(dataset_file_size(d.n_r, d.n_t, d.users, d.size()));
  buf.insert(buf.end(), kMagic, kMagic + 4);
  put_u32(buf, kVersion);
  put_u32(buf, static_cast<std::uint32_t>(d.n_r));
  put_u32(buf, static_cast<std::uint32_t>(d.n_t));
  put_u32(buf, static_cast<std::uint32_t>(d.users));
  put_u32(buf, static_cast<std::uint32_t>(d.size()));
  for (const auto& s : d.samples) {
    if (s.x.size() != d.input_size() || s.z.size() != d.label_size())
      throw InvalidArgument("write_dataset: sample dimensions differ from dataset dimensions");
    for (float v : s.x) put_f32(buf, v);
    for (float v : s.z) put_f32(buf, v);
  }
  const std::uint64_t sum =
      fnv1a64(std::span<const std::uint8_t>(buf.data() + kHeaderBytes, buf.size() - kHeaderBytes));
  put_u64(buf, sum);

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("write_dataset: cannot open '" + path.string() + "'");
  out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (!out) throw std::runtime_error("write_dataset: write failed for '" + path.string() + "'");
  if (d.config) to_key_values(*d.config).save(sidecar_path(path));
}

Dataset read_dataset(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("read_dataset: cannot open '" + path.string() + "'");
  std::vector<std::uint8_t> buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

  if (buf.size() < 4 || std::memcmp(buf.data(), kMagic, 4) != 0) throw FormatError("bad magic", 0);
  if (buf.size() < kHeaderBytes) throw FormatError("truncated header", buf.size());
  const std::uint32_t version = get_u32(buf.data() + 4);
  if (version != kVersion)
    throw FormatError("unsupported version " + std::to_string(version), 4);
  Dataset d;
  d.n_r = static_cast<int>(get_u32(buf.data() + 8));
  d.n_t = static_cast<int>(get_u32(buf.data() + 12));
  d.users = static_cast<int>(get_u32(buf.data() + 16));
  const std::uint32_t count = get_u32(buf.data() + 20);
  const std::uint64_t expected = dataset_file_size(d.n_r, d.n_t, d.users, count);
  if (buf.size() < expected) throw FormatError("truncated payload", buf.size());
  if (buf.size() > expected) throw FormatError("trailing bytes after checksum", expected);

  const std::uint64_t payload_end = expected - 8;
  const std::uint64_t stored = get_u64(buf.data() + payload_end);
  const std::uint64_t actual =
      fnv1a64(std::span<const std::uint8_t>(buf.data() + kHeaderBytes, payload_end - kHeaderBytes));
  if (stored != actual) throw FormatError("checksum mismatch", payload_end);

  const std::uint8_t* p = buf.data() + kHeaderBytes;
  d.samples.resize(count);
  for (auto& s : d.samples) {
    s.x.resize(d.input_size());
    s.z.resize(d.label_size());
    for (float& v : s.x) {
      v = std::bit_cast<float>(get_u32(p));
      p += 4;
    }
    for (float& v : s.z) {
      v = std::bit_cast<float>(get_u32(p));
      p += 4;
    }
  }
  const auto meta = sidecar_path(path);
  if (std::filesystem::exists(meta)) d.config = dataset_config_from(KeyValueConfig::load(meta));
  return d;
}

}  // namespace hbf
