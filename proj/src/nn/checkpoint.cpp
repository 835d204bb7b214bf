#include <bit>
#include <cstring>
#include <fstream>

#include "hbf/config.hpp"
#include "hbf/nn/train.hpp"

namespace hbf::nn {

namespace {

constexpr char kMagic[4] = {'C', 'M', 'M', 'W'};
constexpr std::uint32_t kVersion = 1;

class Writer {
 public:
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buf.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) buf.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  std::vector<std::uint8_t> buf;
};

class Reader {
 public:
  explicit Reader(const std::vector<std::uint8_t>& b, std::size_t end) : buf_(b), end_(end) {}
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(buf_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(buf_[pos_ + i]) << (8 * i);
    pos_ += 8;
    return v;
  }
  double f64() { return std::bit_cast<double>(u64()); }
  std::size_t pos() const { return pos_; }
  void seek(std::size_t p) { pos_ = p; }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > end_) throw FormatError("truncated checkpoint", pos_);
  }
  const std::vector<std::uint8_t>& buf_;
  std::size_t end_;
  std::size_t pos_ = 0;
};

}  // namespace

void save_checkpoint(Network& model, const std::filesystem::path& path, const TrainConfig* cfg) {
  Writer w;
  w.buf.insert(w.buf.end(), kMagic, kMagic + 4);
  w.u32(kVersion);
  const Shape in = model.input_shape();
  w.u32(static_cast<std::uint32_t>(in.c));
  w.u32(static_cast<std::uint32_t>(in.h));
  w.u32(static_cast<std::uint32_t>(in.w));
  w.u32(static_cast<std::uint32_t>(model.specs().size()));
  for (const auto& s : model.specs()) {
    w.u32(static_cast<std::uint32_t>(s.kind));
    w.u32(static_cast<std::uint32_t>(s.filters));
    w.u32(static_cast<std::uint32_t>(s.kernel_h));
    w.u32(static_cast<std::uint32_t>(s.kernel_w));
    w.u32(static_cast<std::uint32_t>(s.units));
    w.f64(s.drop);
  }
  std::vector<const std::vector<double>*> tensors;
  for (auto* p : model.parameters()) tensors.push_back(&p->value);
  for (auto* b : model.buffers()) tensors.push_back(b);
  w.u32(static_cast<std::uint32_t>(tensors.size()));
  for (const auto* t : tensors) {
    w.u64(t->size());
    for (double v : *t) w.f64(v);
  }
  w.u64(fnv1a64(std::span<const std::uint8_t>(w.buf.data() + 4, w.buf.size() - 4)));

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("save_checkpoint: cannot open '" + path.string() + "'");
  out.write(reinterpret_cast<const char*>(w.buf.data()), static_cast<std::streamsize>(w.buf.size()));
  if (!out) throw std::runtime_error("save_checkpoint: write failed for '" + path.string() + "'");

  if (cfg) {
    KeyValueConfig kv;
    kv.set("train.learning_rate", format_double(cfg->learning_rate));
    kv.set("train.momentum", format_double(cfg->momentum));
    kv.set("train.batch_size", std::to_string(cfg->batch_size));
    kv.set("train.epochs", std::to_string(cfg->epochs));
    kv.set("train.seed", std::to_string(cfg->seed));
    kv.set("train.loss", "mse");
    kv.save(path.string() + ".meta");
  }
}

Network load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("load_checkpoint: cannot open '" + path.string() + "'");
  std::vector<std::uint8_t> buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (buf.size() < 4 || std::memcmp(buf.data(), kMagic, 4) != 0) throw FormatError("bad magic", 0);
  if (buf.size() < 12) throw FormatError("truncated checkpoint", buf.size());
  const std::size_t end = buf.size() - 8;
  Reader r(buf, end);
  r.seek(4);
  const std::uint32_t version = r.u32();
  if (version != kVersion) throw FormatError("unsupported checkpoint version " + std::to_string(version), 4);
  Shape shape;
  shape.c = static_cast<int>(r.u32());
  shape.h = static_cast<int>(r.u32());
  shape.w = static_cast<int>(r.u32());
  const std::uint32_t n_layers = r.u32();
  if (n_layers > 4096) throw FormatError("implausible layer count", r.pos() - 4);
  std::vector<LayerSpec> specs(n_layers);
  for (auto& s : specs) {
    const std::size_t at = r.pos();
    const std::uint32_t kind = r.u32();
    if (kind < 1 || kind > 6) throw FormatError("unknown layer kind " + std::to_string(kind), at);
    s.kind = static_cast<LayerKind>(kind);
    s.filters = static_cast<int>(r.u32());
    s.kernel_h = static_cast<int>(r.u32());
    s.kernel_w = static_cast<int>(r.u32());
    s.units = static_cast<int>(r.u32());
    s.drop = r.f64();
  }
  const std::size_t table_end = r.pos();
  Network net(shape, specs, 0);
  std::vector<std::vector<double>*> tensors;
  for (auto* p : net.parameters()) tensors.push_back(&p->value);
  for (auto* b : net.buffers()) tensors.push_back(b);
  const std::uint32_t count = r.u32();
  if (count != tensors.size()) throw FormatError("tensor count does not match layer table", table_end);
  for (auto* t : tensors) {
    const std::size_t at = r.pos();
    const std::uint64_t len = r.u64();
    if (len != t->size()) throw FormatError("tensor length does not match layer table", at);
    for (double& v : *t) v = r.f64();
  }
  if (r.pos() != end) throw FormatError("trailing bytes before checksum", r.pos());
  Reader tail(buf, buf.size());
  tail.seek(end);
  const std::uint64_t sum = tail.u64();
  if (sum != fnv1a64(std::span<const std::uint8_t>(buf.data() + 4, end - 4)))
    throw FormatError("checksum mismatch", end);
  return net;
}

}  // namespace hbf::nn
