// SPDX-License-Identifier: Apache-2.0
#include "dlf/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

namespace dlf::ckpt {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace {

constexpr char kMagic[4] = {'D', 'L', 'F', '1'};
constexpr std::uint8_t kDtypeF64 = 1;

class Writer {
 public:
  explicit Writer(std::ostream& out) : out_(out) {}
  template <typename T>
  void pod(T v) {
    out_.write(reinterpret_cast<const char*>(&v), sizeof v);
  }
  void text(const std::string& s) {
    pod<std::uint64_t>(s.size());
    out_.write(s.data(), static_cast<std::streamsize>(s.size()));
  }

 private:
  std::ostream& out_;
};

class Reader {
 public:
  Reader(const std::string& buf, std::string source) : buf_(buf), source_(std::move(source)) {}
  template <typename T>
  T pod(const char* what) {
    need(sizeof(T), what);
    T v;
    std::memcpy(&v, buf_.data() + pos_, sizeof v);
    pos_ += sizeof v;
    return v;
  }
  std::string bytes(std::size_t n, const char* what) {
    need(n, what);
    std::string s = buf_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  std::string text(const char* what) { return bytes(pod<std::uint64_t>(what), what); }
  bool done() const { return pos_ == buf_.size(); }

 private:
  void need(std::size_t n, const char* what) {
    if (buf_.size() - pos_ < n)
      throw CheckpointError("checkpoint '" + source_ + "' is truncated while reading " + what + " (offset " +
                            std::to_string(pos_) + ")");
  }
  const std::string& buf_;
  std::string source_;
  std::size_t pos_ = 0;
};

}  // namespace

void write(const std::filesystem::path& path, const Checkpoint& ckpt) {
  std::ostringstream buf;
  Writer w(buf);
  buf.write(kMagic, 4);
  w.pod<std::uint32_t>(kFormatVersion);
  w.text(ckpt.config_text);
  w.pod<std::uint64_t>(ckpt.seed);
  w.pod<std::uint64_t>(ckpt.step);
  w.text(ckpt.rng_state);
  w.pod<std::uint32_t>(static_cast<std::uint32_t>(ckpt.tensors.size()));
  for (const auto& t : ckpt.tensors) {
    if (ad::numel(t.shape) != t.values.size())
      throw CheckpointError("tensor '" + t.name + "' holds " + std::to_string(t.values.size()) +
                            " values for shape " + ad::to_string(t.shape));
    w.pod<std::uint32_t>(static_cast<std::uint32_t>(t.name.size()));
    buf.write(t.name.data(), static_cast<std::streamsize>(t.name.size()));
    w.pod<std::uint8_t>(kDtypeF64);
    w.pod<std::uint32_t>(static_cast<std::uint32_t>(t.shape.size()));
    for (auto d : t.shape) w.pod<std::uint64_t>(d);
    w.pod<std::uint64_t>(t.values.size() * sizeof(double));
    buf.write(reinterpret_cast<const char*>(t.values.data()),
              static_cast<std::streamsize>(t.values.size() * sizeof(double)));
  }
  // Write to a sibling file first so a failed write never leaves a partial checkpoint.
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw CheckpointError("cannot write checkpoint '" + tmp.string() + "'");
    const auto s = buf.str();
    out.write(s.data(), static_cast<std::streamsize>(s.size()));
    if (!out) throw CheckpointError("failed writing checkpoint '" + tmp.string() + "'");
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint read(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  const std::string buf = ss.str();
  Reader r(buf, path.string());

  if (r.bytes(4, "magic") != std::string(kMagic, 4))
    throw CheckpointError("'" + path.string() + "' is not a checkpoint (bad magic)");
  const auto version = r.pod<std::uint32_t>("version");
  if (version != kFormatVersion)
    throw CheckpointError("checkpoint '" + path.string() + "' has format version " + std::to_string(version) +
                          ", expected " + std::to_string(kFormatVersion));
  Checkpoint c;
  c.config_text = r.text("config");
  c.seed = r.pod<std::uint64_t>("seed");
  c.step = r.pod<std::uint64_t>("step");
  c.rng_state = r.text("rng state");
  const auto count = r.pod<std::uint32_t>("tensor count");
  for (std::uint32_t i = 0; i < count; ++i) {
    StoredTensor t;
    t.name = r.bytes(r.pod<std::uint32_t>("tensor name length"), "tensor name");
    const auto dtype = r.pod<std::uint8_t>("dtype");
    if (dtype != kDtypeF64)
      throw CheckpointError("tensor '" + t.name + "' has unsupported dtype " + std::to_string(dtype));
    const auto rank = r.pod<std::uint32_t>("rank");
    for (std::uint32_t d = 0; d < rank; ++d) t.shape.push_back(r.pod<std::uint64_t>("dims"));
    const auto payload = r.pod<std::uint64_t>("payload size");
    if (payload != ad::numel(t.shape) * sizeof(double))
      throw CheckpointError("tensor '" + t.name + "' payload of " + std::to_string(payload) +
                            " bytes does not match shape " + ad::to_string(t.shape));
    const auto raw = r.bytes(payload, "tensor payload");
    t.values.resize(ad::numel(t.shape));
    std::memcpy(t.values.data(), raw.data(), payload);
    c.tensors.push_back(std::move(t));
  }
  if (!r.done()) throw CheckpointError("checkpoint '" + path.string() + "' has trailing bytes");
  return c;
}

Checkpoint capture(const ForecastModel& model, const config::RunConfig& cfg, std::uint64_t step,
                   const std::string& rng_state) {
  Checkpoint c;
  c.config_text = config::serialize(cfg);
  c.seed = model.seed();
  c.step = step;
  c.rng_state = rng_state;
  for (const auto& p : model.parameters())
    c.tensors.push_back({p.name, p.tensor.shape(), {p.tensor.data().begin(), p.tensor.data().end()}});
  return c;
}

void restore(ForecastModel& model, const Checkpoint& ckpt) {
  std::map<std::string, const StoredTensor*> stored;
  for (const auto& t : ckpt.tensors)
    if (!stored.emplace(t.name, &t).second) throw CheckpointError("duplicate tensor '" + t.name + "'");
  auto params = model.parameters();
  std::map<std::string, const nn::NamedTensor*> expected;
  for (const auto& p : params) expected.emplace(p.name, &p);
  for (const auto& t : ckpt.tensors)
    if (!expected.count(t.name)) throw CheckpointError("checkpoint has unknown tensor '" + t.name + "'");
  for (const auto& p : params) {
    auto it = stored.find(p.name);
    if (it == stored.end()) throw CheckpointError("checkpoint is missing tensor '" + p.name + "'");
    if (it->second->shape != p.tensor.shape())
      throw CheckpointError("tensor '" + p.name + "' has shape " + ad::to_string(it->second->shape) +
                            " in the checkpoint but " + ad::to_string(p.tensor.shape()) + " in the model");
  }
  for (auto& p : params) {
    const auto& v = stored.at(p.name)->values;
    std::copy(v.begin(), v.end(), p.tensor.data().begin());
  }
}

Loaded load(const std::filesystem::path& path) {
  auto c = read(path);
  Loaded out;
  try {
    out.config = config::parse(c.config_text);
    config::validate(out.config);
  } catch (const config::ConfigError& e) {
    throw CheckpointError("checkpoint '" + path.string() + "' carries an invalid config: " + e.what());
  }
  out.model = std::make_unique<ForecastModel>(config::model_config(out.config), config::prompt_text(out.config),
                                              c.seed, /*run_pretraining=*/false);
  restore(*out.model, c);
  out.step = c.step;
  out.rng_state = c.rng_state;
  return out;
}

}  // namespace dlf::ckpt
