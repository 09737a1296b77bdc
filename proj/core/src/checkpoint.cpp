#include "hman/checkpoint.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

#include "hman/errors.hpp"

namespace hman {

namespace fs = std::filesystem;

namespace {

constexpr char kTrainerMarker[4] = {'T', 'R', 'N', 'R'};

class Writer {
 public:
  void bytes(const void* data, std::size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    out_.insert(out_.end(), p, p + n);
  }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out_.push_back(static_cast<unsigned char>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out_.push_back(static_cast<unsigned char>(v >> (8 * i)));
  }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    bytes(s.data(), s.size());
  }
  void tensor(const NamedTensor& t) {
    str(t.name);
    const Shape& shape = t.tensor.shape();
    u32(static_cast<std::uint32_t>(shape.size()));
    for (std::size_t e : shape) u32(static_cast<std::uint32_t>(e));
    for (double v : t.tensor.values()) f64(v);
  }
  std::vector<unsigned char> take() { return std::move(out_); }

 private:
  std::vector<unsigned char> out_;
};

class Reader {
 public:
  explicit Reader(std::span<const unsigned char> b) : b_(b) {}

  std::size_t pos() const { return pos_; }
  bool done() const { return pos_ == b_.size(); }

  void need(std::size_t n, const char* what) const {
    if (b_.size() - pos_ < n) {
      throw FormatError(std::string("truncated checkpoint reading ") + what + ": need " + std::to_string(n) +
                            " bytes, have " + std::to_string(b_.size() - pos_),
                        pos_);
    }
  }
  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
  }
  std::uint64_t u64(const char* what) {
    need(8, what);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b_[pos_ + i]) << (8 * i);
    pos_ += 8;
    return v;
  }
  double f64(const char* what) { return std::bit_cast<double>(u64(what)); }
  std::string str(const char* what) {
    const std::uint32_t n = u32(what);
    need(n, what);
    std::string s(reinterpret_cast<const char*>(b_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  bool match(const char* tag, std::size_t n) {
    if (b_.size() - pos_ < n || std::memcmp(b_.data() + pos_, tag, n) != 0) return false;
    pos_ += n;
    return true;
  }
  NamedTensor tensor() {
    NamedTensor t;
    t.name = str("tensor name");
    const std::size_t rank_at = pos_;
    const std::uint32_t rank = u32("tensor rank");
    if (rank == 0 || rank > 8) throw FormatError("tensor '" + t.name + "' has invalid rank " + std::to_string(rank), rank_at);
    Shape shape;
    std::uint64_t count = 1;
    for (std::uint32_t i = 0; i < rank; ++i) {
      const std::size_t at = pos_;
      const std::uint32_t e = u32("tensor extent");
      if (e == 0) throw FormatError("tensor '" + t.name + "' has a zero extent", at);
      shape.push_back(e);
      count *= e;
    }
    if (count > (b_.size() - pos_) / 8) {
      throw FormatError("truncated checkpoint: tensor '" + t.name + "' needs " + std::to_string(count * 8) +
                            " bytes, have " + std::to_string(b_.size() - pos_),
                        pos_);
    }
    std::vector<double> values(count);
    for (auto& v : values) {
      const std::size_t at = pos_;
      v = f64("tensor value");
      if (!std::isfinite(v)) throw FormatError("tensor '" + t.name + "' holds a non-finite value", at);
    }
    t.tensor = Tensor::from(shape, std::move(values));
    return t;
  }

 private:
  std::span<const unsigned char> b_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<unsigned char> encode_checkpoint(const Checkpoint& checkpoint) {
  Writer w;
  w.bytes(kCheckpointMagic, sizeof(kCheckpointMagic));
  w.str(checkpoint.config.to_text());
  w.u32(static_cast<std::uint32_t>(checkpoint.parameters.size()));
  for (const auto& p : checkpoint.parameters) w.tensor(p);
  if (checkpoint.trainer) {
    const TrainerState& s = *checkpoint.trainer;
    w.bytes(kTrainerMarker, sizeof(kTrainerMarker));
    w.u64(s.iteration);
    w.u64(s.epoch);
    w.f64(s.baseline);
    w.u32(static_cast<std::uint32_t>(s.moments.size()));
    for (const auto& m : s.moments) w.tensor(m);
  }
  return w.take();
}

Checkpoint decode_checkpoint(std::span<const unsigned char> bytes) {
  Reader r(bytes);
  if (!r.match(kCheckpointMagic, sizeof(kCheckpointMagic))) throw FormatError("bad magic, expected \"HMAN1\"", 0);
  Checkpoint ck;
  const std::size_t config_at = r.pos();
  const std::string text = r.str("config");
  try {
    ck.config = ModelConfig::from_text(text);
  } catch (const ConfigError& e) {
    throw FormatError(std::string("invalid config block: ") + e.what(), config_at);
  }
  const std::uint32_t count = r.u32("parameter count");
  for (std::uint32_t i = 0; i < count; ++i) ck.parameters.push_back(r.tensor());
  if (!r.done()) {
    const std::size_t marker_at = r.pos();
    if (!r.match(kTrainerMarker, sizeof(kTrainerMarker))) {
      throw FormatError("unexpected data after parameters", marker_at);
    }
    TrainerState s;
    s.iteration = r.u64("iteration");
    s.epoch = r.u64("epoch");
    s.baseline = r.f64("baseline");
    const std::uint32_t moments = r.u32("moment count");
    for (std::uint32_t i = 0; i < moments; ++i) s.moments.push_back(r.tensor());
    if (!r.done()) throw FormatError("trailing data after trainer state", r.pos());
    ck.trainer = std::move(s);
  }
  return ck;
}

void save_checkpoint(const fs::path& path, const Checkpoint& checkpoint) {
  const auto bytes = encode_checkpoint(checkpoint);
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write '" + path.string() + "'");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("write failed for '" + path.string() + "'");
}

Checkpoint load_checkpoint(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open '" + path.string() + "'");
  const std::vector<unsigned char> bytes{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  try {
    return decode_checkpoint(bytes);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.message(), e.offset());
  }
}

Checkpoint make_checkpoint(const HmanModel& model, std::optional<TrainerState> trainer) {
  Checkpoint ck;
  ck.config = model.config();
  for (const auto& p : model.parameters()) ck.parameters.push_back({p.name, p.tensor.clone_leaf()});
  ck.trainer = std::move(trainer);
  return ck;
}

HmanModel restore_model(const Checkpoint& checkpoint) {
  HmanModel model(checkpoint.config);
  model.load_parameters(checkpoint.parameters);
  return model;
}

}  // namespace hman
