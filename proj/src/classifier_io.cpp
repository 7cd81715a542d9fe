#include <bit>
#include <cstring>
#include <fstream>

#include "text_util.hpp"
#include "wifiloc/classifier.hpp"

namespace wifiloc {

namespace {

constexpr char kMagic[8] = {'W', 'L', 'M', 'L', 'P', 'W', 'T', 'S'};
constexpr std::uint32_t kVersion = 1;
constexpr std::uint32_t kMaxDim = 1u << 20;

class Writer {
 public:
  void bytes(const void* p, std::size_t n) { buf_.append(static_cast<const char*>(p), n); }
  void u8(std::uint8_t v) { buf_.push_back(static_cast<char>(v)); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  std::string& str() { return buf_; }

 private:
  std::string buf_;
};

class Reader {
 public:
  explicit Reader(const std::string& b) : buf_(b) {}
  void need(std::size_t n) const {
    if (pos_ + n > buf_.size()) throw FormatError("weights file truncated");
  }
  std::uint8_t u8() {
    need(1);
    return static_cast<std::uint8_t>(buf_[pos_++]);
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(u8()) << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(u8()) << (8 * i);
    return v;
  }
  double f64() { return std::bit_cast<double>(u64()); }
  std::size_t pos() const { return pos_; }

 private:
  const std::string& buf_;
  std::size_t pos_ = 0;
};

Architecture arch_from_tag(std::uint8_t tag) {
  switch (tag) {
    case 'A': return Architecture::A;
    case 'B': return Architecture::B;
    case 'C': return Architecture::C;
    case 'D': return Architecture::D;
    case 'X': return Architecture::Custom;
    default: throw FormatError("weights file: unknown architecture tag");
  }
}

}  // namespace

std::string serialize_weights(const Mlp& mlp) {
  Writer w;
  w.bytes(kMagic, sizeof kMagic);
  w.u32(kVersion);
  w.u8(static_cast<std::uint8_t>(architecture_tag(mlp.architecture())));
  const auto dims = mlp.dims();
  w.u32(static_cast<std::uint32_t>(dims.size()));
  for (int d : dims) w.u32(static_cast<std::uint32_t>(d));
  w.f64(mlp.normalization().euc_scale_m);
  w.f64(mlp.normalization().fspl_scale_m);
  for (const auto& l : mlp.layers()) {
    for (Eigen::Index r = 0; r < l.weights.rows(); ++r)
      for (Eigen::Index c = 0; c < l.weights.cols(); ++c) w.f64(l.weights(r, c));
    for (Eigen::Index r = 0; r < l.bias.size(); ++r) w.f64(l.bias(r));
  }
  const std::uint64_t sum = fnv1a64(w.str().data(), w.str().size());
  w.u64(sum);
  return std::move(w.str());
}

void save_weights(const Mlp& mlp, const std::string& path) {
  const std::string bytes = serialize_weights(mlp);
  auto out = detail::open_out(path);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed: " + path);
}

Mlp deserialize_weights(const std::string& bytes, std::optional<Architecture> expected) {
  Reader r(bytes);
  r.need(sizeof kMagic);
  if (std::memcmp(bytes.data(), kMagic, sizeof kMagic) != 0)
    throw FormatError("not a weights file (bad magic)");
  for (std::size_t i = 0; i < sizeof kMagic; ++i) r.u8();
  const std::uint32_t version = r.u32();
  if (version != kVersion) throw FormatError("unsupported weights file version " + std::to_string(version));
  const Architecture arch = arch_from_tag(r.u8());
  if (expected && *expected != arch) {
    throw FormatError(std::string("architecture mismatch: file holds ") + architecture_tag(arch) +
                      ", expected " + architecture_tag(*expected));
  }
  const std::uint32_t n_dims = r.u32();
  if (n_dims < 2 || n_dims > 64) throw FormatError("weights file: bad layer count");
  std::vector<int> dims;
  for (std::uint32_t i = 0; i < n_dims; ++i) {
    const std::uint32_t d = r.u32();
    if (d == 0 || d > kMaxDim) throw FormatError("weights file: bad layer dimension");
    dims.push_back(static_cast<int>(d));
  }
  if (dims.front() != 2 || dims.back() != 2) throw FormatError("weights file: network must be 2 -> 2");
  if (arch != Architecture::Custom && dims != architecture_dims(arch))
    throw FormatError("weights file: dims do not match the architecture tag");

  InputNormalization norm;
  norm.euc_scale_m = r.f64();
  norm.fspl_scale_m = r.f64();
  if (!(norm.euc_scale_m > 0.0) || !(norm.fspl_scale_m > 0.0))
    throw FormatError("weights file: bad normalization constants");

  std::size_t payload = 0;
  for (std::size_t i = 0; i + 1 < dims.size(); ++i)
    payload += static_cast<std::size_t>(dims[i] + 1) * dims[i + 1];
  r.need(payload * 8 + 8);

  std::vector<DenseLayer> layers;
  for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
    DenseLayer l{Eigen::MatrixXd(dims[i + 1], dims[i]), Eigen::VectorXd(dims[i + 1])};
    for (Eigen::Index row = 0; row < l.weights.rows(); ++row)
      for (Eigen::Index c = 0; c < l.weights.cols(); ++c) l.weights(row, c) = r.f64();
    for (Eigen::Index row = 0; row < l.bias.size(); ++row) l.bias(row) = r.f64();
    layers.push_back(std::move(l));
  }
  const std::size_t body = r.pos();
  const std::uint64_t stored = r.u64();
  if (r.pos() != bytes.size()) throw FormatError("weights file: trailing bytes");
  if (stored != fnv1a64(bytes.data(), body)) throw FormatError("weights file: checksum mismatch");

  Mlp mlp(arch, std::move(layers), norm);
  if (!mlp.all_finite()) throw FormatError("weights file: non-finite parameters");
  return mlp;
}

Mlp load_weights(const std::string& path, std::optional<Architecture> expected) {
  return deserialize_weights(detail::read_file(path), expected);
}

}  // namespace wifiloc
