#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include <fmt/format.h>
#include <openssl/evp.h>

#include "eldm/autoencoder.hpp"
#include "eldm/data_model.hpp"
#include "eldm/error.hpp"
#include "eldm/local_pca.hpp"
#include "eldm/nmf.hpp"
#include "eldm/pca.hpp"
#include "eldm/regression.hpp"

#ifndef ELDM_VERSION
#define ELDM_VERSION "0.0.0"
#endif

namespace eldm {

using Digest = std::array<unsigned char, 32>;

inline Digest sha256(const void* data, std::size_t size) {
  Digest d{};
  unsigned int len = 0;
  if (EVP_Digest(data, size, d.data(), &len, EVP_sha256(), nullptr) != 1 || len != d.size()) {
    throw NumericError("sha256 computation failed");
  }
  return d;
}

inline std::string hex(const Digest& d) {
  std::string out;
  out.reserve(64);
  for (unsigned char c : d) out += fmt::format("{:02x}", c);
  return out;
}

inline std::string file_sha256(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + path.string() + "'");
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return hex(sha256(bytes.data(), bytes.size()));
}

// ---------------------------------------------------------------------------
// Archive layout
//
//   "ELDM" | u16 major | u16 minor | header | u32 count | records... | sha256
//
// All integers and doubles are little-endian; doubles are stored as their
// IEEE-754 bit patterns. Each record is u16 type, name, u64 payload size, payload.
// The trailing digest covers every preceding byte.

inline constexpr std::uint16_t archive_major = 1;
inline constexpr std::uint16_t archive_minor = 0;

enum class RecordType : std::uint16_t {
  preprocessor = 1,
  pca_basis = 2,
  local_partition = 3,
  nmf_factors = 4,
  autoencoder = 5,
  gpr = 6,
};

using ArchivedModel = std::variant<Preprocessor, PcaBasis, LocalPartition, NmfFactors, AutoencoderModel, GprModel>;

struct ArchiveRecord {
  std::string name;
  ArchivedModel model;
};

struct ModelArchive {
  std::uint16_t major = archive_major;
  std::uint16_t minor = archive_minor;
  std::string toolkit_version = ELDM_VERSION;
  std::uint64_t seed = 0;
  std::string input_fingerprint;
  std::vector<ArchiveRecord> records;

  template <class T>
  void add(std::string name, T model) {
    records.push_back({std::move(name), ArchivedModel(std::move(model))});
  }

  /// First record of type T, or the one named `name` when given.
  template <class T>
  const T& get(std::string_view name = {}) const {
    for (const auto& r : records) {
      if (!name.empty() && r.name != name) continue;
      if (const T* p = std::get_if<T>(&r.model)) return *p;
    }
    throw DataError(name.empty() ? "archive has no record of the requested type"
                                 : "archive has no record named '" + std::string(name) + "' of the requested type");
  }

  template <class T>
  bool has() const {
    for (const auto& r : records) {
      if (std::holds_alternative<T>(r.model)) return true;
    }
    return false;
  }
};

namespace detail {

class ByteWriter {
 public:
  template <class T>
  void integer(T v) {
    using U = std::make_unsigned_t<T>;
    auto u = static_cast<U>(v);
    for (std::size_t i = 0; i < sizeof(T); ++i) {
      bytes_.push_back(static_cast<char>(u & 0xff));
      u = static_cast<U>(u >> 8);
    }
  }
  void u8(std::uint8_t v) { integer(v); }
  void u16(std::uint16_t v) { integer(v); }
  void u32(std::uint32_t v) { integer(v); }
  void u64(std::uint64_t v) { integer(v); }
  void i64(std::int64_t v) { integer(v); }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void raw(std::string_view s) { bytes_.append(s); }
  void string(std::string_view s) {
    u32(static_cast<std::uint32_t>(s.size()));
    raw(s);
  }
  void matrix(const Matrix& m) {
    u64(static_cast<std::uint64_t>(m.rows()));
    u64(static_cast<std::uint64_t>(m.cols()));
    for (Index i = 0; i < m.size(); ++i) f64(m.data()[i]);
  }
  void vector(const Vector& v) { matrix(v); }
  void row_vector(const RowVector& v) { matrix(Matrix(v)); }

  std::string& bytes() { return bytes_; }

 private:
  std::string bytes_;
};

class ByteReader {
 public:
  ByteReader(std::string_view bytes) : bytes_(bytes) {}

  template <class T>
  T integer() {
    need(sizeof(T));
    using U = std::make_unsigned_t<T>;
    U u = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) {
      u = static_cast<U>(u | (static_cast<U>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i)));
    }
    pos_ += sizeof(T);
    return static_cast<T>(u);
  }
  std::uint8_t u8() { return integer<std::uint8_t>(); }
  std::uint16_t u16() { return integer<std::uint16_t>(); }
  std::uint32_t u32() { return integer<std::uint32_t>(); }
  std::uint64_t u64() { return integer<std::uint64_t>(); }
  std::int64_t i64() { return integer<std::int64_t>(); }
  double f64() { return std::bit_cast<double>(u64()); }
  std::string_view raw(std::size_t n) {
    need(n);
    const auto s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  std::string string() { return std::string(raw(u32())); }
  Matrix matrix() {
    const auto rows = u64();
    const auto cols = u64();
    if (rows != 0 && cols > (bytes_.size() - pos_) / 8 / rows) throw DataError("archive: matrix extends past the end of its record");
    Matrix m(static_cast<Index>(rows), static_cast<Index>(cols));
    for (Index i = 0; i < m.size(); ++i) m.data()[i] = f64();
    return m;
  }
  Vector vector() {
    Matrix m = matrix();
    if (m.cols() != 1 && m.size() != 0) throw DataError("archive: expected a column vector");
    return Vector(Eigen::Map<const Vector>(m.data(), m.size()));
  }
  RowVector row_vector() {
    Matrix m = matrix();
    if (m.rows() != 1 && m.size() != 0) throw DataError("archive: expected a row vector");
    return RowVector(Eigen::Map<const RowVector>(m.data(), m.size()));
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) throw DataError("archive: unexpected end of record");
  }
  std::string_view bytes_;
  std::size_t pos_ = 0;
};

inline void put(ByteWriter& w, const Preprocessor& p) {
  w.row_vector(p.centers);
  w.row_vector(p.scales);
  w.u8(static_cast<std::uint8_t>(p.method));
  w.u8(static_cast<std::uint8_t>(p.centering));
}

inline Preprocessor get_preprocessor(ByteReader& r) {
  Preprocessor p;
  p.centers = r.row_vector();
  p.scales = r.row_vector();
  const auto method = r.u8();
  const auto centering = r.u8();
  if (method > static_cast<std::uint8_t>(Scaling::vast) || centering > static_cast<std::uint8_t>(Centering::minimum)) {
    throw DataError("archive: unknown preprocessing code");
  }
  p.method = static_cast<Scaling>(method);
  p.centering = static_cast<Centering>(centering);
  if (p.centers.size() != p.scales.size()) throw DataError("archive: preprocessor size mismatch");
  return p;
}

inline void put(ByteWriter& w, const PcaBasis& b) {
  w.matrix(b.modes);
  w.vector(b.eigenvalues);
  put(w, b.preprocessor);
}

inline PcaBasis get_pca(ByteReader& r) {
  PcaBasis b;
  b.modes = r.matrix();
  b.eigenvalues = r.vector();
  b.preprocessor = get_preprocessor(r);
  return b;
}

inline void put(ByteWriter& w, const LocalPartition& p) {
  w.i64(p.q);
  w.u64(p.labels.size());
  for (Index l : p.labels) w.i64(l);
  w.matrix(p.centroids);
  w.u64(p.bases.size());
  for (const auto& b : p.bases) w.matrix(b);
}

inline LocalPartition get_partition(ByteReader& r) {
  LocalPartition p;
  p.q = r.i64();
  const auto n = r.u64();
  for (std::uint64_t i = 0; i < n; ++i) p.labels.push_back(r.i64());
  p.centroids = r.matrix();
  const auto k = r.u64();
  for (std::uint64_t i = 0; i < k; ++i) p.bases.push_back(r.matrix());
  if (static_cast<Index>(k) != p.k()) throw DataError("archive: partition basis count does not match centroids");
  return p;
}

inline void put(ByteWriter& w, const NmfFactors& f) {
  w.matrix(f.w);
  w.matrix(f.f);
  w.u64(f.residual_history.size());
  for (double d : f.residual_history) w.f64(d);
  w.u64(f.seed);
}

inline NmfFactors get_nmf(ByteReader& r) {
  NmfFactors f;
  f.w = r.matrix();
  f.f = r.matrix();
  const auto n = r.u64();
  for (std::uint64_t i = 0; i < n; ++i) f.residual_history.push_back(r.f64());
  f.seed = r.u64();
  return f;
}

inline void put(ByteWriter& w, const AutoencoderModel& m) {
  w.u64(m.layer_sizes.size());
  for (Index s : m.layer_sizes) w.i64(s);
  w.u64(m.bottleneck);
  w.u64(m.seed);
  for (const auto& l : m.layers) {
    w.matrix(l.weights);
    w.row_vector(l.bias);
    w.u8(static_cast<std::uint8_t>(l.activation));
  }
}

inline AutoencoderModel get_autoencoder(ByteReader& r) {
  AutoencoderModel m;
  const auto n = r.u64();
  if (n < 3 || n > 1024) throw DataError("archive: implausible autoencoder depth");
  for (std::uint64_t i = 0; i < n; ++i) m.layer_sizes.push_back(r.i64());
  m.bottleneck = static_cast<std::size_t>(r.u64());
  m.seed = r.u64();
  for (std::uint64_t i = 0; i + 1 < n; ++i) {
    DenseLayer l;
    l.weights = r.matrix();
    l.bias = r.row_vector();
    const auto a = r.u8();
    if (a > static_cast<std::uint8_t>(Activation::linear)) throw DataError("archive: unknown activation code");
    l.activation = static_cast<Activation>(a);
    m.layers.push_back(std::move(l));
  }
  if (m.bottleneck == 0 || m.bottleneck >= m.layers.size()) throw DataError("archive: invalid autoencoder bottleneck");
  return m;
}

inline void put(ByteWriter& w, const GprModel& m) {
  w.matrix(m.inputs);
  w.vector(m.targets);
  w.f64(m.kernel.signal_variance);
  w.vector(m.kernel.length_scales);
  w.f64(m.jitter);
  w.matrix(m.chol_lower);
  w.vector(m.alpha);
}

inline GprModel get_gpr(ByteReader& r) {
  GprModel m;
  m.inputs = r.matrix();
  m.targets = r.vector();
  m.kernel.signal_variance = r.f64();
  m.kernel.length_scales = r.vector();
  m.jitter = r.f64();
  m.chol_lower = r.matrix();
  m.alpha = r.vector();
  return m;
}

inline RecordType record_type(const ArchivedModel& m) {
  return static_cast<RecordType>(m.index() + 1);
}

}  // namespace detail

inline std::string serialize(const ModelArchive& a) {
  detail::ByteWriter w;
  w.raw("ELDM");
  w.u16(a.major);
  w.u16(a.minor);
  w.string(a.toolkit_version);
  w.u64(a.seed);
  w.string(a.input_fingerprint);
  w.u32(static_cast<std::uint32_t>(a.records.size()));
  for (const auto& rec : a.records) {
    detail::ByteWriter payload;
    std::visit([&](const auto& m) { detail::put(payload, m); }, rec.model);
    w.u16(static_cast<std::uint16_t>(detail::record_type(rec.model)));
    w.string(rec.name);
    w.u64(payload.bytes().size());
    w.raw(payload.bytes());
  }
  const Digest d = sha256(w.bytes().data(), w.bytes().size());
  w.raw(std::string_view(reinterpret_cast<const char*>(d.data()), d.size()));
  return std::move(w.bytes());
}

inline ModelArchive deserialize(std::string_view bytes) {
  constexpr std::size_t prefix = 8;
  if (bytes.size() < prefix || bytes.substr(0, 4) != "ELDM") throw DataError("not a model archive (bad magic)");
  detail::ByteReader head(bytes.substr(4, 4));
  ModelArchive a;
  a.major = head.u16();
  a.minor = head.u16();
  if (a.major > archive_major) {
    throw DataError(fmt::format("archive format version {}.{} is newer than the supported version {}.{}; upgrade eldm",
                                a.major, a.minor, archive_major, archive_minor));
  }
  if (a.major < archive_major) {
    throw DataError(fmt::format("archive format version {}.{} is no longer supported", a.major, a.minor));
  }
  if (bytes.size() < prefix + 32) throw DataError("model archive is corrupted (checksum mismatch: file too short)");
  const auto body = bytes.substr(0, bytes.size() - 32);
  const Digest d = sha256(body.data(), body.size());
  if (std::memcmp(d.data(), bytes.data() + body.size(), 32) != 0) {
    throw DataError("model archive is corrupted (checksum mismatch)");
  }

  detail::ByteReader r(body.substr(prefix));
  a.toolkit_version = r.string();
  a.seed = r.u64();
  a.input_fingerprint = r.string();
  const auto count = r.u32();
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto type = r.u16();
    std::string name = r.string();
    const auto size = r.u64();
    detail::ByteReader p(r.raw(static_cast<std::size_t>(size)));
    switch (static_cast<RecordType>(type)) {
      case RecordType::preprocessor: a.add(std::move(name), detail::get_preprocessor(p)); break;
      case RecordType::pca_basis: a.add(std::move(name), detail::get_pca(p)); break;
      case RecordType::local_partition: a.add(std::move(name), detail::get_partition(p)); break;
      case RecordType::nmf_factors: a.add(std::move(name), detail::get_nmf(p)); break;
      case RecordType::autoencoder: a.add(std::move(name), detail::get_autoencoder(p)); break;
      case RecordType::gpr: a.add(std::move(name), detail::get_gpr(p)); break;
      default:
        // newer minor versions may add record types
        logger()->warn("archive: skipping record '{}' of unknown type {}", name, type);
        continue;
    }
    if (!p.done()) throw DataError("archive: record '" + a.records.back().name + "' has trailing bytes");
  }
  if (!r.done()) throw DataError("archive: trailing bytes after the last record");
  return a;
}

inline void save_model(const ModelArchive& a, const std::filesystem::path& path) {
  const std::string bytes = serialize(a);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write '" + path.string() + "'");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("failed writing '" + path.string() + "'");
}

inline ModelArchive load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open model archive '" + path.string() + "'");
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize(bytes);
}

}  // namespace eldm
