// SPDX-License-Identifier: Apache-2.0
//
// Little-endian binary container shared by feature, auxiliary-feature, score
// and waveform archives. Layout:
//
//   "VDCNNARK"  u32 version  u32 kind_len  kind bytes  u64 n_records
//   per record:
//     u32 id_len  id bytes
//     u32 n_maps  u64 frames  u32 dims  f64[n_maps * frames * dims]
//     u64 aux_len  f64[aux_len]
//     u8 has_labels  [u64 n_labels  u32[n_labels]]
//
// Auxiliary archives use n_maps = 0 and carry their values in the aux block;
// frames = 0 marks a per-utterance vector of length dims, otherwise the aux
// block is (frames x dims) row-major.
#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "vdcnn/errors.hpp"
#include "vdcnn/frontend.hpp"
#include "vdcnn/tensor.hpp"

namespace vdcnn {

inline constexpr char kArchiveMagic[8] = {'V', 'D', 'C', 'N', 'N', 'A', 'R', 'K'};
inline constexpr std::uint32_t kArchiveVersion = 1;

struct ArchiveRecord {
  std::string id;
  std::uint32_t n_maps = 0;
  std::uint64_t frames = 0;
  std::uint32_t dims = 0;
  std::vector<double> data;
  std::vector<double> aux;
  std::optional<std::vector<std::uint32_t>> labels;
};

struct Archive {
  std::string kind;
  std::vector<ArchiveRecord> records;

  const ArchiveRecord* find(const std::string& id) const {
    for (const auto& r : records)
      if (r.id == id) return &r;
    return nullptr;
  }
};

namespace detail {

class ByteWriter {
 public:
  void u8(std::uint8_t v) { buf_.push_back(static_cast<char>(v)); }
  void u32(std::uint32_t v) { uint_le(v, 4); }
  void u64(std::uint64_t v) { uint_le(v, 8); }
  void f64(double v) { uint_le(std::bit_cast<std::uint64_t>(v), 8); }
  void bytes(const std::string& s) { buf_ += s; }
  void raw(const char* p, std::size_t n) { buf_.append(p, n); }
  const std::string& str() const { return buf_; }

 private:
  void uint_le(std::uint64_t v, int n) {
    for (int i = 0; i < n; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
  std::string buf_;
};

class ByteReader {
 public:
  explicit ByteReader(const std::string& buf) : buf_(buf) {}
  std::uint8_t u8() { return static_cast<std::uint8_t>(uint_le(1)); }
  std::uint32_t u32() { return static_cast<std::uint32_t>(uint_le(4)); }
  std::uint64_t u64() { return uint_le(8); }
  double f64() { return std::bit_cast<double>(uint_le(8)); }
  std::string bytes(std::size_t n) {
    need(n);
    std::string s = buf_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == buf_.size(); }

 private:
  void need(std::size_t n) const {
    if (buf_.size() - pos_ < n) throw FormatError("unexpected end of binary data");
  }
  std::uint64_t uint_le(int n) {
    need(static_cast<std::size_t>(n));
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i)
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf_[pos_ + i])) << (8 * i);
    pos_ += static_cast<std::size_t>(n);
    return v;
  }
  const std::string& buf_;
  std::size_t pos_ = 0;
};

inline std::string slurp(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("cannot open " + path);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

inline void spit(const std::string& path, const std::string& bytes) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw FormatError("cannot open " + path + " for writing");
  os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!os) throw FormatError("write failed for " + path);
}

}  // namespace detail

inline std::string serialize_archive(const Archive& ar) {
  detail::ByteWriter w;
  w.raw(kArchiveMagic, sizeof kArchiveMagic);
  w.u32(kArchiveVersion);
  w.u32(static_cast<std::uint32_t>(ar.kind.size()));
  w.bytes(ar.kind);
  w.u64(ar.records.size());
  for (const auto& r : ar.records) {
    const std::uint64_t expect = std::uint64_t{r.n_maps} * r.frames * r.dims;
    if (r.data.size() != expect)
      throw FormatError("record " + r.id + ": data length " + std::to_string(r.data.size()) +
                        " != n_maps*frames*dims " + std::to_string(expect));
    w.u32(static_cast<std::uint32_t>(r.id.size()));
    w.bytes(r.id);
    w.u32(r.n_maps);
    w.u64(r.frames);
    w.u32(r.dims);
    for (double v : r.data) w.f64(v);
    w.u64(r.aux.size());
    for (double v : r.aux) w.f64(v);
    w.u8(r.labels ? 1 : 0);
    if (r.labels) {
      w.u64(r.labels->size());
      for (auto l : *r.labels) w.u32(l);
    }
  }
  return w.str();
}

inline Archive deserialize_archive(const std::string& bytes) {
  detail::ByteReader r(bytes);
  if (r.bytes(8) != std::string(kArchiveMagic, 8)) throw FormatError("bad archive magic");
  const auto version = r.u32();
  if (version != kArchiveVersion)
    throw FormatError("unsupported archive version " + std::to_string(version));
  Archive ar;
  ar.kind = r.bytes(r.u32());
  const auto n = r.u64();
  for (std::uint64_t i = 0; i < n; ++i) {
    ArchiveRecord rec;
    rec.id = r.bytes(r.u32());
    rec.n_maps = r.u32();
    rec.frames = r.u64();
    rec.dims = r.u32();
    const std::uint64_t count = std::uint64_t{rec.n_maps} * rec.frames * rec.dims;
    if (count > bytes.size()) throw FormatError("record " + rec.id + " claims too much data");
    rec.data.resize(count);
    for (auto& v : rec.data) v = r.f64();
    const auto aux_len = r.u64();
    if (aux_len > bytes.size()) throw FormatError("record " + rec.id + " claims too much aux");
    rec.aux.resize(aux_len);
    for (auto& v : rec.aux) v = r.f64();
    if (r.u8()) {
      const auto nl = r.u64();
      if (nl > bytes.size()) throw FormatError("record " + rec.id + " claims too many labels");
      std::vector<std::uint32_t> labels(nl);
      for (auto& l : labels) l = r.u32();
      rec.labels = std::move(labels);
    }
    ar.records.push_back(std::move(rec));
  }
  if (!r.done()) throw FormatError("trailing bytes after archive records");
  return ar;
}

inline void write_archive(const std::string& path, const Archive& ar) {
  detail::spit(path, serialize_archive(ar));
}

inline Archive read_archive(const std::string& path) {
  return deserialize_archive(detail::slurp(path));
}

// Conversions between archive records and in-memory feature values.

inline ArchiveRecord to_record(const UtteranceFeatures& u) {
  ArchiveRecord r;
  r.id = u.id;
  r.n_maps = static_cast<std::uint32_t>(u.maps.dim(0));
  r.frames = u.maps.dim(1);
  r.dims = static_cast<std::uint32_t>(u.maps.dim(2));
  r.data = u.maps.values();
  r.aux = u.aux;
  if (!u.labels.empty()) r.labels = u.labels;
  return r;
}

inline UtteranceFeatures to_features(const ArchiveRecord& r) {
  if (r.n_maps == 0) throw DataError("record " + r.id + " holds no feature maps");
  UtteranceFeatures u;
  u.id = r.id;
  u.maps = Tensor({r.n_maps, static_cast<std::size_t>(r.frames), r.dims}, r.data);
  u.aux = r.aux;
  if (r.labels) {
    if (r.labels->size() != r.frames)
      throw DataError("record " + r.id + ": label count does not match frame count");
    u.labels = *r.labels;
  }
  return u;
}

/// Per-frame (frames x dims) or per-utterance (frames = 0) auxiliary record.
inline ArchiveRecord aux_record(std::string id, std::size_t frames, std::size_t dims,
                                std::vector<double> values) {
  const std::size_t expect = frames == 0 ? dims : frames * dims;
  if (values.size() != expect) throw DimensionError("aux record " + id + " has wrong length");
  ArchiveRecord r;
  r.id = std::move(id);
  r.n_maps = 0;
  r.frames = frames;
  r.dims = static_cast<std::uint32_t>(dims);
  r.aux = std::move(values);
  return r;
}

/// (frames x n_states) score matrix as a single-map record.
inline ArchiveRecord score_record(std::string id, const Tensor& scores) {
  ArchiveRecord r;
  r.id = std::move(id);
  r.n_maps = 1;
  r.frames = scores.dim(0);
  r.dims = static_cast<std::uint32_t>(scores.dim(1));
  r.data = scores.values();
  return r;
}

}  // namespace vdcnn
