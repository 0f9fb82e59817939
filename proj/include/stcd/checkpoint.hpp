#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "stcd/detector.hpp"
#include "stcd/nets.hpp"
#include "stcd/rng.hpp"

namespace stcd {

// Binary checkpoint layout (all integers little-endian):
//   magic "STCD" | u32 version=1 | u32 tensor_count
//   per tensor: u32 name_len | name bytes | u32 ndim | u32 dims[ndim]
//               | f32 data, row-major
//   trailing u64 FNV-1a checksum of all preceding bytes
// Run metadata (epoch, seed, config hash) rides along as reserved meta.*
// tensors, each u64 split into four 16-bit limbs stored as exact floats.

constexpr std::uint32_t kCheckpointVersion = 1;

struct NamedTensor {
  std::string name;
  std::vector<int> shape;
  std::vector<float> data;
};

struct CheckpointMeta {
  std::uint64_t epoch = 0;
  std::uint64_t seed = 0;
  std::uint64_t config_hash = 0;
};

struct Checkpoint {
  std::uint32_t version = kCheckpointVersion;
  std::vector<NamedTensor> tensors;
  CheckpointMeta meta;
};

namespace detail {

inline void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline void put_f32(std::string& out, float v) {
  std::uint32_t bits;
  std::memcpy(&bits, &v, 4);
  put_u32(out, bits);
}

struct ByteReader {
  const std::string& buf;
  std::size_t pos = 0;
  std::string where;

  void need(std::size_t n) {
    require(pos + n <= buf.size(), errc::io_truncated, "truncated checkpoint: " + where);
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(buf[pos + static_cast<std::size_t>(i)])) << (8 * i);
    pos += 4;
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf[pos + static_cast<std::size_t>(i)])) << (8 * i);
    pos += 8;
    return v;
  }
  float f32() {
    std::uint32_t bits = u32();
    float v;
    std::memcpy(&v, &bits, 4);
    return v;
  }
  std::string bytes(std::size_t n) {
    need(n);
    std::string s = buf.substr(pos, n);
    pos += n;
    return s;
  }
};

inline NamedTensor encode_meta_u64(const std::string& name, std::uint64_t v) {
  NamedTensor t{name, {4}, {}};
  for (int i = 0; i < 4; ++i)
    t.data.push_back(static_cast<float>((v >> (16 * i)) & 0xffff));
  return t;
}

inline std::uint64_t decode_meta_u64(const NamedTensor& t) {
  require(t.data.size() == 4, errc::io_bad_manifest, "meta tensor must have 4 limbs: " + t.name);
  std::uint64_t v = 0;
  for (int i = 0; i < 4; ++i)
    v |= static_cast<std::uint64_t>(static_cast<std::uint16_t>(t.data[static_cast<std::size_t>(i)])) << (16 * i);
  return v;
}

}  // namespace detail

inline std::string serialize_checkpoint(const Checkpoint& ckpt) {
  std::vector<NamedTensor> all = ckpt.tensors;
  all.push_back(detail::encode_meta_u64("meta.epoch", ckpt.meta.epoch));
  all.push_back(detail::encode_meta_u64("meta.seed", ckpt.meta.seed));
  all.push_back(detail::encode_meta_u64("meta.config_hash", ckpt.meta.config_hash));

  std::string out = "STCD";
  detail::put_u32(out, ckpt.version);
  detail::put_u32(out, static_cast<std::uint32_t>(all.size()));
  for (const auto& t : all) {
    detail::put_u32(out, static_cast<std::uint32_t>(t.name.size()));
    out += t.name;
    detail::put_u32(out, static_cast<std::uint32_t>(t.shape.size()));
    std::size_t numel = 1;
    for (int d : t.shape) {
      detail::put_u32(out, static_cast<std::uint32_t>(d));
      numel *= static_cast<std::size_t>(d);
    }
    require(t.data.size() == numel, errc::shape_mismatch,
            "checkpoint tensor " + t.name + " data does not match its shape");
    for (float v : t.data) detail::put_f32(out, v);
  }
  detail::put_u64(out, fnv1a64(out.data(), out.size()));
  return out;
}

inline Checkpoint deserialize_checkpoint(const std::string& buf) {
  require(buf.size() >= 4 && buf.compare(0, 4, "STCD") == 0, errc::io_bad_magic,
          "bad magic: not a checkpoint");
  detail::ByteReader r{buf, 4, "header"};
  const std::uint32_t version = r.u32();
  require(version == kCheckpointVersion, errc::io_bad_version,
          "unsupported checkpoint version " + std::to_string(version));
  const std::uint32_t count = r.u32();
  Checkpoint ckpt;
  ckpt.version = version;
  std::vector<NamedTensor> all;
  for (std::uint32_t i = 0; i < count; ++i) {
    NamedTensor t;
    r.where = "tensor " + std::to_string(i) + " header";
    const std::uint32_t name_len = r.u32();
    require(name_len > 0 && name_len < 4096, errc::io_bad_manifest, "implausible tensor name length");
    t.name = r.bytes(name_len);
    r.where = t.name;
    const std::uint32_t ndim = r.u32();
    require(ndim >= 1 && ndim <= 8, errc::io_bad_manifest, "implausible rank for " + t.name);
    std::size_t numel = 1;
    for (std::uint32_t d = 0; d < ndim; ++d) {
      const std::uint32_t dim = r.u32();
      require(dim >= 1 && dim <= (1u << 24), errc::io_bad_manifest, "implausible dim for " + t.name);
      t.shape.push_back(static_cast<int>(dim));
      numel *= dim;
    }
    require(numel <= (1u << 28), errc::io_bad_manifest, "implausible size for " + t.name);
    t.data.reserve(numel);
    for (std::size_t k = 0; k < numel; ++k) t.data.push_back(r.f32());
    all.push_back(std::move(t));
  }
  r.where = "checksum";
  const std::uint64_t stored = r.u64();
  require(r.pos == buf.size(), errc::io_bad_manifest, "trailing bytes after checksum");
  const std::uint64_t actual = fnv1a64(buf.data(), buf.size() - 8);
  require(stored == actual, errc::io_checksum_mismatch, "checkpoint checksum mismatch");

  for (auto& t : all) {
    if (t.name == "meta.epoch") ckpt.meta.epoch = detail::decode_meta_u64(t);
    else if (t.name == "meta.seed") ckpt.meta.seed = detail::decode_meta_u64(t);
    else if (t.name == "meta.config_hash") ckpt.meta.config_hash = detail::decode_meta_u64(t);
    else ckpt.tensors.push_back(std::move(t));
  }
  return ckpt;
}

inline void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  const std::string bytes = serialize_checkpoint(ckpt);
  std::ofstream os(path, std::ios::binary);
  require(os.good(), errc::io_missing_file, "cannot open for write: " + path.string());
  os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  require(os.good(), errc::io_truncated, "short write: " + path.string());
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  require(is.good(), errc::io_missing_file, "missing checkpoint: " + path.string());
  std::string buf((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  return deserialize_checkpoint(buf);
}

// --------------------------------------------------------------------------
// Packing the model into / out of checkpoints.
// --------------------------------------------------------------------------

inline NamedTensor to_named(const ParamGroup<float>& g) {
  return NamedTensor{g.name, g.value.shape(), g.value.vec()};
}

inline Checkpoint pack_checkpoint(const DetectorNet<float>& det, const TemporalNets<float>& temporal,
                                  CheckpointMeta meta) {
  Checkpoint c;
  c.meta = meta;
  for (const auto* p : det.params()) c.tensors.push_back(to_named(*p));
  for (const auto* p : temporal.params()) c.tensors.push_back(to_named(*p));
  return c;
}

inline Checkpoint pack_checkpoint(const DetectorNet<float>& det, CheckpointMeta meta) {
  Checkpoint c;
  c.meta = meta;
  for (const auto* p : det.params()) c.tensors.push_back(to_named(*p));
  return c;
}

// Loads every expected tensor by name, validating shape. Unknown tensor names
// are rejected so a stale or mismatched file cannot half-load.
template <typename Net>
void restore_params(Net& net, const std::map<std::string, const NamedTensor*>& index,
                    std::vector<std::string>& consumed) {
  for (auto* p : net.params()) {
    auto it = index.find(p->name);
    require(it != index.end(), errc::io_bad_manifest, "checkpoint is missing tensor " + p->name);
    const NamedTensor& t = *it->second;
    require(t.shape == p->value.shape(), errc::shape_mismatch,
            "checkpoint tensor " + p->name + " has wrong shape");
    p->value = Tensor::from(t.shape, t.data);
    consumed.push_back(p->name);
  }
}

struct ModelBundle {
  ArchConfig arch;
  DetectorNet<float> detector;
  TemporalNets<float> temporal;
  CheckpointMeta meta;
};

inline std::map<std::string, const NamedTensor*> tensor_index(const Checkpoint& c) {
  std::map<std::string, const NamedTensor*> index;
  for (const auto& t : c.tensors) {
    require(!index.count(t.name), errc::io_bad_manifest, "duplicate tensor " + t.name);
    index[t.name] = &t;
  }
  return index;
}

// Detector-only checkpoints restore just the detector; full checkpoints must
// contain the temporal networks as well.
inline ModelBundle unpack_checkpoint(const Checkpoint& c, const ArchConfig& arch,
                                     bool require_temporal) {
  ModelBundle b{arch, DetectorNet<float>::init(arch, RngStream(0)),
                TemporalNets<float>::init(arch, RngStream(0)), c.meta};
  auto index = tensor_index(c);
  std::vector<std::string> consumed;
  restore_params(b.detector, index, consumed);
  const bool has_temporal = index.count("motion.conv1.w") > 0;
  require(!require_temporal || has_temporal, errc::io_bad_manifest,
          "checkpoint does not contain the temporal networks");
  if (has_temporal) restore_params(b.temporal, index, consumed);
  require(consumed.size() == index.size(), errc::io_bad_manifest,
          "checkpoint contains unexpected tensors");
  return b;
}

}  // namespace stcd
