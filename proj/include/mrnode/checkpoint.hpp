// SPDX-License-Identifier: Apache-2.0
// Versioned binary checkpoint: string metadata plus named f64 arrays, sealed
// with an FNV-1a checksum. Layout is documented in docs/checkpoint-format.md.
#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "mrnode/config.hpp"
#include "mrnode/diffgraph.hpp"
#include "mrnode/model.hpp"
#include "mrnode/text.hpp"
#include "mrnode/windows.hpp"

namespace mrnode {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

inline constexpr char kCheckpointMagic[8] = {'M', 'R', 'N', 'O', 'D', 'E', 'C', 'K'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct ModelCheckpoint {
  std::uint32_t version = kCheckpointVersion;
  TrainConfig config;
  DataStats stats;
  std::uint64_t seed = 0;
  std::uint64_t epoch = 0;
  std::vector<std::string> datasets;  // tags of the training datasets
  std::vector<ad::Parameter> params;  // in model parameter order

  friend bool operator==(const ModelCheckpoint& a, const ModelCheckpoint& b) {
    if (a.version != b.version || !(a.config == b.config) || !(a.stats == b.stats) || a.seed != b.seed ||
        a.epoch != b.epoch || a.datasets != b.datasets || a.params.size() != b.params.size())
      return false;
    for (std::size_t i = 0; i < a.params.size(); ++i)
      if (a.params[i].name != b.params[i].name || a.params[i].shape != b.params[i].shape ||
          a.params[i].value != b.params[i].value)
        return false;
    return true;
  }
};

inline ModelCheckpoint make_checkpoint(AnyModel& model, const TrainConfig& cfg, const DataStats& stats,
                                       std::uint64_t epoch, std::vector<std::string> datasets) {
  ModelCheckpoint ck;
  ck.config = cfg;
  ck.stats = stats;
  ck.seed = cfg.seed;
  ck.epoch = epoch;
  ck.datasets = std::move(datasets);
  for (const auto* p : parameters(model)) ck.params.emplace_back(p->name, p->shape, p->value);
  return ck;
}

/// Rebuilds the model and copies the stored weights in by name.
inline AnyModel restore_model(const ModelCheckpoint& ck) {
  AnyModel model = make_model(ck.config.model, ck.seed);
  std::map<std::string, const ad::Parameter*> stored;
  for (const auto& p : ck.params) stored.emplace(p.name, &p);
  auto params = parameters(model);
  if (params.size() != stored.size())
    throw CheckpointError("checkpoint holds " + std::to_string(stored.size()) + " arrays, model expects " +
                          std::to_string(params.size()));
  for (auto* p : params) {
    auto it = stored.find(p->name);
    if (it == stored.end()) throw CheckpointError("checkpoint is missing parameter '" + p->name + "'");
    if (it->second->shape != p->shape)
      throw CheckpointError("parameter '" + p->name + "' has shape " + ad::shape_str(it->second->shape) +
                            ", model expects " + ad::shape_str(p->shape));
    p->value = it->second->value;
  }
  return model;
}

namespace detail {

inline std::uint64_t fnv1a(std::string_view bytes) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

class Writer {
 public:
  void u32(std::uint32_t v) { raw(&v, 4); }
  void u64(std::uint64_t v) { raw(&v, 8); }
  void f64(double v) { raw(&v, 8); }
  void str(std::string_view s) {
    u32(static_cast<std::uint32_t>(s.size()));
    out_.append(s);
  }
  void raw(const void* p, std::size_t n) { out_.append(static_cast<const char*>(p), n); }
  std::string& bytes() { return out_; }

 private:
  std::string out_;
};

class Reader {
 public:
  explicit Reader(std::string_view in) : in_(in) {}
  std::uint32_t u32() { return pod<std::uint32_t>(); }
  std::uint64_t u64() { return pod<std::uint64_t>(); }
  double f64() { return pod<double>(); }
  std::string str() {
    const auto n = u32();
    need(n);
    std::string s(in_.substr(pos_, n));
    pos_ += n;
    return s;
  }
  void expect(std::string_view magic) {
    need(magic.size());
    if (in_.substr(pos_, magic.size()) != magic) throw CheckpointError("not a checkpoint file (bad magic)");
    pos_ += magic.size();
  }
  std::size_t pos() const noexcept { return pos_; }
  std::size_t remaining() const noexcept { return in_.size() - pos_; }

 private:
  template <class T>
  T pod() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, in_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  void need(std::size_t n) const {
    if (in_.size() - pos_ < n) throw CheckpointError("corrupt checkpoint: truncated at byte " + std::to_string(pos_));
  }

  std::string_view in_;
  std::size_t pos_ = 0;
};

inline std::string join(const std::vector<std::string>& v, char sep) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) s += sep;
    s += v[i];
  }
  return s;
}

}  // namespace detail

/// Serializes to the on-disk byte layout. Deterministic: metadata is sorted by
/// key and arrays keep model order.
inline std::string checkpoint_bytes(const ModelCheckpoint& ck) {
  auto meta = to_key_values(ck.config);
  meta["checkpoint.seed"] = std::to_string(ck.seed);
  meta["checkpoint.epoch"] = std::to_string(ck.epoch);
  meta["checkpoint.datasets"] = detail::join(ck.datasets, ';');

  std::vector<ad::Parameter> arrays;
  const auto& s = ck.stats;
  arrays.emplace_back("stats.mean", ad::Shape{4}, std::vector<double>{s.y.mean, s.climate.rh.mean, s.climate.t.mean, s.climate.cm.mean});
  arrays.emplace_back("stats.std", ad::Shape{4}, std::vector<double>{s.y.std, s.climate.rh.std, s.climate.t.std, s.climate.cm.std});

  detail::Writer w;
  w.raw(kCheckpointMagic, sizeof(kCheckpointMagic));
  w.u32(ck.version);
  w.u32(static_cast<std::uint32_t>(meta.size()));
  for (const auto& [k, v] : meta) {
    w.str(k);
    w.str(v);
  }
  w.u32(static_cast<std::uint32_t>(arrays.size() + ck.params.size()));
  auto put = [&](const ad::Parameter& p) {
    w.str(p.name);
    w.u32(static_cast<std::uint32_t>(p.shape.size()));
    for (auto d : p.shape) w.u64(d);
    for (double x : p.value) w.f64(x);
  };
  for (const auto& a : arrays) put(a);
  for (const auto& p : ck.params) put(p);
  w.u64(detail::fnv1a(w.bytes()));
  return std::move(w.bytes());
}

inline ModelCheckpoint parse_checkpoint(std::string_view bytes) {
  if (bytes.size() < sizeof(kCheckpointMagic) + 4 + 8) throw CheckpointError("corrupt checkpoint: file too short");
  const std::string_view body = bytes.substr(0, bytes.size() - 8);
  std::uint64_t stored = 0;
  std::memcpy(&stored, bytes.data() + body.size(), 8);
  detail::Reader r(bytes);
  r.expect(std::string_view(kCheckpointMagic, sizeof(kCheckpointMagic)));
  const auto version = r.u32();
  if (version != kCheckpointVersion)
    throw CheckpointError("unsupported checkpoint version " + std::to_string(version) + " (expected " +
                          std::to_string(kCheckpointVersion) + ")");
  if (detail::fnv1a(body) != stored) throw CheckpointError("corrupt checkpoint: checksum mismatch");

  std::map<std::string, std::string> meta;
  const auto n_meta = r.u32();
  for (std::uint32_t i = 0; i < n_meta; ++i) {
    auto k = r.str();
    meta[k] = r.str();
  }
  std::vector<ad::Parameter> arrays;
  const auto n_arrays = r.u32();
  for (std::uint32_t i = 0; i < n_arrays; ++i) {
    auto name = r.str();
    const auto rank = r.u32();
    if (rank > 8) throw CheckpointError("corrupt checkpoint: array '" + name + "' has rank " + std::to_string(rank));
    ad::Shape shape(rank);
    for (auto& d : shape) d = r.u64();
    const auto n = ad::numel(shape);
    if (n > r.remaining() / 8) throw CheckpointError("corrupt checkpoint: array '" + name + "' overruns the file");
    std::vector<double> v(n);
    for (auto& x : v) x = r.f64();
    arrays.emplace_back(std::move(name), std::move(shape), std::move(v));
  }
  if (r.pos() != body.size()) throw CheckpointError("corrupt checkpoint: trailing bytes");

  ModelCheckpoint ck;
  ck.version = version;
  auto take = [&](const std::string& key) {
    auto it = meta.find(key);
    if (it == meta.end()) throw CheckpointError("checkpoint metadata lacks '" + key + "'");
    std::string v = it->second;
    meta.erase(it);
    return v;
  };
  auto as_u64 = [](const std::string& key, const std::string& v) {
    auto x = text::parse_int(v);
    if (!x || *x < 0) throw CheckpointError("checkpoint metadata '" + key + "' is not an integer");
    return static_cast<std::uint64_t>(*x);
  };
  ck.seed = as_u64("checkpoint.seed", take("checkpoint.seed"));
  ck.epoch = as_u64("checkpoint.epoch", take("checkpoint.epoch"));
  const auto tags = take("checkpoint.datasets");
  if (!tags.empty())
    for (auto t : text::split(tags, ';')) ck.datasets.emplace_back(t);
  try {
    ck.config = apply_key_values(TrainConfig{}, meta);
    ck.config.validate();
  } catch (const ContractError& e) {
    throw CheckpointError(std::string("checkpoint config invalid: ") + e.what());
  }
  if (arrays.size() < 2 || arrays[0].name != "stats.mean" || arrays[1].name != "stats.std" ||
      arrays[0].value.size() != 4 || arrays[1].value.size() != 4)
    throw CheckpointError("checkpoint lacks normalization statistics");
  const auto& m = arrays[0].value;
  const auto& sd = arrays[1].value;
  ck.stats = {{{m[1], sd[1]}, {m[2], sd[2]}, {m[3], sd[3]}}, {m[0], sd[0]}};
  ck.params.assign(std::make_move_iterator(arrays.begin() + 2), std::make_move_iterator(arrays.end()));
  return ck;
}

inline void save_checkpoint(const std::string& path, const ModelCheckpoint& ck) {
  text::write_file_atomic(path, checkpoint_bytes(ck));
}

inline ModelCheckpoint load_checkpoint(const std::string& path) { return parse_checkpoint(text::read_file(path)); }

}  // namespace mrnode
