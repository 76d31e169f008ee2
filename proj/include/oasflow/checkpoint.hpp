#pragma once

#include "oasflow/flo_io.hpp"

namespace oasflow {

// ---------------------------------------------------------------------------
// .oasn checkpoint: "OASN", version u32, entry count u32, then per entry
// (name length u32, name bytes, rank u32, dims u32 x rank, float payload).
// Little-endian throughout; stores parameter values only.
// ---------------------------------------------------------------------------

inline constexpr uint32_t kCheckpointVersion = 1;

inline void save_checkpoint(const std::string& path, const ParamStore& params) {
  std::string out;
  out += "OASN";
  detail::put_u32_le(out, kCheckpointVersion);
  detail::put_u32_le(out, static_cast<uint32_t>(params.size()));
  for (const auto& p : params) {
    detail::put_u32_le(out, static_cast<uint32_t>(p->name.size()));
    out += p->name;
    detail::put_u32_le(out, 4);
    const Tensor4& t = p->value;
    detail::put_u32_le(out, static_cast<uint32_t>(t.n));
    detail::put_u32_le(out, static_cast<uint32_t>(t.c));
    detail::put_u32_le(out, static_cast<uint32_t>(t.h));
    detail::put_u32_le(out, static_cast<uint32_t>(t.w));
    for (float v : t.data) detail::put_f32_le(out, v);
  }
  detail::write_file(path, out);
}

struct CheckpointEntry {
  std::string name;
  Tensor4 value;
};

inline std::vector<CheckpointEntry> read_checkpoint(const std::string& path) {
  const std::string data = detail::read_file(path);
  const auto* p = reinterpret_cast<const unsigned char*>(data.data());
  size_t pos = 0;
  auto need = [&](size_t bytes, const char* what) {
    if (pos + bytes > data.size())
      throw FormatError("read_checkpoint: '" + path + "' truncated at " + what);
  };
  need(12, "header");
  if (std::memcmp(p, "OASN", 4) != 0)
    throw FormatError("read_checkpoint: '" + path + "' bad magic (not a .oasn file)");
  pos = 4;
  const uint32_t version = detail::get_u32_le(p + pos);
  pos += 4;
  if (version != kCheckpointVersion)
    throw FormatError("read_checkpoint: '" + path + "' unsupported version " +
                      std::to_string(version));
  const uint32_t count = detail::get_u32_le(p + pos);
  pos += 4;

  std::vector<CheckpointEntry> entries;
  entries.reserve(count);
  for (uint32_t i = 0; i < count; ++i) {
    need(4, "name length");
    const uint32_t name_len = detail::get_u32_le(p + pos);
    pos += 4;
    need(name_len, "name");
    std::string name(reinterpret_cast<const char*>(p + pos), name_len);
    pos += name_len;
    need(4, "rank");
    const uint32_t rank = detail::get_u32_le(p + pos);
    pos += 4;
    if (rank != 4)
      throw FormatError("read_checkpoint: '" + path + "' entry '" + name +
                        "' has unsupported rank " + std::to_string(rank));
    need(16, "dims");
    const int n = static_cast<int>(detail::get_u32_le(p + pos));
    const int c = static_cast<int>(detail::get_u32_le(p + pos + 4));
    const int h = static_cast<int>(detail::get_u32_le(p + pos + 8));
    const int w = static_cast<int>(detail::get_u32_le(p + pos + 12));
    pos += 16;
    Tensor4 t(n, c, h, w);
    need(t.data.size() * 4, "payload");
    for (auto& v : t.data) {
      v = detail::get_f32_le(p + pos);
      pos += 4;
    }
    entries.push_back(CheckpointEntry{std::move(name), std::move(t)});
  }
  if (pos != data.size())
    throw FormatError("read_checkpoint: '" + path + "' has " +
                      std::to_string(data.size() - pos) + " trailing bytes");
  return entries;
}

/// Loads entries into an existing store by name; every stored entry must
/// match a parameter of identical shape, and every parameter must be covered.
inline void load_checkpoint(const std::string& path, ParamStore& params) {
  const auto entries = read_checkpoint(path);
  size_t matched = 0;
  for (const auto& e : entries) {
    Param* p = params.find(e.name);
    if (p == nullptr)
      throw FormatError("load_checkpoint: '" + path + "' entry '" + e.name +
                        "' does not exist in the model");
    if (!p->value.same_shape(e.value))
      throw ShapeError("load_checkpoint: '" + e.name + "' shape " + e.value.shape_str() +
                       " != model shape " + p->value.shape_str());
    p->value = e.value;
    ++matched;
  }
  if (matched != params.size())
    throw FormatError("load_checkpoint: '" + path + "' covers " + std::to_string(matched) +
                      " of " + std::to_string(params.size()) + " model parameters");
}

/// Peeks at parameter names to recover model wiring (occlusion module on/off).
inline bool checkpoint_has_param(const std::string& path, const std::string& name) {
  const auto entries = read_checkpoint(path);
  for (const auto& e : entries)
    if (e.name == name) return true;
  return false;
}

}  // namespace oasflow
