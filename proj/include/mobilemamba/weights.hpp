#pragma once

#include <cstdio>
#include <map>

#include "mobilemamba/model.hpp"

namespace mm {

// ---------------------------------------------------------------------------
// Binary weight container. Layout (all little-endian):
//   magic "MMWS" | version u32 = 1 | entry count u32
//   per entry: name len u16, name bytes, dim count u8, dims u64..., byte
//   offset u64 (relative to payload start)
//   zero padding to the next 64-byte boundary, then the contiguous f32
//   payload exactly covered by the entries in manifest order.
// ---------------------------------------------------------------------------

struct WeightEntry {
  std::string name;
  std::vector<uint64_t> dims;
  uint64_t byte_offset = 0;

  uint64_t elem_count() const {
    uint64_t n = 1;
    for (uint64_t d : dims) n *= d;
    return n;
  }
};

namespace detail {

inline void put_bytes(std::vector<uint8_t>& out, const void* p, size_t n) {
  const uint8_t* b = static_cast<const uint8_t*>(p);
  out.insert(out.end(), b, b + n);
}

template <typename T>
void put_le(std::vector<uint8_t>& out, T v) {
  for (size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<uint8_t>(v >> (8 * i)));
}

struct ByteReader {
  const uint8_t* p;
  size_t remaining;

  void need(size_t n) const {
    if (n > remaining) throw DataError("weight file truncated");
  }
  void skip(size_t n) {
    need(n);
    p += n;
    remaining -= n;
  }
  template <typename T>
  T get_le() {
    need(sizeof(T));
    T v = 0;
    for (size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(p[i]) << (8 * i);
    p += sizeof(T);
    remaining -= sizeof(T);
    return v;
  }
  std::string get_str(size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(p), n);
    p += n;
    remaining -= n;
    return s;
  }
};

}  // namespace detail

struct WeightStore {
  std::vector<WeightEntry> manifest;
  std::vector<float> payload;

  static WeightStore from_model(const Model& m) {
    WeightStore ws;
    for_each_param(m, [&](const ParamRef& p) {
      WeightEntry e;
      e.name = p.name;
      for (int d : p.dims) e.dims.push_back(static_cast<uint64_t>(d));
      e.byte_offset = ws.payload.size() * sizeof(float);
      ws.manifest.push_back(std::move(e));
      ws.payload.insert(ws.payload.end(), p.data, p.data + p.count);
    });
    return ws;
  }

  std::vector<uint8_t> to_bytes() const {
    std::vector<uint8_t> out;
    detail::put_bytes(out, "MMWS", 4);
    detail::put_le<uint32_t>(out, 1);
    detail::put_le<uint32_t>(out, static_cast<uint32_t>(manifest.size()));
    for (const WeightEntry& e : manifest) {
      if (e.name.size() > 0xffff) throw DataError("parameter name too long for manifest");
      detail::put_le<uint16_t>(out, static_cast<uint16_t>(e.name.size()));
      detail::put_bytes(out, e.name.data(), e.name.size());
      out.push_back(static_cast<uint8_t>(e.dims.size()));
      for (uint64_t d : e.dims) detail::put_le<uint64_t>(out, d);
      detail::put_le<uint64_t>(out, e.byte_offset);
    }
    while (out.size() % 64 != 0) out.push_back(0);
    for (float v : payload) {
      uint32_t bits;
      std::memcpy(&bits, &v, 4);
      detail::put_le<uint32_t>(out, bits);
    }
    return out;
  }

  static WeightStore from_bytes(const std::vector<uint8_t>& bytes) {
    detail::ByteReader r{bytes.data(), bytes.size()};
    if (r.get_str(4) != "MMWS") throw DataError("not a weight file (bad magic)");
    const uint32_t version = r.get_le<uint32_t>();
    if (version != 1) throw DataError(strfmt("unsupported weight file version %u", version));
    const uint32_t count = r.get_le<uint32_t>();
    WeightStore ws;
    uint64_t expected_offset = 0;
    for (uint32_t i = 0; i < count; ++i) {
      WeightEntry e;
      e.name = r.get_str(r.get_le<uint16_t>());
      const uint8_t nd = r.get_le<uint8_t>();
      for (uint8_t d = 0; d < nd; ++d) e.dims.push_back(r.get_le<uint64_t>());
      e.byte_offset = r.get_le<uint64_t>();
      if (e.byte_offset != expected_offset)
        throw DataError(strfmt("entry '%s' offset %llu leaves a gap (expected %llu)",
                               e.name.c_str(), (unsigned long long)e.byte_offset,
                               (unsigned long long)expected_offset));
      expected_offset += e.elem_count() * sizeof(float);
      ws.manifest.push_back(std::move(e));
    }
    const size_t header = bytes.size() - r.remaining;
    const size_t pad = (64 - header % 64) % 64;
    r.skip(pad);
    if (r.remaining != expected_offset)
      throw DataError(strfmt("payload holds %zu bytes, manifest expects %llu", r.remaining,
                             (unsigned long long)expected_offset));
    ws.payload.resize(expected_offset / sizeof(float));
    for (size_t i = 0; i < ws.payload.size(); ++i) {
      const uint32_t bits = r.get_le<uint32_t>();
      std::memcpy(&ws.payload[i], &bits, 4);
    }
    std::map<std::string, int> seen;
    for (const WeightEntry& e : ws.manifest)
      if (++seen[e.name] > 1) throw DataError(strfmt("duplicate entry '%s'", e.name.c_str()));
    return ws;
  }

  /// All-or-nothing: the model is written only after every parameter has
  /// been matched by name and shape, and no file entry is left over.
  void apply_to(Model& m) const {
    std::map<std::string, const WeightEntry*> by_name;
    for (const WeightEntry& e : manifest) by_name[e.name] = &e;
    struct Pending {
      float* dst;
      const float* src;
      size_t count;
    };
    std::vector<Pending> plan;
    std::vector<std::string> missing;
    std::map<std::string, bool> used;
    for_each_param(m, [&](const ParamRef& p) {
      auto it = by_name.find(p.name);
      if (it == by_name.end()) {
        missing.push_back(p.name);
        return;
      }
      const WeightEntry& e = *it->second;
      used[p.name] = true;
      std::vector<uint64_t> want(p.dims.begin(), p.dims.end());
      if (e.dims != want)
        throw DataError(strfmt("shape mismatch for '%s': file has %zu dims / %llu values, model "
                               "expects %zu values",
                               p.name.c_str(), e.dims.size(),
                               (unsigned long long)e.elem_count(), p.count));
      plan.push_back({const_cast<float*>(p.data), payload.data() + e.byte_offset / sizeof(float),
                      p.count});
    });
    if (!missing.empty()) {
      std::string list;
      for (size_t i = 0; i < missing.size() && i < 10; ++i)
        list += (i ? ", " : "") + missing[i];
      throw DataError(strfmt("%zu parameters missing from weight file: %s%s", missing.size(),
                             list.c_str(), missing.size() > 10 ? ", ..." : ""));
    }
    std::vector<std::string> extra;
    for (const WeightEntry& e : manifest)
      if (!used.count(e.name)) extra.push_back(e.name);
    if (!extra.empty()) {
      std::string list;
      for (size_t i = 0; i < extra.size() && i < 10; ++i) list += (i ? ", " : "") + extra[i];
      throw DataError(strfmt("%zu entries do not belong to this model: %s%s", extra.size(),
                             list.c_str(), extra.size() > 10 ? ", ..." : ""));
    }
    for (const Pending& p : plan) std::memcpy(p.dst, p.src, p.count * sizeof(float));
  }
};

inline void save_weights(const Model& m, const std::string& path) {
  const std::vector<uint8_t> bytes = WeightStore::from_model(m).to_bytes();
  FILE* f = std::fopen(path.c_str(), "wb");
  if (!f) throw DataError(strfmt("cannot open '%s' for writing", path.c_str()));
  const size_t written = std::fwrite(bytes.data(), 1, bytes.size(), f);
  std::fclose(f);
  if (written != bytes.size()) throw DataError(strfmt("short write to '%s'", path.c_str()));
}

inline void load_weights(const std::string& path, Model& m) {
  FILE* f = std::fopen(path.c_str(), "rb");
  if (!f) throw DataError(strfmt("cannot open '%s'", path.c_str()));
  std::fseek(f, 0, SEEK_END);
  const long size = std::ftell(f);
  std::fseek(f, 0, SEEK_SET);
  std::vector<uint8_t> bytes(size > 0 ? static_cast<size_t>(size) : 0);
  const size_t got = bytes.empty() ? 0 : std::fread(bytes.data(), 1, bytes.size(), f);
  std::fclose(f);
  if (got != bytes.size()) throw DataError(strfmt("cannot read '%s'", path.c_str()));
  WeightStore::from_bytes(bytes).apply_to(m);
}

}  // namespace mm
