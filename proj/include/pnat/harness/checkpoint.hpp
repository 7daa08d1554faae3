#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "pnat/core/optim.hpp"

namespace pnat {

static_assert(std::endian::native == std::endian::little, "checkpoint IO assumes a little-endian host");

/// Binary layout (little-endian):
///   "PNATCKPT" | u32 version | u8 dtype bytes (4|8) | u64 config fingerprint
///   u64 meta length | meta JSON
///   u64 tensor count | per tensor: u32 name length, name, u32 rank, u64 dims, values
///   u8 has_adam | [u64 step_count, f64 beta1, beta2, epsilon, per tensor m values, v values]
struct CheckpointHeader {
  std::uint32_t version = 0;
  std::uint8_t dtype_bytes = 0;
  std::uint64_t fingerprint = 0;
  nlohmann::json meta;
};

inline constexpr char kCheckpointMagic[8] = {'P', 'N', 'A', 'T', 'C', 'K', 'P', 'T'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

namespace detail {

template <class V>
void put(std::ostream& os, V v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(V));
}

template <class V>
V get(std::istream& is) {
  V v{};
  if (!is.read(reinterpret_cast<char*>(&v), sizeof(V))) throw DataError("checkpoint: truncated file");
  return v;
}

template <std::floating_point T>
void put_values(std::ostream& os, const Tensor<T>& t) {
  os.write(reinterpret_cast<const char*>(t.data()), static_cast<std::streamsize>(t.size() * sizeof(T)));
}

/// Reads `t.size()` values stored as `dtype_bytes`-wide floats into t.
template <std::floating_point T>
void get_values(std::istream& is, Tensor<T>& t, std::uint8_t dtype_bytes) {
  if (dtype_bytes == sizeof(T)) {
    if (!is.read(reinterpret_cast<char*>(t.data()), static_cast<std::streamsize>(t.size() * sizeof(T)))) {
      throw DataError("checkpoint: truncated tensor data");
    }
    return;
  }
  for (std::size_t i = 0; i < t.size(); ++i) {
    t[i] = dtype_bytes == 8 ? static_cast<T>(get<double>(is)) : static_cast<T>(get<float>(is));
  }
}

}  // namespace detail

template <std::floating_point T>
void save_checkpoint(std::ostream& os, const ParameterStore<T>& params, const AdamState<T>* adam,
                     std::uint64_t fingerprint, const nlohmann::json& meta) {
  os.write(kCheckpointMagic, sizeof(kCheckpointMagic));
  detail::put<std::uint32_t>(os, kCheckpointVersion);
  detail::put<std::uint8_t>(os, sizeof(T));
  detail::put<std::uint64_t>(os, fingerprint);
  const std::string m = meta.dump();
  detail::put<std::uint64_t>(os, m.size());
  os.write(m.data(), static_cast<std::streamsize>(m.size()));
  detail::put<std::uint64_t>(os, params.size());
  for (const auto& p : params) {
    detail::put<std::uint32_t>(os, static_cast<std::uint32_t>(p.name.size()));
    os.write(p.name.data(), static_cast<std::streamsize>(p.name.size()));
    detail::put<std::uint32_t>(os, static_cast<std::uint32_t>(p.value.shape().size()));
    for (auto d : p.value.shape()) detail::put<std::uint64_t>(os, d);
    detail::put_values(os, p.value);
  }
  const bool has_adam = adam && adam->m.size() == params.size();
  detail::put<std::uint8_t>(os, has_adam ? 1 : 0);
  if (has_adam) {
    detail::put<std::uint64_t>(os, adam->step_count);
    detail::put<double>(os, adam->beta1);
    detail::put<double>(os, adam->beta2);
    detail::put<double>(os, adam->epsilon);
    for (std::size_t i = 0; i < params.size(); ++i) {
      detail::put_values(os, adam->m[i]);
      detail::put_values(os, adam->v[i]);
    }
  }
  if (!os) throw DataError("checkpoint: write failed");
}

inline CheckpointHeader read_checkpoint_header(std::istream& is) {
  char magic[8];
  if (!is.read(magic, 8) || std::memcmp(magic, kCheckpointMagic, 8) != 0) throw DataError("checkpoint: bad magic");
  CheckpointHeader h;
  h.version = detail::get<std::uint32_t>(is);
  if (h.version != kCheckpointVersion) {
    throw DataError("checkpoint: unsupported version " + std::to_string(h.version));
  }
  h.dtype_bytes = detail::get<std::uint8_t>(is);
  if (h.dtype_bytes != 4 && h.dtype_bytes != 8) throw DataError("checkpoint: bad dtype tag");
  h.fingerprint = detail::get<std::uint64_t>(is);
  const auto len = detail::get<std::uint64_t>(is);
  if (len > (1u << 30)) throw DataError("checkpoint: implausible metadata size");
  std::string m(len, '\0');
  if (!is.read(m.data(), static_cast<std::streamsize>(len))) throw DataError("checkpoint: truncated metadata");
  try {
    h.meta = nlohmann::json::parse(m);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("checkpoint: corrupt metadata: ") + e.what());
  }
  return h;
}

/// Reads tensors (and optimizer state, when `adam` is given and present)
/// into an already constructed store. Names, order and shapes must match.
template <std::floating_point T>
void read_checkpoint_body(std::istream& is, const CheckpointHeader& h, ParameterStore<T>& params,
                          std::uint64_t expected_fingerprint, AdamState<T>* adam = nullptr) {
  if (h.fingerprint != expected_fingerprint) throw DataError("checkpoint: model configuration fingerprint differs");
  const auto n = detail::get<std::uint64_t>(is);
  if (n != params.size()) throw DataError("checkpoint: parameter count differs");
  for (std::size_t i = 0; i < n; ++i) {
    auto& p = params[i];
    const auto name_len = detail::get<std::uint32_t>(is);
    std::string name(name_len, '\0');
    if (!is.read(name.data(), name_len)) throw DataError("checkpoint: truncated name");
    if (name != p.name) throw DataError("checkpoint: expected parameter " + p.name + ", found " + name);
    const auto rank = detail::get<std::uint32_t>(is);
    std::vector<std::size_t> shape(rank);
    for (auto& d : shape) d = static_cast<std::size_t>(detail::get<std::uint64_t>(is));
    if (shape != p.value.shape()) throw DataError("checkpoint: shape mismatch for " + name);
    detail::get_values(is, p.value, h.dtype_bytes);
  }
  const auto has_adam = detail::get<std::uint8_t>(is);
  if (!has_adam || !adam) return;
  adam->step_count = detail::get<std::uint64_t>(is);
  adam->beta1 = detail::get<double>(is);
  adam->beta2 = detail::get<double>(is);
  adam->epsilon = detail::get<double>(is);
  adam->m.clear();
  adam->v.clear();
  for (std::size_t i = 0; i < n; ++i) {
    adam->m.emplace_back(params[i].value.shape());
    adam->v.emplace_back(params[i].value.shape());
    detail::get_values(is, adam->m.back(), h.dtype_bytes);
    detail::get_values(is, adam->v.back(), h.dtype_bytes);
  }
}

inline CheckpointHeader peek_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open checkpoint " + path);
  return read_checkpoint_header(is);
}

}  // namespace pnat
