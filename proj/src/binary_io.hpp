#pragma once

// Little-endian scalar I/O for the model file formats.

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>

#include "mdnu/errors.hpp"

namespace mdnu::io {

static_assert(std::endian::native == std::endian::little,
              "model files are written in host byte order, which must be little-endian");

template <typename T>
void write_raw(std::ostream& out, T value) {
  char buf[sizeof(T)];
  std::memcpy(buf, &value, sizeof(T));
  out.write(buf, sizeof(T));
}

template <typename T>
T read_raw(std::istream& in) {
  char buf[sizeof(T)];
  in.read(buf, sizeof(T));
  if (!in) throw ConfigError("truncated model file");
  T value;
  std::memcpy(&value, buf, sizeof(T));
  return value;
}

inline void write_u32(std::ostream& out, std::uint32_t v) { write_raw(out, v); }
inline void write_u64(std::ostream& out, std::uint64_t v) { write_raw(out, v); }
inline void write_f64(std::ostream& out, double v) { write_raw(out, v); }
inline std::uint32_t read_u32(std::istream& in) { return read_raw<std::uint32_t>(in); }
inline std::uint64_t read_u64(std::istream& in) { return read_raw<std::uint64_t>(in); }
inline double read_f64(std::istream& in) { return read_raw<double>(in); }

}  // namespace mdnu::io
