#pragma once

/// Bit-exact binary snapshot format, little-endian:
///   magic "APSDIRAC" | u32 version | u64 mesh hash | f64 t | u64 count |
///   count x (f64 re, f64 im)
/// Imports are refused on any magic/version/hash/size mismatch.

#include "apsdirac/core.hpp"
#include "apsdirac/mesh.hpp"

#include <cstring>
#include <filesystem>
#include <fstream>

namespace apsdirac {

inline constexpr char snapshot_magic[8] = {'A', 'P', 'S', 'D',
                                           'I', 'R', 'A', 'C'};
inline constexpr std::uint32_t snapshot_version = 1;

inline void export_snapshot(const Vec& values, const Mesh& mesh, double t,
                            const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("export_snapshot: cannot open " +
                                     path.string());
  out.write(snapshot_magic, 8);
  const std::uint32_t ver = snapshot_version;
  out.write(reinterpret_cast<const char*>(&ver), sizeof(ver));
  const std::uint64_t hash = mesh.hash();
  out.write(reinterpret_cast<const char*>(&hash), sizeof(hash));
  out.write(reinterpret_cast<const char*>(&t), sizeof(t));
  const std::uint64_t count = static_cast<std::uint64_t>(values.size());
  out.write(reinterpret_cast<const char*>(&count), sizeof(count));
  for (Eigen::Index i = 0; i < values.size(); ++i) {
    const double re = values[i].real(), im = values[i].imag();
    out.write(reinterpret_cast<const char*>(&re), sizeof(re));
    out.write(reinterpret_cast<const char*>(&im), sizeof(im));
  }
  if (!out) throw std::runtime_error("export_snapshot: write failed");
}

struct Snapshot {
  double t = 0;
  Vec values;
};

inline Snapshot import_snapshot(const std::filesystem::path& path,
                                const Mesh& mesh) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("import_snapshot: cannot open " +
                                    path.string());
  char magic[8];
  if (!in.read(magic, 8) || std::memcmp(magic, snapshot_magic, 8) != 0)
    throw std::runtime_error("import_snapshot: bad magic");
  std::uint32_t ver = 0;
  if (!in.read(reinterpret_cast<char*>(&ver), sizeof(ver)) ||
      ver != snapshot_version)
    throw std::runtime_error("import_snapshot: unsupported version");
  std::uint64_t hash = 0;
  if (!in.read(reinterpret_cast<char*>(&hash), sizeof(hash)))
    throw std::runtime_error("import_snapshot: truncated header");
  if (hash != mesh.hash())
    throw std::runtime_error(
        "import_snapshot: snapshot mesh does not match the current mesh");
  Snapshot snap;
  std::uint64_t count = 0;
  if (!in.read(reinterpret_cast<char*>(&snap.t), sizeof(snap.t)) ||
      !in.read(reinterpret_cast<char*>(&count), sizeof(count)))
    throw std::runtime_error("import_snapshot: truncated header");
  if (count != static_cast<std::uint64_t>(mesh.value_count()))
    throw std::runtime_error("import_snapshot: value count mismatch");
  snap.values.resize(static_cast<Eigen::Index>(count));
  for (std::uint64_t i = 0; i < count; ++i) {
    double re, im;
    if (!in.read(reinterpret_cast<char*>(&re), sizeof(re)) ||
        !in.read(reinterpret_cast<char*>(&im), sizeof(im)))
      throw std::runtime_error("import_snapshot: truncated payload");
    snap.values[static_cast<Eigen::Index>(i)] = Complex(re, im);
  }
  return snap;
}

}  // namespace apsdirac
