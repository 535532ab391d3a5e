#pragma once

// Field serialization.
//
// PGM: binary P5, 8-bit, row-major with row 0 first. Values are rescaled
// linearly from [min, max] to [0, 255]; a sidecar `<path>.meta` stores
// `min <v>` and `max <v>` so the reader can undo the rescaling. Without a
// sidecar the reader maps pixel p to p / maxval.
//
// GFLD: the text header "GFLD <nx> <ny> <spacing>\n" followed by nx*ny
// little-endian 64-bit floats, row-major. A vector field is two consecutive
// GFLD records, x component first.

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <istream>
#include <sstream>
#include <string>
#include <vector>

#include "errors.hpp"
#include "grid.hpp"

namespace geoflow {

namespace detail {

inline std::ifstream open_in(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  return in;
}

inline std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  return out;
}

inline std::string format_g17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

/// Next whitespace-delimited PGM header token, skipping `#` comments.
inline std::string pgm_token(std::istream& in, const std::string& path) {
  std::string tok;
  int c;
  while ((c = in.get()) != EOF) {
    if (c == '#') {
      while ((c = in.get()) != EOF && c != '\n') {
      }
      continue;
    }
    if (std::isspace(c)) {
      if (!tok.empty()) return tok;
      continue;
    }
    tok.push_back(char(c));
  }
  if (tok.empty()) throw IoError("'" + path + "': truncated PGM header");
  return tok;
}

inline long pgm_int(std::istream& in, const std::string& path, const char* what) {
  const std::string tok = pgm_token(in, path);
  char* end = nullptr;
  const long v = std::strtol(tok.c_str(), &end, 10);
  if (*end != '\0' || v <= 0) throw IoError("'" + path + "': bad PGM " + std::string(what) + " '" + tok + "'");
  return v;
}

inline std::uint64_t to_little(std::uint64_t v) {
  if constexpr (std::endian::native == std::endian::big) {
    std::uint64_t r = 0;
    for (int b = 0; b < 8; ++b) r |= ((v >> (8 * b)) & 0xffu) << (8 * (7 - b));
    return r;
  }
  return v;
}

inline void write_gfld_record(std::ostream& out, const ScalarField& f) {
  const Grid& g = f.grid();
  out << "GFLD " << g.nx() << ' ' << g.ny() << ' ' << format_g17(g.spacing()) << '\n';
  std::vector<char> bytes(f.size() * 8);
  for (std::size_t k = 0; k < f.size(); ++k) {
    const std::uint64_t w = to_little(std::bit_cast<std::uint64_t>(f[k]));
    std::memcpy(bytes.data() + 8 * k, &w, 8);
  }
  out.write(bytes.data(), std::streamsize(bytes.size()));
}

inline ScalarField read_gfld_record(std::istream& in, const std::string& path) {
  std::string header;
  if (!std::getline(in, header)) throw IoError("'" + path + "': missing GFLD header");
  std::istringstream hs(header);
  std::string magic;
  int nx = 0, ny = 0;
  double spacing = 0.0;
  if (!(hs >> magic >> nx >> ny >> spacing) || magic != "GFLD")
    throw IoError("'" + path + "': malformed GFLD header '" + header + "'");
  Grid grid = [&] {
    try {
      return Grid(nx, ny, spacing);
    } catch (const DomainError& e) {
      throw IoError("'" + path + "': " + e.what());
    }
  }();
  std::vector<char> bytes(grid.size() * 8);
  if (!in.read(bytes.data(), std::streamsize(bytes.size()))) throw IoError("'" + path + "': truncated GFLD data");
  std::vector<double> v(grid.size());
  for (std::size_t k = 0; k < v.size(); ++k) {
    std::uint64_t w;
    std::memcpy(&w, bytes.data() + 8 * k, 8);
    v[k] = std::bit_cast<double>(to_little(w));
  }
  return ScalarField(grid, std::move(v));
}

}  // namespace detail

inline std::filesystem::path pgm_sidecar(const std::filesystem::path& path) {
  return std::filesystem::path(path.string() + ".meta");
}

/// Writes `f` as an 8-bit PGM plus its min/max sidecar. A constant field maps to 0.
inline void write_pgm(const std::filesystem::path& path, const ScalarField& f) {
  if (!f.all_finite()) throw DomainError("write_pgm: field has non-finite values");
  const auto [lo_it, hi_it] = std::minmax_element(f.values().begin(), f.values().end());
  const double lo = *lo_it, hi = *hi_it;
  const double span = hi - lo;
  std::vector<unsigned char> px(f.size());
  for (std::size_t k = 0; k < f.size(); ++k)
    px[k] = span > 0.0 ? static_cast<unsigned char>(std::lround(255.0 * (f[k] - lo) / span)) : 0;
  auto out = detail::open_out(path);
  out << "P5\n" << f.grid().nx() << ' ' << f.grid().ny() << "\n255\n";
  out.write(reinterpret_cast<const char*>(px.data()), std::streamsize(px.size()));
  if (!out) throw IoError("write failed for '" + path.string() + "'");
  auto meta = detail::open_out(pgm_sidecar(path));
  meta << "min " << detail::format_g17(lo) << "\nmax " << detail::format_g17(hi) << '\n';
  if (!meta) throw IoError("write failed for '" + pgm_sidecar(path).string() + "'");
}

/// Reads an 8- or 16-bit binary PGM on a grid with the given spacing.
inline ScalarField read_pgm(const std::filesystem::path& path, double spacing = 1.0) {
  const std::string name = path.string();
  auto in = detail::open_in(path);
  if (detail::pgm_token(in, name) != "P5") throw IoError("'" + name + "': not a binary PGM (P5)");
  const long nx = detail::pgm_int(in, name, "width");
  const long ny = detail::pgm_int(in, name, "height");
  const long maxval = detail::pgm_int(in, name, "maxval");
  if (maxval > 65535) throw IoError("'" + name + "': PGM maxval above 65535");
  Grid grid = [&] {
    try {
      return Grid(int(nx), int(ny), spacing);
    } catch (const DomainError& e) {
      throw IoError("'" + name + "': " + e.what());
    }
  }();
  const std::size_t bpp = maxval > 255 ? 2 : 1;
  std::vector<unsigned char> raw(grid.size() * bpp);
  if (!in.read(reinterpret_cast<char*>(raw.data()), std::streamsize(raw.size())))
    throw IoError("'" + name + "': truncated PGM data");

  double lo = 0.0, scale = 1.0 / double(maxval);
  if (std::ifstream meta(pgm_sidecar(path)); meta) {
    std::string k1, k2;
    double mn = 0.0, mx = 0.0;
    if (!(meta >> k1 >> mn >> k2 >> mx) || k1 != "min" || k2 != "max" || !(mx >= mn))
      throw IoError("'" + pgm_sidecar(path).string() + "': malformed sidecar");
    lo = mn;
    scale = (mx - mn) / double(maxval);
  }
  std::vector<double> v(grid.size());
  for (std::size_t k = 0; k < v.size(); ++k) {
    const unsigned p = bpp == 2 ? (unsigned(raw[2 * k]) << 8) | raw[2 * k + 1] : raw[k];
    v[k] = lo + scale * double(std::min<unsigned>(p, unsigned(maxval)));
  }
  return ScalarField(grid, std::move(v));
}

inline void write_gfld(const std::filesystem::path& path, const ScalarField& f) {
  auto out = detail::open_out(path);
  detail::write_gfld_record(out, f);
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

inline void write_gfld(const std::filesystem::path& path, const VectorField& v) {
  auto out = detail::open_out(path);
  detail::write_gfld_record(out, v.x());
  detail::write_gfld_record(out, v.y());
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

inline ScalarField read_gfld(const std::filesystem::path& path) {
  auto in = detail::open_in(path);
  return detail::read_gfld_record(in, path.string());
}

inline VectorField read_gfld_vector(const std::filesystem::path& path) {
  auto in = detail::open_in(path);
  ScalarField x = detail::read_gfld_record(in, path.string());
  ScalarField y = detail::read_gfld_record(in, path.string());
  if (!(x.grid() == y.grid())) throw IoError("'" + path.string() + "': vector components on different grids");
  return VectorField(std::move(x), std::move(y));
}

}  // namespace geoflow
