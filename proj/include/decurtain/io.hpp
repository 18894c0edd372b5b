#pragma once

// Volume file formats.
//
// NPY (version 1.0): little-endian float32 ('<f4') or float64 ('<f8'),
// C order, shape (nz, ny, nx) -- so x is the fastest-varying index, matching
// the in-memory layout. A 2D array (ny, nx) loads as a single slice.
//
// Raw: headerless little-endian samples with a JSON sidecar next to it
// (`<file>.json`, or the same stem with a .json extension):
//   {"nx": 64, "ny": 64, "nz": 32, "dtype": "float32", "order": "C"}
// "order": "C" means x fastest, then y, then z; dtype is float32 or float64.

#include "decurtain/volume.hpp"

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace decurtain {

/// Malformed, unsupported or out-of-range input data.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct LoadOptions {
  bool require_unit_range = true;  // reject values outside [0, 1]
};

Volume load_volume(const std::filesystem::path& path, const LoadOptions& opts = {});
Volume read_npy(const std::filesystem::path& path);
Volume read_raw(const std::filesystem::path& path);

/// Writes float64 NPY v1.0, C order, shape (nz, ny, nx). Atomic.
void save_volume(const Volume& v, const std::filesystem::path& path);

/// Bytes of the NPY file save_volume writes.
std::string encode_npy(const Volume& v);
Volume decode_npy(std::string_view bytes, const std::string& origin = "<memory>");

/// Writes `bytes` to a temporary sibling and renames it over `path`.
void write_file_atomic(const std::filesystem::path& path, std::string_view bytes);

enum class SlicePlane { XY, XZ, YZ };

SlicePlane parse_plane(std::string_view s);
std::string_view name(SlicePlane p);

struct GrayImage16 {
  std::uint32_t width = 0;
  std::uint32_t height = 0;
  std::vector<std::uint16_t> pixels;  // row-major
};

/// Extracts one slice: XY at z = index (width nx, height ny), XZ at y = index
/// (nx by nz), YZ at x = index (ny by nz). Values map linearly [0, 1] ->
/// [0, 65535], rounded and clamped.
GrayImage16 slice_image(const Volume& v, SlicePlane plane, Eigen::Index index);

void write_png16(const GrayImage16& img, const std::filesystem::path& path);
GrayImage16 read_png16(const std::filesystem::path& path);

/// Writes `<prefix>_<plane>_<index>.png` for each index; returns the paths.
std::vector<std::filesystem::path> export_slices(const Volume& v, SlicePlane plane,
                                                 const std::vector<Eigen::Index>& indices,
                                                 const std::string& prefix);

}  // namespace decurtain
