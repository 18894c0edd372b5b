#include "decurtain/io.hpp"

#include "json.hpp"

#include <png.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <memory>
#include <random>
#include <sstream>

namespace decurtain {

static_assert(std::endian::native == std::endian::little, "NPY/raw I/O assumes a little-endian host");

namespace fs = std::filesystem;

namespace {

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void check_range(const Volume& v, const std::string& origin) {
  if (!v.all_finite()) throw DataError(origin + ": contains NaN or Inf");
  const double lo = v.array().minCoeff(), hi = v.array().maxCoeff();
  if (lo < 0.0 || hi > 1.0) {
    std::ostringstream os;
    os.precision(17);
    os << origin << ": values must lie in [0, 1], found min " << lo << " max " << hi;
    throw DataError(os.str());
  }
}

Volume from_samples(const char* data, std::size_t bytes, int width, const Extents& ext,
                    const std::string& origin) {
  const auto n = static_cast<std::size_t>(ext.size());
  if (bytes != n * static_cast<std::size_t>(width)) {
    throw DataError(origin + ": expected " + std::to_string(n * width) + " data bytes for " +
                    to_string(ext) + ", found " + std::to_string(bytes));
  }
  Volume v(ext);
  if (width == 8) {
    std::memcpy(v.array().data(), data, bytes);
  } else {
    for (std::size_t i = 0; i < n; ++i) {
      float f;
      std::memcpy(&f, data + 4 * i, 4);
      v[static_cast<Eigen::Index>(i)] = f;
    }
  }
  return v;
}

// Returns the text following `'key':` in an NPY header dict.
std::string_view dict_value(std::string_view header, std::string_view key, const std::string& origin) {
  const std::string quoted = "'" + std::string(key) + "'";
  auto pos = header.find(quoted);
  if (pos == std::string_view::npos) throw DataError(origin + ": NPY header lacks '" + std::string(key) + "'");
  pos = header.find(':', pos + quoted.size());
  if (pos == std::string_view::npos) throw DataError(origin + ": malformed NPY header");
  ++pos;
  while (pos < header.size() && header[pos] == ' ') ++pos;
  return header.substr(pos);
}

}  // namespace

std::string encode_npy(const Volume& v) {
  const Extents e = v.extents();
  std::string dict = "{'descr': '<f8', 'fortran_order': False, 'shape': (" + std::to_string(e.nz) +
                     ", " + std::to_string(e.ny) + ", " + std::to_string(e.nx) + "), }";
  // magic(6) + version(2) + len(2) + dict + padding + '\n' is a multiple of 64
  const std::size_t unpadded = 10 + dict.size() + 1;
  dict.append((64 - unpadded % 64) % 64, ' ');
  dict.push_back('\n');
  std::string out("\x93NUMPY\x01\x00", 8);
  const auto hlen = static_cast<std::uint16_t>(dict.size());
  out.push_back(static_cast<char>(hlen & 0xff));
  out.push_back(static_cast<char>(hlen >> 8));
  out += dict;
  out.append(reinterpret_cast<const char*>(v.array().data()),
             static_cast<std::size_t>(v.size()) * sizeof(double));
  return out;
}

Volume decode_npy(std::string_view bytes, const std::string& origin) {
  if (bytes.size() < 10 || bytes.substr(0, 6) != std::string_view("\x93NUMPY", 6)) {
    throw DataError(origin + ": not an NPY file (bad magic)");
  }
  const auto major = static_cast<unsigned char>(bytes[6]);
  std::size_t hlen = 0, offset = 0;
  if (major == 1) {
    hlen = static_cast<unsigned char>(bytes[8]) | (static_cast<std::size_t>(static_cast<unsigned char>(bytes[9])) << 8);
    offset = 10;
  } else if (major == 2 || major == 3) {
    if (bytes.size() < 12) throw DataError(origin + ": truncated NPY header");
    for (int b = 0; b < 4; ++b) hlen |= static_cast<std::size_t>(static_cast<unsigned char>(bytes[8 + b])) << (8 * b);
    offset = 12;
  } else {
    throw DataError(origin + ": unsupported NPY version " + std::to_string(major));
  }
  if (bytes.size() < offset + hlen) throw DataError(origin + ": truncated NPY header");
  const std::string_view header = bytes.substr(offset, hlen);

  const std::string_view descr_v = dict_value(header, "descr", origin);
  if (descr_v.empty() || descr_v[0] != '\'') throw DataError(origin + ": malformed descr");
  const std::string descr(descr_v.substr(1, descr_v.find('\'', 1) - 1));
  int width = 0;
  if (descr == "<f8") {
    width = 8;
  } else if (descr == "<f4") {
    width = 4;
  } else {
    throw DataError(origin + ": unsupported dtype '" + descr + "' (need '<f4' or '<f8')");
  }

  const std::string_view fortran = dict_value(header, "fortran_order", origin);
  if (fortran.rfind("True", 0) == 0) {
    throw DataError(origin + ": Fortran-order arrays are not supported; save with C order");
  }
  if (fortran.rfind("False", 0) != 0) throw DataError(origin + ": malformed fortran_order");

  std::string_view shape_v = dict_value(header, "shape", origin);
  if (shape_v.empty() || shape_v[0] != '(') throw DataError(origin + ": malformed shape");
  shape_v = shape_v.substr(1, shape_v.find(')') - 1);
  std::vector<Eigen::Index> shape;
  std::string token;
  for (char c : std::string(shape_v) + ",") {
    if (c == ',') {
      if (token.find_first_not_of(' ') != std::string::npos) {
        try {
          shape.push_back(std::stoll(token));
        } catch (const std::exception&) {
          throw DataError(origin + ": malformed shape entry '" + token + "'");
        }
      }
      token.clear();
    } else {
      token.push_back(c);
    }
  }
  Extents ext;
  if (shape.size() == 3) {
    ext = {shape[2], shape[1], shape[0]};
  } else if (shape.size() == 2) {
    ext = {shape[1], shape[0], 1};
  } else {
    throw DataError(origin + ": expected a 2D or 3D array, got " + std::to_string(shape.size()) + " dimensions");
  }
  if (!ext.valid()) throw DataError(origin + ": empty array");
  const std::string_view payload = bytes.substr(offset + hlen);
  return from_samples(payload.data(), payload.size(), width, ext, origin);
}

Volume read_npy(const fs::path& path) { return decode_npy(read_file(path), path.string()); }

Volume read_raw(const fs::path& path) {
  fs::path sidecar = path;
  sidecar += ".json";
  if (!fs::exists(sidecar)) sidecar = fs::path(path).replace_extension(".json");
  if (!fs::exists(sidecar)) throw DataError(path.string() + ": raw volume needs a JSON sidecar");
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(read_file(sidecar));
  } catch (const nlohmann::json::exception& e) {
    throw DataError(sidecar.string() + ": " + e.what());
  }
  try {
    const Extents ext{meta.at("nx").get<Eigen::Index>(), meta.at("ny").get<Eigen::Index>(),
                      meta.value("nz", Eigen::Index{1})};
    if (!ext.valid()) throw DataError(sidecar.string() + ": dimensions must be positive");
    const std::string dtype = meta.value("dtype", std::string("float32"));
    const std::string order = meta.value("order", std::string("C"));
    if (order != "C") throw DataError(sidecar.string() + ": unsupported order '" + order + "' (need \"C\")");
    int width = 0;
    if (dtype == "float32") {
      width = 4;
    } else if (dtype == "float64") {
      width = 8;
    } else {
      throw DataError(sidecar.string() + ": unsupported dtype '" + dtype + "'");
    }
    const std::string data = read_file(path);
    return from_samples(data.data(), data.size(), width, ext, path.string());
  } catch (const nlohmann::json::exception& e) {
    throw DataError(sidecar.string() + ": " + e.what());
  }
}

Volume load_volume(const fs::path& path, const LoadOptions& opts) {
  if (!fs::exists(path)) throw DataError("input file '" + path.string() + "' does not exist");
  Volume v = path.extension() == ".npy" ? read_npy(path) : read_raw(path);
  if (opts.require_unit_range) check_range(v, path.string());
  return v;
}

void write_file_atomic(const fs::path& path, std::string_view bytes) {
  std::random_device rd;
  fs::path tmp = path;
  tmp += ".tmp" + std::to_string(rd());
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write '" + tmp.string() + "'");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    out.flush();
    if (!out) {
      out.close();
      fs::remove(tmp);
      throw std::runtime_error("write to '" + tmp.string() + "' failed");
    }
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) {
    fs::remove(tmp);
    throw std::runtime_error("cannot rename '" + tmp.string() + "' to '" + path.string() + "': " + ec.message());
  }
}

void save_volume(const Volume& v, const fs::path& path) { write_file_atomic(path, encode_npy(v)); }

// ---------------------------------------------------------------------------
// Slice export

SlicePlane parse_plane(std::string_view s) {
  if (s == "xy") return SlicePlane::XY;
  if (s == "xz") return SlicePlane::XZ;
  if (s == "yz") return SlicePlane::YZ;
  throw std::invalid_argument("unknown slice plane '" + std::string(s) + "' (use xy, xz or yz)");
}

std::string_view name(SlicePlane p) {
  switch (p) {
    case SlicePlane::XY: return "xy";
    case SlicePlane::XZ: return "xz";
    case SlicePlane::YZ: return "yz";
  }
  return "?";
}

GrayImage16 slice_image(const Volume& v, SlicePlane plane, Eigen::Index index) {
  const Extents e = v.extents();
  const Eigen::Index limit = plane == SlicePlane::XY ? e.nz : (plane == SlicePlane::XZ ? e.ny : e.nx);
  if (index < 0 || index >= limit) {
    throw std::out_of_range("slice index " + std::to_string(index) + " out of range [0, " +
                            std::to_string(limit) + ") for plane " + std::string(name(plane)));
  }
  GrayImage16 img;
  auto quantize = [](double x) {
    const double c = std::clamp(x, 0.0, 1.0);
    return static_cast<std::uint16_t>(std::lround(c * 65535.0));
  };
  auto sample = [&](Eigen::Index col, Eigen::Index row) {
    switch (plane) {
      case SlicePlane::XY: return v(col, row, index);
      case SlicePlane::XZ: return v(col, index, row);
      case SlicePlane::YZ: return v(index, col, row);
    }
    return 0.0;
  };
  const Eigen::Index w = plane == SlicePlane::YZ ? e.ny : e.nx;
  const Eigen::Index h = plane == SlicePlane::XY ? e.ny : e.nz;
  img.width = static_cast<std::uint32_t>(w);
  img.height = static_cast<std::uint32_t>(h);
  img.pixels.resize(static_cast<std::size_t>(w * h));
  for (Eigen::Index r = 0; r < h; ++r)
    for (Eigen::Index c = 0; c < w; ++c) img.pixels[static_cast<std::size_t>(c + w * r)] = quantize(sample(c, r));
  return img;
}

namespace {

void png_write_to_string(png_structp png, png_bytep data, png_size_t len) {
  auto* buf = static_cast<std::string*>(png_get_io_ptr(png));
  buf->append(reinterpret_cast<const char*>(data), len);
}

void png_flush_noop(png_structp) {}

[[noreturn]] void png_error_throw(png_structp, png_const_charp msg) { throw DataError(std::string("libpng: ") + msg); }

void png_warning_ignore(png_structp, png_const_charp) {}

struct PngReadSource {
  const std::string* data;
  std::size_t pos;
};

void png_read_from_string(png_structp png, png_bytep out, png_size_t len) {
  auto* src = static_cast<PngReadSource*>(png_get_io_ptr(png));
  if (src->pos + len > src->data->size()) png_error(png, "unexpected end of file");
  std::memcpy(out, src->data->data() + src->pos, len);
  src->pos += len;
}

}  // namespace

void write_png16(const GrayImage16& img, const fs::path& path) {
  std::string buffer;
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, png_error_throw, png_warning_ignore);
  if (!png) throw std::runtime_error("png_create_write_struct failed");
  png_infop info = png_create_info_struct(png);
  try {
    if (!info) throw std::runtime_error("png_create_info_struct failed");
    png_set_write_fn(png, &buffer, png_write_to_string, png_flush_noop);
    png_set_IHDR(png, info, img.width, img.height, 16, PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    std::vector<png_byte> row(2 * static_cast<std::size_t>(img.width));
    for (std::uint32_t r = 0; r < img.height; ++r) {
      for (std::uint32_t c = 0; c < img.width; ++c) {
        const std::uint16_t p = img.pixels[c + static_cast<std::size_t>(img.width) * r];
        row[2 * c] = static_cast<png_byte>(p >> 8);  // PNG samples are big-endian
        row[2 * c + 1] = static_cast<png_byte>(p & 0xff);
      }
      png_write_row(png, row.data());
    }
    png_write_end(png, nullptr);
  } catch (...) {
    png_destroy_write_struct(&png, &info);
    throw;
  }
  png_destroy_write_struct(&png, &info);
  write_file_atomic(path, buffer);
}

GrayImage16 read_png16(const fs::path& path) {
  const std::string data = read_file(path);
  PngReadSource src{&data, 0};
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, png_error_throw, png_warning_ignore);
  if (!png) throw std::runtime_error("png_create_read_struct failed");
  png_infop info = png_create_info_struct(png);
  GrayImage16 img;
  try {
    if (!info) throw std::runtime_error("png_create_info_struct failed");
    png_set_read_fn(png, &src, png_read_from_string);
    png_read_info(png, info);
    if (png_get_bit_depth(png, info) != 16 || png_get_color_type(png, info) != PNG_COLOR_TYPE_GRAY) {
      throw DataError(path.string() + ": expected a 16-bit grayscale PNG");
    }
    img.width = png_get_image_width(png, info);
    img.height = png_get_image_height(png, info);
    img.pixels.resize(static_cast<std::size_t>(img.width) * img.height);
    std::vector<png_byte> row(2 * static_cast<std::size_t>(img.width));
    for (std::uint32_t r = 0; r < img.height; ++r) {
      png_read_row(png, row.data(), nullptr);
      for (std::uint32_t c = 0; c < img.width; ++c) {
        img.pixels[c + static_cast<std::size_t>(img.width) * r] =
            static_cast<std::uint16_t>((row[2 * c] << 8) | row[2 * c + 1]);
      }
    }
  } catch (...) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw;
  }
  png_destroy_read_struct(&png, &info, nullptr);
  return img;
}

std::vector<fs::path> export_slices(const Volume& v, SlicePlane plane, const std::vector<Eigen::Index>& indices,
                                    const std::string& prefix) {
  // Validate every index before writing anything.
  std::vector<GrayImage16> images;
  for (Eigen::Index idx : indices) images.push_back(slice_image(v, plane, idx));
  std::vector<fs::path> paths;
  for (std::size_t n = 0; n < indices.size(); ++n) {
    fs::path p = prefix + "_" + std::string(name(plane)) + "_" + std::to_string(indices[n]) + ".png";
    write_png16(images[n], p);
    paths.push_back(std::move(p));
  }
  return paths;
}

}  // namespace decurtain
