#include "decurtain/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

namespace decurtain {

namespace {

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}
  double uniform() { return double(gen_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Integer in [lo, hi].
  int integer(int lo, int hi) {
    return lo + static_cast<int>(std::floor(uniform() * double(hi - lo + 1)));
  }

 private:
  std::mt19937_64 gen_;
};

// Independent streams so that, e.g., adding stripes does not move the shapes.
constexpr std::uint64_t kShapeStream = 0x9E3779B97F4A7C15ULL;
constexpr std::uint64_t kStripeStream = 0xC2B2AE3D27D4EB4FULL;
constexpr std::uint64_t kLaminarStream = 0x165667B19E3779F9ULL;

bool inside(const Shape& sh, double x, double y, double z) {
  const double d[3] = {(x - sh.center[0]) / sh.radii[0], (y - sh.center[1]) / sh.radii[1],
                       (z - sh.center[2]) / sh.radii[2]};
  if (sh.kind == Shape::Kind::Ball) return d[0] * d[0] + d[1] * d[1] + d[2] * d[2] <= 1.0;
  return std::abs(d[0]) <= 1.0 && std::abs(d[1]) <= 1.0 && std::abs(d[2]) <= 1.0;
}

void check_spec(const PhantomSpec& spec, const Extents& dims) {
  auto fail = [](const std::string& msg) { throw std::invalid_argument("phantom: " + msg); };
  if (!dims.valid()) fail("dimensions must be positive");
  for (double s : spec.stretch)
    if (!(s > 0)) fail("shape stretch factors must be positive");
  const auto& st = spec.stripes;
  if (st.count < 0) fail("stripe count must be >= 0");
  if (st.count > 0) {
    if (st.min_width < 1 || st.max_width < st.min_width) fail("invalid stripe width range");
    if (st.max_width > dims.nx || st.max_width > dims.nz) {
      fail("stripe width " + std::to_string(st.max_width) + " exceeds volume " + to_string(dims));
    }
  }
  for (const auto& ln : st.lines) {
    if (ln.width_x < 1 || ln.width_z < 1 || ln.x0 < 0 || ln.z0 < 0 || ln.x0 + ln.width_x > dims.nx ||
        ln.z0 + ln.width_z > dims.nz) {
      fail("explicit stripe outside volume " + to_string(dims));
    }
  }
  const auto& lm = spec.laminar;
  if (lm.probability < 0 || lm.probability > 1) fail("laminar probability must lie in [0, 1]");
  if (lm.probability > 0) {
    if (lm.thickness < 1 || lm.thickness > 2) fail("laminar thickness must be 1 or 2");
    if (dims.nz < lm.thickness + 2) {
      fail("nz = " + std::to_string(dims.nz) + " too small for laminar events of thickness " +
           std::to_string(lm.thickness));
    }
    if (lm.regions_per_event < 1) fail("regions_per_event must be >= 1");
    if (lm.min_radius <= 0 || lm.max_radius < lm.min_radius) fail("invalid laminar radius range");
  }
  for (const auto& r : lm.regions) {
    if (r.thickness < 1 || r.z0 < 0 || r.z0 + r.thickness > dims.nz) {
      fail("explicit laminar region outside volume " + to_string(dims));
    }
  }
  if (lm.edge_sigma < 0) fail("edge_sigma must be >= 0");
  if (spec.background < 0 || spec.background > 1) fail("background must lie in [0, 1]");
}

/// Separable Gaussian blur of one nx-by-ny slice, zero outside.
void blur_slice(std::vector<double>& img, Eigen::Index nx, Eigen::Index ny, double sigma) {
  if (sigma <= 0) return;
  const int radius = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> kernel(2 * radius + 1);
  double sum = 0;
  for (int t = -radius; t <= radius; ++t) sum += kernel[t + radius] = std::exp(-0.5 * t * t / (sigma * sigma));
  for (double& w : kernel) w /= sum;
  std::vector<double> tmp(img.size(), 0.0);
  for (Eigen::Index j = 0; j < ny; ++j)
    for (Eigen::Index i = 0; i < nx; ++i) {
      double acc = 0;
      for (int t = -radius; t <= radius; ++t) {
        const Eigen::Index ii = i + t;
        if (ii >= 0 && ii < nx) acc += kernel[t + radius] * img[ii + nx * j];
      }
      tmp[i + nx * j] = acc;
    }
  for (Eigen::Index j = 0; j < ny; ++j)
    for (Eigen::Index i = 0; i < nx; ++i) {
      double acc = 0;
      for (int t = -radius; t <= radius; ++t) {
        const Eigen::Index jj = j + t;
        if (jj >= 0 && jj < ny) acc += kernel[t + radius] * tmp[i + nx * jj];
      }
      img[i + nx * j] = acc;
    }
}

Volume make_clean(const PhantomSpec& spec) {
  const Extents e = spec.dims;
  std::vector<Shape> shapes = spec.shapes;
  Rng rng(spec.seed ^ kShapeStream);
  const double dims[3] = {double(e.nx), double(e.ny), double(e.nz)};
  for (int n = 0; n < spec.random_shapes; ++n) {
    Shape sh;
    sh.kind = rng.uniform() < 0.5 ? Shape::Kind::Ball : Shape::Kind::Box;
    for (int a = 0; a < 3; ++a) {
      sh.center[a] = rng.uniform(0.0, dims[a] - 1.0);
      sh.radii[a] = std::max(1.0, rng.uniform(dims[a] / 10.0, dims[a] / 4.0)) * spec.stretch[a];
    }
    sh.intensity = rng.uniform(spec.min_intensity, spec.max_intensity);
    shapes.push_back(sh);
  }
  Volume v(e, spec.background);
  for (Eigen::Index k = 0; k < e.nz; ++k)
    for (Eigen::Index j = 0; j < e.ny; ++j)
      for (Eigen::Index i = 0; i < e.nx; ++i)
        for (const auto& sh : shapes)
          if (inside(sh, double(i), double(j), double(k))) v(i, j, k) = sh.intensity;
  v.array() = v.array().cwiseMax(0.0).cwiseMin(1.0);
  return v;
}

Volume make_stripes(const PhantomSpec& spec, const Extents& e) {
  std::vector<StripeLine> lines = spec.stripes.lines;
  Rng rng(spec.seed ^ kStripeStream);
  const auto& st = spec.stripes;
  for (int n = 0; n < st.count; ++n) {
    StripeLine ln;
    ln.width_x = rng.integer(st.min_width, st.max_width);
    ln.width_z = rng.integer(st.min_width, st.max_width);
    ln.x0 = rng.integer(0, int(e.nx) - ln.width_x);
    ln.z0 = rng.integer(0, int(e.nz) - ln.width_z);
    const double mag = rng.uniform(st.min_amplitude, st.max_amplitude);
    const int sign = st.sign != 0 ? (st.sign > 0 ? 1 : -1) : (rng.uniform() < 0.5 ? -1 : 1);
    ln.amplitude = sign * mag;
    lines.push_back(ln);
  }
  Volume s(e);
  for (const auto& ln : lines)
    for (int k = ln.z0; k < ln.z0 + ln.width_z; ++k)
      for (Eigen::Index j = 0; j < e.ny; ++j)
        for (int i = ln.x0; i < ln.x0 + ln.width_x; ++i) s(i, j, k) += ln.amplitude;
  return s;
}

Volume make_laminar(const PhantomSpec& spec, const Extents& e) {
  const auto& lm = spec.laminar;
  std::vector<LaminarRegion> regions = lm.regions;
  Rng rng(spec.seed ^ kLaminarStream);
  if (lm.probability > 0) {
    // Events avoid the first and last slice and are separated by at least one
    // clean slice, so every event is isolated along z.
    for (Eigen::Index k = 1; k + lm.thickness < e.nz;) {
      if (rng.uniform() < lm.probability) {
        for (int r = 0; r < lm.regions_per_event; ++r) {
          LaminarRegion reg;
          reg.cx = rng.uniform(0.0, double(e.nx - 1));
          reg.cy = rng.uniform(0.0, double(e.ny - 1));
          reg.rx = rng.uniform(lm.min_radius, lm.max_radius);
          reg.ry = rng.uniform(lm.min_radius, lm.max_radius);
          reg.z0 = int(k);
          reg.thickness = lm.thickness;
          reg.brightness = rng.uniform(lm.min_brightness, lm.max_brightness);
          regions.push_back(reg);
        }
        k += lm.thickness + 1;
      } else {
        ++k;
      }
    }
  }

  Volume out(e);
  const Eigen::Index plane = e.nx * e.ny;
  std::vector<double> slice(static_cast<std::size_t>(plane));
  for (Eigen::Index k = 0; k < e.nz; ++k) {
    std::fill(slice.begin(), slice.end(), 0.0);
    bool any = false;
    for (const auto& reg : regions) {
      if (k < reg.z0 || k >= reg.z0 + reg.thickness) continue;
      any = true;
      for (Eigen::Index j = 0; j < e.ny; ++j)
        for (Eigen::Index i = 0; i < e.nx; ++i) {
          const double dx = (double(i) - reg.cx) / reg.rx, dy = (double(j) - reg.cy) / reg.ry;
          if (dx * dx + dy * dy <= 1.0) {
            double& v = slice[static_cast<std::size_t>(i + e.nx * j)];
            v = std::max(v, reg.brightness);
          }
        }
    }
    if (!any) continue;
    blur_slice(slice, e.nx, e.ny, lm.edge_sigma);
    for (Eigen::Index p = 0; p < plane; ++p) out[p + plane * k] = slice[static_cast<std::size_t>(p)];
  }
  return out;
}

}  // namespace

Corruption corruption_fields(const PhantomSpec& spec, const Extents& dims) {
  check_spec(spec, dims);
  return {make_stripes(spec, dims), make_laminar(spec, dims)};
}

Phantom generate_phantom(const PhantomSpec& spec) {
  check_spec(spec, spec.dims);
  Phantom ph;
  ph.clean = make_clean(spec);
  ph.stripes = make_stripes(spec, spec.dims);
  ph.laminar = make_laminar(spec, spec.dims);
  ph.corrupted = Volume(spec.dims, (ph.clean.array() + ph.stripes.array() + ph.laminar.array())
                                       .cwiseMax(0.0)
                                       .cwiseMin(1.0)
                                       .eval());
  return ph;
}

Volume corrupt(const Volume& clean, const PhantomSpec& spec) {
  require_same_extents(clean.extents(), spec.dims, "corrupt");
  const Corruption c = corruption_fields(spec, clean.extents());
  return Volume(clean.extents(),
                (clean.array() + c.stripes.array() + c.laminar.array()).cwiseMax(0.0).cwiseMin(1.0).eval());
}

std::vector<std::string> phantom_preset_names() { return {"hard-edge", "smooth-laminar", "stripes-only"}; }

PhantomSpec phantom_preset(const std::string& name, std::uint64_t seed) {
  PhantomSpec p;
  p.dims = {64, 64, 64};
  p.seed = seed;
  // Columns along z: the clean structure has edges in x and y only.
  p.background = 0.2;
  p.random_shapes = 10;
  p.min_intensity = 0.3;
  p.max_intensity = 0.5;
  p.stretch = {1.0, 1.0, 12.0};

  p.stripes.count = 40;
  p.stripes.min_width = 1;
  p.stripes.max_width = 3;
  p.stripes.min_amplitude = 0.05;
  p.stripes.max_amplitude = 0.15;
  p.stripes.sign = 0;

  // Many small bright patches two slices thick. Intensities are kept low so
  // that clean + stripes + laminar rarely reaches the clamp.
  p.laminar.probability = 0.6;
  p.laminar.regions_per_event = 6;
  p.laminar.min_radius = 2;
  p.laminar.max_radius = 5;
  p.laminar.thickness = 2;
  p.laminar.min_brightness = 0.3;
  p.laminar.max_brightness = 0.45;

  if (name == "hard-edge") return p;
  if (name == "smooth-laminar") {
    p.laminar.edge_sigma = 1.0;
    return p;
  }
  if (name == "stripes-only") {
    p.laminar.probability = 0.0;
    return p;
  }
  throw std::invalid_argument("unknown phantom preset '" + name + "'");
}

// ---------------------------------------------------------------------------
// JSON

namespace {

std::string kind_name(Shape::Kind k) { return k == Shape::Kind::Ball ? "ball" : "box"; }

Shape::Kind kind_from(const std::string& s) {
  if (s == "ball") return Shape::Kind::Ball;
  if (s == "box") return Shape::Kind::Box;
  throw std::invalid_argument("unknown shape kind '" + s + "'");
}

}  // namespace

void to_json(nlohmann::json& j, const PhantomSpec& spec) {
  using nlohmann::json;
  json shapes = json::array();
  for (const auto& sh : spec.shapes) {
    shapes.push_back({{"kind", kind_name(sh.kind)},
                      {"center", {sh.center[0], sh.center[1], sh.center[2]}},
                      {"radii", {sh.radii[0], sh.radii[1], sh.radii[2]}},
                      {"intensity", sh.intensity}});
  }
  json lines = json::array();
  for (const auto& ln : spec.stripes.lines) {
    lines.push_back({{"x0", ln.x0}, {"z0", ln.z0}, {"width_x", ln.width_x}, {"width_z", ln.width_z},
                     {"amplitude", ln.amplitude}});
  }
  json regions = json::array();
  for (const auto& r : spec.laminar.regions) {
    regions.push_back({{"cx", r.cx}, {"cy", r.cy}, {"rx", r.rx}, {"ry", r.ry}, {"z0", r.z0},
                       {"thickness", r.thickness}, {"brightness", r.brightness}});
  }
  const auto& st = spec.stripes;
  const auto& lm = spec.laminar;
  j = json{{"dims", {spec.dims.nx, spec.dims.ny, spec.dims.nz}},
           {"seed", spec.seed},
           {"background", spec.background},
           {"random_shapes", spec.random_shapes},
           {"intensity_range", {spec.min_intensity, spec.max_intensity}},
           {"stretch", spec.stretch},
           {"shapes", shapes},
           {"stripes",
            {{"count", st.count},
             {"width_range", {st.min_width, st.max_width}},
             {"amplitude_range", {st.min_amplitude, st.max_amplitude}},
             {"sign", st.sign},
             {"lines", lines}}},
           {"laminar",
            {{"probability", lm.probability},
             {"regions_per_event", lm.regions_per_event},
             {"radius_range", {lm.min_radius, lm.max_radius}},
             {"thickness", lm.thickness},
             {"brightness_range", {lm.min_brightness, lm.max_brightness}},
             {"edge_sigma", lm.edge_sigma},
             {"regions", regions}}}};
}

void from_json(const nlohmann::json& j, PhantomSpec& spec) {
  spec = PhantomSpec{};
  if (j.contains("dims")) {
    const auto& d = j.at("dims");
    spec.dims = {d.at(0).get<Eigen::Index>(), d.at(1).get<Eigen::Index>(), d.at(2).get<Eigen::Index>()};
  }
  spec.seed = j.value("seed", spec.seed);
  spec.background = j.value("background", spec.background);
  spec.random_shapes = j.value("random_shapes", spec.random_shapes);
  if (j.contains("intensity_range")) {
    spec.min_intensity = j["intensity_range"].at(0).get<double>();
    spec.max_intensity = j["intensity_range"].at(1).get<double>();
  }
  spec.stretch = j.value("stretch", spec.stretch);
  for (const auto& s : j.value("shapes", nlohmann::json::array())) {
    Shape sh;
    sh.kind = kind_from(s.at("kind").get<std::string>());
    for (int a = 0; a < 3; ++a) {
      sh.center[a] = s.at("center").at(a).get<double>();
      sh.radii[a] = s.at("radii").at(a).get<double>();
    }
    sh.intensity = s.at("intensity").get<double>();
    spec.shapes.push_back(sh);
  }
  if (j.contains("stripes")) {
    const auto& s = j["stripes"];
    auto& st = spec.stripes;
    st.count = s.value("count", st.count);
    if (s.contains("width_range")) {
      st.min_width = s["width_range"].at(0).get<int>();
      st.max_width = s["width_range"].at(1).get<int>();
    }
    if (s.contains("amplitude_range")) {
      st.min_amplitude = s["amplitude_range"].at(0).get<double>();
      st.max_amplitude = s["amplitude_range"].at(1).get<double>();
    }
    st.sign = s.value("sign", st.sign);
    for (const auto& l : s.value("lines", nlohmann::json::array())) {
      st.lines.push_back({l.at("x0").get<int>(), l.at("z0").get<int>(), l.value("width_x", 1),
                          l.value("width_z", 1), l.at("amplitude").get<double>()});
    }
  }
  if (j.contains("laminar")) {
    const auto& s = j["laminar"];
    auto& lm = spec.laminar;
    lm.probability = s.value("probability", lm.probability);
    lm.regions_per_event = s.value("regions_per_event", lm.regions_per_event);
    if (s.contains("radius_range")) {
      lm.min_radius = s["radius_range"].at(0).get<double>();
      lm.max_radius = s["radius_range"].at(1).get<double>();
    }
    lm.thickness = s.value("thickness", lm.thickness);
    if (s.contains("brightness_range")) {
      lm.min_brightness = s["brightness_range"].at(0).get<double>();
      lm.max_brightness = s["brightness_range"].at(1).get<double>();
    }
    lm.edge_sigma = s.value("edge_sigma", lm.edge_sigma);
    for (const auto& r : s.value("regions", nlohmann::json::array())) {
      lm.regions.push_back({r.at("cx").get<double>(), r.at("cy").get<double>(), r.at("rx").get<double>(),
                            r.at("ry").get<double>(), r.at("z0").get<int>(), r.value("thickness", 1),
                            r.at("brightness").get<double>()});
    }
  }
}

}  // namespace decurtain
