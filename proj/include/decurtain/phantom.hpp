#pragma once

// Synthetic curtaining phantoms: a piecewise-constant clean volume plus
// y-constant stripes and thin, bright, z-fluctuating laminar regions.
//
// Random draws come from std::mt19937_64 (a fully specified generator); the
// raw 64-bit outputs are mapped to doubles by taking the top 53 bits, so a
// given seed yields the same phantom on every platform.

#include "decurtain/volume.hpp"

#include "json.hpp"

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace decurtain {

struct Shape {
  enum class Kind { Ball, Box };
  Kind kind = Kind::Ball;
  double center[3] = {0, 0, 0};  // voxel coordinates (x, y, z)
  double radii[3] = {1, 1, 1};   // semi-axes (ball) or half-widths (box)
  double intensity = 0.5;
};

/// A y-constant stripe covering x in [x0, x0 + width_x), z in [z0, z0 + width_z).
struct StripeLine {
  int x0 = 0;
  int z0 = 0;
  int width_x = 1;
  int width_z = 1;
  double amplitude = 0.0;
};

/// An elliptical bright region in the x-y plane spanning z in [z0, z0 + thickness).
struct LaminarRegion {
  double cx = 0, cy = 0;
  double rx = 1, ry = 1;
  int z0 = 0;
  int thickness = 1;
  double brightness = 0.0;
};

struct StripeSpec {
  int count = 0;  // randomly placed stripes
  int min_width = 1;
  int max_width = 3;
  double min_amplitude = 0.1;
  double max_amplitude = 0.3;
  int sign = 0;  // +1 bright, -1 dark, 0 random
  std::vector<StripeLine> lines;  // placed in addition to the random ones
};

struct LaminarSpec {
  double probability = 0.0;  // chance that a laminar event starts at a given slice
  int regions_per_event = 1;
  double min_radius = 4;
  double max_radius = 12;
  int thickness = 1;  // 1 or 2
  double min_brightness = 0.3;
  double max_brightness = 0.5;
  double edge_sigma = 0.0;  // Gaussian blur of the region mask in x-y; 0 = hard edges
  std::vector<LaminarRegion> regions;  // placed in addition to the random ones
};

struct PhantomSpec {
  Extents dims{64, 64, 64};
  std::uint64_t seed = 1;
  double background = 0.2;
  int random_shapes = 0;
  double min_intensity = 0.3;
  double max_intensity = 0.8;
  std::array<double, 3> stretch{1.0, 1.0, 1.0};  // per-axis scale of random shape radii
  std::vector<Shape> shapes;
  StripeSpec stripes;
  LaminarSpec laminar;

  bool has_corruption() const {
    return stripes.count > 0 || !stripes.lines.empty() || laminar.probability > 0 ||
           !laminar.regions.empty();
  }
};

struct Phantom {
  Volume clean;
  Volume stripes;
  Volume laminar;
  Volume corrupted;
};

/// Named presets: "hard-edge", "smooth-laminar", "stripes-only".
PhantomSpec phantom_preset(const std::string& name, std::uint64_t seed = 1);
std::vector<std::string> phantom_preset_names();

Phantom generate_phantom(const PhantomSpec& spec);

/// Stripe and laminar fields of `spec` realized on `dims` (no clamping).
struct Corruption {
  Volume stripes;
  Volume laminar;
};
Corruption corruption_fields(const PhantomSpec& spec, const Extents& dims);

/// clamp(clean + stripes + laminar, 0, 1) with the corruption of `spec`.
Volume corrupt(const Volume& clean, const PhantomSpec& spec);

void to_json(nlohmann::json& j, const PhantomSpec& spec);
void from_json(const nlohmann::json& j, PhantomSpec& spec);

}  // namespace decurtain
