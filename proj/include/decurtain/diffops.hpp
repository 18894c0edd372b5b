#pragma once

// Directional difference operators on volumes, matrix-free.
//
// First differences use the forward difference matrix whose last row is zero
// (constant extension past the far boundary). The z second difference uses the
// three-point stencil with zero first and last rows (linear extension at both
// ends). Axes of length 1 (and length <= 2 for the second difference) give an
// identically zero output. Adjoints apply the transposed matrices exactly.

#include "decurtain/volume.hpp"

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string_view>
#include <vector>

namespace decurtain {

enum class Axis { X, Y, Z };

enum class DiffOp { Dx, Dy, Dz, Dzz, GradY, GradXZ, GradXY, GradXYZ, LapZ };

inline constexpr DiffOp kAllDiffOps[] = {DiffOp::Dx,     DiffOp::Dy,     DiffOp::Dz,
                                         DiffOp::Dzz,    DiffOp::GradY,  DiffOp::GradXZ,
                                         DiffOp::GradXY, DiffOp::GradXYZ, DiffOp::LapZ};

inline std::string_view name(DiffOp op) {
  switch (op) {
    case DiffOp::Dx: return "Dx";
    case DiffOp::Dy: return "Dy";
    case DiffOp::Dz: return "Dz";
    case DiffOp::Dzz: return "Dzz";
    case DiffOp::GradY: return "GradY";
    case DiffOp::GradXZ: return "GradXZ";
    case DiffOp::GradXY: return "GradXY";
    case DiffOp::GradXYZ: return "GradXYZ";
    case DiffOp::LapZ: return "LapZ";
  }
  return "?";
}

/// One stencil applied to one output channel.
enum class Stencil { FwdX, FwdY, FwdZ, SecondZ };

struct OpLayout {
  int channels;
  Stencil stencil[3];
};

inline OpLayout layout(DiffOp op) {
  switch (op) {
    case DiffOp::Dx: return {1, {Stencil::FwdX}};
    case DiffOp::Dy:
    case DiffOp::GradY: return {1, {Stencil::FwdY}};
    case DiffOp::Dz: return {1, {Stencil::FwdZ}};
    case DiffOp::Dzz:
    case DiffOp::LapZ: return {1, {Stencil::SecondZ}};
    case DiffOp::GradXZ: return {2, {Stencil::FwdX, Stencil::FwdZ}};
    case DiffOp::GradXY: return {2, {Stencil::FwdX, Stencil::FwdY}};
    case DiffOp::GradXYZ: return {3, {Stencil::FwdX, Stencil::FwdY, Stencil::FwdZ}};
  }
  throw std::invalid_argument("unknown difference operator");
}

inline int channels(DiffOp op) { return layout(op).channels; }

namespace detail {

inline Stencil forward_stencil(Axis axis) {
  switch (axis) {
    case Axis::X: return Stencil::FwdX;
    case Axis::Y: return Stencil::FwdY;
    case Axis::Z: return Stencil::FwdZ;
  }
  return Stencil::FwdX;
}

// out = A in
template <typename Scalar>
void stencil_forward(const Scalar* in, Scalar* out, const Extents& e, Stencil st) {
  const Eigen::Index nx = e.nx, ny = e.ny, nz = e.nz;
  const Eigen::Index sy = nx, sz = nx * ny;
#pragma omp parallel for schedule(static)
  for (Eigen::Index k = 0; k < nz; ++k) {
    for (Eigen::Index j = 0; j < ny; ++j) {
      const Eigen::Index base = sz * k + sy * j;
      const Scalar* p = in + base;
      Scalar* q = out + base;
      switch (st) {
        case Stencil::FwdX:
          for (Eigen::Index i = 0; i + 1 < nx; ++i) q[i] = p[i + 1] - p[i];
          q[nx - 1] = Scalar(0);
          break;
        case Stencil::FwdY:
          if (j + 1 < ny) {
            for (Eigen::Index i = 0; i < nx; ++i) q[i] = p[i + sy] - p[i];
          } else {
            for (Eigen::Index i = 0; i < nx; ++i) q[i] = Scalar(0);
          }
          break;
        case Stencil::FwdZ:
          if (k + 1 < nz) {
            for (Eigen::Index i = 0; i < nx; ++i) q[i] = p[i + sz] - p[i];
          } else {
            for (Eigen::Index i = 0; i < nx; ++i) q[i] = Scalar(0);
          }
          break;
        case Stencil::SecondZ:
          if (k >= 1 && k + 1 < nz) {
            for (Eigen::Index i = 0; i < nx; ++i) q[i] = p[i - sz] - Scalar(2) * p[i] + p[i + sz];
          } else {
            for (Eigen::Index i = 0; i < nx; ++i) q[i] = Scalar(0);
          }
          break;
      }
    }
  }
}

// out += alpha * A^T w
template <typename Scalar>
void stencil_adjoint_add(const Scalar* w, Scalar* out, const Extents& e, Stencil st, Scalar alpha) {
  const Eigen::Index nx = e.nx, ny = e.ny, nz = e.nz;
  const Eigen::Index sy = nx, sz = nx * ny;
#pragma omp parallel for schedule(static)
  for (Eigen::Index k = 0; k < nz; ++k) {
    for (Eigen::Index j = 0; j < ny; ++j) {
      const Eigen::Index base = sz * k + sy * j;
      const Scalar* p = w + base;
      Scalar* q = out + base;
      switch (st) {
        case Stencil::FwdX:
          // (D^T w)_i = w_{i-1} [i >= 1] - w_i [i <= n-2]
          if (nx == 1) break;
          q[0] -= alpha * p[0];
          for (Eigen::Index i = 1; i + 1 < nx; ++i) q[i] += alpha * (p[i - 1] - p[i]);
          q[nx - 1] += alpha * p[nx - 2];
          break;
        case Stencil::FwdY: {
          if (ny == 1) break;
          const bool has_prev = j >= 1;
          const bool has_self = j + 1 < ny;
          for (Eigen::Index i = 0; i < nx; ++i) {
            Scalar v(0);
            if (has_prev) v += p[i - sy];
            if (has_self) v -= p[i];
            q[i] += alpha * v;
          }
          break;
        }
        case Stencil::FwdZ: {
          if (nz == 1) break;
          const bool has_prev = k >= 1;
          const bool has_self = k + 1 < nz;
          for (Eigen::Index i = 0; i < nx; ++i) {
            Scalar v(0);
            if (has_prev) v += p[i - sz];
            if (has_self) v -= p[i];
            q[i] += alpha * v;
          }
          break;
        }
        case Stencil::SecondZ: {
          // rows r = 1..nz-2 carry (1, -2, 1) at columns (r-1, r, r+1)
          if (nz <= 2) break;
          auto interior = [nz](Eigen::Index r) { return r >= 1 && r + 1 < nz; };
          const bool prev = interior(k - 1), self = interior(k), next = interior(k + 1);
          for (Eigen::Index i = 0; i < nx; ++i) {
            Scalar v(0);
            if (prev) v += p[i - sz];
            if (self) v -= Scalar(2) * p[i];
            if (next) v += p[i + sz];
            q[i] += alpha * v;
          }
          break;
        }
      }
    }
  }
}

}  // namespace detail

/// out = op(v); `out` must already have the operator's shape.
template <typename Scalar>
void apply_into(const BasicVolume<Scalar>& v, DiffOp op, BasicStackedField<Scalar>& out) {
  const OpLayout lay = layout(op);
  const Eigen::Index n = v.size();
  for (int c = 0; c < lay.channels; ++c) {
    detail::stencil_forward(v.array().data(), out.array().data() + c * n, v.extents(),
                            lay.stencil[c]);
  }
}

/// out += alpha * op^T w.
template <typename Scalar>
void apply_adjoint_add(const BasicStackedField<Scalar>& w, DiffOp op, BasicVolume<Scalar>& out,
                       Scalar alpha = Scalar(1)) {
  const OpLayout lay = layout(op);
  if (w.channels() != lay.channels) {
    throw DimensionError("adjoint of " + std::string(name(op)) + " expects " +
                         std::to_string(lay.channels) + " channels, got " +
                         std::to_string(w.channels()));
  }
  require_same_extents(w.extents(), out.extents(), "apply_adjoint");
  const Eigen::Index n = out.size();
  for (int c = 0; c < lay.channels; ++c) {
    detail::stencil_adjoint_add(w.array().data() + c * n, out.array().data(), out.extents(),
                                lay.stencil[c], alpha);
  }
}

template <typename Scalar>
BasicStackedField<Scalar> apply(const BasicVolume<Scalar>& v, DiffOp op) {
  BasicStackedField<Scalar> out(v.extents(), channels(op));
  apply_into(v, op, out);
  return out;
}

template <typename Scalar>
BasicVolume<Scalar> apply_adjoint(const BasicStackedField<Scalar>& w, DiffOp op) {
  BasicVolume<Scalar> out(w.extents());
  apply_adjoint_add(w, op, out);
  return out;
}

template <typename Scalar>
BasicStackedField<Scalar> apply_d1(const BasicVolume<Scalar>& v, Axis axis) {
  BasicStackedField<Scalar> out(v.extents(), 1);
  detail::stencil_forward(v.array().data(), out.array().data(), v.extents(),
                          detail::forward_stencil(axis));
  return out;
}

template <typename Scalar>
BasicStackedField<Scalar> apply_d2z(const BasicVolume<Scalar>& v) {
  return apply(v, DiffOp::Dzz);
}

template <typename Scalar>
BasicVolume<Scalar> apply_adjoint_d1(const BasicStackedField<Scalar>& w, Axis axis) {
  if (w.channels() != 1) throw DimensionError("apply_adjoint_d1 expects a 1-channel field");
  BasicVolume<Scalar> out(w.extents());
  detail::stencil_adjoint_add(w.array().data(), out.array().data(), w.extents(),
                              detail::forward_stencil(axis), Scalar(1));
  return out;
}

template <typename Scalar>
BasicVolume<Scalar> apply_adjoint_d2z(const BasicStackedField<Scalar>& w) {
  return apply_adjoint(w, DiffOp::Dzz);
}

// ---------------------------------------------------------------------------
// Stacked operator K mapping (u, s, l) to the dual blocks.

enum class Model { IC, ICREV };

inline std::string_view name(Model m) { return m == Model::IC ? "ic" : "icrev"; }

struct KBlock {
  int slot;  // 0 = u, 1 = s, 2 = l
  DiffOp op;
};

/// IC:    (GradXZ u, LapZ u, GradY s, GradXY l)
/// ICREV: (GradXYZ u, GradY s, GradXY l)
inline std::vector<KBlock> k_blocks(Model m) {
  if (m == Model::IC) {
    return {{0, DiffOp::GradXZ}, {0, DiffOp::LapZ}, {1, DiffOp::GradY}, {2, DiffOp::GradXY}};
  }
  return {{0, DiffOp::GradXYZ}, {1, DiffOp::GradY}, {2, DiffOp::GradXY}};
}

template <typename Scalar>
using KImage = std::vector<BasicStackedField<Scalar>>;

template <typename Scalar>
const BasicVolume<Scalar>& slot_of(const BasicSplitState<Scalar>& x, int slot) {
  return slot == 0 ? x.u : (slot == 1 ? x.s : x.l);
}

template <typename Scalar>
BasicVolume<Scalar>& slot_of(BasicSplitState<Scalar>& x, int slot) {
  return slot == 0 ? x.u : (slot == 1 ? x.s : x.l);
}

template <typename Scalar>
KImage<Scalar> make_k_image(Model m, const Extents& ext) {
  KImage<Scalar> y;
  for (const auto& b : k_blocks(m)) y.emplace_back(ext, channels(b.op));
  return y;
}

template <typename Scalar>
void apply_K_into(const BasicSplitState<Scalar>& x, Model m, KImage<Scalar>& y) {
  const auto blocks = k_blocks(m);
  for (std::size_t b = 0; b < blocks.size(); ++b) apply_into(slot_of(x, blocks[b].slot), blocks[b].op, y[b]);
}

template <typename Scalar>
KImage<Scalar> apply_K(const BasicSplitState<Scalar>& x, Model m) {
  KImage<Scalar> y = make_k_image<Scalar>(m, x.extents());
  apply_K_into(x, m, y);
  return y;
}

/// x += alpha * K^T y
template <typename Scalar>
void apply_K_adjoint_add(const KImage<Scalar>& y, Model m, BasicSplitState<Scalar>& x,
                         Scalar alpha = Scalar(1)) {
  const auto blocks = k_blocks(m);
  if (y.size() != blocks.size()) {
    throw DimensionError("K adjoint for model " + std::string(name(m)) + " expects " +
                         std::to_string(blocks.size()) + " blocks, got " + std::to_string(y.size()));
  }
  for (std::size_t b = 0; b < blocks.size(); ++b) {
    apply_adjoint_add(y[b], blocks[b].op, slot_of(x, blocks[b].slot), alpha);
  }
}

template <typename Scalar>
BasicSplitState<Scalar> apply_K_adjoint(const KImage<Scalar>& y, Model m) {
  if (y.empty()) throw DimensionError("K adjoint needs at least one block");
  const Extents ext = y.front().extents();
  BasicSplitState<Scalar> x{BasicVolume<Scalar>(ext), BasicVolume<Scalar>(ext), BasicVolume<Scalar>(ext)};
  apply_K_adjoint_add(y, m, x);
  return x;
}

/// Power iteration on K^T K from a seeded random start. Returns the Rayleigh
/// quotient of the last iterate, an estimate of ||K||_2^2 from below that is
/// nondecreasing in `iterations`.
inline double estimate_norm_K(Model m, const Extents& ext, int iterations,
                              std::uint64_t seed = 0x5eedULL) {
  if (iterations < 1) throw std::invalid_argument("estimate_norm_K: iterations must be >= 1");
  std::mt19937_64 rng(seed);
  auto uniform = [&rng] { return double(rng() >> 11) * 0x1.0p-53 * 2.0 - 1.0; };
  SplitState x{Volume(ext), Volume(ext), Volume(ext)};
  for (auto* v : {&x.u, &x.s, &x.l})
    for (Eigen::Index n = 0; n < v->size(); ++n) (*v)[n] = uniform();

  auto sq_norm = [](const SplitState& s) {
    return s.u.array().square().sum() + s.s.array().square().sum() + s.l.array().square().sum();
  };
  KImage<double> y = make_k_image<double>(m, ext);
  double rayleigh = 0.0;
  for (int it = 0; it < iterations; ++it) {
    const double nrm = std::sqrt(sq_norm(x));
    if (nrm == 0.0) return 0.0;
    for (auto* v : {&x.u, &x.s, &x.l}) v->array() /= nrm;
    apply_K_into(x, m, y);
    double ky = 0.0;
    for (const auto& b : y) ky += b.array().square().sum();
    rayleigh = ky;  // <x, K^T K x> with ||x|| = 1
    SplitState next{Volume(ext), Volume(ext), Volume(ext)};
    apply_K_adjoint_add(y, m, next);
    x = std::move(next);
  }
  return rayleigh;
}

}  // namespace decurtain
