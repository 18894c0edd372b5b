#pragma once

// Proximal maps used by the primal-dual iteration, plus the voxelwise
// projection onto C = {(u, s, l) : u + s + l = f, 0 <= u <= 1}.

#include "decurtain/volume.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace decurtain {

inline void require_threshold(double lambda) {
  if (!(lambda >= 0.0)) throw std::invalid_argument("shrinkage threshold must be >= 0, got " + std::to_string(lambda));
}

/// Componentwise soft shrinkage, in place.
template <typename Scalar>
void soft_shrink_inplace(BasicStackedField<Scalar>& w, Scalar lambda) {
  require_threshold(double(lambda));
  Scalar* p = w.array().data();
  const Eigen::Index n = w.size();
#pragma omp parallel for schedule(static)
  for (Eigen::Index i = 0; i < n; ++i) {
    const Scalar a = std::abs(p[i]);
    p[i] = a <= lambda ? Scalar(0) : p[i] * (Scalar(1) - lambda / a);
  }
}

/// Per voxel, shrinks the channel vector towards zero by `lambda` in the
/// Euclidean norm. With one channel this is exactly soft shrinkage.
template <typename Scalar>
void coupled_shrink_inplace(BasicStackedField<Scalar>& w, Scalar lambda) {
  if (w.channels() == 1) {
    soft_shrink_inplace(w, lambda);
    return;
  }
  require_threshold(double(lambda));
  const Eigen::Index n = w.voxels();
  const int d = w.channels();
  Scalar* p = w.array().data();
#pragma omp parallel for schedule(static)
  for (Eigen::Index i = 0; i < n; ++i) {
    Scalar sq(0);
    for (int j = 0; j < d; ++j) sq += p[i + j * n] * p[i + j * n];
    const Scalar nrm = std::sqrt(sq);
    const Scalar scale = nrm <= lambda ? Scalar(0) : Scalar(1) - lambda / nrm;
    for (int j = 0; j < d; ++j) p[i + j * n] *= scale;
  }
}

template <typename Scalar>
BasicStackedField<Scalar> soft_shrink(BasicStackedField<Scalar> w, Scalar lambda) {
  soft_shrink_inplace(w, lambda);
  return w;
}

template <typename Scalar>
BasicStackedField<Scalar> coupled_shrink(BasicStackedField<Scalar> w, Scalar lambda) {
  coupled_shrink_inplace(w, lambda);
  return w;
}

/// Projection of a single voxel triple. First onto the plane u + s + l = f;
/// if u leaves [0, 1] it is clamped and (s, l) are projected onto
/// s + l = f - u. `l` is formed as (f - u) - s so the sum is as exact as
/// rounding allows.
template <typename Scalar>
inline void project_voxel(Scalar a, Scalar b, Scalar c, Scalar f, Scalar& u, Scalar& s, Scalar& l) {
  const Scalar shift = (a + b + c - f) / Scalar(3);
  Scalar uc = a - shift;
  if (uc >= Scalar(0) && uc <= Scalar(1)) {
    u = uc;
    s = b - shift;
  } else {
    u = uc < Scalar(0) ? Scalar(0) : Scalar(1);
    const Scalar rest = f - u;
    s = b - (b + c - rest) / Scalar(2);
  }
  l = (f - u) - s;
}

/// Voxelwise projection of (a, b, c) onto C. Writes into `out`, which may
/// alias the inputs.
template <typename Scalar>
void project_C_into(const BasicVolume<Scalar>& a, const BasicVolume<Scalar>& b,
                    const BasicVolume<Scalar>& c, const BasicVolume<Scalar>& f,
                    BasicSplitState<Scalar>& out) {
  require_same_extents(a.extents(), f.extents(), "project_C");
  require_same_extents(b.extents(), f.extents(), "project_C");
  require_same_extents(c.extents(), f.extents(), "project_C");
  require_same_extents(out.u.extents(), f.extents(), "project_C");
  const Eigen::Index n = f.size();
  const Scalar *pa = a.array().data(), *pb = b.array().data(), *pc = c.array().data(),
               *pf = f.array().data();
  Scalar *pu = out.u.array().data(), *ps = out.s.array().data(), *pl = out.l.array().data();
#pragma omp parallel for schedule(static)
  for (Eigen::Index i = 0; i < n; ++i) {
    Scalar u, s, l;
    project_voxel(pa[i], pb[i], pc[i], pf[i], u, s, l);
    pu[i] = u;
    ps[i] = s;
    pl[i] = l;
  }
}

template <typename Scalar>
BasicSplitState<Scalar> project_C(const BasicVolume<Scalar>& a, const BasicVolume<Scalar>& b,
                                  const BasicVolume<Scalar>& c, const BasicVolume<Scalar>& f) {
  BasicSplitState<Scalar> out{BasicVolume<Scalar>(f.extents()), BasicVolume<Scalar>(f.extents()),
                              BasicVolume<Scalar>(f.extents())};
  project_C_into(a, b, c, f, out);
  return out;
}

}  // namespace decurtain
