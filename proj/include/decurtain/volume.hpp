#pragma once

#include <Eigen/Core>

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>

namespace decurtain {

/// Voxel counts per axis. Linear index is i + nx * (j + ny * k): x fastest,
/// then y, then z (column- and slice-wise vectorization).
struct Extents {
  Eigen::Index nx = 1;
  Eigen::Index ny = 1;
  Eigen::Index nz = 1;

  Eigen::Index size() const { return nx * ny * nz; }
  Eigen::Index index(Eigen::Index i, Eigen::Index j, Eigen::Index k) const {
    return i + nx * (j + ny * k);
  }
  bool valid() const { return nx > 0 && ny > 0 && nz > 0; }

  friend bool operator==(const Extents&, const Extents&) = default;
};

inline std::string to_string(const Extents& e) {
  return std::to_string(e.nx) + "x" + std::to_string(e.ny) + "x" + std::to_string(e.nz);
}

class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

inline void require_same_extents(const Extents& a, const Extents& b, const char* what) {
  if (!(a == b)) {
    throw DimensionError(std::string(what) + ": dimension mismatch " + to_string(a) + " vs " +
                         to_string(b));
  }
}

/// Scalar 3D field.
template <typename Scalar>
class BasicVolume {
 public:
  using Array = Eigen::Array<Scalar, Eigen::Dynamic, 1>;

  BasicVolume() = default;

  explicit BasicVolume(const Extents& ext, Scalar value = Scalar(0)) : ext_(ext) {
    if (!ext.valid()) throw DimensionError("volume extents must be positive, got " + to_string(ext));
    data_ = Array::Constant(ext.size(), value);
  }

  BasicVolume(const Extents& ext, Array data) : ext_(ext), data_(std::move(data)) {
    if (!ext.valid()) throw DimensionError("volume extents must be positive, got " + to_string(ext));
    if (data_.size() != ext.size()) {
      throw DimensionError("volume data length " + std::to_string(data_.size()) +
                           " does not match " + to_string(ext));
    }
  }

  static BasicVolume Zero(const Extents& ext) { return BasicVolume(ext, Scalar(0)); }

  const Extents& extents() const { return ext_; }
  Eigen::Index nx() const { return ext_.nx; }
  Eigen::Index ny() const { return ext_.ny; }
  Eigen::Index nz() const { return ext_.nz; }
  Eigen::Index size() const { return data_.size(); }

  Scalar& operator()(Eigen::Index i, Eigen::Index j, Eigen::Index k) {
    return data_[ext_.index(i, j, k)];
  }
  Scalar operator()(Eigen::Index i, Eigen::Index j, Eigen::Index k) const {
    return data_[ext_.index(i, j, k)];
  }
  Scalar& operator[](Eigen::Index n) { return data_[n]; }
  Scalar operator[](Eigen::Index n) const { return data_[n]; }

  Array& array() { return data_; }
  const Array& array() const { return data_; }

  template <typename Other>
  BasicVolume<Other> cast() const {
    return BasicVolume<Other>(ext_, data_.template cast<Other>());
  }

  bool all_finite() const { return data_.isFinite().all(); }

 private:
  Extents ext_;
  Array data_;
};

/// d stacked volumes over a common base grid; channel j occupies [jN, (j+1)N).
template <typename Scalar>
class BasicStackedField {
 public:
  using Array = Eigen::Array<Scalar, Eigen::Dynamic, 1>;

  BasicStackedField() = default;

  BasicStackedField(const Extents& ext, int channels, Scalar value = Scalar(0))
      : ext_(ext), channels_(channels) {
    if (!ext.valid()) throw DimensionError("field extents must be positive, got " + to_string(ext));
    if (channels < 1 || channels > 3) {
      throw DimensionError("channel count must be 1, 2 or 3, got " + std::to_string(channels));
    }
    data_ = Array::Constant(ext.size() * channels, value);
  }

  BasicStackedField(const Extents& ext, int channels, Array data)
      : BasicStackedField(ext, channels) {
    if (data.size() != ext.size() * channels) {
      throw DimensionError("field data length " + std::to_string(data.size()) +
                           " does not match " + std::to_string(channels) + " x " + to_string(ext));
    }
    data_ = std::move(data);
  }

  /// A single-channel field viewing the same values as `v`.
  static BasicStackedField from_volume(const BasicVolume<Scalar>& v) {
    return BasicStackedField(v.extents(), 1, v.array());
  }

  const Extents& extents() const { return ext_; }
  int channels() const { return channels_; }
  Eigen::Index voxels() const { return ext_.size(); }
  Eigen::Index size() const { return data_.size(); }

  auto channel(int j) { return data_.segment(j * ext_.size(), ext_.size()); }
  auto channel(int j) const { return data_.segment(j * ext_.size(), ext_.size()); }

  BasicVolume<Scalar> channel_volume(int j) const { return BasicVolume<Scalar>(ext_, Array(channel(j))); }

  Array& array() { return data_; }
  const Array& array() const { return data_; }

  Scalar& operator[](Eigen::Index n) { return data_[n]; }
  Scalar operator[](Eigen::Index n) const { return data_[n]; }

  bool same_shape(const BasicStackedField& o) const {
    return ext_ == o.ext_ && channels_ == o.channels_;
  }

 private:
  Extents ext_;
  int channels_ = 1;
  Array data_;
};

/// Primal triple: clean image, stripe component, laminar component.
template <typename Scalar>
struct BasicSplitState {
  BasicVolume<Scalar> u;
  BasicVolume<Scalar> s;
  BasicVolume<Scalar> l;

  const Extents& extents() const { return u.extents(); }
};

using Volume = BasicVolume<double>;
using StackedField = BasicStackedField<double>;
using SplitState = BasicSplitState<double>;

template <typename Scalar>
BasicVolume<Scalar> linear_combine(Scalar a, const BasicVolume<Scalar>& x, Scalar b,
                                   const BasicVolume<Scalar>& y) {
  require_same_extents(x.extents(), y.extents(), "linear_combine");
  return BasicVolume<Scalar>(x.extents(), a * x.array() + b * y.array());
}

/// Sum over voxels of the Euclidean norm of the channel vector. Sequential
/// reduction, so results are bit-reproducible.
template <typename Scalar>
Scalar grouped_norm_21(const BasicStackedField<Scalar>& w) {
  const Eigen::Index n = w.voxels();
  const int d = w.channels();
  const Scalar* p = w.array().data();
  Scalar total(0);
  for (Eigen::Index i = 0; i < n; ++i) {
    Scalar sq(0);
    for (int j = 0; j < d; ++j) sq += p[i + j * n] * p[i + j * n];
    total += std::sqrt(sq);
  }
  return total;
}

template <typename Scalar>
Scalar norm_l1(const BasicStackedField<Scalar>& w) {
  Scalar total(0);
  for (Eigen::Index i = 0; i < w.size(); ++i) total += std::abs(w[i]);
  return total;
}

}  // namespace decurtain
