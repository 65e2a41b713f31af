// Copyright 2026 The featrec Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <utility>

#include "featrec/errors.hpp"

namespace featrec {

// Rank cutoff, relative to the largest eigenvalue / singular value.
inline constexpr double kRankTol = 1e-9;
// Default nullspace cutoff, relative to sigma_max.
inline constexpr double kNullspaceTol = 1e-10;
// Symmetry slack, relative to max(1, maxabs(entries)).
inline constexpr double kSymTol = 1e-12;
// Quad-form null cutoff, relative to the largest eigenvalue.
inline constexpr double kQuadTol = 1e-12;

// Activations are plain dense vectors; sparsity is a derived property.
using Activation = Eigen::VectorXd;

inline int sparsity(const Activation& a) {
  int count = 0;
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    if (a[i] != 0.0) ++count;
  }
  return count;
}

inline bool is_s_sparse(const Activation& a, int s) { return sparsity(a) <= s; }

inline int sym_len(int p) { return p * (p + 1) / 2; }

// Slot of the off-diagonal pair (i, j), i < j, in the sym-vec layout
// [(1,1),...,(p,p),(1,2),(1,3),...,(p-1,p)].
inline int sym_off_index(int i, int j, int p) {
  return p + i * (p - 1) - i * (i - 1) / 2 + (j - i - 1);
}

struct Eigendecomposition {
  Eigen::VectorXd values;   // descending
  Eigen::MatrixXd vectors;  // orthonormal columns, aligned with values
};

inline bool is_symmetric_within_tol(const Eigen::MatrixXd& a) {
  if (a.rows() != a.cols()) return false;
  const double scale = std::max(1.0, a.cwiseAbs().maxCoeff());
  return (a - a.transpose()).cwiseAbs().maxCoeff() <= kSymTol * scale;
}

// Symmetric PSD matrix with a lazily cached eigendecomposition. Construction
// validates symmetry and stores the symmetrized entries; PSD is checked where
// a contract needs it (the type also carries candidate solutions that may
// fail the PSD test). The eigen cache is populated idempotently; warm it
// before sharing across threads or keep a single writer.
class FeatureMatrix {
 public:
  explicit FeatureMatrix(Eigen::MatrixXd entries) {
    if (entries.rows() != entries.cols())
      throw dim_error("FeatureMatrix: entries must be square");
    if (entries.rows() == 0) throw dim_error("FeatureMatrix: empty matrix");
    if (!is_symmetric_within_tol(entries))
      throw symmetry_error("FeatureMatrix: asymmetry exceeds tolerance");
    entries_ = 0.5 * (entries + entries.transpose());
  }

  int dim() const { return static_cast<int>(entries_.rows()); }
  const Eigen::MatrixXd& entries() const { return entries_; }
  double trace() const { return entries_.trace(); }
  double quad(const Activation& v) const {
    if (v.size() != entries_.rows()) throw dim_error("quad: dimension mismatch");
    return v.dot(entries_ * v);
  }

  const Eigendecomposition& eigen() const {
    if (!eigen_) {
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(entries_);
      Eigendecomposition decomp;
      decomp.values = solver.eigenvalues().reverse();
      decomp.vectors = solver.eigenvectors().rowwise().reverse();
      eigen_ = std::move(decomp);
    }
    return *eigen_;
  }

  double max_eigenvalue() const { return eigen().values(0); }

  // Count of eigenvalues above the relative rank cutoff.
  int rank() const {
    const Eigen::VectorXd& vals = eigen().values;
    const double cutoff = kRankTol * std::max(vals(0), 0.0);
    int r = 0;
    for (Eigen::Index i = 0; i < vals.size(); ++i) {
      if (vals(i) > cutoff) ++r;
    }
    return r;
  }

  bool is_psd() const {
    const Eigen::VectorXd& vals = eigen().values;
    const double floor = -kRankTol * std::max(vals(0), 0.0);
    return vals(vals.size() - 1) >= floor;
  }

  // Threshold below which a quad form counts as null. Relative to the top
  // eigenvalue so teachers are invariant to positive rescaling of the target.
  double quad_tol() const { return kQuadTol * std::max(max_eigenvalue(), 0.0); }

 private:
  Eigen::MatrixXd entries_;
  mutable std::optional<Eigendecomposition> eigen_;
};

// Sym-vectorization: diagonal entries copied, off-diagonal slot (i,j) holds
// A_ij + A_ji. A fixed linear bijection between Sym(p) and R^{p(p+1)/2},
// used for constraint rows and rank computations.
struct SymVec {
  int dim = 0;
  Eigen::VectorXd data;
};

inline SymVec sym_vec(const Eigen::MatrixXd& a) {
  if (!is_symmetric_within_tol(a)) throw symmetry_error("sym_vec: input not symmetric");
  const int p = static_cast<int>(a.rows());
  SymVec v;
  v.dim = p;
  v.data.resize(sym_len(p));
  for (int i = 0; i < p; ++i) v.data(i) = a(i, i);
  for (int i = 0; i < p; ++i)
    for (int j = i + 1; j < p; ++j) v.data(sym_off_index(i, j, p)) = a(i, j) + a(j, i);
  return v;
}

inline SymVec sym_vec(const FeatureMatrix& a) { return sym_vec(a.entries()); }

inline Eigen::MatrixXd sym_unvec(const SymVec& v) {
  const int p = v.dim;
  if (v.data.size() != sym_len(p)) throw dim_error("sym_unvec: length mismatch");
  Eigen::MatrixXd a(p, p);
  for (int i = 0; i < p; ++i) a(i, i) = v.data(i);
  for (int i = 0; i < p; ++i)
    for (int j = i + 1; j < p; ++j) {
      const double half = 0.5 * v.data(sym_off_index(i, j, p));
      a(i, j) = half;
      a(j, i) = half;
    }
  return a;
}

// Isometric variant (off-diagonals scaled by sqrt(2)): dot products of svec
// coordinates equal Frobenius inner products, which the learner's projections
// rely on. Same slot layout as sym_vec.
inline Eigen::VectorXd svec(const Eigen::MatrixXd& a) {
  const int p = static_cast<int>(a.rows());
  Eigen::VectorXd v(sym_len(p));
  const double root2 = std::sqrt(2.0);
  for (int i = 0; i < p; ++i) v(i) = a(i, i);
  for (int i = 0; i < p; ++i)
    for (int j = i + 1; j < p; ++j)
      v(sym_off_index(i, j, p)) = root2 * 0.5 * (a(i, j) + a(j, i));
  return v;
}

inline Eigen::MatrixXd sunvec(const Eigen::VectorXd& v, int p) {
  if (v.size() != sym_len(p)) throw dim_error("sunvec: length mismatch");
  Eigen::MatrixXd a(p, p);
  const double inv_root2 = 1.0 / std::sqrt(2.0);
  for (int i = 0; i < p; ++i) a(i, i) = v(i);
  for (int i = 0; i < p; ++i)
    for (int j = i + 1; j < p; ++j) {
      const double entry = inv_root2 * v(sym_off_index(i, j, p));
      a(i, j) = entry;
      a(j, i) = entry;
    }
  return a;
}

// Frobenius inner product sum_ij A_ij B_ij.
inline double frob_inner(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw dim_error("frob_inner: dimension mismatch");
  return a.cwiseProduct(b).sum();
}

inline Eigendecomposition eigendecompose(const FeatureMatrix& phi) { return phi.eigen(); }

inline Eigendecomposition eigendecompose(const Eigen::MatrixXd& a) {
  return FeatureMatrix(a).eigen();
}

// Orthonormal basis of {x : Mx = 0}; columns of the returned matrix.
// Vectors whose singular values fall at or below tol * sigma_max.
inline Eigen::MatrixXd nullspace(const Eigen::MatrixXd& m, double tol = kNullspaceTol) {
  if (m.rows() == 0 || m.cols() == 0) throw dim_error("nullspace: empty matrix");
  if (tol <= 0.0) throw error("nullspace: tol must be positive");
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(m, Eigen::ComputeFullV);
  const Eigen::VectorXd& sv = svd.singularValues();
  const double smax = sv.size() > 0 ? sv(0) : 0.0;
  const double cutoff = tol * smax;
  int rank = 0;
  for (Eigen::Index i = 0; i < sv.size(); ++i) {
    if (sv(i) > cutoff) ++rank;
  }
  const int dim = static_cast<int>(m.cols());
  return svd.matrixV().rightCols(dim - rank);
}

struct EquivalenceResult {
  bool equivalent = false;
  double scale = 0.0;  // lambda with A ~ lambda * B
};

// Tests A = lambda * B for some lambda > 0, with lambda the Frobenius
// least-squares projection <A,B>/<B,B>.
inline EquivalenceResult is_feature_equivalent(const FeatureMatrix& a, const FeatureMatrix& b,
                                               double tol) {
  if (a.dim() != b.dim()) throw dim_error("is_feature_equivalent: dimension mismatch");
  const double bb = frob_inner(b.entries(), b.entries());
  if (bb == 0.0) throw degenerate_error("is_feature_equivalent: B is zero");
  EquivalenceResult result;
  result.scale = frob_inner(a.entries(), b.entries()) / bb;
  const double residual = (a.entries() - result.scale * b.entries()).norm();
  result.equivalent = result.scale > 0.0 && residual <= tol * a.entries().norm();
  return result;
}

// Phi = U U^T with U^T U = diag(lambda_1..lambda_r) descending; U is the
// top-r eigenvector block scaled by sqrt of the eigenvalues. Rank zero yields
// an empty p x 0 matrix.
inline Eigen::MatrixXd orthogonal_cholesky(const FeatureMatrix& phi) {
  const Eigendecomposition& decomp = phi.eigen();
  const int r = phi.rank();
  Eigen::MatrixXd u(phi.dim(), r);
  for (int i = 0; i < r; ++i) u.col(i) = decomp.vectors.col(i) * std::sqrt(decomp.values(i));
  return u;
}

}  // namespace featrec
