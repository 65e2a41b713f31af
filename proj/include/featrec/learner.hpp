// Copyright 2026 The featrec Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <iostream>
#include <vector>

#include "featrec/errors.hpp"
#include "featrec/feedback.hpp"
#include "featrec/sym.hpp"

namespace featrec {

// Linear system induced by a feedback set over sym-vectorized Sym(p): one
// sym_vec(yy' - zz') row per equality pair, null directions kept separately
// since each contributes the p constraints Phi v = 0 (valid for PSD
// solutions: a vanishing quad form forces the vector into the null space).
struct ConstraintSystem {
  int dim = 0;
  std::vector<SymVec> rows;
  std::vector<Activation> null_dirs;

  // Stacked rows in the isometric svec coordinates, where row-vector dot
  // solution-vector equals the Frobenius pairing of constraint and solution.
  Eigen::MatrixXd stacked_svec() const {
    const int p = dim;
    const int cols = sym_len(p);
    const Eigen::Index count =
        static_cast<Eigen::Index>(rows.size()) + static_cast<Eigen::Index>(null_dirs.size()) * p;
    Eigen::MatrixXd m(count, cols);
    Eigen::Index at = 0;
    const double inv_root2 = 1.0 / std::sqrt(2.0);
    for (const SymVec& row : rows) {
      // sym_vec off-diagonal slots hold M_ij + M_ji = 2*M_ij; svec wants
      // sqrt(2)*M_ij, hence the 1/sqrt(2) rescale.
      Eigen::VectorXd r = row.data;
      r.tail(cols - p) *= inv_root2;
      m.row(at++) = r;
    }
    for (const Activation& v : null_dirs) {
      for (int j = 0; j < p; ++j) {
        Eigen::MatrixXd constraint = Eigen::MatrixXd::Zero(p, p);
        constraint.row(j) += 0.5 * v.transpose();
        constraint.col(j) += 0.5 * v;
        m.row(at++) = svec(constraint);
      }
    }
    return m;
  }

  int rank() const {
    if (rows.empty() && null_dirs.empty()) return 0;
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(stacked_svec());
    const Eigen::VectorXd& sv = svd.singularValues();
    const double cutoff = kRankTol * (sv.size() > 0 ? sv(0) : 0.0);
    int r = 0;
    for (Eigen::Index i = 0; i < sv.size(); ++i)
      if (sv(i) > cutoff) ++r;
    return r;
  }
};

inline ConstraintSystem build_system(const FeedbackSet& fs) {
  if (fs.items.empty()) throw degenerate_error("build_system: empty feedback set");
  ConstraintSystem sys;
  sys.dim = fs.dim;
  for (const FeedbackItem& item : fs.items) {
    if (std::holds_alternative<TripletFeedback>(item))
      throw reduction_error("build_system: triplets must be reduced to pairs first");
    const PairConstraint& pc = std::get<PairConstraint>(item);
    if (pc.y.size() != fs.dim) throw dim_error("build_system: item dimension mismatch");
    if (pc.kind == PairKind::NullDirection) {
      sys.null_dirs.push_back(pc.y);
    } else {
      sys.rows.push_back(
          sym_vec(Eigen::MatrixXd(pc.y * pc.y.transpose() - pc.z * pc.z.transpose())));
    }
  }
  return sys;
}

inline int version_space_dim(const ConstraintSystem& sys) {
  return sym_len(sys.dim) - sys.rank();
}

struct SolveReport {
  FeatureMatrix solution;
  int version_space_dim = 0;
  bool unique_up_to_scale = false;
  double residual = 0.0;
};

// Max absolute constraint violation of a candidate solution.
inline double system_residual(const ConstraintSystem& sys, const FeatureMatrix& phi) {
  double worst = 0.0;
  const Eigen::VectorXd sol = svec(phi.entries());
  const int cols = sym_len(sys.dim);
  const double inv_root2 = 1.0 / std::sqrt(2.0);
  for (const SymVec& row : sys.rows) {
    Eigen::VectorXd r = row.data;
    r.tail(cols - sys.dim) *= inv_root2;
    worst = std::max(worst, std::abs(r.dot(sol)));
  }
  for (const Activation& v : sys.null_dirs)
    worst = std::max(worst, (phi.entries() * v).norm());
  return worst;
}

namespace detail {

inline Eigen::MatrixXd project_psd(const Eigen::MatrixXd& a) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(0.5 * (a + a.transpose()));
  Eigen::VectorXd vals = solver.eigenvalues().cwiseMax(0.0);
  return solver.eigenvectors() * vals.asDiagonal() * solver.eigenvectors().transpose();
}

// Alternating projection between the constraint nullspace (columns of basis,
// svec coordinates, orthonormal) and the PSD cone. The intersection contains
// the generating target, so a nonzero PSD point exists whenever the feedback
// is consistent.
inline Eigen::MatrixXd psd_point_in_subspace(const Eigen::MatrixXd& basis, int p,
                                             int max_iters = 500, double tol = 1e-9) {
  Eigen::VectorXd coords = basis.transpose() * svec(Eigen::MatrixXd::Identity(p, p));
  Eigen::VectorXd point = basis * coords;
  if (point.norm() < 1e-12) point = basis.col(0);
  point.normalize();
  Eigen::MatrixXd current = sunvec(point, p);
  for (int iter = 0; iter < max_iters; ++iter) {
    const Eigen::MatrixXd cone = project_psd(current);
    if ((cone - current).norm() <= tol * std::max(1.0, cone.norm())) {
      const double norm = cone.norm();
      if (norm < 1e-12) break;
      return cone;
    }
    Eigen::VectorXd projected = basis * (basis.transpose() * svec(cone));
    const double norm = projected.norm();
    if (norm < 1e-14) break;  // collapsed toward the zero matrix
    current = sunvec(projected / norm, p);
  }
  throw infeasible_error("solve_nullspace: no PSD point found in the version space");
}

}  // namespace detail

// Exact version-space solver. Computes the nullspace of the stacked system;
// a one-dimensional version space yields the unique solution normalized to
// trace 1 (sign fixed so the dominant eigenvalue is positive), a larger one
// yields some PSD representative via alternating projection.
inline SolveReport solve_nullspace(const ConstraintSystem& sys) {
  const int p = sys.dim;
  if (p < 1) throw dim_error("solve_nullspace: dimension must be positive");
  const int total = sym_len(p);

  Eigen::MatrixXd basis;  // orthonormal columns spanning the version space (svec coords)
  int vsd = 0;
  if (sys.rows.empty() && sys.null_dirs.empty()) {
    std::cerr << "featrec: warning: empty constraint system, version space is all of Sym("
              << p << ")\n";
    basis = Eigen::MatrixXd::Identity(total, total);
    vsd = total;
  } else {
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(sys.stacked_svec(), Eigen::ComputeFullV);
    const Eigen::VectorXd& sv = svd.singularValues();
    const double cutoff = kRankTol * (sv.size() > 0 ? sv(0) : 0.0);
    int rank = 0;
    for (Eigen::Index i = 0; i < sv.size(); ++i)
      if (sv(i) > cutoff) ++rank;
    vsd = total - rank;
    if (vsd == 0)
      throw infeasible_error("solve_nullspace: constraints admit only the zero matrix");
    basis = svd.matrixV().rightCols(vsd);
  }

  Eigen::MatrixXd solution;
  bool unique = false;
  if (vsd == 1) {
    solution = sunvec(basis.col(0), p);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(solution);
    Eigen::VectorXd vals = eig.eigenvalues();
    // Fix the sign so the dominant-magnitude eigenvalue is positive.
    if (std::abs(vals(0)) > std::abs(vals(vals.size() - 1))) {
      solution = -solution;
      vals = Eigen::VectorXd(-vals);
    }
    const double top = vals.maxCoeff();
    if (vals.minCoeff() < -kRankTol * std::max(top, 0.0))
      throw infeasible_error("solve_nullspace: unique direction is not PSD up to sign");
    unique = true;
  } else {
    solution = detail::psd_point_in_subspace(basis, p);
  }

  const double tr = solution.trace();
  if (tr <= 0.0) throw infeasible_error("solve_nullspace: non-positive trace after sign fix");
  solution /= tr;

  SolveReport report{FeatureMatrix(solution), vsd, unique, 0.0};
  report.residual = system_residual(sys, report.solution);
  return report;
}

}  // namespace featrec
