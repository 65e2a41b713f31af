// Copyright 2026 The featrec Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <string>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "featrec/errors.hpp"
#include "featrec/rng.hpp"
#include "featrec/sym.hpp"

namespace featrec {

enum class PairKind { Equality, NullDirection };

// One pair comparison. Equality asserts y'Phi y = z'Phi z against the
// generating target; NullDirection (z = 0) asserts y'Phi y = 0, which for a
// PSD solution forces Phi y = 0.
struct PairConstraint {
  PairKind kind = PairKind::Equality;
  Activation y;
  Activation z;
};

inline PairConstraint make_equality(Activation y, Activation z) {
  return PairConstraint{PairKind::Equality, std::move(y), std::move(z)};
}

inline PairConstraint make_null_direction(Activation v) {
  Activation zero = Activation::Zero(v.size());
  return PairConstraint{PairKind::NullDirection, std::move(v), std::move(zero)};
}

struct TripletFeedback {
  Activation x;
  Activation y;
  Activation z;
  int label = 0;  // sign((x-y)'Phi(x-y) - (x-z)'Phi(x-z)), in {-1, 0, +1}
};

using FeedbackItem = std::variant<PairConstraint, TripletFeedback>;

struct FeedbackSet {
  int dim = 0;
  std::string method;
  std::uint64_t seed = 0;
  std::vector<FeedbackItem> items;

  std::size_t size() const { return items.size(); }
};

enum class TeachMethod { Eigen, SparseConstruct, Sample, SparseSample };

inline std::string to_string(TeachMethod m) {
  switch (m) {
    case TeachMethod::Eigen: return "eigen";
    case TeachMethod::SparseConstruct: return "sparse-construct";
    case TeachMethod::Sample: return "sample";
    case TeachMethod::SparseSample: return "sparse-sample";
  }
  return "unknown";
}

inline TeachMethod teach_method_from_string(const std::string& s) {
  if (s == "eigen") return TeachMethod::Eigen;
  if (s == "sparse-construct") return TeachMethod::SparseConstruct;
  if (s == "sample") return TeachMethod::Sample;
  if (s == "sparse-sample") return TeachMethod::SparseSample;
  throw error("unknown teach method: " + s);
}

// Labels a triplet against the target; |difference| within 1e-10 of the quad
// scale counts as the 0 label.
inline TripletFeedback make_triplet(const Activation& x, const Activation& y,
                                    const Activation& z, const FeatureMatrix& target) {
  const double qa = target.quad(x - y);
  const double qb = target.quad(x - z);
  TripletFeedback t{x, y, z, 0};
  const double slack = 1e-10 * std::max({std::abs(qa), std::abs(qb), 1.0});
  if (qa - qb > slack)
    t.label = 1;
  else if (qb - qa > slack)
    t.label = -1;
  return t;
}

// Checks a pair constraint against the target that generated it. Tolerances
// scale with the target's top eigenvalue.
inline bool check_pair(const PairConstraint& pc, const FeatureMatrix& target,
                       double rel_tol = 1e-9) {
  const double scale = std::max(target.max_eigenvalue(), 0.0);
  const double qy = target.quad(pc.y);
  if (pc.kind == PairKind::NullDirection) return std::abs(qy) <= rel_tol * std::max(scale, 1e-300);
  const double qz = target.quad(pc.z);
  return std::abs(qy - qz) <= rel_tol * std::max({std::abs(qy), std::abs(qz), scale});
}

// Agent-side reduction of a labeled triplet to an equality pair by rescaling
// the smaller quad-form side (x-y vs x-z anchored at x).
inline PairConstraint reduce_triplet_to_pair(const TripletFeedback& t,
                                             const FeatureMatrix& target) {
  const Activation a = t.x - t.y;
  const Activation b = t.x - t.z;
  const double qa = target.quad(a);
  const double qb = target.quad(b);
  const double tol = target.quad_tol();
  const bool a_null = qa <= tol;
  const bool b_null = qb <= tol;
  if (a_null && b_null) {
    if (a.norm() == 0.0) return make_null_direction(b);
    if (b.norm() == 0.0) return make_null_direction(a);
    return make_equality(a, b);
  }
  if (qa > qb) {
    if (b_null) {
      if (b.norm() == 0.0)
        throw reduction_error("reduce_triplet_to_pair: x = z with a strict label");
      throw reduction_error("reduce_triplet_to_pair: zero quad form on the smaller side");
    }
    return make_equality(a, std::sqrt(qa / qb) * b);
  }
  if (qb > qa) {
    if (a_null) {
      if (a.norm() == 0.0)
        throw reduction_error("reduce_triplet_to_pair: x = y with a strict label");
      throw reduction_error("reduce_triplet_to_pair: zero quad form on the smaller side");
    }
    return make_equality(std::sqrt(qb / qa) * a, b);
  }
  return make_equality(a, b);
}

// Constructive teacher built on the eigendecomposition: one null pair per
// basis vector of null(Phi*), then equality pairs (b, sqrt(c_b) y) for the
// rank-1 basis B = {u_i} u {u_i + u_j, i < j} over the top-r eigenvectors,
// with reference y = sum of the eigenvectors and one redundant pair dropped.
// Total size r(r+1)/2 + (p - r) - 1.
inline FeedbackSet teach_eigendecomposition(const FeatureMatrix& target) {
  const int p = target.dim();
  const int r = target.rank();
  if (r == 0) throw degenerate_error("teach_eigendecomposition: zero target");
  const Eigendecomposition& decomp = target.eigen();

  FeedbackSet fs;
  fs.dim = p;
  fs.method = to_string(TeachMethod::Eigen);
  for (int i = r; i < p; ++i) fs.items.push_back(make_null_direction(decomp.vectors.col(i)));

  Activation ref = Activation::Zero(p);
  for (int i = 0; i < r; ++i) ref += decomp.vectors.col(i);
  const double qref = target.quad(ref);  // sum of the positive eigenvalues

  std::vector<Activation> basis;
  basis.reserve(sym_len(r));
  for (int j = 0; j < r; ++j) {
    basis.push_back(decomp.vectors.col(j));
    for (int i = 0; i < j; ++i)
      basis.push_back(decomp.vectors.col(i) + decomp.vectors.col(j));
  }
  // The basis pairs carry exactly one linear dependency; dropping the pair
  // whose left element equals the reference keeps the span full when y is
  // itself a basis element (r <= 2), otherwise any one pair is droppable and
  // the last enumerated one is dropped for determinism.
  const std::size_t drop = (r == 1) ? 0 : (r == 2) ? 2 : basis.size() - 1;
  for (std::size_t k = 0; k < basis.size(); ++k) {
    if (k == drop) continue;
    const double c = target.quad(basis[k]) / qref;
    fs.items.push_back(make_equality(basis[k], std::sqrt(c) * ref));
  }
  return fs;
}

// Constructive teacher restricted to at-most-2-sparse activations: enumerates
// B = {e_i} u {e_i + e_j, i < j}, takes the first element with a positive
// quad form as the reference, and emits one pair per remaining element
// (equality against the rescaled reference, or a null direction).
inline FeedbackSet teach_sparse_constructive(const FeatureMatrix& target) {
  const int p = target.dim();
  const double tol = target.quad_tol();

  std::vector<Activation> basis;
  basis.reserve(sym_len(p));
  for (int i = 0; i < p; ++i) basis.push_back(Activation::Unit(p, i));
  for (int i = 0; i < p; ++i)
    for (int j = i + 1; j < p; ++j)
      basis.push_back(Activation::Unit(p, i) + Activation::Unit(p, j));

  int ref_index = -1;
  for (std::size_t k = 0; k < basis.size(); ++k) {
    if (target.quad(basis[k]) > tol) {
      ref_index = static_cast<int>(k);
      break;
    }
  }
  if (ref_index < 0)
    throw degenerate_error("teach_sparse_constructive: all basis quad forms vanish");

  FeedbackSet fs;
  fs.dim = p;
  fs.method = to_string(TeachMethod::SparseConstruct);
  const Activation& ref = basis[ref_index];
  const double qref = target.quad(ref);
  for (std::size_t k = 0; k < basis.size(); ++k) {
    if (static_cast<int>(k) == ref_index) continue;
    const double q = target.quad(basis[k]);
    if (q > tol)
      fs.items.push_back(make_equality(basis[k], std::sqrt(q / qref) * ref));
    else
      fs.items.push_back(make_null_direction(basis[k]));
  }
  return fs;
}

// n i.i.d. standard Gaussian activations, drawn coordinate by coordinate.
inline std::vector<Activation> sample_general(int n, int p, std::uint64_t seed) {
  if (n < 1) throw error("sample_general: n must be positive");
  Rng rng(seed);
  std::vector<Activation> out;
  out.reserve(n);
  for (int k = 0; k < n; ++k) {
    Activation v(p);
    for (int i = 0; i < p; ++i) v(i) = rng.normal();
    out.push_back(std::move(v));
  }
  return out;
}

// Per-index sparse law: coordinate i is 0 with probability zero_prob[i],
// otherwise Uniform(0, 1].
struct SparseDistribution {
  int dim = 0;
  Eigen::VectorXd zero_prob;

  static SparseDistribution uniform(int p, double zero_prob_all) {
    if (zero_prob_all < 0.0 || zero_prob_all > 1.0)
      throw error("SparseDistribution: zero_prob must lie in [0,1]");
    SparseDistribution d;
    d.dim = p;
    d.zero_prob = Eigen::VectorXd::Constant(p, zero_prob_all);
    return d;
  }
};

namespace detail {
inline Activation draw_sparse(const SparseDistribution& dist, Rng& rng) {
  Activation v(dist.dim);
  for (int i = 0; i < dist.dim; ++i) {
    const double gate = rng.uniform();
    // Two draws per coordinate regardless of the gate keep the stream layout
    // fixed, so rejection-capped sampling stays reproducible.
    const double value = rng.uniform_pos();
    v(i) = gate < dist.zero_prob(i) ? 0.0 : value;
  }
  return v;
}
}  // namespace detail

inline std::vector<Activation> sample_sparse(int n, const SparseDistribution& dist,
                                             std::uint64_t seed) {
  if (n < 1) throw error("sample_sparse: n must be positive");
  Rng rng(seed);
  std::vector<Activation> out;
  out.reserve(n);
  for (int k = 0; k < n; ++k) out.push_back(detail::draw_sparse(dist, rng));
  return out;
}

// Sparse draws conditioned on a hard sparsity cap (resample rejected draws).
inline std::vector<Activation> sample_sparse_capped(int n, const SparseDistribution& dist,
                                                    int max_sparsity, std::uint64_t seed) {
  if (n < 1) throw error("sample_sparse_capped: n must be positive");
  if (max_sparsity < 0) throw error("sample_sparse_capped: negative cap");
  Rng rng(seed);
  std::vector<Activation> out;
  out.reserve(n);
  while (static_cast<int>(out.size()) < n) {
    Activation v = detail::draw_sparse(dist, rng);
    if (sparsity(v) <= max_sparsity) out.push_back(std::move(v));
  }
  return out;
}

// Rescaled pair (x, sqrt(lambda_x) y) with lambda_x = quad(x)/quad(y); a
// sample in the target's null space becomes a null direction instead.
inline PairConstraint rescale_pair(const Activation& x, const Activation& y,
                                   const FeatureMatrix& target) {
  const double tol = target.quad_tol();
  const double qy = target.quad(y);
  if (qy <= tol) throw degenerate_error("rescale_pair: reference is target-null");
  const double qx = target.quad(x);
  if (qx <= tol) return make_null_direction(x);
  return make_equality(x, std::sqrt(qx / qy) * y);
}

// Builds the sampled-feedback set: the first sample with a positive quad form
// becomes the shared reference, every other sample is rescaled against it.
inline FeedbackSet teach_from_samples(const std::vector<Activation>& samples,
                                      const FeatureMatrix& target) {
  int ref_index = -1;
  const double tol = target.quad_tol();
  for (std::size_t k = 0; k < samples.size(); ++k) {
    if (target.quad(samples[k]) > tol) {
      ref_index = static_cast<int>(k);
      break;
    }
  }
  if (ref_index < 0) throw degenerate_error("teach_from_samples: no sample with positive quad form");
  FeedbackSet fs;
  fs.dim = target.dim();
  fs.method = to_string(TeachMethod::Sample);
  const Activation& ref = samples[ref_index];
  for (std::size_t k = 0; k < samples.size(); ++k) {
    if (static_cast<int>(k) == ref_index) continue;
    fs.items.push_back(rescale_pair(samples[k], ref, target));
  }
  return fs;
}

// ---------------------------------------------------------------------------
// Feedback file: JSON lines with a {"dim":p,"method":m,"seed":s} header.

namespace detail {

inline std::vector<double> to_std(const Activation& v) {
  return std::vector<double>(v.data(), v.data() + v.size());
}

inline Activation from_std(const std::vector<double>& v) {
  Activation a(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) a(static_cast<Eigen::Index>(i)) = v[i];
  return a;
}

}  // namespace detail

inline void write_feedback_jsonl(const std::string& path, const FeedbackSet& fs) {
  std::ofstream out(path);
  if (!out) throw io_error("cannot open for writing: " + path);
  nlohmann::json header = {{"dim", fs.dim}, {"method", fs.method}, {"seed", fs.seed}};
  out << header.dump() << '\n';
  for (const FeedbackItem& item : fs.items) {
    nlohmann::json j;
    if (const auto* pc = std::get_if<PairConstraint>(&item)) {
      if (pc->kind == PairKind::NullDirection) {
        j = {{"kind", "null"}, {"v", detail::to_std(pc->y)}};
      } else {
        j = {{"kind", "pair"}, {"y", detail::to_std(pc->y)}, {"z", detail::to_std(pc->z)}};
      }
    } else {
      const auto& t = std::get<TripletFeedback>(item);
      j = {{"kind", "triplet"},
           {"x", detail::to_std(t.x)},
           {"y", detail::to_std(t.y)},
           {"z", detail::to_std(t.z)},
           {"label", t.label}};
    }
    out << j.dump() << '\n';
  }
  if (!out) throw io_error("write failed: " + path);
}

inline FeedbackSet read_feedback_jsonl(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw io_error("cannot open for reading: " + path);
  std::string line;
  if (!std::getline(in, line)) throw io_error("feedback file is empty: " + path);
  FeedbackSet fs;
  try {
    const nlohmann::json header = nlohmann::json::parse(line);
    fs.dim = header.at("dim").get<int>();
    fs.method = header.value("method", std::string{});
    fs.seed = header.value("seed", std::uint64_t{0});
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      const nlohmann::json j = nlohmann::json::parse(line);
      const std::string kind = j.at("kind").get<std::string>();
      if (kind == "pair") {
        fs.items.push_back(make_equality(detail::from_std(j.at("y").get<std::vector<double>>()),
                                         detail::from_std(j.at("z").get<std::vector<double>>())));
      } else if (kind == "null") {
        fs.items.push_back(
            make_null_direction(detail::from_std(j.at("v").get<std::vector<double>>())));
      } else if (kind == "triplet") {
        TripletFeedback t;
        t.x = detail::from_std(j.at("x").get<std::vector<double>>());
        t.y = detail::from_std(j.at("y").get<std::vector<double>>());
        t.z = detail::from_std(j.at("z").get<std::vector<double>>());
        t.label = j.at("label").get<int>();
        fs.items.push_back(std::move(t));
      } else {
        throw io_error("feedback file: unknown kind '" + kind + "'");
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw io_error("feedback file parse error in " + path + ": " + e.what());
  }
  for (const FeedbackItem& item : fs.items) {
    const Eigen::Index d =
        std::holds_alternative<PairConstraint>(item) ? std::get<PairConstraint>(item).y.size()
                                                     : std::get<TripletFeedback>(item).x.size();
    if (d != fs.dim) throw io_error("feedback file: item dimension mismatch in " + path);
  }
  return fs;
}

}  // namespace featrec
