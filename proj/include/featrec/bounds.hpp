// Copyright 2026 The featrec Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "featrec/errors.hpp"

namespace featrec {

// Terms of the sparse-sampling coverage bound. P1 is the probability that a
// sparse draw activates a prescribed index (with at most s-1 further ones),
// P2 the probability that a prescribed index pair co-activates. log_p_s is
// log(P! * P1 * P2) with P = p(p+1)/2, kept in log space because the
// factorial dwarfs the probabilities.
struct SparseCoverageTerms {
  double p1 = 0.0;
  double p2 = 0.0;
  double log_p_s = 0.0;
};

namespace detail {

inline double log_choose(int n, int k) {
  return std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0);
}

// log(sum_i exp(terms_i)) accumulated pairwise.
inline double log_sum_exp(const double* terms, int count) {
  double max_term = -std::numeric_limits<double>::infinity();
  for (int i = 0; i < count; ++i) max_term = std::max(max_term, terms[i]);
  if (!std::isfinite(max_term)) return max_term;
  double sum = 0.0;
  for (int i = 0; i < count; ++i) sum += std::exp(terms[i] - max_term);
  return max_term + std::log(sum);
}

}  // namespace detail

inline SparseCoverageTerms sparse_coverage_terms(int p, int s, double p_nz) {
  if (s < 2) throw error("sparse_coverage_terms: s < 2 leaves the pair term an empty sum");
  if (s > p) throw error("sparse_coverage_terms: s must not exceed p");
  if (!(p_nz > 0.0) || !(p_nz < 1.0))
    throw error("sparse_coverage_terms: p_nz must lie strictly in (0,1)");

  const double log_nz = std::log(p_nz);
  const double log_z = std::log1p(-p_nz);

  std::vector<double> terms;
  terms.reserve(s);
  for (int i = 0; i <= s - 1; ++i)
    terms.push_back(detail::log_choose(p - 1, i) + (i + 1) * log_nz + (p - 1 - i) * log_z);
  const double log_p1 = detail::log_sum_exp(terms.data(), static_cast<int>(terms.size()));

  terms.clear();
  for (int i = 0; i <= s - 2; ++i)
    terms.push_back(detail::log_choose(p - 2, i) + (i + 2) * log_nz + (p - 2 - i) * log_z);
  const double log_p2 = detail::log_sum_exp(terms.data(), static_cast<int>(terms.size()));

  const double big_p = 0.5 * p * (p + 1);
  SparseCoverageTerms out;
  out.p1 = std::exp(log_p1);
  out.p2 = std::exp(log_p2);
  out.log_p_s = std::lgamma(big_p + 1.0) + log_p1 + log_p2;
  return out;
}

// log of the closed form (P/e) * ((1/p_s^2) * log(4/delta^2))^(1/(2P)).
inline double coverage_bound_log(double big_p, double log_p_s, double delta) {
  if (!(delta > 0.0) || !(delta < 1.0))
    throw error("coverage bound: delta must lie strictly in (0,1)");
  const double log_hoeffding = std::log(std::log(4.0 / (delta * delta)));
  return std::log(big_p) - 1.0 + (log_hoeffding - 2.0 * log_p_s) / (2.0 * big_p);
}

inline long long coverage_bound_from_terms(double big_p, double log_p_s, double delta) {
  const double n_real = std::exp(coverage_bound_log(big_p, log_p_s, delta));
  if (!std::isfinite(n_real) || n_real > 9.0e18)
    throw error("coverage bound: value overflows the integer range");
  return static_cast<long long>(std::ceil(n_real));
}

// Sample count n = ceil((P/e) * ((1/p_s^2) * log(4/delta^2))^(1/(2P))),
// evaluated entirely in log space.
inline long long sparse_coverage_bound(int p, int s, double p_nz, double delta) {
  const SparseCoverageTerms terms = sparse_coverage_terms(p, s, p_nz);
  return coverage_bound_from_terms(0.5 * p * (p + 1), terms.log_p_s, delta);
}

}  // namespace featrec
