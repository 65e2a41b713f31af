// Copyright 2026 The featrec Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace featrec {

// Base class for all library errors. Callers dispatch on the derived type;
// the message carries the specifics.
struct error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Shape/dimension mismatch between operands.
struct dim_error : error {
  using error::error;
};

// Input violates the symmetry tolerance.
struct symmetry_error : error {
  using error::error;
};

// Degenerate inputs: zero target matrix, null reference activation,
// all-null sample sets, constant matrices fed to a correlation.
struct degenerate_error : error {
  using error::error;
};

// Triplet cannot be reduced to a pair, or unreduced triplets reached a stage
// that requires pairs.
struct reduction_error : error {
  using error::error;
};

// No PSD matrix satisfies the constraint system within tolerance.
struct infeasible_error : error {
  using error::error;
};

// Optimizer or iterative scheme produced non-finite state, or a linear
// system that should be well-posed was singular.
struct divergence_error : error {
  using error::error;
};

// File or stream I/O failure, including malformed file contents.
struct io_error : error {
  using error::error;
};

}  // namespace featrec
