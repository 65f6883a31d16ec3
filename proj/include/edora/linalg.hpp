#pragma once

#include <cstdint>
#include <string>

#include "edora/types.hpp"

namespace edora::linalg {

// Seeded counter-based generator (SplitMix64 stream + Box-Muller transform).
// Identical seed gives an identical sample stream.
class RngState {
 public:
  explicit RngState(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64();
  double next_uniform_open();   // (0, 1]
  double next_uniform_coopen(); // [0, 1)
  double next_gaussian();       // N(0, 1)

 private:
  std::uint64_t state_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

// Thin SVD a = u * diag(s) * vt with s non-increasing and non-negative,
// u (m x k) and vt (k x n) with orthonormal columns resp. rows, k = min(m, n).
struct SvdResult {
  Matrix u;
  Vector s;
  Matrix vt;
};

// Dense product with a fixed per-entry summation order (ascending inner
// index); bitwise deterministic for identical inputs.
Matrix matmul(const Matrix& a, const Matrix& b);

// Euclidean norm of every column.
Vector column_norms(const Matrix& w);

// Columns scaled to unit norm; columns with norm <= 1e-12 are left untouched.
Matrix normalize_columns(const Matrix& w);

// One-sided Jacobi SVD. Throws on non-convergence (60 sweep cap).
SvdResult svd(const Matrix& a);

// Top-r slices of the full SVD, 1 <= r <= min(m, n).
SvdResult svd_truncated(const Matrix& a, Index r);

// i.i.d. N(0, sigma^2) entries drawn row-major from the stream.
Matrix gaussian_matrix(Index rows, Index cols, double sigma, RngState& rng);

// CSV matrix format: first line "rows,cols", then one row per line at
// 17 significant digits.
void write_matrix_csv(const std::string& path, const Matrix& m);
Matrix read_matrix_csv(const std::string& path);

// FNV-1a over the raw row-major bytes; used for frozen-parameter checks.
std::uint64_t checksum(const Matrix& m);

}  // namespace edora::linalg
