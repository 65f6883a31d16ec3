#include "edora/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <vector>

namespace edora::linalg {

namespace {

std::string shape_str(const Matrix& m) {
  return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

constexpr double kTwoPi = 6.283185307179586476925286766559;

}  // namespace

std::uint64_t RngState::next_u64() {
  state_ += 0x9E3779B97F4A7C15ull;
  std::uint64_t z = state_;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

double RngState::next_uniform_open() {
  // 53-bit mantissa mapped to (0, 1] so log() is always finite.
  return static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;
}

double RngState::next_uniform_coopen() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double RngState::next_gaussian() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  const double u1 = next_uniform_open();
  const double u2 = next_uniform_coopen();
  const double radius = std::sqrt(-2.0 * std::log(u1));
  const double angle = kTwoPi * u2;
  spare_ = radius * std::sin(angle);
  has_spare_ = true;
  return radius * std::cos(angle);
}

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) {
    throw std::invalid_argument("matmul: inner dimensions differ, lhs is " + shape_str(a) +
                                ", rhs is " + shape_str(b));
  }
  Matrix c = Matrix::Zero(a.rows(), b.cols());
  // ikj order: every entry accumulates its products in ascending k.
  for (Index i = 0; i < a.rows(); ++i) {
    for (Index k = 0; k < a.cols(); ++k) {
      c.row(i) += a(i, k) * b.row(k);
    }
  }
  return c;
}

Vector column_norms(const Matrix& w) {
  Vector norms(w.cols());
  for (Index j = 0; j < w.cols(); ++j) {
    double sum = 0.0;
    for (Index i = 0; i < w.rows(); ++i) {
      sum += w(i, j) * w(i, j);
    }
    norms(j) = std::sqrt(sum);
  }
  return norms;
}

Matrix normalize_columns(const Matrix& w) {
  Matrix out = w;
  const Vector norms = column_norms(w);
  for (Index j = 0; j < w.cols(); ++j) {
    if (norms(j) > 1e-12) {
      out.col(j) /= norms(j);
    }
  }
  return out;
}

namespace {

// Completes u columns whose singular value vanished: picks the first basis
// vector with a usable residual after projecting out the accepted columns.
void complete_orthonormal(Matrix& u, Index from) {
  const Index m = u.rows();
  for (Index j = from; j < u.cols(); ++j) {
    for (Index cand = 0; cand < m; ++cand) {
      Vector r = Vector::Zero(m);
      r(cand) = 1.0;
      for (Index k = 0; k < j; ++k) {
        r -= u.col(k).dot(r) * u.col(k);
      }
      const double norm = r.norm();
      if (norm > 0.5) {
        u.col(j) = r / norm;
        break;
      }
    }
  }
}

SvdResult svd_tall(const Matrix& a) {
  const Index m = a.rows();
  const Index n = a.cols();
  Matrix g = a;
  Matrix v = Matrix::Identity(n, n);
  const double fro = a.norm();

  constexpr int kMaxSweeps = 60;
  constexpr double kTol = 1e-12;  // relative off-diagonal threshold
  double worst = 0.0;
  bool converged = (fro == 0.0);
  for (int sweep = 0; sweep < kMaxSweeps && !converged; ++sweep) {
    worst = 0.0;
    for (Index p = 0; p + 1 < n; ++p) {
      for (Index q = p + 1; q < n; ++q) {
        const double alpha = g.col(p).squaredNorm();
        const double beta = g.col(q).squaredNorm();
        const double gamma = g.col(p).dot(g.col(q));
        const double scale = std::sqrt(alpha * beta);
        if (scale <= 0.0 || std::abs(gamma) <= kTol * scale) {
          continue;
        }
        worst = std::max(worst, std::abs(gamma) / scale);
        const double zeta = (beta - alpha) / (2.0 * gamma);
        const double t = (zeta >= 0.0 ? 1.0 : -1.0) / (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double s = c * t;
        for (Index i = 0; i < m; ++i) {
          const double gp = g(i, p);
          const double gq = g(i, q);
          g(i, p) = c * gp - s * gq;
          g(i, q) = s * gp + c * gq;
        }
        for (Index i = 0; i < n; ++i) {
          const double vp = v(i, p);
          const double vq = v(i, q);
          v(i, p) = c * vp - s * vq;
          v(i, q) = s * vp + c * vq;
        }
      }
    }
    converged = (worst == 0.0);
  }
  if (!converged) {
    throw std::runtime_error("svd: Jacobi sweeps did not converge, residual " +
                             std::to_string(worst));
  }

  Vector sigma(n);
  for (Index j = 0; j < n; ++j) {
    sigma(j) = g.col(j).norm();
  }

  // Non-increasing order; ties keep the lower working-column index first.
  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](Index x, Index y) { return sigma(x) > sigma(y); });

  SvdResult out;
  out.u.resize(m, n);
  out.s.resize(n);
  out.vt.resize(n, n);
  Index zero_from = n;
  for (Index j = 0; j < n; ++j) {
    const Index src = order[static_cast<std::size_t>(j)];
    out.s(j) = sigma(src);
    if (sigma(src) > 0.0) {
      out.u.col(j) = g.col(src) / sigma(src);
    } else {
      out.u.col(j).setZero();
      zero_from = std::min(zero_from, j);
    }
    out.vt.row(j) = v.col(src).transpose();
  }
  if (zero_from < n) {
    complete_orthonormal(out.u, zero_from);
  }

  // Sign convention: first nonzero entry of each left singular vector >= 0.
  for (Index j = 0; j < n; ++j) {
    for (Index i = 0; i < m; ++i) {
      if (out.u(i, j) != 0.0) {
        if (out.u(i, j) < 0.0) {
          out.u.col(j) = -out.u.col(j);
          out.vt.row(j) = -out.vt.row(j);
        }
        break;
      }
    }
  }
  return out;
}

}  // namespace

SvdResult svd(const Matrix& a) {
  if (a.rows() < 1 || a.cols() < 1) {
    throw std::invalid_argument("svd: matrix must be at least 1x1, got " + shape_str(a));
  }
  if (a.rows() >= a.cols()) {
    return svd_tall(a);
  }
  SvdResult t = svd_tall(Matrix(a.transpose()));
  SvdResult out;
  out.u = t.vt.transpose();
  out.s = t.s;
  out.vt = t.u.transpose();
  // Re-apply the sign convention to the swapped factors.
  for (Index j = 0; j < out.s.size(); ++j) {
    for (Index i = 0; i < out.u.rows(); ++i) {
      if (out.u(i, j) != 0.0) {
        if (out.u(i, j) < 0.0) {
          out.u.col(j) = -out.u.col(j);
          out.vt.row(j) = -out.vt.row(j);
        }
        break;
      }
    }
  }
  return out;
}

SvdResult svd_truncated(const Matrix& a, Index r) {
  const Index k = std::min(a.rows(), a.cols());
  if (r < 1 || r > k) {
    throw std::invalid_argument("svd_truncated: rank " + std::to_string(r) +
                                " out of range [1, " + std::to_string(k) + "] for " +
                                shape_str(a));
  }
  SvdResult full = svd(a);
  SvdResult out;
  out.u = full.u.leftCols(r);
  out.s = full.s.head(r);
  out.vt = full.vt.topRows(r);
  return out;
}

Matrix gaussian_matrix(Index rows, Index cols, double sigma, RngState& rng) {
  if (sigma < 0.0) {
    throw std::invalid_argument("gaussian_matrix: sigma must be non-negative");
  }
  if (sigma == 0.0) {
    return Matrix::Zero(rows, cols);
  }
  Matrix m(rows, cols);
  for (Index i = 0; i < rows; ++i) {
    for (Index j = 0; j < cols; ++j) {
      m(i, j) = sigma * rng.next_gaussian();
    }
  }
  return m;
}

void write_matrix_csv(const std::string& path, const Matrix& m) {
  std::ofstream out(path);
  if (!out) {
    throw std::runtime_error("write_matrix_csv: cannot open " + path);
  }
  out << m.rows() << "," << m.cols() << "\n";
  char buf[40];
  for (Index i = 0; i < m.rows(); ++i) {
    for (Index j = 0; j < m.cols(); ++j) {
      std::snprintf(buf, sizeof(buf), "%.17g", m(i, j));
      if (j) out << ",";
      out << buf;
    }
    out << "\n";
  }
  if (!out) {
    throw std::runtime_error("write_matrix_csv: write failed for " + path);
  }
}

Matrix read_matrix_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw std::runtime_error("read_matrix_csv: cannot open " + path);
  }
  std::string line;
  if (!std::getline(in, line)) {
    throw std::runtime_error("read_matrix_csv: empty file " + path);
  }
  Index rows = 0, cols = 0;
  if (std::sscanf(line.c_str(), "%td,%td", &rows, &cols) != 2 || rows < 1 || cols < 1) {
    throw std::runtime_error("read_matrix_csv: bad header in " + path);
  }
  Matrix m(rows, cols);
  for (Index i = 0; i < rows; ++i) {
    if (!std::getline(in, line)) {
      throw std::runtime_error("read_matrix_csv: truncated at row " + std::to_string(i));
    }
    std::stringstream ss(line);
    std::string cell;
    for (Index j = 0; j < cols; ++j) {
      if (!std::getline(ss, cell, ',')) {
        throw std::runtime_error("read_matrix_csv: short row " + std::to_string(i));
      }
      m(i, j) = std::strtod(cell.c_str(), nullptr);
    }
  }
  return m;
}

std::uint64_t checksum(const Matrix& m) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  const auto* bytes = reinterpret_cast<const unsigned char*>(m.data());
  const std::size_t len = static_cast<std::size_t>(m.size()) * sizeof(double);
  for (std::size_t i = 0; i < len; ++i) {
    h ^= bytes[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

}  // namespace edora::linalg
