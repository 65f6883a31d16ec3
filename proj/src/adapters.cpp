#include "edora/adapters.hpp"

#include <cmath>
#include <stdexcept>

#include "edora/autograd.hpp"

namespace edora::adapters {

std::string method_name(AdapterMethod method) {
  switch (method) {
    case AdapterMethod::LoRA: return "lora";
    case AdapterMethod::DoRA: return "dora";
    case AdapterMethod::LoRAXS: return "lora_xs";
    case AdapterMethod::EDoRA: return "edora";
  }
  throw std::invalid_argument("method_name: bad enum value");
}

AdapterMethod method_from_name(const std::string& name) {
  if (name == "lora") return AdapterMethod::LoRA;
  if (name == "dora") return AdapterMethod::DoRA;
  if (name == "lora_xs") return AdapterMethod::LoRAXS;
  if (name == "edora") return AdapterMethod::EDoRA;
  throw std::invalid_argument("unknown adapter method '" + name + "'");
}

namespace {

void check_rank(const Matrix& w0, Index rank) {
  const Index cap = std::min(w0.rows(), w0.cols());
  if (rank < 1 || rank > cap) {
    throw std::invalid_argument("adapter rank " + std::to_string(rank) +
                                " out of range [1, " + std::to_string(cap) + "] for a " +
                                std::to_string(w0.rows()) + "x" + std::to_string(w0.cols()) +
                                " base weight");
  }
}

Vector magnitude_from(const Matrix& w0) {
  const Vector norms = linalg::column_norms(w0);
  for (Index j = 0; j < norms.size(); ++j) {
    if (norms(j) <= 1e-12) {
      throw std::invalid_argument("base weight column " + std::to_string(j) +
                                  " has near-zero norm; cannot decompose");
    }
  }
  return norms;
}

// A ~ N(0, 1/r), the usual LoRA input-factor scale.
Matrix lora_a_init(Index rank, Index n, linalg::RngState& rng) {
  return linalg::gaussian_matrix(rank, n, 1.0 / std::sqrt(static_cast<double>(rank)), rng);
}

}  // namespace

AdapterLayer init_lora(const Matrix& w0, Index rank, linalg::RngState& rng) {
  check_rank(w0, rank);
  AdapterLayer layer;
  layer.method = AdapterMethod::LoRA;
  layer.w0 = w0;
  layer.rank = rank;
  layer.a = lora_a_init(rank, w0.cols(), rng);
  layer.b = Matrix::Zero(w0.rows(), rank);
  return layer;
}

AdapterLayer init_dora(const Matrix& w0, Index rank, linalg::RngState& rng) {
  check_rank(w0, rank);
  AdapterLayer layer;
  layer.method = AdapterMethod::DoRA;
  layer.w0 = w0;
  layer.rank = rank;
  layer.m_vec = magnitude_from(w0);
  layer.a = lora_a_init(rank, w0.cols(), rng);
  layer.b = Matrix::Zero(w0.rows(), rank);
  return layer;
}

namespace {

// Frozen factors from the truncated SVD of the direction carrier D = W0:
// a = Vr^T, b = Ur Sr.
void svd_factors(const Matrix& w0, Index rank, Matrix& a, Matrix& b) {
  linalg::SvdResult top = linalg::svd_truncated(w0, rank);
  a = top.vt;
  b = top.u * top.s.asDiagonal();
}

}  // namespace

AdapterLayer init_edora(const Matrix& w0, Index rank, double sigma, InitKind kind,
                        linalg::RngState& rng) {
  check_rank(w0, rank);
  if (sigma < 0.0) {
    throw std::invalid_argument("init_edora: sigma must be non-negative");
  }
  AdapterLayer layer;
  layer.method = AdapterMethod::EDoRA;
  layer.w0 = w0;
  layer.rank = rank;
  layer.sigma = sigma;
  layer.init_kind = kind;
  layer.m_vec = magnitude_from(w0);
  if (kind == InitKind::Svd) {
    svd_factors(w0, rank, layer.a, layer.b);
  } else {
    layer.a = lora_a_init(rank, w0.cols(), rng);
    layer.b = linalg::gaussian_matrix(w0.rows(), rank,
                                      1.0 / std::sqrt(static_cast<double>(rank)), rng);
  }
  layer.r_mat = linalg::gaussian_matrix(rank, rank, sigma, rng);
  return layer;
}

AdapterLayer init_loraxs(const Matrix& w0, Index rank, linalg::RngState& rng) {
  (void)rng;  // initialization is fully deterministic: SVD factors plus R = 0
  check_rank(w0, rank);
  AdapterLayer layer;
  layer.method = AdapterMethod::LoRAXS;
  layer.w0 = w0;
  layer.rank = rank;
  svd_factors(w0, rank, layer.a, layer.b);
  layer.r_mat = Matrix::Zero(rank, rank);
  return layer;
}

Matrix direction_numerator(const AdapterLayer& layer) {
  if (layer.r_mat.has_value()) {
    return layer.w0 + linalg::matmul(linalg::matmul(layer.b, *layer.r_mat), layer.a);
  }
  return layer.w0 + linalg::matmul(layer.b, layer.a);
}

Matrix forward(const AdapterLayer& layer, const Matrix& x) {
  if (x.rows() != layer.w0.cols()) {
    throw std::invalid_argument("adapter forward: input has " + std::to_string(x.rows()) +
                                " rows, weight expects " + std::to_string(layer.w0.cols()));
  }
  const Matrix v = direction_numerator(layer);
  if (layer.m_vec.has_value()) {
    return autograd::forward_decomposed(*layer.m_vec, v, x);
  }
  return linalg::matmul(v, x);
}

Matrix merge(const AdapterLayer& layer) {
  Matrix v = direction_numerator(layer);
  if (!layer.m_vec.has_value()) {
    return v;
  }
  const Vector& m = *layer.m_vec;
  const Vector norms = linalg::column_norms(v);
  for (Index j = 0; j < v.cols(); ++j) {
    if (norms(j) <= 1e-12) {
      throw std::runtime_error("merge: direction column " + std::to_string(j) +
                               " has near-zero norm");
    }
    v.col(j) *= m(j) / norms(j);
  }
  return v;
}

std::uint64_t trainable_count(AdapterMethod method, std::uint64_t m, std::uint64_t n,
                              std::uint64_t r) {
  switch (method) {
    case AdapterMethod::LoRA: return r * (m + n);
    case AdapterMethod::DoRA: return n + r * (m + n);
    case AdapterMethod::LoRAXS: return r * r;
    case AdapterMethod::EDoRA: return n + r * r;
  }
  throw std::invalid_argument("trainable_count: bad enum value");
}

}  // namespace edora::adapters
