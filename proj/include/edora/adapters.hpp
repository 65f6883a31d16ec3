#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "edora/linalg.hpp"

namespace edora::adapters {

enum class AdapterMethod { LoRA, DoRA, LoRAXS, EDoRA };
enum class InitKind { Svd, Random };

std::string method_name(AdapterMethod method);
AdapterMethod method_from_name(const std::string& name);

// One adapted weight matrix: frozen base plus the method's factors.
//   LoRA   : W' = W0 + B A                  (trainable A, B)
//   DoRA   : W' = m (W0 + B A)/||.||_c      (trainable m, A, B)
//   LoRA-XS: W' = W0 + B R A                (trainable R; A, B frozen)
//   EDoRA  : W' = m (W0 + B R A)/||.||_c    (trainable m, R; A, B frozen)
struct AdapterLayer {
  AdapterMethod method;
  Matrix w0;  // m x n, frozen
  Index rank = 0;
  Matrix a;                      // r x n
  Matrix b;                      // m x r
  std::optional<Matrix> r_mat;   // r x r (LoRA-XS, EDoRA)
  std::optional<Vector> m_vec;   // n (DoRA, EDoRA)
  double sigma = 0.0;
  InitKind init_kind = InitKind::Svd;
};

AdapterLayer init_lora(const Matrix& w0, Index rank, linalg::RngState& rng);
AdapterLayer init_dora(const Matrix& w0, Index rank, linalg::RngState& rng);
AdapterLayer init_edora(const Matrix& w0, Index rank, double sigma, InitKind kind,
                        linalg::RngState& rng);
AdapterLayer init_loraxs(const Matrix& w0, Index rank, linalg::RngState& rng);

// W0 + B A or W0 + B R A, the (unnormalized) direction carrier.
Matrix direction_numerator(const AdapterLayer& layer);

Matrix forward(const AdapterLayer& layer, const Matrix& x);

// Effective W' as a dense matrix; matmul(merge(l), x) == forward(l, x).
Matrix merge(const AdapterLayer& layer);

std::uint64_t trainable_count(AdapterMethod method, std::uint64_t m, std::uint64_t n,
                              std::uint64_t r);

}  // namespace edora::adapters
