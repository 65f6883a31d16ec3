#pragma once

#include <map>
#include <string>

#include "edora/adapters.hpp"

namespace edora::autograd {

// Whether the column-norm denominator of the decomposed forward receives
// gradient (Full) or is treated as a constant (Detached).
enum class NormMode { Full, Detached };

// Parameter id ("a", "b", "r", "m") -> gradient of the same shape
// (the magnitude gradient is stored as an n x 1 matrix).
using GradBundle = std::map<std::string, Matrix>;

// Y = W' X with W'[:,j] = m[j] * V[:,j] / ||V[:,j]||.
// Throws if any column norm of V falls below 1e-12, naming the column.
Matrix forward_decomposed(const Vector& m, const Matrix& v, const Matrix& x);

// Same map with the column norms frozen at the supplied values; this is the
// objective whose exact gradient the Detached mode computes.
Matrix forward_decomposed_frozen(const Vector& m, const Matrix& v, const Matrix& x,
                                 const Vector& norms);

struct DecomposedGrads {
  Vector gm;  // n
  Matrix gv;  // m x n
  Matrix gx;  // n x b
};

DecomposedGrads vjp_decomposed(const Vector& m, const Matrix& v, const Matrix& x,
                               const Matrix& gy, NormMode mode);

struct MatmulGrads {
  Matrix ga;
  Matrix gb;
};

MatmulGrads vjp_matmul(const Matrix& a, const Matrix& b, const Matrix& g_out);

struct AdapterGrads {
  GradBundle params;  // only the method's trainable parameters
  Matrix gx;          // n x b, for backprop through the host
};

AdapterGrads backward_adapter(const adapters::AdapterLayer& layer, const Matrix& x,
                              const Matrix& gy, NormMode mode);

}  // namespace edora::autograd
