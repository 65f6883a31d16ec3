#include "edora/autograd.hpp"

#include <stdexcept>

namespace edora::autograd {

namespace {

using adapters::AdapterLayer;
using adapters::AdapterMethod;
using linalg::matmul;

void check_decomposed_shapes(const Vector& m, const Matrix& v, const Matrix& x) {
  if (m.size() != v.cols()) {
    throw std::invalid_argument("decomposed forward: magnitude length " +
                                std::to_string(m.size()) + " != direction columns " +
                                std::to_string(v.cols()));
  }
  if (x.rows() != v.cols()) {
    throw std::invalid_argument("decomposed forward: input has " + std::to_string(x.rows()) +
                                " rows, direction has " + std::to_string(v.cols()) +
                                " columns");
  }
}

Vector checked_norms(const Matrix& v) {
  Vector norms = linalg::column_norms(v);
  for (Index j = 0; j < norms.size(); ++j) {
    if (norms(j) < 1e-12) {
      throw std::runtime_error("decomposed forward: direction column " + std::to_string(j) +
                               " has near-zero norm " + std::to_string(norms(j)));
    }
  }
  return norms;
}

Matrix scaled_weight(const Vector& m, const Matrix& v, const Vector& norms) {
  Matrix w = v;
  for (Index j = 0; j < w.cols(); ++j) {
    w.col(j) *= m(j) / norms(j);
  }
  return w;
}

}  // namespace

Matrix forward_decomposed(const Vector& m, const Matrix& v, const Matrix& x) {
  check_decomposed_shapes(m, v, x);
  const Vector norms = checked_norms(v);
  return matmul(scaled_weight(m, v, norms), x);
}

Matrix forward_decomposed_frozen(const Vector& m, const Matrix& v, const Matrix& x,
                                 const Vector& norms) {
  check_decomposed_shapes(m, v, x);
  return matmul(scaled_weight(m, v, norms), x);
}

DecomposedGrads vjp_decomposed(const Vector& m, const Matrix& v, const Matrix& x,
                               const Matrix& gy, NormMode mode) {
  check_decomposed_shapes(m, v, x);
  if (gy.rows() != v.rows() || gy.cols() != x.cols()) {
    throw std::invalid_argument("vjp_decomposed: upstream gradient is " +
                                std::to_string(gy.rows()) + "x" + std::to_string(gy.cols()) +
                                ", expected " + std::to_string(v.rows()) + "x" +
                                std::to_string(x.cols()));
  }
  const Vector norms = checked_norms(v);
  const Matrix w = scaled_weight(m, v, norms);
  const Matrix g = matmul(gy, Matrix(x.transpose()));  // dL/dW'

  DecomposedGrads out;
  out.gm.resize(m.size());
  out.gv.resize(v.rows(), v.cols());
  for (Index j = 0; j < v.cols(); ++j) {
    const double nu = norms(j);
    const double vg = v.col(j).dot(g.col(j));
    out.gm(j) = vg / nu;
    if (mode == NormMode::Full) {
      out.gv.col(j) = (m(j) / nu) * (g.col(j) - (vg / (nu * nu)) * v.col(j));
    } else {
      out.gv.col(j) = (m(j) / nu) * g.col(j);
    }
  }
  out.gx = matmul(Matrix(w.transpose()), gy);
  return out;
}

MatmulGrads vjp_matmul(const Matrix& a, const Matrix& b, const Matrix& g_out) {
  if (a.cols() != b.rows() || g_out.rows() != a.rows() || g_out.cols() != b.cols()) {
    throw std::invalid_argument("vjp_matmul: inconsistent shapes " + std::to_string(a.rows()) +
                                "x" + std::to_string(a.cols()) + " * " +
                                std::to_string(b.rows()) + "x" + std::to_string(b.cols()) +
                                " vs gradient " + std::to_string(g_out.rows()) + "x" +
                                std::to_string(g_out.cols()));
  }
  MatmulGrads out;
  out.ga = matmul(g_out, Matrix(b.transpose()));
  out.gb = matmul(Matrix(a.transpose()), g_out);
  return out;
}

AdapterGrads backward_adapter(const AdapterLayer& layer, const Matrix& x, const Matrix& gy,
                              NormMode mode) {
  if (x.rows() != layer.w0.cols() || gy.rows() != layer.w0.rows() || gy.cols() != x.cols()) {
    throw std::invalid_argument("backward_adapter: shapes inconsistent with a " +
                                std::to_string(layer.w0.rows()) + "x" +
                                std::to_string(layer.w0.cols()) + " layer");
  }
  const Matrix v = adapters::direction_numerator(layer);

  AdapterGrads out;
  Matrix gv;  // dL/d(direction numerator)
  if (layer.m_vec.has_value()) {
    DecomposedGrads d = vjp_decomposed(*layer.m_vec, v, x, gy, mode);
    out.params["m"] = Matrix(d.gm);
    gv = std::move(d.gv);
    out.gx = std::move(d.gx);
  } else {
    gv = matmul(gy, Matrix(x.transpose()));
    out.gx = matmul(Matrix(v.transpose()), gy);
  }

  switch (layer.method) {
    case AdapterMethod::LoRA:
    case AdapterMethod::DoRA: {
      MatmulGrads g = vjp_matmul(layer.b, layer.a, gv);
      out.params["b"] = std::move(g.ga);
      out.params["a"] = std::move(g.gb);
      break;
    }
    case AdapterMethod::LoRAXS:
    case AdapterMethod::EDoRA: {
      // dL/dR = B^T gv A^T
      out.params["r"] = matmul(matmul(Matrix(layer.b.transpose()), gv),
                               Matrix(layer.a.transpose()));
      break;
    }
  }
  return out;
}

}  // namespace edora::autograd
