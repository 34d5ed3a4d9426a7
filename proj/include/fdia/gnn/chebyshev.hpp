#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include "fdia/grid/ybus.hpp"
#include "fdia/nn/core.hpp"

namespace fdia::gnn {

using nn::Tensor;

/// x_0 = x, x_1 = L x, x_k = 2 L x_{k-1} - x_{k-2}; every column of x is an
/// independent graph signal.
inline std::vector<Tensor> cheb_basis_apply(const SparseMatrix& lt, const Tensor& x, Index order) {
  if (order < 1) throw ConfigError("Chebyshev order K must be at least 1");
  if (x.rows() != lt.rows()) throw ConfigError("signal length does not match the Laplacian");
  std::vector<Tensor> out;
  out.reserve(static_cast<std::size_t>(order));
  out.push_back(x);
  if (order > 1) out.push_back(lt * x);
  for (Index k = 2; k < order; ++k) out.push_back(2.0 * (lt * out.back()) - out[static_cast<std::size_t>(k - 2)]);
  return out;
}

/// Batched signals are stored as (n * batch) x channels with the rows of one
/// sample contiguous. The same memory viewed column-major as n x (batch *
/// channels) holds one graph signal per column, so L can act on all of them
/// with a single sparse product.
inline Tensor apply_batched(const SparseMatrix& lt, const Tensor& x) {
  const Index n = lt.rows();
  if (x.rows() % n != 0) throw ConfigError("batched signal rows are not a multiple of the node count");
  const Index cols = (x.rows() / n) * x.cols();
  Tensor out(x.rows(), x.cols());
  Eigen::Map<Eigen::MatrixXd>(out.data(), n, cols).noalias() =
      lt * Eigen::Map<const Eigen::MatrixXd>(x.data(), n, cols);
  return out;
}

inline std::vector<Tensor> cheb_basis_batched(const SparseMatrix& lt, const Tensor& x, Index order) {
  std::vector<Tensor> out;
  out.reserve(static_cast<std::size_t>(order));
  out.push_back(x);
  if (order > 1) out.push_back(apply_batched(lt, x));
  for (Index k = 2; k < order; ++k)
    out.push_back(2.0 * apply_batched(lt, out.back()) - out[static_cast<std::size_t>(k - 2)]);
  return out;
}

/// sum_k T_k(L) g_k by Clenshaw's recurrence; with L symmetric this is the
/// adjoint of the basis expansion and carries gradients back to the input.
inline Tensor cheb_adjoint_batched(const SparseMatrix& lt, const std::vector<Tensor>& g) {
  const auto order = static_cast<Index>(g.size());
  if (order == 1) return g[0];
  Tensor b1 = Tensor::Zero(g[0].rows(), g[0].cols());
  Tensor b2 = b1;
  for (Index k = order - 1; k >= 1; --k) {
    Tensor b0 = g[static_cast<std::size_t>(k)] + 2.0 * apply_batched(lt, b1) - b2;
    b2 = std::move(b1);
    b1 = std::move(b0);
  }
  return g[0] + apply_batched(lt, b1) - b2;
}

/// One Chebyshev graph convolution: theta is K tensors of c_in x c_out; the
/// bias holds one row per order (K x c_out) and the rows add up.
struct ChebLayerParams {
  std::vector<Tensor> theta;
  Tensor bias;

  Index order() const { return static_cast<Index>(theta.size()); }
  Index inputs() const { return theta.empty() ? 0 : theta[0].rows(); }
  Index outputs() const { return theta.empty() ? 0 : theta[0].cols(); }
  Index parameter_count() const {
    Index s = bias.size();
    for (const auto& t : theta) s += t.size();
    return s;
  }
};

inline ChebLayerParams make_cheb_layer(Index order, Index in, Index out) {
  if (order < 1 || in < 1 || out < 1) throw ConfigError("Chebyshev layer dimensions must be positive");
  ChebLayerParams p;
  p.theta.assign(static_cast<std::size_t>(order), Tensor::Zero(in, out));
  p.bias = Tensor::Zero(order, out);
  return p;
}

struct ChebLayerCache {
  std::vector<Tensor> basis;  // x_k per order, (n * batch) x c_in
  Tensor pre;                 // pre-activation
};

inline Tensor cheb_layer_forward(const ChebLayerParams& p, const SparseMatrix& lt, const Tensor& x,
                                 nn::Activation act, ChebLayerCache* cache = nullptr) {
  if (x.cols() != p.inputs())
    throw ConfigError("Chebyshev layer expects " + std::to_string(p.inputs()) + " channels, got " +
                      std::to_string(x.cols()));
  auto basis = cheb_basis_batched(lt, x, p.order());
  Tensor pre = basis[0] * p.theta[0];
  for (Index k = 1; k < p.order(); ++k) pre.noalias() += basis[static_cast<std::size_t>(k)] * p.theta[static_cast<std::size_t>(k)];
  pre.rowwise() += p.bias.colwise().sum();
  Tensor out = nn::activate(act, pre);
  if (cache) {
    cache->basis = std::move(basis);
    cache->pre = std::move(pre);
  }
  return out;
}

struct ChebLayerGrad {
  std::vector<Tensor> theta;
  Tensor bias;
  Tensor input;
};

inline ChebLayerGrad cheb_layer_backward(const ChebLayerParams& p, const SparseMatrix& lt, const ChebLayerCache& cache,
                                         const Tensor& d_out, nn::Activation act, bool need_input = true) {
  const Tensor dz = d_out.cwiseProduct(nn::activate_derivative(act, cache.pre));
  ChebLayerGrad g;
  const Eigen::RowVectorXd db = dz.colwise().sum();
  g.bias = db.replicate(p.order(), 1);
  std::vector<Tensor> back;
  for (Index k = 0; k < p.order(); ++k) {
    const auto ku = static_cast<std::size_t>(k);
    g.theta.push_back(cache.basis[ku].transpose() * dz);
    if (need_input) back.push_back(dz * p.theta[ku].transpose());
  }
  if (need_input) g.input = cheb_adjoint_batched(lt, back);
  return g;
}

}  // namespace fdia::gnn
