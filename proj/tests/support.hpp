#pragma once

// Instance generators and independent reference computations shared by the
// unit tests and the acceptance suite.

#include "bspdot/block.hpp"
#include "bspdot/coupling.hpp"
#include "bspdot/gw.hpp"
#include "bspdot/random.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <vector>

namespace bspdot::testing {

inline BlockMatrix random_spd_blocks(Rng& rng, int m, int n, int d, double shift = 0.2) {
  BlockMatrix a(m, n, d);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) a(i, j) = rng.spd(d, shift);
  return a;
}

inline BlockMatrix random_symmetric_blocks(Rng& rng, int m, int n, int d) {
  BlockMatrix a(m, n, d);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) a(i, j) = rng.symmetric(d);
  return a;
}

/// Random point of the coupling manifold, balanced tightly.
inline BlockMatrix random_coupling(Rng& rng, const BlockMarginal& p, const BlockMarginal& q,
                                   double tol = 1e-13) {
  BalanceOptions opts;
  opts.tol = tol;
  opts.max_iter = 5000;
  return mbalance(random_spd_blocks(rng, p.size(), q.size(), p.dim()), p, q, opts).balanced;
}

/// Lifted marginal p_i I with total mass I.
inline BlockMarginal lifted(const std::vector<double>& w, int d) {
  return BlockMarginal::lifted(w, d);
}

/// Mildly anisotropic SPD marginal: random weights times near-identity
/// blocks, renormalized to total mass I. Pairs of these are feasible in
/// practice, unlike strongly anisotropic ones.
inline BlockMarginal mild_marginal(Rng& rng, int n, int d, double shift = 2.0) {
  const auto w = rng.simplex(n, 0.5);
  std::vector<Matrix> blocks;
  Matrix total = Matrix::Zero(d, d);
  for (int i = 0; i < n; ++i) {
    blocks.push_back(w[static_cast<std::size_t>(i)] * rng.spd(d, shift));
    total += blocks.back();
  }
  const Matrix s = spd_fn(total, MatFn::InvSqrt);
  for (auto& b : blocks) b = sym(s * b * s);
  Matrix rest = Matrix::Identity(d, d);
  for (int i = 0; i + 1 < n; ++i) rest -= blocks[static_cast<std::size_t>(i)];
  blocks.back() = sym(rest);
  return BlockMarginal(std::move(blocks));
}

/// Direct quadruple loop sum L(Dx_ii', Dy_jj') tr(G_ij G_i'j'); accepts any
/// (also asymmetric) matrices.
inline double brute_mgw(const Eigen::MatrixXd& dx, const Eigen::MatrixXd& dy, GwLossKind kind,
                        const BlockMatrix& g) {
  auto loss = [kind](double a, double b) {
    if (kind == GwLossKind::Squared) return (a - b) * (a - b);
    return (a > 0.0 ? a * std::log(a / b) : 0.0) - a + b;
  };
  double total = 0.0;
  for (int i = 0; i < g.rows(); ++i)
    for (int ip = 0; ip < g.rows(); ++ip)
      for (int j = 0; j < g.cols(); ++j)
        for (int jp = 0; jp < g.cols(); ++jp)
          total += loss(dx(i, ip), dy(j, jp)) * (g(i, j) * g(ip, jp)).trace();
  return total;
}

/// Plain alternating row/column normalization of a positive matrix.
inline Eigen::MatrixXd ras_oracle(Eigen::MatrixXd a, const Eigen::VectorXd& r,
                                  const Eigen::VectorXd& c, int sweeps = 100000,
                                  double tol = 1e-15) {
  for (int s = 0; s < sweeps; ++s) {
    for (Eigen::Index j = 0; j < a.cols(); ++j) a.col(j) *= c(j) / a.col(j).sum();
    for (Eigen::Index i = 0; i < a.rows(); ++i) a.row(i) *= r(i) / a.row(i).sum();
    const Eigen::VectorXd cols = a.colwise().sum().transpose();
    if ((cols - c).cwiseAbs().maxCoeff() <= tol) break;
  }
  return a;
}

/// Least-squares fit slope of log(y) against log(x).
inline double loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
  const auto n = static_cast<double>(x.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t k = 0; k < x.size(); ++k) {
    const double lx = std::log(x[k]);
    const double ly = std::log(y[k]);
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
  }
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

/// Residual of the best rigid alignment (rotation, reflection, translation) of
/// the rows of `got` onto the rows of `want`.
inline double procrustes_residual(const Eigen::MatrixXd& got, const Eigen::MatrixXd& want) {
  const Eigen::RowVectorXd mg = got.colwise().mean();
  const Eigen::RowVectorXd mw = want.colwise().mean();
  const Eigen::MatrixXd a = got.rowwise() - mg;
  const Eigen::MatrixXd b = want.rowwise() - mw;
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(a.transpose() * b,
                                        Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Eigen::MatrixXd rot = svd.matrixU() * svd.matrixV().transpose();
  return (a * rot - b).norm();
}

}  // namespace bspdot::testing
