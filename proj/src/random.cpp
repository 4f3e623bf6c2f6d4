#include "bspdot/random.hpp"

namespace bspdot {

namespace {

// Replace the last block so the list sums to the identity exactly.
void absorb_rounding(std::vector<Matrix>& blocks) {
  const auto d = blocks.front().rows();
  Matrix rest = Matrix::Identity(d, d);
  for (std::size_t i = 0; i + 1 < blocks.size(); ++i) rest -= blocks[i];
  blocks.back() = sym(rest);
}

}  // namespace

Matrix Rng::gaussian(int rows, int cols) {
  Matrix a(rows, cols);
  for (int c = 0; c < cols; ++c)
    for (int r = 0; r < rows; ++r) a(r, c) = normal();
  return a;
}

Matrix Rng::symmetric(int d) { return sym(gaussian(d, d)); }

Matrix Rng::spd(int d, double shift) {
  const Matrix a = gaussian(d, d);
  return sym(a * a.transpose() / d + shift * Matrix::Identity(d, d));
}

std::vector<double> Rng::simplex(int n, double floor) {
  std::vector<double> w(static_cast<std::size_t>(n));
  double total = 0.0;
  for (auto& v : w) {
    v = floor + uniform();
    total += v;
  }
  for (auto& v : w) v /= total;
  return w;
}

BlockMarginal Rng::spd_marginal(int n, int d) {
  std::vector<Matrix> blocks;
  Matrix total = Matrix::Zero(d, d);
  for (int i = 0; i < n; ++i) {
    blocks.push_back(spd(d));
    total += blocks.back();
  }
  const Matrix inv_half = spd_fn(total, MatFn::InvSqrt);
  for (auto& b : blocks) b = sym(inv_half * b * inv_half);
  absorb_rounding(blocks);
  return BlockMarginal(std::move(blocks));
}

BlockMarginal Rng::diagonal_marginal(int n, int d) {
  std::vector<Matrix> blocks(static_cast<std::size_t>(n), Matrix::Zero(d, d));
  for (int a = 0; a < d; ++a) {
    const auto w = simplex(n);
    for (int i = 0; i < n; ++i) blocks[static_cast<std::size_t>(i)](a, a) = w[static_cast<std::size_t>(i)];
  }
  return BlockMarginal(std::move(blocks));
}

std::pair<BlockMarginal, BlockMarginal> Rng::coupled_marginals(int m, int n, int d) {
  std::vector<Matrix> grid;
  Matrix total = Matrix::Zero(d, d);
  for (int k = 0; k < m * n; ++k) {
    grid.push_back(spd(d));
    total += grid.back();
  }
  const Matrix inv_half = spd_fn(total, MatFn::InvSqrt);
  std::vector<Matrix> rows(static_cast<std::size_t>(m), Matrix::Zero(d, d));
  std::vector<Matrix> cols(static_cast<std::size_t>(n), Matrix::Zero(d, d));
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) {
      const Matrix b = sym(inv_half * grid[static_cast<std::size_t>(i * n + j)] * inv_half);
      rows[static_cast<std::size_t>(i)] += b;
      cols[static_cast<std::size_t>(j)] += b;
    }
  absorb_rounding(rows);
  absorb_rounding(cols);
  return {BlockMarginal(std::move(rows)), BlockMarginal(std::move(cols))};
}

}  // namespace bspdot
