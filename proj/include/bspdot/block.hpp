#pragma once

// Block containers shared by every manifold: an m x n grid of d x d symmetric
// blocks, and block marginals (ordered lists of SPD blocks with a fixed sum).

#include "bspdot/spd.hpp"

#include <vector>

namespace bspdot {

class BlockMatrix {
 public:
  BlockMatrix() = default;
  /// Zero-initialized m x n grid of d x d blocks.
  BlockMatrix(int rows, int cols, int dim);

  int rows() const { return rows_; }
  int cols() const { return cols_; }
  int dim() const { return dim_; }
  bool empty() const { return blocks_.empty(); }

  Matrix& operator()(int i, int j) { return blocks_[index(i, j)]; }
  const Matrix& operator()(int i, int j) const { return blocks_[index(i, j)]; }

  bool same_shape(const BlockMatrix& other) const {
    return rows_ == other.rows_ && cols_ == other.cols_ && dim_ == other.dim_;
  }

  Matrix row_sum(int i) const;
  Matrix col_sum(int j) const;

  /// Sum_ij tr(A_ij^T B_ij).
  double dot(const BlockMatrix& other) const;
  double norm() const;
  double max_abs() const;
  bool all_finite() const;

  BlockMatrix transpose() const;

  BlockMatrix& operator+=(const BlockMatrix& other);
  BlockMatrix& operator-=(const BlockMatrix& other);
  BlockMatrix& operator*=(double s);

  friend BlockMatrix operator+(BlockMatrix a, const BlockMatrix& b) { return a += b; }
  friend BlockMatrix operator-(BlockMatrix a, const BlockMatrix& b) { return a -= b; }
  friend BlockMatrix operator*(double s, BlockMatrix a) { return a *= s; }
  friend BlockMatrix operator*(BlockMatrix a, double s) { return a *= s; }

 private:
  std::size_t index(int i, int j) const {
    return static_cast<std::size_t>(i) * static_cast<std::size_t>(cols_) +
           static_cast<std::size_t>(j);
  }
  void require_same_shape(const BlockMatrix& other, const char* op) const;

  int rows_ = 0;
  int cols_ = 0;
  int dim_ = 0;
  std::vector<Matrix> blocks_;
};

/// Ordered SPD blocks whose sum equals `total_mass` (identity by default).
class BlockMarginal {
 public:
  BlockMarginal() = default;
  explicit BlockMarginal(std::vector<Matrix> blocks, double spd_floor = kDefaultSpdFloor);
  BlockMarginal(std::vector<Matrix> blocks, Matrix total_mass,
                double spd_floor = kDefaultSpdFloor);

  /// Scalar probability vector lifted as p_i * I_d.
  static BlockMarginal lifted(const std::vector<double>& weights, int dim);

  int size() const { return static_cast<int>(blocks_.size()); }
  int dim() const { return blocks_.empty() ? 0 : static_cast<int>(blocks_[0].rows()); }
  const Matrix& operator[](int i) const { return blocks_[static_cast<std::size_t>(i)]; }
  const std::vector<Matrix>& blocks() const { return blocks_; }
  const Matrix& total_mass() const { return total_mass_; }

  /// The marginal as an n x 1 block column.
  BlockMatrix as_column() const;

 private:
  std::vector<Matrix> blocks_;
  Matrix total_mass_;
};

/// Half-vectorization with sqrt(2)-scaled off-diagonals; preserves the
/// Frobenius inner product on symmetric matrices.
int svec_size(int dim);
Vector svec(const Matrix& a);
Matrix smat(const Vector& v, int dim);
/// Orthonormal basis matrix E_p of the symmetric space matching svec index p.
Matrix svec_basis(int dim, int p);

}  // namespace bspdot
