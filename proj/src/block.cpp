#include "bspdot/block.hpp"

#include "bspdot/error.hpp"

#include <cmath>
#include <sstream>

namespace bspdot {

BlockMatrix::BlockMatrix(int rows, int cols, int dim)
    : rows_(rows), cols_(cols), dim_(dim) {
  if (rows < 1 || cols < 1 || dim < 1) {
    std::ostringstream os;
    os << "BlockMatrix: invalid shape (" << rows << ", " << cols << ", " << dim << ")";
    fail(ErrorCode::InvalidInput, os.str());
  }
  blocks_.assign(static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols),
                 Matrix::Zero(dim, dim));
}

void BlockMatrix::require_same_shape(const BlockMatrix& other, const char* op) const {
  if (!same_shape(other)) {
    std::ostringstream os;
    os << op << ": shape mismatch (" << rows_ << "," << cols_ << "," << dim_
       << ") vs (" << other.rows_ << "," << other.cols_ << "," << other.dim_ << ")";
    fail(ErrorCode::InvalidInput, os.str());
  }
}

Matrix BlockMatrix::row_sum(int i) const {
  Matrix s = Matrix::Zero(dim_, dim_);
  for (int j = 0; j < cols_; ++j) s += (*this)(i, j);
  return s;
}

Matrix BlockMatrix::col_sum(int j) const {
  Matrix s = Matrix::Zero(dim_, dim_);
  for (int i = 0; i < rows_; ++i) s += (*this)(i, j);
  return s;
}

double BlockMatrix::dot(const BlockMatrix& other) const {
  require_same_shape(other, "BlockMatrix::dot");
  double s = 0.0;
  for (std::size_t k = 0; k < blocks_.size(); ++k) s += frob_dot(blocks_[k], other.blocks_[k]);
  return s;
}

double BlockMatrix::norm() const {
  double s = 0.0;
  for (const auto& b : blocks_) s += b.squaredNorm();
  return std::sqrt(s);
}

double BlockMatrix::max_abs() const {
  double s = 0.0;
  for (const auto& b : blocks_) s = std::max(s, b.cwiseAbs().maxCoeff());
  return s;
}

bool BlockMatrix::all_finite() const {
  for (const auto& b : blocks_)
    if (!b.allFinite()) return false;
  return true;
}

BlockMatrix BlockMatrix::transpose() const {
  BlockMatrix t(cols_, rows_, dim_);
  for (int i = 0; i < rows_; ++i)
    for (int j = 0; j < cols_; ++j) t(j, i) = (*this)(i, j);
  return t;
}

BlockMatrix& BlockMatrix::operator+=(const BlockMatrix& other) {
  require_same_shape(other, "BlockMatrix::operator+=");
  for (std::size_t k = 0; k < blocks_.size(); ++k) blocks_[k] += other.blocks_[k];
  return *this;
}

BlockMatrix& BlockMatrix::operator-=(const BlockMatrix& other) {
  require_same_shape(other, "BlockMatrix::operator-=");
  for (std::size_t k = 0; k < blocks_.size(); ++k) blocks_[k] -= other.blocks_[k];
  return *this;
}

BlockMatrix& BlockMatrix::operator*=(double s) {
  for (auto& b : blocks_) b *= s;
  return *this;
}

BlockMarginal::BlockMarginal(std::vector<Matrix> blocks, double spd_floor)
    : BlockMarginal(std::move(blocks), Matrix(), spd_floor) {}

BlockMarginal::BlockMarginal(std::vector<Matrix> blocks, Matrix total_mass, double spd_floor)
    : blocks_(std::move(blocks)) {
  if (blocks_.empty()) fail(ErrorCode::InvalidInput, "BlockMarginal: no blocks");
  const Eigen::Index d = blocks_[0].rows();
  if (total_mass.size() == 0) total_mass = Matrix::Identity(d, d);
  if (total_mass.rows() != d || total_mass.cols() != d)
    fail(ErrorCode::InvalidInput, "BlockMarginal: total mass dimension mismatch");
  Matrix sum = Matrix::Zero(d, d);
  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    auto& b = blocks_[i];
    if (b.rows() != d || b.cols() != d)
      fail(ErrorCode::InvalidInput, "BlockMarginal: blocks differ in dimension");
    b = sym(b);
    if (!is_spd(b, spd_floor)) {
      std::ostringstream os;
      os << "BlockMarginal: block " << i << " is not SPD";
      fail(ErrorCode::NotPositiveDefinite, os.str());
    }
    sum += b;
  }
  total_mass_ = sym(total_mass);
  const double gap = (sum - total_mass_).norm();
  if (gap > 1e-10 * total_mass_.norm()) {
    std::ostringstream os;
    os << "BlockMarginal: blocks sum differs from total mass by " << gap;
    fail(ErrorCode::InvalidInput, os.str());
  }
}

BlockMarginal BlockMarginal::lifted(const std::vector<double>& weights, int dim) {
  if (dim < 1) fail(ErrorCode::InvalidInput, "BlockMarginal::lifted: dim < 1");
  std::vector<Matrix> blocks;
  blocks.reserve(weights.size());
  double total = 0.0;
  for (double w : weights) {
    blocks.push_back(w * Matrix::Identity(dim, dim));
    total += w;
  }
  return BlockMarginal(std::move(blocks), total * Matrix::Identity(dim, dim));
}

BlockMatrix BlockMarginal::as_column() const {
  BlockMatrix col(size(), 1, dim());
  for (int i = 0; i < size(); ++i) col(i, 0) = blocks_[static_cast<std::size_t>(i)];
  return col;
}

int svec_size(int dim) { return dim * (dim + 1) / 2; }

Vector svec(const Matrix& a) {
  const int d = static_cast<int>(a.rows());
  Vector v(svec_size(d));
  int p = 0;
  for (int c = 0; c < d; ++c)
    for (int r = c; r < d; ++r)
      v(p++) = (r == c) ? a(r, c) : std::sqrt(2.0) * 0.5 * (a(r, c) + a(c, r));
  return v;
}

Matrix smat(const Vector& v, int dim) {
  Matrix a(dim, dim);
  int p = 0;
  for (int c = 0; c < dim; ++c)
    for (int r = c; r < dim; ++r) {
      if (r == c) {
        a(r, c) = v(p++);
      } else {
        a(r, c) = a(c, r) = v(p++) / std::sqrt(2.0);
      }
    }
  return a;
}

Matrix svec_basis(int dim, int p) {
  Vector e = Vector::Zero(svec_size(dim));
  e(p) = 1.0;
  return smat(e, dim);
}

}  // namespace bspdot
