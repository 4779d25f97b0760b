#include "drl/ops.hpp"

#include <algorithm>
#include <cmath>

namespace drl {

namespace {

void check_same_shape(const Matrix& a, const Matrix& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a) +
                     " vs " + shape_str(b));
}

}  // namespace

double sorted_sum(std::vector<double>& terms) {
  std::sort(terms.begin(), terms.end());
  double s = 0.0;
  for (double v : terms) s += v;
  return s;
}

Matrix sigmoid(const Matrix& x) {
  return x.unaryExpr([](double v) { return 1.0 / (1.0 + std::exp(-v)); });
}

Matrix row_softmax(const Matrix& x) {
  Matrix y(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const double m = x.row(i).maxCoeff();
    Eigen::RowVectorXd e = (x.row(i).array() - m).exp();
    y.row(i) = e / e.sum();
  }
  return y;
}

Var matmul(Tape& t, Var a, Var b) {
  const Matrix& A = t.value(a);
  const Matrix& B = t.value(b);
  if (A.cols() != B.rows())
    throw ShapeError("matmul: " + shape_str(A) + " x " + shape_str(B));
  return t.emit(A * B, [a, b](Tape& t, Var self) {
    const Matrix& g = t.grad(self);
    t.grad(a).noalias() += g * t.value(b).transpose();
    t.grad(b).noalias() += t.value(a).transpose() * g;
  });
}

Var matmul_nt(Tape& t, Var a, Var b) {
  const Matrix& A = t.value(a);
  const Matrix& B = t.value(b);
  if (A.cols() != B.cols())
    throw ShapeError("matmul_nt: " + shape_str(A) + " x " + shape_str(B) + "^T");
  return t.emit(A * B.transpose(), [a, b](Tape& t, Var self) {
    const Matrix& g = t.grad(self);
    t.grad(a).noalias() += g * t.value(b);
    t.grad(b).noalias() += g.transpose() * t.value(a);
  });
}

Var matmul_sorted(Tape& t, Var a, Var b) {
  const Matrix& A = t.value(a);
  const Matrix& B = t.value(b);
  if (A.cols() != B.rows())
    throw ShapeError("matmul_sorted: " + shape_str(A) + " x " + shape_str(B));
  Matrix C(A.rows(), B.cols());
  std::vector<double> terms(static_cast<size_t>(A.cols()));
  for (Eigen::Index i = 0; i < A.rows(); ++i)
    for (Eigen::Index j = 0; j < B.cols(); ++j) {
      for (Eigen::Index k = 0; k < A.cols(); ++k) terms[k] = A(i, k) * B(k, j);
      C(i, j) = sorted_sum(terms);
    }
  return t.emit(std::move(C), [a, b](Tape& t, Var self) {
    const Matrix& g = t.grad(self);
    t.grad(a).noalias() += g * t.value(b).transpose();
    t.grad(b).noalias() += t.value(a).transpose() * g;
  });
}

Var add(Tape& t, Var a, Var b) {
  check_same_shape(t.value(a), t.value(b), "add");
  return t.emit(t.value(a) + t.value(b), [a, b](Tape& t, Var self) {
    t.grad(a) += t.grad(self);
    t.grad(b) += t.grad(self);
  });
}

Var sub(Tape& t, Var a, Var b) {
  check_same_shape(t.value(a), t.value(b), "sub");
  return t.emit(t.value(a) - t.value(b), [a, b](Tape& t, Var self) {
    t.grad(a) += t.grad(self);
    t.grad(b) -= t.grad(self);
  });
}

Var cwise_mul(Tape& t, Var a, Var b) {
  check_same_shape(t.value(a), t.value(b), "cwise_mul");
  return t.emit(t.value(a).cwiseProduct(t.value(b)), [a, b](Tape& t, Var self) {
    const Matrix& g = t.grad(self);
    t.grad(a) += g.cwiseProduct(t.value(b));
    t.grad(b) += g.cwiseProduct(t.value(a));
  });
}

Var scale(Tape& t, Var a, double s) {
  return t.emit(t.value(a) * s, [a, s](Tape& t, Var self) {
    t.grad(a) += t.grad(self) * s;
  });
}

Var add_row_broadcast(Tape& t, Var a, Var row) {
  const Matrix& A = t.value(a);
  const Matrix& r = t.value(row);
  if (r.rows() != 1 || r.cols() != A.cols())
    throw ShapeError("add_row_broadcast: " + shape_str(A) + " + " + shape_str(r));
  return t.emit(A.rowwise() + r.row(0), [a, row](Tape& t, Var self) {
    const Matrix& g = t.grad(self);
    t.grad(a) += g;
    t.grad(row) += g.colwise().sum();
  });
}

Var affine(Tape& t, Var x, Var w, Var b) {
  return add_row_broadcast(t, matmul(t, x, w), b);
}

Var sigmoid(Tape& t, Var x) {
  return t.emit(sigmoid(t.value(x)), [x](Tape& t, Var self) {
    const Matrix& y = t.value(self);
    t.grad(x) += t.grad(self).cwiseProduct(
        y.cwiseProduct(Matrix::Ones(y.rows(), y.cols()) - y));
  });
}

Var relu(Tape& t, Var x) {
  return t.emit(t.value(x).cwiseMax(0.0), [x](Tape& t, Var self) {
    const Matrix& v = t.value(x);
    t.grad(x) += t.grad(self).cwiseProduct(
        (v.array() > 0.0).cast<double>().matrix());
  });
}

Var row_softmax(Tape& t, Var x) {
  return t.emit(row_softmax(t.value(x)), [x](Tape& t, Var self) {
    const Matrix& y = t.value(self);
    const Matrix& g = t.grad(self);
    Matrix gy = g.cwiseProduct(y);
    Eigen::VectorXd dots = gy.rowwise().sum();
    t.grad(x) += gy - y.cwiseProduct(dots.replicate(1, y.cols()));
  });
}

Var row_center(Tape& t, Var x) {
  const Matrix& v = t.value(x);
  Eigen::VectorXd means(v.rows());
  for (Eigen::Index i = 0; i < v.rows(); ++i) means(i) = v.row(i).mean();
  return t.emit(v - means.replicate(1, v.cols()), [x](Tape& t, Var self) {
    const Matrix& g = t.grad(self);
    Eigen::VectorXd gm = g.rowwise().mean();
    t.grad(x) += g - gm.replicate(1, g.cols());
  });
}

Var row_normalize(Tape& t, Var x, const char* ctx) {
  const Matrix& v = t.value(x);
  Eigen::VectorXd norms(v.rows());
  for (Eigen::Index i = 0; i < v.rows(); ++i) norms(i) = v.row(i).norm();
  for (Eigen::Index i = 0; i < norms.size(); ++i)
    if (norms(i) < 1e-12)
      throw NumericError(std::string(ctx) + ": degenerate feature at node " +
                         std::to_string(i));
  Matrix y = v.array().colwise() / norms.array();
  return t.emit(std::move(y), [x](Tape& t, Var self) {
    const Matrix& v = t.value(x);
    const Matrix& y = t.value(self);
    const Matrix& g = t.grad(self);
    Eigen::VectorXd norms = v.rowwise().norm();
    Eigen::VectorXd dots = g.cwiseProduct(y).rowwise().sum();
    Matrix d = g - y.cwiseProduct(dots.replicate(1, y.cols()));
    t.grad(x) += (d.array().colwise() / norms.array()).matrix();
  });
}

Var vcat(Tape& t, Var top, Var bottom) {
  const Matrix& a = t.value(top);
  const Matrix& b = t.value(bottom);
  if (a.cols() != b.cols())
    throw ShapeError("vcat: " + shape_str(a) + " over " + shape_str(b));
  Matrix y(a.rows() + b.rows(), a.cols());
  y << a, b;
  return t.emit(std::move(y), [top, bottom](Tape& t, Var self) {
    const Matrix& g = t.grad(self);
    const Eigen::Index ra = t.value(top).rows();
    t.grad(top) += g.topRows(ra);
    t.grad(bottom) += g.bottomRows(g.rows() - ra);
  });
}

Var hcat3(Tape& t, Var a, Var b, Var c) {
  const Matrix& A = t.value(a);
  const Matrix& B = t.value(b);
  const Matrix& C = t.value(c);
  if (A.rows() != B.rows() || A.rows() != C.rows())
    throw ShapeError("hcat3: row counts " + shape_str(A) + ", " + shape_str(B) +
                     ", " + shape_str(C));
  Matrix y(A.rows(), A.cols() + B.cols() + C.cols());
  y << A, B, C;
  return t.emit(std::move(y), [a, b, c](Tape& t, Var self) {
    const Matrix& g = t.grad(self);
    const Eigen::Index ca = t.value(a).cols();
    const Eigen::Index cb = t.value(b).cols();
    t.grad(a) += g.leftCols(ca);
    t.grad(b) += g.middleCols(ca, cb);
    t.grad(c) += g.rightCols(g.cols() - ca - cb);
  });
}

Var slice_rows(Tape& t, Var x, int start, int count) {
  const Matrix& v = t.value(x);
  if (start < 0 || count < 0 || start + count > v.rows())
    throw ShapeError("slice_rows: [" + std::to_string(start) + ", " +
                     std::to_string(start + count) + ") of " + shape_str(v));
  return t.emit(v.middleRows(start, count), [x, start, count](Tape& t, Var self) {
    t.grad(x).middleRows(start, count) += t.grad(self);
  });
}

Var gather_cols(Tape& t, Var x, const std::vector<int>& cols) {
  const Matrix& v = t.value(x);
  Matrix y(v.rows(), static_cast<Eigen::Index>(cols.size()));
  for (size_t k = 0; k < cols.size(); ++k) {
    if (cols[k] < 0 || cols[k] >= v.cols())
      throw ShapeError("gather_cols: column " + std::to_string(cols[k]) +
                       " of " + shape_str(v));
    y.col(static_cast<Eigen::Index>(k)) = v.col(cols[k]);
  }
  return t.emit(std::move(y), [x, cols](Tape& t, Var self) {
    const Matrix& g = t.grad(self);
    for (size_t k = 0; k < cols.size(); ++k)
      t.grad(x).col(cols[k]) += g.col(static_cast<Eigen::Index>(k));
  });
}

Var scatter_cols(Tape& t, Var x, const std::vector<int>& cols, int width) {
  const Matrix& v = t.value(x);
  if (static_cast<size_t>(v.cols()) != cols.size())
    throw ShapeError("scatter_cols: " + shape_str(v) + " into " +
                     std::to_string(cols.size()) + " slots");
  Matrix y = Matrix::Zero(v.rows(), width);
  for (size_t k = 0; k < cols.size(); ++k) {
    if (cols[k] < 0 || cols[k] >= width)
      throw ShapeError("scatter_cols: slot " + std::to_string(cols[k]) +
                       " of width " + std::to_string(width));
    y.col(cols[k]) = v.col(static_cast<Eigen::Index>(k));
  }
  return t.emit(std::move(y), [x, cols](Tape& t, Var self) {
    const Matrix& g = t.grad(self);
    for (size_t k = 0; k < cols.size(); ++k)
      t.grad(x).col(static_cast<Eigen::Index>(k)) += g.col(cols[k]);
  });
}

Var overwrite_rows(Tape& t, Var x, const std::vector<int>& rows, Matrix fixed) {
  Matrix y = t.value(x);
  if (fixed.rows() != static_cast<Eigen::Index>(rows.size()) ||
      fixed.cols() != y.cols())
    throw ShapeError("overwrite_rows: " + shape_str(fixed) + " into " +
                     shape_str(y));
  for (size_t k = 0; k < rows.size(); ++k)
    y.row(rows[k]) = fixed.row(static_cast<Eigen::Index>(k));
  return t.emit(std::move(y), [x, rows](Tape& t, Var self) {
    Matrix g = t.grad(self);
    for (int r : rows) g.row(r).setZero();
    t.grad(x) += g;
  });
}

Var pairwise_sqdist(Tape& t, Var x) {
  const Matrix& v = t.value(x);
  const Eigen::Index m = v.rows();
  Matrix d = Matrix::Zero(m, m);
  for (Eigen::Index i = 0; i < m; ++i)
    for (Eigen::Index j = i + 1; j < m; ++j)
      d(i, j) = d(j, i) = (v.row(i) - v.row(j)).squaredNorm();
  return t.emit(std::move(d), [x](Tape& t, Var self) {
    const Matrix& v = t.value(x);
    const Matrix& g = t.grad(self);
    Matrix& gx = t.grad(x);
    const Eigen::Index m = v.rows();
    for (Eigen::Index i = 0; i < m; ++i)
      for (Eigen::Index j = 0; j < m; ++j) {
        if (i == j) continue;
        gx.row(i) += 2.0 * (g(i, j) + g(j, i)) * (v.row(i) - v.row(j));
      }
  });
}

Var inv_one_plus_sqrt(Tape& t, Var d) {
  const Matrix& v = t.value(d);
  Matrix y = v.unaryExpr([](double e) { return 1.0 / (1.0 + std::sqrt(e)); });
  return t.emit(std::move(y), [d](Tape& t, Var self) {
    const Matrix& v = t.value(d);
    const Matrix& g = t.grad(self);
    Matrix dd = v.binaryExpr(g, [](double e, double gg) {
      if (e <= 0.0) return 0.0;
      const double s = std::sqrt(e);
      return -gg / (2.0 * s * (1.0 + s) * (1.0 + s));
    });
    t.grad(d) += dd;
  });
}

Var exp_scale(Tape& t, Var x, double c) {
  Matrix y = (t.value(x).array() * c).exp();
  return t.emit(std::move(y), [x, c](Tape& t, Var self) {
    t.grad(x) += c * t.grad(self).cwiseProduct(t.value(self));
  });
}

Var pairwise_absdiff(Tape& t, Var x) {
  const Matrix& v = t.value(x);
  const Eigen::Index m = v.rows();
  Matrix y(m * m, v.cols());
  for (Eigen::Index i = 0; i < m; ++i)
    for (Eigen::Index j = 0; j < m; ++j)
      y.row(i * m + j) = (v.row(i) - v.row(j)).cwiseAbs();
  return t.emit(std::move(y), [x](Tape& t, Var self) {
    const Matrix& v = t.value(x);
    const Matrix& g = t.grad(self);
    Matrix& gx = t.grad(x);
    const Eigen::Index m = v.rows();
    for (Eigen::Index i = 0; i < m; ++i)
      for (Eigen::Index j = 0; j < m; ++j) {
        Eigen::RowVectorXd s =
            (v.row(i) - v.row(j)).unaryExpr([](double e) {
              return e > 0.0 ? 1.0 : (e < 0.0 ? -1.0 : 0.0);
            });
        gx.row(i) += g.row(i * m + j).cwiseProduct(s);
        gx.row(j) -= g.row(i * m + j).cwiseProduct(s);
      }
  });
}

Var reshape_rows(Tape& t, Var x, int rows, int cols) {
  const Matrix& v = t.value(x);
  if (static_cast<Eigen::Index>(rows) * cols != v.size())
    throw ShapeError("reshape_rows: " + shape_str(v) + " into " +
                     std::to_string(rows) + "x" + std::to_string(cols));
  Matrix y(rows, cols);
  for (Eigen::Index k = 0; k < v.size(); ++k)
    y(k / cols, k % cols) = v(k / v.cols(), k % v.cols());
  return t.emit(std::move(y), [x](Tape& t, Var self) {
    const Matrix& g = t.grad(self);
    Matrix& gx = t.grad(x);
    for (Eigen::Index k = 0; k < g.size(); ++k)
      gx(k / gx.cols(), k % gx.cols()) += g(k / g.cols(), k % g.cols());
  });
}

Var set_diag_one(Tape& t, Var x) {
  Matrix y = t.value(x);
  if (y.rows() != y.cols())
    throw ShapeError("set_diag_one: " + shape_str(y) + " is not square");
  y.diagonal().setOnes();
  return t.emit(std::move(y), [x](Tape& t, Var self) {
    Matrix g = t.grad(self);
    g.diagonal().setZero();
    t.grad(x) += g;
  });
}

Var renorm_rows(Tape& t, Var x) {
  const Matrix& v = t.value(x);
  Matrix c = v.cwiseMax(0.0);
  // Per-row reductions: Eigen's batched rowwise().sum() reassociates across
  // row positions, which would break exact row-permutation equivariance.
  Eigen::VectorXd sums(c.rows());
  for (Eigen::Index i = 0; i < c.rows(); ++i)
    sums(i) = std::max(c.row(i).sum(), 1e-12);
  Matrix y = c.array().colwise() / sums.array();
  return t.emit(std::move(y), [x](Tape& t, Var self) {
    const Matrix& v = t.value(x);
    const Matrix& y = t.value(self);
    const Matrix& g = t.grad(self);
    Matrix& gx = t.grad(x);
    for (Eigen::Index i = 0; i < v.rows(); ++i) {
      const double raw = v.row(i).cwiseMax(0.0).sum();
      const double s = std::max(raw, 1e-12);
      const double active = raw > 1e-12 ? 1.0 : 0.0;
      const double dot = g.row(i).dot(y.row(i));
      for (Eigen::Index j = 0; j < v.cols(); ++j)
        if (v(i, j) > 0.0) gx(i, j) += (g(i, j) - active * dot) / s;
    }
  });
}

Var shift_rows_nonneg(Tape& t, Var x) {
  const Matrix& v = t.value(x);
  Matrix y = v;
  for (Eigen::Index i = 0; i < v.rows(); ++i) {
    const double m = v.row(i).minCoeff();
    y.row(i).array() += -std::min(0.0, m) + 1e-12;
  }
  return t.emit(std::move(y), [x](Tape& t, Var self) {
    const Matrix& v = t.value(x);
    const Matrix& g = t.grad(self);
    Matrix& gx = t.grad(x);
    for (Eigen::Index i = 0; i < v.rows(); ++i) {
      gx.row(i) += g.row(i);
      Eigen::Index amin;
      if (v.row(i).minCoeff(&amin) < 0.0) gx(i, amin) -= g.row(i).sum();
    }
  });
}

Var ce_from_probs(Tape& t, Var probs, const std::vector<int>& labels) {
  const Matrix& p = t.value(probs);
  if (static_cast<Eigen::Index>(labels.size()) != p.rows())
    throw ShapeError("ce_from_probs: " + std::to_string(labels.size()) +
                     " labels for " + shape_str(p));
  std::vector<double> terms(labels.size());
  for (size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || labels[i] >= p.cols())
      throw LabelError("ce_from_probs: label " + std::to_string(labels[i]) +
                       " outside [0, " + std::to_string(p.cols()) + ")");
    terms[i] = -std::log(std::max(p(static_cast<Eigen::Index>(i), labels[i]), 1e-12));
  }
  const double n = static_cast<double>(labels.size());
  Matrix y(1, 1);
  y(0, 0) = sorted_sum(terms) / n;
  return t.emit(std::move(y), [probs, labels, n](Tape& t, Var self) {
    const double g = t.grad(self)(0, 0);
    const Matrix& p = t.value(probs);
    Matrix& gp = t.grad(probs);
    for (size_t i = 0; i < labels.size(); ++i) {
      const double pv = p(static_cast<Eigen::Index>(i), labels[i]);
      if (pv > 1e-12) gp(static_cast<Eigen::Index>(i), labels[i]) -= g / (n * pv);
    }
  });
}

Var sum_all(Tape& t, Var x) {
  Matrix y(1, 1);
  y(0, 0) = t.value(x).sum();
  return t.emit(std::move(y), [x](Tape& t, Var self) {
    t.grad(x).array() += t.grad(self)(0, 0);
  });
}

}  // namespace drl
