#ifndef DRL_OPS_HPP
#define DRL_OPS_HPP

#include <vector>

#include "drl/tape.hpp"

namespace drl {

// ---- plain matrix kernels (no tape) ----

/// Sum in ascending value order; depends only on the multiset of addends.
double sorted_sum(std::vector<double>& terms);

/// Elementwise 1/(1+exp(-x)); outputs strictly inside (0,1).
Matrix sigmoid(const Matrix& x);

/// Rowwise softmax with max-subtraction; each output row sums to 1.
Matrix row_softmax(const Matrix& x);

// ---- recorded operations ----

Var matmul(Tape& t, Var a, Var b);
/// a * b^T without materializing the transpose.
Var matmul_nt(Tape& t, Var a, Var b);
/// Matrix product whose inner sums accumulate in value-sorted order, so the
/// result is invariant under a simultaneous permutation of a's columns and
/// b's rows. Used where graph-node order must not leak into the arithmetic.
Var matmul_sorted(Tape& t, Var a, Var b);

Var add(Tape& t, Var a, Var b);
Var sub(Tape& t, Var a, Var b);
Var cwise_mul(Tape& t, Var a, Var b);
Var scale(Tape& t, Var a, double s);
/// Adds a 1xN row to every row of a.
Var add_row_broadcast(Tape& t, Var a, Var row);
/// matmul(x, w) + bias row.
Var affine(Tape& t, Var x, Var w, Var b);

Var sigmoid(Tape& t, Var x);
Var relu(Tape& t, Var x);
Var row_softmax(Tape& t, Var x);

/// Subtracts each row's mean from the row.
Var row_center(Tape& t, Var x);
/// Divides each row by its L2 norm; throws NumericError naming the row when
/// a norm falls below 1e-12. `ctx` prefixes the error message.
Var row_normalize(Tape& t, Var x, const char* ctx = "row_normalize");

Var vcat(Tape& t, Var top, Var bottom);
Var hcat3(Tape& t, Var a, Var b, Var c);
Var slice_rows(Tape& t, Var x, int start, int count);
Var gather_cols(Tape& t, Var x, const std::vector<int>& cols);
/// Inverse of gather_cols: places column k of x at column cols[k] of a
/// zero matrix with `width` columns.
Var scatter_cols(Tape& t, Var x, const std::vector<int>& cols, int width);
/// Copies x, then replaces rows[k] with fixed.row(k); the replaced rows do
/// not propagate gradient.
Var overwrite_rows(Tape& t, Var x, const std::vector<int>& rows, Matrix fixed);

/// M x M matrix of squared Euclidean distances between the rows of x.
Var pairwise_sqdist(Tape& t, Var x);
/// Elementwise 1/(1+sqrt(d)); gradient is 0 where d == 0.
Var inv_one_plus_sqrt(Tape& t, Var d);
/// Elementwise exp(c*x).
Var exp_scale(Tape& t, Var x, double c);
/// (M*M) x F matrix whose row i*M+j is |x_i - x_j|.
Var pairwise_absdiff(Tape& t, Var x);
/// Row-major reindexing into `rows` x `cols`.
Var reshape_rows(Tape& t, Var x, int rows, int cols);
/// Forces the diagonal to exactly 1 (self-similarity); no gradient there.
Var set_diag_one(Tape& t, Var x);

/// Clamps negatives to 0 and divides each row by its sum (guarded at 1e-12).
Var renorm_rows(Tape& t, Var x);
/// Per row: y = x - min(0, row minimum) + 1e-12, restoring nonnegativity
/// while preserving each row's argmax.
Var shift_rows_nonneg(Tape& t, Var x);

/// Mean over rows of -log(max(p[label], 1e-12)); summation over rows is
/// value-sorted, so the loss is exactly invariant under row permutation.
Var ce_from_probs(Tape& t, Var probs, const std::vector<int>& labels);

Var sum_all(Tape& t, Var x);

}  // namespace drl

#endif  // DRL_OPS_HPP
