#pragma once

#include <filesystem>
#include <span>
#include <stdexcept>
#include <vector>

#include <Eigen/Core>

namespace hkkt {

using Vec = Eigen::VectorXd;

struct Triplet {
  int row;
  int col;
  double value;
};

/// Compressed sparse column storage. When `symmetric` is set only the lower
/// triangle (row >= col) is stored.
struct CscMatrix {
  int rows = 0;
  int cols = 0;
  std::vector<int> col_ptr{0};
  std::vector<int> row_idx;
  std::vector<double> values;
  bool symmetric = false;

  int nnz() const noexcept { return static_cast<int>(row_idx.size()); }

  /// Duplicates are summed. For symmetric output, upper-triangle entries are
  /// mirrored into the lower triangle.
  static CscMatrix from_triplets(int rows, int cols, std::span<const Triplet> entries,
                                 bool symmetric);
  /// Lower triangle of a dense symmetric matrix; entries with |a| <= drop are skipped
  /// except on the diagonal.
  static CscMatrix lower_from_dense(const Eigen::MatrixXd& dense, double drop = 0.0);

  bool same_pattern(const CscMatrix& other) const noexcept;
  /// Throws std::logic_error when storage invariants are violated.
  void validate() const;
  /// Position of (row, col) in `values`, or -1.
  int find(int row, int col) const noexcept;
  Eigen::MatrixXd to_dense() const;
};

/// y = A x, honouring symmetric lower storage.
void multiply(const CscMatrix& a, const Vec& x, Vec& y);

/// Compressed sparse row storage, used for constraint Jacobians.
struct CsrMatrix {
  int rows = 0;
  int cols = 0;
  std::vector<int> row_ptr{0};
  std::vector<int> col_idx;
  std::vector<double> values;

  int nnz() const noexcept { return static_cast<int>(col_idx.size()); }
  static CsrMatrix from_dense(const Eigen::MatrixXd& dense, double drop = 0.0);
  Eigen::MatrixXd to_dense() const;
};

/// y = A x
void multiply(const CsrMatrix& a, const Vec& x, Vec& y);
/// y += alpha * A^T x
void multiply_transpose_add(const CsrMatrix& a, const Vec& x, double alpha, Vec& y);

/// MatrixMarket coordinate I/O. The path must carry the ".mtx" extension.
/// Symmetric matrices are written with the `symmetric` qualifier.
void write_matrix_market(const std::filesystem::path& path, const CscMatrix& a);
CscMatrix read_matrix_market(const std::filesystem::path& path);

}  // namespace hkkt
