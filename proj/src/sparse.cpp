#include "hybridkkt/sparse.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numeric>
#include <sstream>
#include <string>

namespace hkkt {

CscMatrix CscMatrix::from_triplets(int rows, int cols, std::span<const Triplet> entries,
                                   bool symmetric) {
  if (symmetric && rows != cols) throw std::invalid_argument("symmetric matrix must be square");
  std::vector<Triplet> t(entries.begin(), entries.end());
  for (auto& e : t) {
    if (e.row < 0 || e.row >= rows || e.col < 0 || e.col >= cols) {
      throw std::out_of_range("triplet outside matrix dimensions");
    }
    if (symmetric && e.row < e.col) std::swap(e.row, e.col);
  }
  std::stable_sort(t.begin(), t.end(), [](const Triplet& a, const Triplet& b) {
    return a.col != b.col ? a.col < b.col : a.row < b.row;
  });
  CscMatrix m;
  m.rows = rows;
  m.cols = cols;
  m.symmetric = symmetric;
  m.col_ptr.assign(static_cast<std::size_t>(cols) + 1, 0);
  for (std::size_t k = 0; k < t.size(); ++k) {
    if (!m.row_idx.empty() && k > 0 && t[k].row == t[k - 1].row && t[k].col == t[k - 1].col) {
      m.values.back() += t[k].value;
      continue;
    }
    m.row_idx.push_back(t[k].row);
    m.values.push_back(t[k].value);
    ++m.col_ptr[static_cast<std::size_t>(t[k].col) + 1];
  }
  std::partial_sum(m.col_ptr.begin(), m.col_ptr.end(), m.col_ptr.begin());
  return m;
}

CscMatrix CscMatrix::lower_from_dense(const Eigen::MatrixXd& dense, double drop) {
  std::vector<Triplet> t;
  for (int j = 0; j < dense.cols(); ++j) {
    for (int i = j; i < dense.rows(); ++i) {
      if (i == j || std::abs(dense(i, j)) > drop) t.push_back({i, j, dense(i, j)});
    }
  }
  return from_triplets(static_cast<int>(dense.rows()), static_cast<int>(dense.cols()), t, true);
}

bool CscMatrix::same_pattern(const CscMatrix& other) const noexcept {
  return rows == other.rows && cols == other.cols && symmetric == other.symmetric &&
         col_ptr == other.col_ptr && row_idx == other.row_idx;
}

void CscMatrix::validate() const {
  if (col_ptr.size() != static_cast<std::size_t>(cols) + 1 || col_ptr.front() != 0 ||
      col_ptr.back() != nnz() || values.size() != row_idx.size()) {
    throw std::logic_error("CSC arrays have inconsistent sizes");
  }
  for (int j = 0; j < cols; ++j) {
    const int begin = col_ptr[static_cast<std::size_t>(j)];
    const int end = col_ptr[static_cast<std::size_t>(j) + 1];
    if (end < begin) throw std::logic_error("CSC column pointers decrease");
    for (int p = begin; p < end; ++p) {
      const int r = row_idx[static_cast<std::size_t>(p)];
      if (r < 0 || r >= rows) throw std::logic_error("CSC row index out of range");
      if (p > begin && r <= row_idx[static_cast<std::size_t>(p) - 1]) {
        throw std::logic_error("CSC row indices not strictly increasing");
      }
      if (symmetric && r < j) throw std::logic_error("symmetric CSC stores upper entry");
    }
  }
}

int CscMatrix::find(int row, int col) const noexcept {
  if (symmetric && row < col) std::swap(row, col);
  const auto begin = row_idx.begin() + col_ptr[static_cast<std::size_t>(col)];
  const auto end = row_idx.begin() + col_ptr[static_cast<std::size_t>(col) + 1];
  const auto it = std::lower_bound(begin, end, row);
  return (it != end && *it == row) ? static_cast<int>(it - row_idx.begin()) : -1;
}

Eigen::MatrixXd CscMatrix::to_dense() const {
  Eigen::MatrixXd d = Eigen::MatrixXd::Zero(rows, cols);
  for (int j = 0; j < cols; ++j) {
    for (int p = col_ptr[static_cast<std::size_t>(j)]; p < col_ptr[static_cast<std::size_t>(j) + 1]; ++p) {
      const int i = row_idx[static_cast<std::size_t>(p)];
      d(i, j) += values[static_cast<std::size_t>(p)];
      if (symmetric && i != j) d(j, i) += values[static_cast<std::size_t>(p)];
    }
  }
  return d;
}

void multiply(const CscMatrix& a, const Vec& x, Vec& y) {
  y.setZero(a.rows);
  for (int j = 0; j < a.cols; ++j) {
    const double xj = x[j];
    double acc = 0.0;
    for (int p = a.col_ptr[static_cast<std::size_t>(j)]; p < a.col_ptr[static_cast<std::size_t>(j) + 1]; ++p) {
      const int i = a.row_idx[static_cast<std::size_t>(p)];
      const double v = a.values[static_cast<std::size_t>(p)];
      y[i] += v * xj;
      if (a.symmetric && i != j) acc += v * x[i];
    }
    y[j] += acc;
  }
}

CsrMatrix CsrMatrix::from_dense(const Eigen::MatrixXd& dense, double drop) {
  CsrMatrix m;
  m.rows = static_cast<int>(dense.rows());
  m.cols = static_cast<int>(dense.cols());
  for (int i = 0; i < m.rows; ++i) {
    for (int j = 0; j < m.cols; ++j) {
      if (std::abs(dense(i, j)) > drop) {
        m.col_idx.push_back(j);
        m.values.push_back(dense(i, j));
      }
    }
    m.row_ptr.push_back(m.nnz());
  }
  return m;
}

Eigen::MatrixXd CsrMatrix::to_dense() const {
  Eigen::MatrixXd d = Eigen::MatrixXd::Zero(rows, cols);
  for (int i = 0; i < rows; ++i) {
    for (int p = row_ptr[static_cast<std::size_t>(i)]; p < row_ptr[static_cast<std::size_t>(i) + 1]; ++p) {
      d(i, col_idx[static_cast<std::size_t>(p)]) += values[static_cast<std::size_t>(p)];
    }
  }
  return d;
}

void multiply(const CsrMatrix& a, const Vec& x, Vec& y) {
  y.resize(a.rows);
  for (int i = 0; i < a.rows; ++i) {
    double acc = 0.0;
    for (int p = a.row_ptr[static_cast<std::size_t>(i)]; p < a.row_ptr[static_cast<std::size_t>(i) + 1]; ++p) {
      acc += a.values[static_cast<std::size_t>(p)] * x[a.col_idx[static_cast<std::size_t>(p)]];
    }
    y[i] = acc;
  }
}

void multiply_transpose_add(const CsrMatrix& a, const Vec& x, double alpha, Vec& y) {
  for (int i = 0; i < a.rows; ++i) {
    const double xi = alpha * x[i];
    if (xi == 0.0) continue;
    for (int p = a.row_ptr[static_cast<std::size_t>(i)]; p < a.row_ptr[static_cast<std::size_t>(i) + 1]; ++p) {
      y[a.col_idx[static_cast<std::size_t>(p)]] += a.values[static_cast<std::size_t>(p)] * xi;
    }
  }
}

namespace {

void require_mtx(const std::filesystem::path& path) {
  if (path.extension() != ".mtx") {
    throw std::invalid_argument("unsupported matrix file extension: " + path.string());
  }
}

}  // namespace

void write_matrix_market(const std::filesystem::path& path, const CscMatrix& a) {
  require_mtx(path);
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path.string());
  out << "%%MatrixMarket matrix coordinate real " << (a.symmetric ? "symmetric" : "general")
      << "\n";
  out << a.rows << ' ' << a.cols << ' ' << a.nnz() << "\n";
  out << std::setprecision(std::numeric_limits<double>::max_digits10);
  for (int j = 0; j < a.cols; ++j) {
    for (int p = a.col_ptr[static_cast<std::size_t>(j)]; p < a.col_ptr[static_cast<std::size_t>(j) + 1]; ++p) {
      out << a.row_idx[static_cast<std::size_t>(p)] + 1 << ' ' << j + 1 << ' '
          << a.values[static_cast<std::size_t>(p)] << "\n";
    }
  }
}

CscMatrix read_matrix_market(const std::filesystem::path& path) {
  require_mtx(path);
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::string line;
  std::getline(in, line);
  if (line.rfind("%%MatrixMarket", 0) != 0) throw std::runtime_error("missing MatrixMarket banner");
  std::istringstream banner(line);
  std::string tag, object, format, field, symmetry;
  banner >> tag >> object >> format >> field >> symmetry;
  if (object != "matrix" || format != "coordinate" || field != "real") {
    throw std::runtime_error("only real coordinate matrices are supported");
  }
  const bool symmetric = symmetry == "symmetric";
  while (std::getline(in, line) && !line.empty() && line[0] == '%') {
  }
  std::istringstream header(line);
  int rows = 0, cols = 0, nnz = 0;
  header >> rows >> cols >> nnz;
  std::vector<Triplet> t;
  t.reserve(static_cast<std::size_t>(nnz));
  for (int k = 0; k < nnz; ++k) {
    int i = 0, j = 0;
    double v = 0.0;
    if (!(in >> i >> j >> v)) throw std::runtime_error("truncated MatrixMarket file");
    t.push_back({i - 1, j - 1, v});
  }
  return CscMatrix::from_triplets(rows, cols, t, symmetric);
}

}  // namespace hkkt
