#pragma once

#include <cstdint>
#include <limits>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace hkkt {

/// Raised by ModelBuilder / compile() on malformed models.
class CompileError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised when evaluation of a pattern instance produces a non-finite value.
class EvalError : public std::runtime_error {
 public:
  EvalError(const std::string& what, int pattern_id)
      : std::runtime_error(what), pattern_id_(pattern_id) {}
  int pattern_id() const noexcept { return pattern_id_; }

 private:
  int pattern_id_;
};

/// One dimension of an indexed reference: either `tuple[component] + offset`
/// or the constant `offset` when component < 0.
struct IndexSpec {
  int component = -1;
  int offset = 0;
  bool operator==(const IndexSpec&) const = default;
};

inline IndexSpec idx(int component, int offset = 0) { return {component, offset}; }
inline IndexSpec at(int value) { return {-1, value}; }

/// Finite list of integer tuples of a fixed arity.
class IndexSet {
 public:
  IndexSet() = default;

  /// Inclusive integer range [first, last], arity 1.
  static IndexSet range(int first, int last);
  /// Cartesian product, tuples of `a` vary slowest.
  static IndexSet product(const IndexSet& a, const IndexSet& b);
  static IndexSet from_tuples(int arity, std::vector<int> flat);

  int arity() const noexcept { return arity_; }
  std::size_t size() const noexcept {
    return arity_ == 0 ? 0 : flat_.size() / static_cast<std::size_t>(arity_);
  }
  bool empty() const noexcept { return size() == 0; }
  std::span<const int> tuple(std::size_t i) const {
    return {flat_.data() + i * static_cast<std::size_t>(arity_),
            static_cast<std::size_t>(arity_)};
  }

 private:
  int arity_ = 0;
  std::vector<int> flat_;
};

enum class Op : std::uint8_t {
  Constant,
  Param,
  Variable,
  Neg,
  Square,
  Reciprocal,
  Add,
  Sub,
  Mul,
  Div,
};

struct ExprNode;

/// Expression handle used to write templates. Nodes are shared, so a
/// subexpression reused twice is recorded once on the tape.
class Expr {
 public:
  Expr(double value);  // NOLINT: implicit constants read naturally in models
  explicit Expr(std::shared_ptr<const ExprNode> node) : node_(std::move(node)) {}

  const std::shared_ptr<const ExprNode>& node() const noexcept { return node_; }

 private:
  std::shared_ptr<const ExprNode> node_;
};

struct ExprNode {
  Op op = Op::Constant;
  double value = 0.0;
  int ref = -1;  // variable block or parameter array id
  std::vector<IndexSpec> index;
  std::shared_ptr<const ExprNode> lhs;
  std::shared_ptr<const ExprNode> rhs;
};

Expr operator+(const Expr& a, const Expr& b);
Expr operator-(const Expr& a, const Expr& b);
Expr operator*(const Expr& a, const Expr& b);
Expr operator/(const Expr& a, const Expr& b);
Expr operator-(const Expr& a);
Expr square(const Expr& a);
Expr reciprocal(const Expr& a);

struct VarBlock {
  int id = -1;
  /// Reference to element `index` of this block inside a template.
  Expr operator()(std::vector<IndexSpec> index) const;
};

struct ParamArray {
  int id = -1;
  Expr operator()(std::vector<IndexSpec> index = {}) const;
};

enum class ConstraintKind : std::uint8_t { Equality, Inequality };

inline constexpr double kInf = std::numeric_limits<double>::infinity();

/// A template expression flattened into a topologically ordered tape.
struct ExprTemplate {
  struct Node {
    Op op;
    int a = -1;  // operand tape positions
    int b = -1;
    int slot = -1;  // local variable / parameter slot
    double value = 0.0;
  };
  struct Ref {
    int id;
    std::vector<IndexSpec> index;
    bool operator==(const Ref&) const = default;
  };

  std::vector<Node> tape;  // root is tape.back()
  std::vector<Ref> var_slots;
  std::vector<Ref> param_slots;
  int arity = 0;  // number of tuple components referenced

  /// Local slots the root depends on (structural gradient support).
  std::vector<int> gradient_slots;
  /// Structurally nonzero second-derivative pairs (a >= b) over local slots.
  std::vector<std::pair<int, int>> hessian_pairs;

  static ExprTemplate flatten(const Expr& root);
};

/// Mutable model description. Single owner; compile() produces an
/// immutable CompiledModel.
class ModelBuilder {
 public:
  struct Block {
    std::string name;
    std::vector<int> shape;
    std::vector<double> lower, upper, start;
    std::size_t size() const { return lower.size(); }
  };
  struct Param {
    std::string name;
    std::vector<int> shape;
    std::vector<double> values;
  };
  struct Pattern {
    ExprTemplate tmpl;
    IndexSet set;
    bool objective = false;
    ConstraintKind kind = ConstraintKind::Equality;
    // Bounds on h(x) for inequality patterns: lower <= h(x) <= upper.
    double lower = -kInf;
    double upper = 0.0;
  };

  VarBlock add_variables(std::string name, std::vector<int> shape,
                         double lower = -kInf, double upper = kInf,
                         double start = 0.0);
  void set_bounds(VarBlock block, std::vector<int> index, double lower,
                  double upper);
  void set_start(VarBlock block, std::vector<int> index, double value);

  ParamArray add_parameter(std::string name, std::vector<int> shape,
                           std::vector<double> values);
  ParamArray add_scalar(std::string name, double value) {
    return add_parameter(std::move(name), {1}, {value});
  }

  void add_objective(const Expr& term, IndexSet set);
  /// Equality g(x) = 0 or inequality h(x) <= 0.
  void add_constraint(const Expr& body, IndexSet set, ConstraintKind kind);
  /// Two-sided inequality lower <= h(x) <= upper.
  void add_range_constraint(const Expr& body, IndexSet set, double lower,
                            double upper);

  const std::vector<Block>& blocks() const noexcept { return blocks_; }
  const std::vector<Param>& params() const noexcept { return params_; }
  const std::vector<Pattern>& patterns() const noexcept { return patterns_; }
  std::vector<Pattern>& patterns() noexcept { return patterns_; }

  std::size_t flat_index(VarBlock block, std::span<const int> index) const;

 private:
  std::vector<Block> blocks_;
  std::vector<Param> params_;
  std::vector<Pattern> patterns_;
};

/// Row/column coordinate (0-based).
struct Coord {
  int row;
  int col;
  bool operator==(const Coord&) const = default;
};

/// Pattern-compiled NLP: min f(x) s.t. g(x) = 0, h_lo <= h(x) <= h_hi,
/// x_lo <= x <= x_hi. Sparsity patterns are fixed at compile time.
class CompiledModel {
 public:
  struct Program {
    ExprTemplate tmpl;
    bool objective = false;
    bool equality = false;
    int pattern_id = 0;
    int row_offset = 0;  // first row in g or h
    std::size_t instances = 0;
    std::vector<int> vars;       // instances x var_slots
    std::vector<double> params;  // instances x param_slots
    std::vector<int> jac_target;   // instances x gradient_slots
    std::vector<int> hess_target;  // instances x hessian_pairs
    std::vector<std::uint8_t> hess_twice;  // off-diagonal pair folded onto a diagonal
  };

  int n() const noexcept { return n_; }
  int m_eq() const noexcept { return m_eq_; }
  int m_ineq() const noexcept { return m_ineq_; }

  std::span<const double> lower() const noexcept { return x_lower_; }
  std::span<const double> upper() const noexcept { return x_upper_; }
  std::span<const double> start() const noexcept { return x_start_; }
  std::span<const double> ineq_lower() const noexcept { return h_lower_; }
  std::span<const double> ineq_upper() const noexcept { return h_upper_; }
  /// Number of inequality rows with both bounds finite.
  int num_ranged() const noexcept;

  /// Offset of a variable block in the flattened x.
  int block_offset(int block) const { return block_offset_.at(static_cast<std::size_t>(block)); }
  const ModelBuilder& source() const noexcept { return *source_; }
  const std::vector<Program>& programs() const noexcept { return programs_; }

  // Jacobians in CSR (row pointers + columns); Hessian lower triangle in CSC.
  const std::vector<int>& eq_jac_row_ptr() const noexcept { return g_row_ptr_; }
  const std::vector<int>& eq_jac_cols() const noexcept { return g_cols_; }
  const std::vector<int>& ineq_jac_row_ptr() const noexcept { return h_row_ptr_; }
  const std::vector<int>& ineq_jac_cols() const noexcept { return h_cols_; }
  const std::vector<int>& hess_col_ptr() const noexcept { return w_col_ptr_; }
  const std::vector<int>& hess_rows() const noexcept { return w_rows_; }

  std::vector<Coord> eq_jacobian_coords() const;
  std::vector<Coord> ineq_jacobian_coords() const;
  std::vector<Coord> hessian_coords() const;

  double objective(std::span<const double> x) const;
  void constraints(std::span<const double> x, std::span<double> g,
                   std::span<double> h) const;
  void gradient(std::span<const double> x, std::span<double> grad) const;
  void jacobians(std::span<const double> x, std::span<double> g_values,
                 std::span<double> h_values) const;
  /// Lower-triangle values of sigma*∇²f + Σ y_j ∇²g_j + Σ z_i ∇²h_i.
  void hessian(std::span<const double> x, std::span<const double> y,
               std::span<const double> z, double sigma,
               std::span<double> values) const;

  /// Global variable indices read by one instance of a program.
  std::span<const int> instance_variables(std::size_t program,
                                          std::size_t instance) const;

  friend CompiledModel compile(const ModelBuilder& builder);

 private:
  int n_ = 0;
  int m_eq_ = 0;
  int m_ineq_ = 0;
  std::vector<double> x_lower_, x_upper_, x_start_;
  std::vector<double> h_lower_, h_upper_;
  std::vector<int> block_offset_;
  std::vector<Program> programs_;
  std::vector<int> g_row_ptr_, g_cols_, h_row_ptr_, h_cols_;
  std::vector<int> w_col_ptr_, w_rows_;
  std::shared_ptr<const ModelBuilder> source_;
};

CompiledModel compile(const ModelBuilder& builder);

}  // namespace hkkt
