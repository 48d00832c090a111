#include "hybridkkt/expr_model.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <unordered_map>

namespace hkkt {

// ---------------------------------------------------------------------------
// Index sets

IndexSet IndexSet::range(int first, int last) {
  IndexSet s;
  s.arity_ = 1;
  for (int i = first; i <= last; ++i) s.flat_.push_back(i);
  return s;
}

IndexSet IndexSet::product(const IndexSet& a, const IndexSet& b) {
  IndexSet s;
  s.arity_ = a.arity_ + b.arity_;
  s.flat_.reserve(a.size() * b.size() * static_cast<std::size_t>(s.arity_));
  for (std::size_t i = 0; i < a.size(); ++i) {
    for (std::size_t j = 0; j < b.size(); ++j) {
      auto ta = a.tuple(i);
      auto tb = b.tuple(j);
      s.flat_.insert(s.flat_.end(), ta.begin(), ta.end());
      s.flat_.insert(s.flat_.end(), tb.begin(), tb.end());
    }
  }
  return s;
}

IndexSet IndexSet::from_tuples(int arity, std::vector<int> flat) {
  if (arity <= 0 || flat.size() % static_cast<std::size_t>(arity) != 0) {
    throw CompileError("index tuples do not match the declared arity");
  }
  IndexSet s;
  s.arity_ = arity;
  s.flat_ = std::move(flat);
  return s;
}

// ---------------------------------------------------------------------------
// Expression construction

namespace {

Expr make_unary(Op op, const Expr& a) {
  auto n = std::make_shared<ExprNode>();
  n->op = op;
  n->lhs = a.node();
  return Expr(std::move(n));
}

Expr make_binary(Op op, const Expr& a, const Expr& b) {
  auto n = std::make_shared<ExprNode>();
  n->op = op;
  n->lhs = a.node();
  n->rhs = b.node();
  return Expr(std::move(n));
}

}  // namespace

Expr::Expr(double value) {
  auto n = std::make_shared<ExprNode>();
  n->op = Op::Constant;
  n->value = value;
  node_ = std::move(n);
}

Expr operator+(const Expr& a, const Expr& b) { return make_binary(Op::Add, a, b); }
Expr operator-(const Expr& a, const Expr& b) { return make_binary(Op::Sub, a, b); }
Expr operator*(const Expr& a, const Expr& b) { return make_binary(Op::Mul, a, b); }
Expr operator/(const Expr& a, const Expr& b) { return make_binary(Op::Div, a, b); }
Expr operator-(const Expr& a) { return make_unary(Op::Neg, a); }
Expr square(const Expr& a) { return make_unary(Op::Square, a); }
Expr reciprocal(const Expr& a) { return make_unary(Op::Reciprocal, a); }

Expr VarBlock::operator()(std::vector<IndexSpec> index) const {
  auto n = std::make_shared<ExprNode>();
  n->op = Op::Variable;
  n->ref = id;
  n->index = std::move(index);
  return Expr(std::move(n));
}

Expr ParamArray::operator()(std::vector<IndexSpec> index) const {
  auto n = std::make_shared<ExprNode>();
  n->op = Op::Param;
  n->ref = id;
  n->index = index.empty() ? std::vector<IndexSpec>{at(0)} : std::move(index);
  return Expr(std::move(n));
}

// ---------------------------------------------------------------------------
// Flattening and structural analysis

namespace {

bool is_binary(Op op) {
  return op == Op::Add || op == Op::Sub || op == Op::Mul || op == Op::Div;
}

struct Flattener {
  ExprTemplate& t;
  std::unordered_map<const ExprNode*, int> memo;

  int slot_of(std::vector<ExprTemplate::Ref>& slots, const ExprNode& n) {
    ExprTemplate::Ref r{n.ref, n.index};
    for (std::size_t i = 0; i < slots.size(); ++i) {
      if (slots[i] == r) return static_cast<int>(i);
    }
    slots.push_back(std::move(r));
    for (const auto& s : n.index) t.arity = std::max(t.arity, s.component + 1);
    return static_cast<int>(slots.size()) - 1;
  }

  int visit(const ExprNode* n) {
    if (n == nullptr) throw CompileError("expression has a missing operand");
    if (auto it = memo.find(n); it != memo.end()) return it->second;
    ExprTemplate::Node out{n->op};
    switch (n->op) {
      case Op::Constant:
        out.value = n->value;
        break;
      case Op::Param:
        out.slot = slot_of(t.param_slots, *n);
        break;
      case Op::Variable: {
        // Identical references share one tape node.
        out.slot = slot_of(t.var_slots, *n);
        for (std::size_t i = 0; i < t.tape.size(); ++i) {
          if (t.tape[i].op == Op::Variable && t.tape[i].slot == out.slot) {
            memo[n] = static_cast<int>(i);
            return static_cast<int>(i);
          }
        }
        break;
      }
      default:
        out.a = visit(n->lhs.get());
        if (is_binary(n->op)) out.b = visit(n->rhs.get());
        break;
    }
    t.tape.push_back(out);
    const int pos = static_cast<int>(t.tape.size()) - 1;
    memo[n] = pos;
    return pos;
  }
};

}  // namespace

ExprTemplate ExprTemplate::flatten(const Expr& root) {
  ExprTemplate t;
  Flattener f{t, {}};
  f.visit(root.node().get());

  if (t.var_slots.size() > 64) {
    throw CompileError("template references more than 64 distinct variables");
  }
  // Dependency masks and nonlinear interaction pairs.
  std::vector<std::uint64_t> dep(t.tape.size(), 0);
  std::vector<std::uint64_t> pairs(t.var_slots.size(), 0);  // pairs[a] bit b
  auto add_pairs = [&](std::uint64_t lhs, std::uint64_t rhs) {
    for (std::size_t a = 0; a < t.var_slots.size(); ++a) {
      if (lhs >> a & 1U) pairs[a] |= rhs;
      if (rhs >> a & 1U) pairs[a] |= lhs;
    }
  };
  for (std::size_t i = 0; i < t.tape.size(); ++i) {
    const auto& nd = t.tape[i];
    switch (nd.op) {
      case Op::Constant:
      case Op::Param:
        break;
      case Op::Variable:
        dep[i] = std::uint64_t{1} << nd.slot;
        break;
      case Op::Neg:
        dep[i] = dep[nd.a];
        break;
      case Op::Square:
      case Op::Reciprocal:
        dep[i] = dep[nd.a];
        add_pairs(dep[nd.a], dep[nd.a]);
        break;
      case Op::Add:
      case Op::Sub:
        dep[i] = dep[nd.a] | dep[nd.b];
        break;
      case Op::Mul:
        dep[i] = dep[nd.a] | dep[nd.b];
        add_pairs(dep[nd.a], dep[nd.b]);
        break;
      case Op::Div:
        dep[i] = dep[nd.a] | dep[nd.b];
        add_pairs(dep[nd.a], dep[nd.b]);
        add_pairs(dep[nd.b], dep[nd.b]);
        break;
    }
  }
  const std::uint64_t root_dep = dep.back();
  for (std::size_t a = 0; a < t.var_slots.size(); ++a) {
    if (root_dep >> a & 1U) t.gradient_slots.push_back(static_cast<int>(a));
  }
  // Column-major over (a >= b) so one Hessian column sweep serves a run.
  for (std::size_t b = 0; b < t.var_slots.size(); ++b) {
    for (std::size_t a = b; a < t.var_slots.size(); ++a) {
      if ((pairs[a] >> b & 1U) && (root_dep >> a & 1U) && (root_dep >> b & 1U)) {
        t.hessian_pairs.emplace_back(static_cast<int>(a), static_cast<int>(b));
      }
    }
  }
  return t;
}

// ---------------------------------------------------------------------------
// Builder

namespace {

std::size_t checked_size(const std::vector<int>& shape) {
  if (shape.empty()) throw CompileError("block shape must have at least one dimension");
  std::size_t total = 1;
  for (int d : shape) {
    if (d <= 0) throw CompileError("block dimensions must be positive");
    total *= static_cast<std::size_t>(d);
  }
  return total;
}

std::size_t row_major(const std::vector<int>& shape, std::span<const int> index) {
  if (index.size() != shape.size()) {
    throw CompileError("index rank does not match block rank");
  }
  std::size_t flat = 0;
  for (std::size_t d = 0; d < shape.size(); ++d) {
    if (index[d] < 0 || index[d] >= shape[d]) {
      throw CompileError("index out of range");
    }
    flat = flat * static_cast<std::size_t>(shape[d]) + static_cast<std::size_t>(index[d]);
  }
  return flat;
}

}  // namespace

VarBlock ModelBuilder::add_variables(std::string name, std::vector<int> shape,
                                     double lower, double upper, double start) {
  const std::size_t size = checked_size(shape);
  if (lower > upper) throw CompileError("variable block '" + name + "' has lower > upper");
  blocks_.push_back(Block{std::move(name), std::move(shape),
                          std::vector<double>(size, lower),
                          std::vector<double>(size, upper),
                          std::vector<double>(size, start)});
  return VarBlock{static_cast<int>(blocks_.size()) - 1};
}

std::size_t ModelBuilder::flat_index(VarBlock block, std::span<const int> index) const {
  if (block.id < 0 || static_cast<std::size_t>(block.id) >= blocks_.size()) {
    throw CompileError("unknown variable block");
  }
  return row_major(blocks_[static_cast<std::size_t>(block.id)].shape, index);
}

void ModelBuilder::set_bounds(VarBlock block, std::vector<int> index,
                              double lower, double upper) {
  if (lower > upper) throw CompileError("lower bound exceeds upper bound");
  const std::size_t k = flat_index(block, index);
  auto& b = blocks_[static_cast<std::size_t>(block.id)];
  b.lower[k] = lower;
  b.upper[k] = upper;
}

void ModelBuilder::set_start(VarBlock block, std::vector<int> index, double value) {
  const std::size_t k = flat_index(block, index);
  blocks_[static_cast<std::size_t>(block.id)].start[k] = value;
}

ParamArray ModelBuilder::add_parameter(std::string name, std::vector<int> shape,
                                       std::vector<double> values) {
  if (checked_size(shape) != values.size()) {
    throw CompileError("parameter '" + name + "' size does not match its shape");
  }
  params_.push_back(Param{std::move(name), std::move(shape), std::move(values)});
  return ParamArray{static_cast<int>(params_.size()) - 1};
}

void ModelBuilder::add_objective(const Expr& term, IndexSet set) {
  Pattern p;
  p.tmpl = ExprTemplate::flatten(term);
  p.set = std::move(set);
  p.objective = true;
  patterns_.push_back(std::move(p));
}

void ModelBuilder::add_constraint(const Expr& body, IndexSet set, ConstraintKind kind) {
  Pattern p;
  p.tmpl = ExprTemplate::flatten(body);
  p.set = std::move(set);
  p.kind = kind;
  if (kind == ConstraintKind::Equality) {
    p.lower = 0.0;
    p.upper = 0.0;
  }
  patterns_.push_back(std::move(p));
}

void ModelBuilder::add_range_constraint(const Expr& body, IndexSet set,
                                        double lower, double upper) {
  if (lower > upper) throw CompileError("range constraint has lower > upper");
  Pattern p;
  p.tmpl = ExprTemplate::flatten(body);
  p.set = std::move(set);
  p.kind = ConstraintKind::Inequality;
  p.lower = lower;
  p.upper = upper;
  patterns_.push_back(std::move(p));
}

// ---------------------------------------------------------------------------
// Compilation

CompiledModel compile(const ModelBuilder& builder) {
  if (builder.blocks().empty()) throw CompileError("model has no variable blocks");
  if (builder.patterns().empty()) {
    throw CompileError("model has no objective or constraint patterns");
  }

  CompiledModel m;
  m.source_ = std::make_shared<const ModelBuilder>(builder);

  for (const auto& b : builder.blocks()) {
    m.block_offset_.push_back(m.n_);
    m.n_ += static_cast<int>(b.size());
    m.x_lower_.insert(m.x_lower_.end(), b.lower.begin(), b.lower.end());
    m.x_upper_.insert(m.x_upper_.end(), b.upper.begin(), b.upper.end());
    m.x_start_.insert(m.x_start_.end(), b.start.begin(), b.start.end());
  }

  // Equalities first, then inequalities, each in declaration order.
  std::vector<std::size_t> order;
  for (std::size_t i = 0; i < builder.patterns().size(); ++i) {
    const auto& p = builder.patterns()[i];
    if (p.objective) order.push_back(i);
  }
  for (std::size_t i = 0; i < builder.patterns().size(); ++i) {
    const auto& p = builder.patterns()[i];
    if (!p.objective && p.kind == ConstraintKind::Equality) order.push_back(i);
  }
  for (std::size_t i = 0; i < builder.patterns().size(); ++i) {
    const auto& p = builder.patterns()[i];
    if (!p.objective && p.kind == ConstraintKind::Inequality) order.push_back(i);
  }

  std::vector<int> tuple_buf;
  auto resolve = [&](const ExprTemplate::Ref& ref, std::span<const int> tuple,
                     const std::vector<int>& shape) {
    tuple_buf.clear();
    for (const auto& s : ref.index) {
      if (s.component >= static_cast<int>(tuple.size())) {
        throw CompileError("index component exceeds index set arity");
      }
      tuple_buf.push_back(s.component < 0 ? s.offset : tuple[static_cast<std::size_t>(s.component)] + s.offset);
    }
    return row_major(shape, tuple_buf);
  };

  m.g_row_ptr_.push_back(0);
  m.h_row_ptr_.push_back(0);
  std::vector<std::int64_t> hess_keys;

  for (std::size_t pid : order) {
    const auto& pat = builder.patterns()[pid];
    if (pat.set.empty()) {
      throw CompileError("pattern " + std::to_string(pid) + " has an empty index set");
    }
    if (pat.set.arity() < pat.tmpl.arity) {
      throw CompileError("pattern " + std::to_string(pid) +
                         " references more index components than its set provides");
    }
    CompiledModel::Program prog;
    prog.tmpl = pat.tmpl;
    prog.objective = pat.objective;
    prog.equality = !pat.objective && pat.kind == ConstraintKind::Equality;
    prog.pattern_id = static_cast<int>(pid);
    prog.instances = pat.set.size();

    const auto& t = prog.tmpl;
    const std::size_t nv = t.var_slots.size();
    const std::size_t np = t.param_slots.size();
    prog.vars.resize(prog.instances * nv);
    prog.params.resize(prog.instances * np);
    for (std::size_t inst = 0; inst < prog.instances; ++inst) {
      auto tuple = pat.set.tuple(inst);
      for (std::size_t s = 0; s < nv; ++s) {
        const auto& ref = t.var_slots[s];
        if (ref.id < 0 || static_cast<std::size_t>(ref.id) >= builder.blocks().size()) {
          throw CompileError("unresolved variable reference in pattern " + std::to_string(pid));
        }
        const auto& blk = builder.blocks()[static_cast<std::size_t>(ref.id)];
        std::size_t flat = 0;
        try {
          flat = resolve(ref, tuple, blk.shape);
        } catch (const CompileError& e) {
          throw CompileError("unresolved variable reference to '" + blk.name +
                             "' in pattern " + std::to_string(pid) + ": " + e.what());
        }
        prog.vars[inst * nv + s] = m.block_offset_[static_cast<std::size_t>(ref.id)] + static_cast<int>(flat);
      }
      for (std::size_t s = 0; s < np; ++s) {
        const auto& ref = t.param_slots[s];
        if (ref.id < 0 || static_cast<std::size_t>(ref.id) >= builder.params().size()) {
          throw CompileError("unresolved parameter reference in pattern " + std::to_string(pid));
        }
        const auto& par = builder.params()[static_cast<std::size_t>(ref.id)];
        prog.params[inst * np + s] = par.values[resolve(ref, tuple, par.shape)];
      }
    }

    if (!prog.objective) {
      // Rows of one program are contiguous, so the CSR grows in row order.
      auto& row_ptr = prog.equality ? m.g_row_ptr_ : m.h_row_ptr_;
      auto& cols = prog.equality ? m.g_cols_ : m.h_cols_;
      prog.row_offset = static_cast<int>(row_ptr.size()) - 1;
      const std::size_t ng = t.gradient_slots.size();
      prog.jac_target.resize(prog.instances * ng);
      std::vector<int> row_cols;
      for (std::size_t inst = 0; inst < prog.instances; ++inst) {
        row_cols.clear();
        for (int s : t.gradient_slots) row_cols.push_back(prog.vars[inst * nv + static_cast<std::size_t>(s)]);
        std::sort(row_cols.begin(), row_cols.end());
        row_cols.erase(std::unique(row_cols.begin(), row_cols.end()), row_cols.end());
        for (std::size_t k = 0; k < ng; ++k) {
          const int col = prog.vars[inst * nv + static_cast<std::size_t>(t.gradient_slots[k])];
          prog.jac_target[inst * ng + k] = static_cast<int>(
              std::lower_bound(row_cols.begin(), row_cols.end(), col) - row_cols.begin());
        }
        cols.insert(cols.end(), row_cols.begin(), row_cols.end());
        row_ptr.push_back(static_cast<int>(cols.size()));
        if (!prog.equality) {
          m.h_lower_.push_back(pat.lower);
          m.h_upper_.push_back(pat.upper);
        }
      }
    }

    for (std::size_t inst = 0; inst < prog.instances; ++inst) {
      for (const auto& [a, b] : t.hessian_pairs) {
        const std::int64_t ga = prog.vars[inst * nv + static_cast<std::size_t>(a)];
        const std::int64_t gb = prog.vars[inst * nv + static_cast<std::size_t>(b)];
        const std::int64_t row = std::max(ga, gb);
        const std::int64_t col = std::min(ga, gb);
        hess_keys.push_back(col * m.n_ + row);
      }
    }
    m.programs_.push_back(std::move(prog));
  }
  m.m_eq_ = static_cast<int>(m.g_row_ptr_.size()) - 1;
  m.m_ineq_ = static_cast<int>(m.h_row_ptr_.size()) - 1;

  // Deduplicated lower-triangle Hessian pattern in CSC.
  std::sort(hess_keys.begin(), hess_keys.end());
  hess_keys.erase(std::unique(hess_keys.begin(), hess_keys.end()), hess_keys.end());
  m.w_col_ptr_.assign(static_cast<std::size_t>(m.n_) + 1, 0);
  m.w_rows_.reserve(hess_keys.size());
  for (std::int64_t key : hess_keys) {
    const auto col = static_cast<std::size_t>(key / m.n_);
    m.w_rows_.push_back(static_cast<int>(key % m.n_));
    ++m.w_col_ptr_[col + 1];
  }
  for (std::size_t j = 0; j < static_cast<std::size_t>(m.n_); ++j) m.w_col_ptr_[j + 1] += m.w_col_ptr_[j];

  for (auto& prog : m.programs_) {
    const auto& t = prog.tmpl;
    const std::size_t nv = t.var_slots.size();
    const std::size_t nh = t.hessian_pairs.size();
    prog.hess_target.resize(prog.instances * nh);
    prog.hess_twice.resize(prog.instances * nh);
    for (std::size_t inst = 0; inst < prog.instances; ++inst) {
      for (std::size_t k = 0; k < nh; ++k) {
        const auto [a, b] = t.hessian_pairs[k];
        const std::int64_t ga = prog.vars[inst * nv + static_cast<std::size_t>(a)];
        const std::int64_t gb = prog.vars[inst * nv + static_cast<std::size_t>(b)];
        const std::int64_t key = std::min(ga, gb) * m.n_ + std::max(ga, gb);
        prog.hess_target[inst * nh + k] = static_cast<int>(
            std::lower_bound(hess_keys.begin(), hess_keys.end(), key) - hess_keys.begin());
        prog.hess_twice[inst * nh + k] = (a != b && ga == gb) ? 1 : 0;
      }
    }
  }
  return m;
}

int CompiledModel::num_ranged() const noexcept {
  int count = 0;
  for (std::size_t i = 0; i < h_lower_.size(); ++i) {
    if (std::isfinite(h_lower_[i]) && std::isfinite(h_upper_[i])) ++count;
  }
  return count;
}

std::vector<Coord> CompiledModel::eq_jacobian_coords() const {
  std::vector<Coord> out;
  for (int r = 0; r < m_eq_; ++r) {
    for (int p = g_row_ptr_[static_cast<std::size_t>(r)]; p < g_row_ptr_[static_cast<std::size_t>(r) + 1]; ++p) {
      out.push_back({r, g_cols_[static_cast<std::size_t>(p)]});
    }
  }
  return out;
}

std::vector<Coord> CompiledModel::ineq_jacobian_coords() const {
  std::vector<Coord> out;
  for (int r = 0; r < m_ineq_; ++r) {
    for (int p = h_row_ptr_[static_cast<std::size_t>(r)]; p < h_row_ptr_[static_cast<std::size_t>(r) + 1]; ++p) {
      out.push_back({r, h_cols_[static_cast<std::size_t>(p)]});
    }
  }
  return out;
}

std::vector<Coord> CompiledModel::hessian_coords() const {
  std::vector<Coord> out;
  for (int c = 0; c < n_; ++c) {
    for (int p = w_col_ptr_[static_cast<std::size_t>(c)]; p < w_col_ptr_[static_cast<std::size_t>(c) + 1]; ++p) {
      out.push_back({w_rows_[static_cast<std::size_t>(p)], c});
    }
  }
  return out;
}

std::span<const int> CompiledModel::instance_variables(std::size_t program,
                                                       std::size_t instance) const {
  const auto& p = programs_.at(program);
  const std::size_t nv = p.tmpl.var_slots.size();
  return {p.vars.data() + instance * nv, nv};
}

// ---------------------------------------------------------------------------
// Tape interpretation

namespace {

struct Tape {
  std::vector<double> v, dv, adj, dadj;
  std::vector<int> slot_node;

  explicit Tape(const ExprTemplate& t)
      : v(t.tape.size()), dv(t.tape.size()), adj(t.tape.size()),
        dadj(t.tape.size()), slot_node(t.var_slots.size(), -1) {
    for (std::size_t i = 0; i < t.tape.size(); ++i) {
      if (t.tape[i].op == Op::Variable) slot_node[static_cast<std::size_t>(t.tape[i].slot)] = static_cast<int>(i);
    }
  }
};

void forward(const ExprTemplate& t, std::span<const double> x, const int* vars,
             const double* params, Tape& w) {
  for (std::size_t i = 0; i < t.tape.size(); ++i) {
    const auto& nd = t.tape[i];
    double r = 0.0;
    switch (nd.op) {
      case Op::Constant: r = nd.value; break;
      case Op::Param: r = params[nd.slot]; break;
      case Op::Variable: r = x[static_cast<std::size_t>(vars[nd.slot])]; break;
      case Op::Neg: r = -w.v[static_cast<std::size_t>(nd.a)]; break;
      case Op::Square: { const double a = w.v[static_cast<std::size_t>(nd.a)]; r = a * a; break; }
      case Op::Reciprocal: r = 1.0 / w.v[static_cast<std::size_t>(nd.a)]; break;
      case Op::Add: r = w.v[static_cast<std::size_t>(nd.a)] + w.v[static_cast<std::size_t>(nd.b)]; break;
      case Op::Sub: r = w.v[static_cast<std::size_t>(nd.a)] - w.v[static_cast<std::size_t>(nd.b)]; break;
      case Op::Mul: r = w.v[static_cast<std::size_t>(nd.a)] * w.v[static_cast<std::size_t>(nd.b)]; break;
      case Op::Div: r = w.v[static_cast<std::size_t>(nd.a)] / w.v[static_cast<std::size_t>(nd.b)]; break;
    }
    w.v[i] = r;
  }
}

// Adjoints of the root; requires forward().
void reverse(const ExprTemplate& t, Tape& w) {
  std::fill(w.adj.begin(), w.adj.end(), 0.0);
  w.adj.back() = 1.0;
  for (std::size_t i = t.tape.size(); i-- > 0;) {
    const auto& nd = t.tape[i];
    const double g = w.adj[i];
    if (g == 0.0) continue;
    const auto a = static_cast<std::size_t>(nd.a);
    const auto b = static_cast<std::size_t>(nd.b);
    switch (nd.op) {
      case Op::Constant:
      case Op::Param:
      case Op::Variable:
        break;
      case Op::Neg: w.adj[a] -= g; break;
      case Op::Square: w.adj[a] += 2.0 * w.v[a] * g; break;
      case Op::Reciprocal: w.adj[a] -= g * w.v[i] * w.v[i]; break;
      case Op::Add: w.adj[a] += g; w.adj[b] += g; break;
      case Op::Sub: w.adj[a] += g; w.adj[b] -= g; break;
      case Op::Mul: w.adj[a] += g * w.v[b]; w.adj[b] += g * w.v[a]; break;
      case Op::Div: w.adj[a] += g / w.v[b]; w.adj[b] -= g * w.v[i] / w.v[b]; break;
    }
  }
}

// Forward-over-reverse: Hessian column for one local slot lands in dadj.
void hessian_column(const ExprTemplate& t, int slot, Tape& w) {
  std::fill(w.dv.begin(), w.dv.end(), 0.0);
  for (std::size_t i = 0; i < t.tape.size(); ++i) {
    const auto& nd = t.tape[i];
    const auto a = static_cast<std::size_t>(nd.a);
    const auto b = static_cast<std::size_t>(nd.b);
    double r = 0.0;
    switch (nd.op) {
      case Op::Constant:
      case Op::Param: break;
      case Op::Variable: r = nd.slot == slot ? 1.0 : 0.0; break;
      case Op::Neg: r = -w.dv[a]; break;
      case Op::Square: r = 2.0 * w.v[a] * w.dv[a]; break;
      case Op::Reciprocal: r = -w.v[i] * w.v[i] * w.dv[a]; break;
      case Op::Add: r = w.dv[a] + w.dv[b]; break;
      case Op::Sub: r = w.dv[a] - w.dv[b]; break;
      case Op::Mul: r = w.dv[a] * w.v[b] + w.v[a] * w.dv[b]; break;
      case Op::Div: r = (w.dv[a] - w.v[i] * w.dv[b]) / w.v[b]; break;
    }
    w.dv[i] = r;
  }
  std::fill(w.dadj.begin(), w.dadj.end(), 0.0);
  for (std::size_t i = t.tape.size(); i-- > 0;) {
    const auto& nd = t.tape[i];
    const double g = w.adj[i];
    const double dg = w.dadj[i];
    if (g == 0.0 && dg == 0.0) continue;
    const auto a = static_cast<std::size_t>(nd.a);
    const auto b = static_cast<std::size_t>(nd.b);
    switch (nd.op) {
      case Op::Constant:
      case Op::Param:
      case Op::Variable:
        break;
      case Op::Neg: w.dadj[a] -= dg; break;
      case Op::Square: w.dadj[a] += 2.0 * (w.dv[a] * g + w.v[a] * dg); break;
      case Op::Reciprocal: {
        const double r = w.v[i];
        w.dadj[a] -= dg * r * r + 2.0 * g * r * w.dv[i];
        break;
      }
      case Op::Add: w.dadj[a] += dg; w.dadj[b] += dg; break;
      case Op::Sub: w.dadj[a] += dg; w.dadj[b] -= dg; break;
      case Op::Mul:
        w.dadj[a] += dg * w.v[b] + g * w.dv[b];
        w.dadj[b] += dg * w.v[a] + g * w.dv[a];
        break;
      case Op::Div: {
        const double q = w.v[i];
        const double den = w.v[b];
        w.dadj[a] += dg / den - g * w.dv[b] / (den * den);
        w.dadj[b] -= (dg * q + g * w.dv[i]) / den - g * q * w.dv[b] / (den * den);
        break;
      }
    }
  }
}

[[noreturn]] void fail_eval(const CompiledModel::Program& p, const char* what) {
  throw EvalError(std::string("non-finite ") + what + " in pattern " +
                      std::to_string(p.pattern_id),
                  p.pattern_id);
}

void check_size(std::size_t got, std::size_t want, const char* what) {
  if (got != want) throw std::invalid_argument(std::string("dimension mismatch for ") + what);
}

}  // namespace

double CompiledModel::objective(std::span<const double> x) const {
  check_size(x.size(), static_cast<std::size_t>(n_), "x");
  double f = 0.0;
  for (const auto& p : programs_) {
    if (!p.objective) continue;
    Tape w(p.tmpl);
    const std::size_t nv = p.tmpl.var_slots.size();
    const std::size_t np = p.tmpl.param_slots.size();
    for (std::size_t i = 0; i < p.instances; ++i) {
      forward(p.tmpl, x, p.vars.data() + i * nv, p.params.data() + i * np, w);
      if (!std::isfinite(w.v.back())) fail_eval(p, "objective value");
      f += w.v.back();
    }
  }
  return f;
}

void CompiledModel::constraints(std::span<const double> x, std::span<double> g,
                                std::span<double> h) const {
  check_size(x.size(), static_cast<std::size_t>(n_), "x");
  check_size(g.size(), static_cast<std::size_t>(m_eq_), "g");
  check_size(h.size(), static_cast<std::size_t>(m_ineq_), "h");
  for (const auto& p : programs_) {
    if (p.objective) continue;
    Tape w(p.tmpl);
    auto out = p.equality ? g : h;
    const std::size_t nv = p.tmpl.var_slots.size();
    const std::size_t np = p.tmpl.param_slots.size();
    for (std::size_t i = 0; i < p.instances; ++i) {
      forward(p.tmpl, x, p.vars.data() + i * nv, p.params.data() + i * np, w);
      if (!std::isfinite(w.v.back())) fail_eval(p, "constraint value");
      out[static_cast<std::size_t>(p.row_offset) + i] = w.v.back();
    }
  }
}

void CompiledModel::gradient(std::span<const double> x, std::span<double> grad) const {
  check_size(x.size(), static_cast<std::size_t>(n_), "x");
  check_size(grad.size(), static_cast<std::size_t>(n_), "gradient");
  std::fill(grad.begin(), grad.end(), 0.0);
  for (const auto& p : programs_) {
    if (!p.objective) continue;
    Tape w(p.tmpl);
    const std::size_t nv = p.tmpl.var_slots.size();
    const std::size_t np = p.tmpl.param_slots.size();
    for (std::size_t i = 0; i < p.instances; ++i) {
      const int* vars = p.vars.data() + i * nv;
      forward(p.tmpl, x, vars, p.params.data() + i * np, w);
      reverse(p.tmpl, w);
      for (int s : p.tmpl.gradient_slots) {
        const double d = w.adj[static_cast<std::size_t>(w.slot_node[static_cast<std::size_t>(s)])];
        if (!std::isfinite(d)) fail_eval(p, "gradient");
        grad[static_cast<std::size_t>(vars[s])] += d;
      }
    }
  }
}

void CompiledModel::jacobians(std::span<const double> x, std::span<double> g_values,
                              std::span<double> h_values) const {
  check_size(x.size(), static_cast<std::size_t>(n_), "x");
  check_size(g_values.size(), g_cols_.size(), "equality Jacobian");
  check_size(h_values.size(), h_cols_.size(), "inequality Jacobian");
  std::fill(g_values.begin(), g_values.end(), 0.0);
  std::fill(h_values.begin(), h_values.end(), 0.0);
  for (const auto& p : programs_) {
    if (p.objective) continue;
    Tape w(p.tmpl);
    auto values = p.equality ? g_values : h_values;
    const auto& row_ptr = p.equality ? g_row_ptr_ : h_row_ptr_;
    const std::size_t nv = p.tmpl.var_slots.size();
    const std::size_t np = p.tmpl.param_slots.size();
    const std::size_t ng = p.tmpl.gradient_slots.size();
    for (std::size_t i = 0; i < p.instances; ++i) {
      forward(p.tmpl, x, p.vars.data() + i * nv, p.params.data() + i * np, w);
      reverse(p.tmpl, w);
      const auto base = static_cast<std::size_t>(row_ptr[static_cast<std::size_t>(p.row_offset) + i]);
      for (std::size_t k = 0; k < ng; ++k) {
        const int s = p.tmpl.gradient_slots[k];
        const double d = w.adj[static_cast<std::size_t>(w.slot_node[static_cast<std::size_t>(s)])];
        if (!std::isfinite(d)) fail_eval(p, "Jacobian entry");
        values[base + static_cast<std::size_t>(p.jac_target[i * ng + k])] += d;
      }
    }
  }
}

void CompiledModel::hessian(std::span<const double> x, std::span<const double> y,
                            std::span<const double> z, double sigma,
                            std::span<double> values) const {
  check_size(x.size(), static_cast<std::size_t>(n_), "x");
  check_size(y.size(), static_cast<std::size_t>(m_eq_), "y");
  check_size(z.size(), static_cast<std::size_t>(m_ineq_), "z");
  check_size(values.size(), w_rows_.size(), "Hessian");
  std::fill(values.begin(), values.end(), 0.0);
  for (const auto& p : programs_) {
    const auto& pairs = p.tmpl.hessian_pairs;
    if (pairs.empty()) continue;
    Tape w(p.tmpl);
    const std::size_t nv = p.tmpl.var_slots.size();
    const std::size_t np = p.tmpl.param_slots.size();
    const std::size_t nh = pairs.size();
    for (std::size_t i = 0; i < p.instances; ++i) {
      double weight = sigma;
      if (!p.objective) {
        weight = p.equality ? y[static_cast<std::size_t>(p.row_offset) + i]
                            : z[static_cast<std::size_t>(p.row_offset) + i];
      }
      if (weight == 0.0) continue;
      forward(p.tmpl, x, p.vars.data() + i * nv, p.params.data() + i * np, w);
      reverse(p.tmpl, w);
      int column = -1;
      for (std::size_t k = 0; k < nh; ++k) {
        const auto [a, b] = pairs[k];
        if (b != column) {
          hessian_column(p.tmpl, b, w);
          column = b;
        }
        const double hv = w.dadj[static_cast<std::size_t>(w.slot_node[static_cast<std::size_t>(a)])];
        if (!std::isfinite(hv)) fail_eval(p, "Hessian entry");
        const double scale = p.hess_twice[i * nh + k] ? 2.0 : 1.0;
        values[static_cast<std::size_t>(p.hess_target[i * nh + k])] += weight * scale * hv;
      }
    }
  }
}

}  // namespace hkkt
