#include "slidecraft/expr.hpp"

#include <cctype>
#include <charconv>
#include <cmath>
#include <functional>

#include "slidecraft/dual.hpp"
#include "slidecraft/errors.hpp"

namespace slidecraft {

namespace {

using Op = Expr::Op;

bool is_unary(Op op) {
  switch (op) {
    case Op::Neg:
    case Op::Sin:
    case Op::Cos:
    case Op::Exp:
    case Op::Tanh:
    case Op::Sqrt:
      return true;
    default:
      return false;
  }
}

bool is_binary(Op op) {
  return op == Op::Add || op == Op::Sub || op == Op::Mul || op == Op::Div || op == Op::Pow;
}

const char* function_name(Op op) {
  switch (op) {
    case Op::Sin: return "sin";
    case Op::Cos: return "cos";
    case Op::Exp: return "exp";
    case Op::Tanh: return "tanh";
    case Op::Sqrt: return "sqrt";
    default: return nullptr;
  }
}

int precedence(Op op) {
  switch (op) {
    case Op::Add:
    case Op::Sub: return 1;
    case Op::Mul:
    case Op::Div: return 2;
    case Op::Neg: return 3;
    case Op::Pow: return 4;
    default: return 5;
  }
}

void append_number(std::string& out, double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  out.append(buf, res.ptr);
}

// ---------------------------------------------------------------------------
// Parser

class Parser {
 public:
  Parser(std::string_view src, int n, int m) : src_(src), builder_(n, m), n_(n), m_(m) {}

  Expr run() {
    skip_ws();
    if (pos_ == src_.size()) fail("expression");
    int root = expr();
    skip_ws();
    if (pos_ != src_.size()) fail("operator or end of input");
    return builder_.build(root);
  }

 private:
  [[noreturn]] void fail(const char* expected) {
    std::string found = pos_ < src_.size() ? std::string("'") + src_[pos_] + "'" : "end of input";
    raise(Errc::SyntaxError, "at position " + std::to_string(pos_) + ": expected " + expected +
                                 ", found " + found + " in \"" + std::string(src_) + "\"");
  }

  void skip_ws() {
    while (pos_ < src_.size() && std::isspace(static_cast<unsigned char>(src_[pos_]))) ++pos_;
  }

  bool accept(char c) {
    skip_ws();
    if (pos_ < src_.size() && src_[pos_] == c) {
      ++pos_;
      return true;
    }
    return false;
  }

  int expr() {
    int lhs = term();
    for (;;) {
      if (accept('+'))
        lhs = builder_.binary(Op::Add, lhs, term());
      else if (accept('-'))
        lhs = builder_.binary(Op::Sub, lhs, term());
      else
        return lhs;
    }
  }

  int term() {
    int lhs = unary();
    for (;;) {
      if (accept('*'))
        lhs = builder_.binary(Op::Mul, lhs, unary());
      else if (accept('/'))
        lhs = builder_.binary(Op::Div, lhs, unary());
      else
        return lhs;
    }
  }

  int unary() {
    if (accept('-')) return builder_.unary(Op::Neg, unary());
    if (accept('+')) return unary();
    return power();
  }

  int power() {
    int base = primary();
    if (accept('^')) return builder_.binary(Op::Pow, base, unary());
    return base;
  }

  int primary() {
    skip_ws();
    if (pos_ >= src_.size()) fail("number, variable, function or '('");
    char c = src_[pos_];
    if (c == '(') {
      ++pos_;
      int inner = expr();
      if (!accept(')')) fail("')'");
      return inner;
    }
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') return number();
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') return identifier();
    fail("number, variable, function or '('");
  }

  int number() {
    std::size_t start = pos_;
    auto digits = [&] {
      while (pos_ < src_.size() && std::isdigit(static_cast<unsigned char>(src_[pos_]))) ++pos_;
    };
    digits();
    if (pos_ < src_.size() && src_[pos_] == '.') {
      ++pos_;
      digits();
    }
    if (pos_ < src_.size() && (src_[pos_] == 'e' || src_[pos_] == 'E')) {
      std::size_t save = pos_++;
      if (pos_ < src_.size() && (src_[pos_] == '+' || src_[pos_] == '-')) ++pos_;
      if (pos_ < src_.size() && std::isdigit(static_cast<unsigned char>(src_[pos_])))
        digits();
      else
        pos_ = save;
    }
    double v = 0.0;
    auto res = std::from_chars(src_.data() + start, src_.data() + pos_, v);
    if (res.ec != std::errc() || res.ptr != src_.data() + pos_) {
      pos_ = start;
      fail("number");
    }
    return builder_.constant(v);
  }

  int identifier() {
    std::size_t start = pos_;
    while (pos_ < src_.size() &&
           (std::isalnum(static_cast<unsigned char>(src_[pos_])) || src_[pos_] == '_'))
      ++pos_;
    std::string_view name = src_.substr(start, pos_ - start);

    static constexpr std::pair<std::string_view, Op> functions[] = {
        {"sin", Op::Sin}, {"cos", Op::Cos}, {"exp", Op::Exp}, {"tanh", Op::Tanh}, {"sqrt", Op::Sqrt}};
    for (auto [fname, op] : functions) {
      if (name == fname) {
        if (!accept('(')) fail("'(' after function name");
        int arg = expr();
        if (!accept(')')) fail("')'");
        return builder_.unary(op, arg);
      }
    }

    if ((name[0] == 'x' || name[0] == 'u') && name.size() > 1) {
      int index = 0;
      auto digits = name.substr(1);
      auto res = std::from_chars(digits.data(), digits.data() + digits.size(), index);
      if (res.ec == std::errc() && res.ptr == digits.data() + digits.size() &&
          (digits[0] != '0' || digits.size() == 1)) {
        int limit = name[0] == 'x' ? n_ : m_;
        if (index < 1 || index > limit)
          raise(Errc::DimensionError, std::string(name) + " out of range (" +
                                          (name[0] == 'x' ? "n = " : "m = ") +
                                          std::to_string(limit) + ")");
        return name[0] == 'x' ? builder_.state(index - 1) : builder_.control(index - 1);
      }
      if (res.ec == std::errc::result_out_of_range)
        raise(Errc::DimensionError, std::string(name) + " out of range");
    }
    raise(Errc::UnknownSymbol, "'" + std::string(name) + "' at position " + std::to_string(start));
  }

  std::string_view src_;
  std::size_t pos_ = 0;
  Expr::Builder builder_;
  int n_, m_;
};

// ---------------------------------------------------------------------------
// Domain checks shared by every evaluator. `ref` names the failing node.

bool is_integer(double c) { return std::floor(c) == c; }

struct DomainGuard {
  const Expr& e;

  [[noreturn]] void fail(std::size_t node, const char* what) const {
    raise(Errc::DomainError, std::string(what) + " in `" + e.subexpression(node) + "`");
  }

  void check_div(std::size_t node, double den) const {
    if (den == 0.0) fail(node, "division by zero");
  }
  void check_sqrt(std::size_t node, double a) const {
    if (!(a > 0.0)) fail(node, a == 0.0 ? "sqrt derivative undefined at 0" : "sqrt of negative");
  }
  void check_pow_const(std::size_t node, double a, double c) const {
    if (a < 0.0 && !is_integer(c)) fail(node, "negative base with non-integer exponent");
    if (a == 0.0 && c < 1.0 && c != 0.0) fail(node, "zero base with exponent below 1");
  }
  void check_pow_var(std::size_t node, double a) const {
    if (!(a > 0.0)) fail(node, "non-positive base with variable exponent");
  }
};

/// Nodes whose subtree contains no variable. Exponents of this kind use the
/// constant-power rule, which admits negative bases.
std::vector<char> constant_mask(std::span<const Expr::Node> nodes) {
  std::vector<char> mask(nodes.size(), 0);
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    const auto& nd = nodes[i];
    switch (nd.op) {
      case Op::Constant: mask[i] = 1; break;
      case Op::State:
      case Op::Control: mask[i] = 0; break;
      default:
        mask[i] = mask[nd.lhs] && (nd.rhs < 0 || mask[nd.rhs]);
    }
  }
  return mask;
}

}  // namespace

// ---------------------------------------------------------------------------
// Builder

int Expr::Builder::push(Node node) {
  nodes_.push_back(node);
  return static_cast<int>(nodes_.size()) - 1;
}

int Expr::Builder::constant(double v) {
  if (!std::isfinite(v)) raise(Errc::InputError, "non-finite constant");
  // Negative literals are stored as negations so printed text reparses to
  // the same tree.
  if (std::signbit(v)) {
    int mag = push({Op::Constant, -v, -1, -1, -1});
    return push({Op::Neg, 0.0, -1, mag, -1});
  }
  return push({Op::Constant, v, -1, -1, -1});
}

int Expr::Builder::state(int index) {
  if (index < 0 || index >= n_) raise(Errc::DimensionError, "state index " + std::to_string(index + 1));
  return push({Op::State, 0.0, index, -1, -1});
}

int Expr::Builder::control(int index) {
  if (index < 0 || index >= m_)
    raise(Errc::DimensionError, "control index " + std::to_string(index + 1));
  return push({Op::Control, 0.0, index, -1, -1});
}

int Expr::Builder::unary(Op op, int operand) {
  if (!is_unary(op)) raise(Errc::InputError, "not a unary operator");
  if (operand < 0 || operand >= static_cast<int>(nodes_.size()))
    raise(Errc::InputError, "bad operand handle");
  return push({op, 0.0, -1, operand, -1});
}

int Expr::Builder::binary(Op op, int lhs, int rhs) {
  if (!is_binary(op)) raise(Errc::InputError, "not a binary operator");
  int size = static_cast<int>(nodes_.size());
  if (lhs < 0 || lhs >= size || rhs < 0 || rhs >= size) raise(Errc::InputError, "bad operand handle");
  return push({op, 0.0, -1, lhs, rhs});
}

Expr Expr::Builder::build(int root) const {
  if (root < 0 || root >= static_cast<int>(nodes_.size())) raise(Errc::InputError, "bad root handle");
  Expr e;
  e.n_ = n_;
  e.m_ = m_;
  std::function<int(int)> copy = [&](int i) -> int {
    Node nd = nodes_[i];
    if (nd.lhs >= 0) nd.lhs = copy(nd.lhs);
    if (nd.rhs >= 0) nd.rhs = copy(nd.rhs);
    e.nodes_.push_back(nd);
    return static_cast<int>(e.nodes_.size()) - 1;
  };
  copy(root);
  return e;
}

// ---------------------------------------------------------------------------
// Printing

void Expr::print(std::size_t node, std::string& out) const {
  const Node& nd = nodes_[node];
  auto child = [&](int c, bool paren) {
    if (paren) out += '(';
    print(c, out);
    if (paren) out += ')';
  };
  switch (nd.op) {
    case Op::Constant: append_number(out, nd.value); return;
    case Op::State: out += 'x' + std::to_string(nd.index + 1); return;
    case Op::Control: out += 'u' + std::to_string(nd.index + 1); return;
    case Op::Neg:
      out += '-';
      child(nd.lhs, precedence(nodes_[nd.lhs].op) < 3);
      return;
    case Op::Pow:
      child(nd.lhs, precedence(nodes_[nd.lhs].op) < 5);
      out += '^';
      child(nd.rhs, precedence(nodes_[nd.rhs].op) < 3);
      return;
    case Op::Add:
    case Op::Sub:
    case Op::Mul:
    case Op::Div: {
      int p = precedence(nd.op);
      static constexpr const char* sym[] = {" + ", " - ", " * ", " / "};
      child(nd.lhs, precedence(nodes_[nd.lhs].op) < p);
      out += sym[static_cast<int>(nd.op) - static_cast<int>(Op::Add)];
      child(nd.rhs, precedence(nodes_[nd.rhs].op) <= p);
      return;
    }
    default:
      out += function_name(nd.op);
      child(nd.lhs, true);
  }
}

std::string Expr::to_string() const {
  std::string out;
  if (!nodes_.empty()) print(root(), out);
  return out;
}

std::string Expr::subexpression(std::size_t node) const {
  std::string out;
  print(node, out);
  return out;
}

bool Expr::depends_on_control() const {
  for (const auto& nd : nodes_)
    if (nd.op == Op::Control) return true;
  return false;
}

bool operator==(const Expr& a, const Expr& b) {
  if (a.n_ != b.n_ || a.m_ != b.m_ || a.nodes_.size() != b.nodes_.size()) return false;
  for (std::size_t i = 0; i < a.nodes_.size(); ++i) {
    const auto& p = a.nodes_[i];
    const auto& q = b.nodes_[i];
    if (p.op != q.op || p.value != q.value || p.index != q.index || p.lhs != q.lhs || p.rhs != q.rhs)
      return false;
  }
  return true;
}

Expr parse_expression(std::string_view source, int n, int m) {
  if (n < 0 || m < 0) raise(Errc::DimensionError, "negative dimension");
  return Parser(source, n, m).run();
}

// ---------------------------------------------------------------------------
// Evaluation

namespace {

void check_dims(const Expr& e, std::span<const double> x, std::span<const double> u) {
  if (static_cast<int>(x.size()) != e.state_dim() || static_cast<int>(u.size()) != e.control_dim())
    raise(Errc::DimensionError, "evaluation point has dims (" + std::to_string(x.size()) + ", " +
                                    std::to_string(u.size()) + "), expression expects (" +
                                    std::to_string(e.state_dim()) + ", " +
                                    std::to_string(e.control_dim()) + ")");
}

}  // namespace

double Expr::eval(std::span<const double> x, std::span<const double> u) const {
  check_dims(*this, x, u);
  DomainGuard guard{*this};
  std::vector<double> v(nodes_.size());
  std::vector<char> cmask;
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    const Node& nd = nodes_[i];
    double a = nd.lhs >= 0 ? v[nd.lhs] : 0.0;
    double b = nd.rhs >= 0 ? v[nd.rhs] : 0.0;
    switch (nd.op) {
      case Op::Constant: v[i] = nd.value; break;
      case Op::State: v[i] = x[nd.index]; break;
      case Op::Control: v[i] = u[nd.index]; break;
      case Op::Neg: v[i] = -a; break;
      case Op::Add: v[i] = a + b; break;
      case Op::Sub: v[i] = a - b; break;
      case Op::Mul: v[i] = a * b; break;
      case Op::Div:
        guard.check_div(i, b);
        v[i] = a / b;
        break;
      case Op::Pow:
        if (cmask.empty()) cmask = constant_mask(nodes_);
        if (cmask[nd.rhs]) {
          guard.check_pow_const(i, a, b);
          v[i] = std::pow(a, b);
        } else {
          guard.check_pow_var(i, a);
          v[i] = std::exp(b * std::log(a));
        }
        break;
      case Op::Sin: v[i] = std::sin(a); break;
      case Op::Cos: v[i] = std::cos(a); break;
      case Op::Exp: v[i] = std::exp(a); break;
      case Op::Tanh: v[i] = std::tanh(a); break;
      case Op::Sqrt:
        guard.check_sqrt(i, a);
        v[i] = std::sqrt(a);
        break;
    }
  }
  return v.back();
}

double eval_jet(const Expr& e, std::span<const double> x, std::span<const double> u, JetWorkspace& ws,
                std::span<double> grad) {
  check_dims(e, x, u);
  const auto nodes = e.nodes();
  const std::size_t k = static_cast<std::size_t>(e.seed_dim());
  if (grad.size() != k) raise(Errc::DimensionError, "gradient buffer length");
  const std::size_t count = nodes.size();
  ws.values.resize(count);
  ws.partials.assign(count * k, 0.0);
  DomainGuard guard{e};
  std::vector<char> cmask;

  double* dv = ws.partials.data();
  for (std::size_t i = 0; i < count; ++i) {
    const auto& nd = nodes[i];
    double* di = dv + i * k;
    const double* da = nd.lhs >= 0 ? dv + nd.lhs * k : nullptr;
    const double* db = nd.rhs >= 0 ? dv + nd.rhs * k : nullptr;
    double a = nd.lhs >= 0 ? ws.values[nd.lhs] : 0.0;
    double b = nd.rhs >= 0 ? ws.values[nd.rhs] : 0.0;
    double& vi = ws.values[i];
    // d(result) = sa * d(a) + sb * d(b)
    double sa = 0.0, sb = 0.0;
    switch (nd.op) {
      case Op::Constant: vi = nd.value; continue;
      case Op::State:
        vi = x[nd.index];
        di[nd.index] = 1.0;
        continue;
      case Op::Control:
        vi = u[nd.index];
        di[e.state_dim() + nd.index] = 1.0;
        continue;
      case Op::Neg: vi = -a; sa = -1.0; break;
      case Op::Add: vi = a + b; sa = 1.0; sb = 1.0; break;
      case Op::Sub: vi = a - b; sa = 1.0; sb = -1.0; break;
      case Op::Mul: vi = a * b; sa = b; sb = a; break;
      case Op::Div:
        guard.check_div(i, b);
        vi = a / b;
        sa = 1.0 / b;
        sb = -vi / b;
        break;
      case Op::Pow:
        if (cmask.empty()) cmask = constant_mask(nodes);
        if (cmask[nd.rhs]) {
          guard.check_pow_const(i, a, b);
          vi = std::pow(a, b);
          sa = b == 0.0 ? 0.0 : b * std::pow(a, b - 1.0);
        } else {
          guard.check_pow_var(i, a);
          double la = std::log(a);
          vi = std::exp(b * la);
          sa = vi * b / a;
          sb = vi * la;
        }
        break;
      case Op::Sin: vi = std::sin(a); sa = std::cos(a); break;
      case Op::Cos: vi = std::cos(a); sa = -std::sin(a); break;
      case Op::Exp: vi = std::exp(a); sa = vi; break;
      case Op::Tanh: vi = std::tanh(a); sa = 1.0 - vi * vi; break;
      case Op::Sqrt:
        guard.check_sqrt(i, a);
        vi = std::sqrt(a);
        sa = 0.5 / vi;
        break;
    }
    if (db)
      for (std::size_t j = 0; j < k; ++j) di[j] = sa * da[j] + sb * db[j];
    else
      for (std::size_t j = 0; j < k; ++j) di[j] = sa * da[j];
  }
  const double* droot = dv + (count - 1) * k;
  std::copy(droot, droot + k, grad.begin());
  return ws.values.back();
}

JetValue eval_jet(const Expr& e, std::span<const double> x, std::span<const double> u) {
  JetWorkspace ws;
  JetValue out;
  out.partials.resize(e.seed_dim());
  out.value = eval_jet(e, x, u, ws, out.partials);
  return out;
}

Eigen::MatrixXd eval_hessian_h(const Expr& e, std::span<const double> x) {
  if (e.depends_on_control()) raise(Errc::DimensionError, "Hessian requested for a control-dependent expression");
  if (static_cast<int>(x.size()) != e.state_dim())
    raise(Errc::DimensionError, "evaluation point has dimension " + std::to_string(x.size()));
  using D1 = Dual<double>;
  using D2 = Dual<D1>;
  const std::size_t n = x.size();
  const auto nodes = e.nodes();
  DomainGuard guard{e};
  std::vector<char> cmask = constant_mask(nodes);

  auto constant = [n](double c) { return D2(D1(c, n), n); };
  std::vector<D2> v(nodes.size());
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    const auto& nd = nodes[i];
    const D2* a = nd.lhs >= 0 ? &v[nd.lhs] : nullptr;
    const D2* b = nd.rhs >= 0 ? &v[nd.rhs] : nullptr;
    switch (nd.op) {
      case Op::Constant: v[i] = constant(nd.value); break;
      case Op::State: {
        // Outer and inner tangents both seeded on the same coordinate.
        D2 s = constant(x[nd.index]);
        s.v.d[nd.index] = 1.0;
        s.d[nd.index] = D1(1.0, n);
        v[i] = std::move(s);
        break;
      }
      case Op::Control: raise(Errc::DimensionError, "control in Hessian");
      case Op::Neg: v[i] = -*a; break;
      case Op::Add: v[i] = *a + *b; break;
      case Op::Sub: v[i] = *a - *b; break;
      case Op::Mul: v[i] = *a * *b; break;
      case Op::Div:
        guard.check_div(i, primal(*b));
        v[i] = *a / *b;
        break;
      case Op::Pow:
        if (cmask[nd.rhs]) {
          double c = primal(*b);
          guard.check_pow_const(i, primal(*a), c);
          v[i] = pow_const(*a, c);
        } else {
          guard.check_pow_var(i, primal(*a));
          v[i] = exp(*b * log(*a));
        }
        break;
      case Op::Sin: v[i] = sin(*a); break;
      case Op::Cos: v[i] = cos(*a); break;
      case Op::Exp: v[i] = exp(*a); break;
      case Op::Tanh: v[i] = tanh(*a); break;
      case Op::Sqrt:
        guard.check_sqrt(i, primal(*a));
        v[i] = sqrt(*a);
        break;
    }
  }
  Eigen::MatrixXd hess(n, n);
  const D2& r = v.back();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) hess(i, j) = r.d[i].d[j];
  // Both orderings are computed by the same arithmetic; averaging removes
  // the last-bit asymmetry of non-commuting rounding.
  return 0.5 * (hess + hess.transpose());
}

}  // namespace slidecraft
