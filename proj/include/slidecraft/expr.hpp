#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

namespace slidecraft {

/// Scalar expression over state variables x1..xn and controls u1..um.
///
/// Nodes live in a flat array in postorder (children precede parents, the
/// root is the last node), so evaluation is a single forward sweep with no
/// recursion. Expressions are immutable after parsing.
class Expr {
 public:
  enum class Op : std::uint8_t {
    Constant,
    State,
    Control,
    Neg,
    Add,
    Sub,
    Mul,
    Div,
    Pow,
    Sin,
    Cos,
    Exp,
    Tanh,
    Sqrt,
  };

  struct Node {
    Op op = Op::Constant;
    double value = 0.0;  // Constant only
    int index = -1;      // State / Control only, zero-based
    int lhs = -1;        // operand of unary ops, left operand of binary ops
    int rhs = -1;
  };

  class Builder;

  Expr() = default;

  int state_dim() const { return n_; }
  int control_dim() const { return m_; }
  /// Length of the jet seed basis: (x, u) concatenated.
  int seed_dim() const { return n_ + m_; }
  bool empty() const { return nodes_.empty(); }
  std::span<const Node> nodes() const { return nodes_; }
  std::size_t root() const { return nodes_.size() - 1; }

  bool depends_on_control() const;

  /// Canonical text form; parse(to_string()) reproduces an equal tree.
  std::string to_string() const;
  std::string subexpression(std::size_t node) const;

  double eval(std::span<const double> x, std::span<const double> u) const;

  friend bool operator==(const Expr& a, const Expr& b);

 private:
  friend Expr parse_expression(std::string_view source, int n, int m);
  friend class Builder;

  void print(std::size_t node, std::string& out) const;

  int n_ = 0;
  int m_ = 0;
  std::vector<Node> nodes_;
};

/// Programmatic construction (tests, generated problems). Each call returns
/// the new node's handle; operands must be handles from the same builder.
class Expr::Builder {
 public:
  Builder(int n, int m) : n_(n), m_(m) {}
  int constant(double v);
  int state(int index);
  int control(int index);
  int unary(Op op, int operand);
  int binary(Op op, int lhs, int rhs);
  /// Finishes the expression rooted at `root`, copying the reachable subtree
  /// in postorder.
  Expr build(int root) const;

 private:
  int push(Node node);
  int n_, m_;
  std::vector<Node> nodes_;
};

/// Throws Error{SyntaxError | UnknownSymbol | DimensionError}.
Expr parse_expression(std::string_view source, int n, int m);

struct JetValue {
  double value = 0.0;
  std::vector<double> partials;  // d/dx1..d/dxn, d/du1..d/dum
};

/// Reusable scratch storage for jet sweeps; one per thread.
struct JetWorkspace {
  std::vector<double> values;
  std::vector<double> partials;
};

/// Value and gradient w.r.t. (x, u). Throws Error{DomainError} naming the
/// offending subexpression.
JetValue eval_jet(const Expr& e, std::span<const double> x, std::span<const double> u);

/// Allocation-free variant: writes the seed_dim() partials into `grad`.
double eval_jet(const Expr& e, std::span<const double> x, std::span<const double> u,
                JetWorkspace& ws, std::span<double> grad);

/// Second partials of a state-only expression, computed with nested jets.
Eigen::MatrixXd eval_hessian_h(const Expr& e, std::span<const double> x);

}  // namespace slidecraft
