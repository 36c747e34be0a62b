#pragma once

// Scalar expressions over chart coordinates: parsing, printing and
// evaluation at any dual-number depth.
//
// Grammar, lowest precedence first:
//   expr    := term (('+' | '-') term)*
//   term    := unary (('*' | '/') unary)*
//   unary   := '-' unary | power
//   power   := atom ('^' unary)?            right-associative, constant exponent
//   atom    := number | name | func '(' expr ')' | '(' expr ')'
//   func    := sin | cos | exp | sqrt

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <memory>
#include <string>
#include <string_view>
#include <tuple>
#include <utility>
#include <vector>

#include "pis/dual.hpp"
#include "pis/error.hpp"
#include "pis/fields.hpp"
#include "pis/geometry.hpp"

namespace pis::expr {

enum class Op { constant, variable, neg, sin, cos, exp, sqrt, add, sub, mul, div, pow };

struct Node;
using NodePtr = std::shared_ptr<const Node>;

struct Node {
  Op op = Op::constant;
  double value = 0.0;      // constant value, or the exponent of pow
  std::size_t var = 0;     // variable index
  std::string name;        // variable name
  NodePtr lhs;             // operand of unary ops, left operand of binary ops
  NodePtr rhs;             // right operand (pow keeps its constant exponent here)
  SourceSpan span;
};

inline bool is_unary_function(Op op) { return op == Op::sin || op == Op::cos || op == Op::exp || op == Op::sqrt; }

inline const char* function_name(Op op) {
  switch (op) {
    case Op::sin: return "sin";
    case Op::cos: return "cos";
    case Op::exp: return "exp";
    case Op::sqrt: return "sqrt";
    default: return "";
  }
}

/// Structural equality, ignoring source spans.
inline bool equal(const NodePtr& a, const NodePtr& b) {
  if (!a || !b) return !a && !b;
  if (a->op != b->op) return false;
  switch (a->op) {
    case Op::constant: return a->value == b->value;
    case Op::variable: return a->var == b->var && a->name == b->name;
    case Op::pow: return a->value == b->value && equal(a->lhs, b->lhs);
    default: return equal(a->lhs, b->lhs) && equal(a->rhs, b->rhs);
  }
}

inline bool uses_variable(const NodePtr& n, std::size_t var) {
  if (!n) return false;
  if (n->op == Op::variable) return n->var == var;
  return uses_variable(n->lhs, var) || uses_variable(n->rhs, var);
}

inline std::string format_number(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

/// Fully parenthesized text that parses back to the same tree.
inline std::string print(const NodePtr& n) {
  switch (n->op) {
    case Op::constant: return n->value < 0 ? "(" + format_number(n->value) + ")" : format_number(n->value);
    case Op::variable: return n->name;
    case Op::neg: return "(-" + print(n->lhs) + ")";
    case Op::add: return "(" + print(n->lhs) + " + " + print(n->rhs) + ")";
    case Op::sub: return "(" + print(n->lhs) + " - " + print(n->rhs) + ")";
    case Op::mul: return "(" + print(n->lhs) + " * " + print(n->rhs) + ")";
    case Op::div: return "(" + print(n->lhs) + " / " + print(n->rhs) + ")";
    case Op::pow: {
      std::string e = format_number(n->value);
      if (n->value < 0) e = "(" + e + ")";
      return "(" + print(n->lhs) + "^" + e + ")";
    }
    default: return std::string(function_name(n->op)) + "(" + print(n->lhs) + ")";
  }
}

namespace detail {

enum class Tok { number, name, plus, minus, star, slash, caret, lparen, rparen, comma, end };

struct Token {
  Tok kind = Tok::end;
  std::string text;
  double number = 0.0;
  SourceSpan span;
};

class Lexer {
 public:
  explicit Lexer(std::string_view src) : src_(src) {}

  std::vector<Token> run() {
    std::vector<Token> out;
    for (;;) {
      skip_space();
      Token t;
      t.span = {line_, col_, 1};
      if (pos_ >= src_.size()) {
        t.kind = Tok::end;
        t.span.length = 0;
        out.push_back(t);
        return out;
      }
      char c = src_[pos_];
      if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
        lex_number(t);
      } else if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
        std::size_t start = pos_;
        while (pos_ < src_.size() &&
               (std::isalnum(static_cast<unsigned char>(src_[pos_])) || src_[pos_] == '_')) advance();
        t.kind = Tok::name;
        t.text = std::string(src_.substr(start, pos_ - start));
        t.span.length = t.text.size();
      } else {
        switch (c) {
          case '+': t.kind = Tok::plus; break;
          case '-': t.kind = Tok::minus; break;
          case '*': t.kind = Tok::star; break;
          case '/': t.kind = Tok::slash; break;
          case '^': t.kind = Tok::caret; break;
          case '(': t.kind = Tok::lparen; break;
          case ')': t.kind = Tok::rparen; break;
          case ',': t.kind = Tok::comma; break;
          default: throw ParseError(std::string("unexpected character '") + c + "'", t.span);
        }
        t.text = std::string(1, c);
        advance();
      }
      out.push_back(std::move(t));
    }
  }

 private:
  void advance() {
    if (src_[pos_] == '\n') {
      ++line_;
      col_ = 1;
    } else {
      ++col_;
    }
    ++pos_;
  }

  void skip_space() {
    while (pos_ < src_.size() && std::isspace(static_cast<unsigned char>(src_[pos_]))) advance();
  }

  void lex_number(Token& t) {
    std::size_t start = pos_;
    auto digits = [&] {
      while (pos_ < src_.size() && std::isdigit(static_cast<unsigned char>(src_[pos_]))) advance();
    };
    digits();
    if (pos_ < src_.size() && src_[pos_] == '.') {
      advance();
      digits();
    }
    if (pos_ < src_.size() && (src_[pos_] == 'e' || src_[pos_] == 'E')) {
      std::size_t save_pos = pos_, save_col = col_;
      advance();
      if (pos_ < src_.size() && (src_[pos_] == '+' || src_[pos_] == '-')) advance();
      if (pos_ < src_.size() && std::isdigit(static_cast<unsigned char>(src_[pos_]))) {
        digits();
      } else {
        pos_ = save_pos;
        col_ = save_col;
      }
    }
    std::string text(src_.substr(start, pos_ - start));
    if (text == ".") throw ParseError("malformed number", t.span);
    t.kind = Tok::number;
    t.text = text;
    t.number = std::strtod(text.c_str(), nullptr);
    t.span.length = text.size();
  }

  std::string_view src_;
  std::size_t pos_ = 0;
  std::size_t line_ = 1;
  std::size_t col_ = 1;
};

class Parser {
 public:
  Parser(std::vector<Token> toks, const std::vector<std::string>& names) : t_(std::move(toks)), names_(names) {}

  NodePtr parse_all() {
    NodePtr n = expr();
    if (peek().kind != Tok::end) throw ParseError("unexpected '" + peek().text + "'", peek().span);
    return n;
  }

 private:
  const Token& peek() const { return t_[i_]; }
  const Token& take() { return t_[i_++]; }

  static NodePtr make(Op op, SourceSpan span, NodePtr lhs = nullptr, NodePtr rhs = nullptr) {
    auto n = std::make_shared<Node>();
    n->op = op;
    n->span = span;
    n->lhs = std::move(lhs);
    n->rhs = std::move(rhs);
    return n;
  }

  NodePtr expr() {
    NodePtr n = term();
    while (peek().kind == Tok::plus || peek().kind == Tok::minus) {
      const Token& op = take();
      n = make(op.kind == Tok::plus ? Op::add : Op::sub, op.span, n, term());
    }
    return n;
  }

  NodePtr term() {
    NodePtr n = unary();
    while (peek().kind == Tok::star || peek().kind == Tok::slash) {
      const Token& op = take();
      n = make(op.kind == Tok::star ? Op::mul : Op::div, op.span, n, unary());
    }
    return n;
  }

  NodePtr unary() {
    if (peek().kind == Tok::minus) {
      const Token& op = take();
      return make(Op::neg, op.span, unary());
    }
    return power();
  }

  static bool fold_constant(const NodePtr& n, double& out) {
    if (n->op == Op::constant) {
      out = n->value;
      return true;
    }
    if (n->op == Op::neg && fold_constant(n->lhs, out)) {
      out = -out;
      return true;
    }
    if (n->op == Op::pow && fold_constant(n->lhs, out)) {
      out = std::pow(out, n->value);
      return std::isfinite(out);
    }
    double a = 0.0, b = 0.0;
    if ((n->op == Op::add || n->op == Op::sub || n->op == Op::mul || n->op == Op::div) && fold_constant(n->lhs, a) &&
        fold_constant(n->rhs, b)) {
      out = n->op == Op::add ? a + b : n->op == Op::sub ? a - b : n->op == Op::mul ? a * b : a / b;
      return std::isfinite(out);
    }
    return false;
  }

  NodePtr power() {
    NodePtr base = atom();
    if (peek().kind != Tok::caret) return base;
    const Token& op = take();
    NodePtr e = unary();
    double value = 0.0;
    if (!fold_constant(e, value)) throw ParseError("exponent must be a constant", e->span);
    auto n = std::make_shared<Node>();
    n->op = Op::pow;
    n->span = op.span;
    n->lhs = base;
    n->value = value;
    auto c = std::make_shared<Node>();
    c->op = Op::constant;
    c->value = value;
    c->span = e->span;
    n->rhs = c;
    return n;
  }

  NodePtr atom() {
    const Token& t = take();
    switch (t.kind) {
      case Tok::number: {
        auto n = make(Op::constant, t.span);
        std::const_pointer_cast<Node>(n)->value = t.number;
        return n;
      }
      case Tok::lparen: {
        NodePtr n = expr();
        if (peek().kind != Tok::rparen) throw ParseError("expected ')'", peek().span);
        take();
        return n;
      }
      case Tok::name: {
        Op fn = t.text == "sin"    ? Op::sin
                : t.text == "cos"  ? Op::cos
                : t.text == "exp"  ? Op::exp
                : t.text == "sqrt" ? Op::sqrt
                                   : Op::constant;
        if (fn != Op::constant) {
          if (peek().kind != Tok::lparen) throw ParseError("function '" + t.text + "' expects one argument", t.span);
          take();
          NodePtr arg = expr();
          if (peek().kind == Tok::comma) throw ParseError("function '" + t.text + "' takes exactly one argument", peek().span);
          if (peek().kind != Tok::rparen) throw ParseError("expected ')'", peek().span);
          take();
          return make(fn, t.span, arg);
        }
        for (std::size_t i = 0; i < names_.size(); ++i) {
          if (names_[i] == t.text) {
            auto n = std::make_shared<Node>();
            n->op = Op::variable;
            n->var = i;
            n->name = t.text;
            n->span = t.span;
            return n;
          }
        }
        if (peek().kind == Tok::lparen) throw ParseError("unknown function '" + t.text + "'", t.span);
        throw ParseError("unknown identifier '" + t.text + "'", t.span);
      }
      case Tok::end: throw ParseError("unexpected end of expression", t.span);
      default: throw ParseError("unexpected '" + t.text + "'", t.span);
    }
  }

  std::vector<Token> t_;
  std::size_t i_ = 0;
  const std::vector<std::string>& names_;
};

}  // namespace detail

/// A parsed expression bound to an ordered list of coordinate names.
class ExprAst {
 public:
  ExprAst() = default;
  ExprAst(NodePtr root, std::vector<std::string> names) : root_(std::move(root)), names_(std::move(names)) {
    compile(root_);
  }

  const NodePtr& root() const { return root_; }
  const std::vector<std::string>& names() const { return names_; }
  std::size_t dim() const { return names_.size(); }
  std::string to_string() const { return print(root_); }

  template <typename T>
  T eval(const std::vector<T>& x) const {
    thread_local std::vector<T> regs;
    regs.resize(code_.size());
    eval_into(x, regs);
    return regs.back();
  }

  template <typename T>
  void eval_into(const std::vector<T>& x, std::vector<T>& regs) const {
    for (std::size_t i = 0; i < code_.size(); ++i) {
      const Instr& in = code_[i];
      switch (in.op) {
        case Op::constant: regs[i] = T(in.value); break;
        case Op::variable: regs[i] = x[in.var]; break;
        case Op::neg: regs[i] = -regs[in.a]; break;
        case Op::sin: regs[i] = sin(regs[in.a]); break;
        case Op::cos: regs[i] = cos(regs[in.a]); break;
        case Op::exp: regs[i] = exp(regs[in.a]); break;
        case Op::sqrt:
          if (value_of(regs[in.a]) < 0.0) throw EvalError("square root of a negative number", in.node->span);
          regs[i] = sqrt(regs[in.a]);
          break;
        case Op::add: regs[i] = regs[in.a] + regs[in.b]; break;
        case Op::sub: regs[i] = regs[in.a] - regs[in.b]; break;
        case Op::mul: regs[i] = regs[in.a] * regs[in.b]; break;
        case Op::div:
          if (value_of(regs[in.b]) == 0.0) throw EvalError("division by zero", in.node->span);
          regs[i] = regs[in.a] / regs[in.b];
          break;
        case Op::pow: {
          double base = value_of(regs[in.a]);
          if (base < 0.0 && in.value != std::floor(in.value))
            throw EvalError("negative base with a non-integer exponent", in.node->span);
          if (base == 0.0 && in.value < 0.0) throw EvalError("division by zero", in.node->span);
          regs[i] = pow_const(regs[in.a], in.value);
          break;
        }
      }
    }
  }

  /// Value and gradient in one forward and one adjoint sweep.
  double value_and_gradient(const double* x, double* grad) const {
    thread_local std::vector<double> v, adj;
    v.resize(code_.size());
    {
      std::vector<double> xs(x, x + names_.size());
      eval_into(xs, v);
    }
    adj.assign(code_.size(), 0.0);
    adj.back() = 1.0;
    std::fill(grad, grad + names_.size(), 0.0);
    for (std::size_t i = code_.size(); i-- > 0;) {
      const Instr& in = code_[i];
      const double g = adj[i];
      if (g == 0.0) continue;
      switch (in.op) {
        case Op::constant: break;
        case Op::variable: grad[in.var] += g; break;
        case Op::neg: adj[in.a] -= g; break;
        case Op::sin: adj[in.a] += g * std::cos(v[in.a]); break;
        case Op::cos: adj[in.a] -= g * std::sin(v[in.a]); break;
        case Op::exp: adj[in.a] += g * v[i]; break;
        case Op::sqrt: adj[in.a] += g * 0.5 / v[i]; break;
        case Op::add:
          adj[in.a] += g;
          adj[in.b] += g;
          break;
        case Op::sub:
          adj[in.a] += g;
          adj[in.b] -= g;
          break;
        case Op::mul:
          adj[in.a] += g * v[in.b];
          adj[in.b] += g * v[in.a];
          break;
        case Op::div:
          adj[in.a] += g / v[in.b];
          adj[in.b] -= g * v[i] / v[in.b];
          break;
        case Op::pow: adj[in.a] += g * in.value * pow_const(v[in.a], in.value - 1.0); break;
      }
    }
    return v.back();
  }

 private:
  struct Instr {
    Op op;
    double value;
    std::size_t var;
    std::size_t a;
    std::size_t b;
    const Node* node;
  };

  template <typename T>
  static T pow_const(const T& x, double p) {
    // Small integer powers by multiplication keep derivatives exact at x = 0.
    if (p == std::floor(p) && std::abs(p) <= 8) {
      int ip = static_cast<int>(p);
      T r = T(1.0);
      for (int i = 0; i < std::abs(ip); ++i) r = r * x;
      return ip < 0 ? T(1.0) / r : r;
    }
    using pis::pow;
    return pow(x, p);
  }

  std::size_t compile(const NodePtr& n) {
    Instr in{n->op, n->value, n->var, 0, 0, n.get()};
    if (n->op == Op::pow) {
      in.a = compile(n->lhs);
    } else if (n->lhs) {
      in.a = compile(n->lhs);
      if (n->rhs) in.b = compile(n->rhs);
    }
    code_.push_back(in);
    return code_.size() - 1;
  }

  NodePtr root_;
  std::vector<std::string> names_;
  std::vector<Instr> code_;
};

inline ExprAst parse(std::string_view text, const std::vector<std::string>& names) {
  detail::Lexer lex(text);
  detail::Parser p(lex.run(), names);
  return ExprAst(p.parse_all(), names);
}

inline ExprAst parse(std::string_view text, const ChartDomain& domain) {
  return parse(text, domain.coordinate_names());
}

namespace detail {

/// Gradients by an adjoint sweep over the tape; directional derivatives and
/// Hessians by forward-mode passes.
class ExprFunction final : public Function {
 public:
  explicit ExprFunction(std::shared_ptr<const ExprAst> ast)
      : ast_(std::move(ast)), forward_(ast_->dim(), 1, Eval{ast_}) {}

  std::size_t in_dim() const override { return ast_->dim(); }
  std::size_t out_dim() const override { return 1; }
  Eigen::VectorXd value(const Eigen::VectorXd& x) const override { return forward_.value(x); }
  Eigen::MatrixXd jacobian(const Eigen::VectorXd& x) const override {
    if (static_cast<std::size_t>(x.size()) != in_dim()) throw PreconditionError("Function: argument has wrong dimension");
    Eigen::MatrixXd j(1, x.size());
    ast_->value_and_gradient(x.data(), j.data());
    return j;
  }
  Eigen::VectorXd directional(const Eigen::VectorXd& x, std::size_t dir) const override {
    return forward_.directional(x, dir);
  }
  std::vector<Eigen::MatrixXd> hessians(const Eigen::VectorXd& x) const override { return forward_.hessians(x); }

 private:
  struct Eval {
    std::shared_ptr<const ExprAst> ast;
    template <typename V, typename O>
    void operator()(const V& x, O& out) const {
      out[0] = ast->eval(x);
    }
  };
  std::shared_ptr<const ExprAst> ast_;
  GenericFunction<Eval> forward_;
};

/// Several expressions over the same coordinates as one vector-valued map.
class ExprVectorFunction final : public Function {
 public:
  explicit ExprVectorFunction(std::vector<ExprAst> exprs) : exprs_(std::move(exprs)) {
    if (exprs_.empty()) throw ConstructionError("ExprVectorFunction: no expressions");
    for (const auto& e : exprs_)
      if (e.dim() != exprs_.front().dim()) throw ConstructionError("ExprVectorFunction: mixed coordinate lists");
  }

  std::size_t in_dim() const override { return exprs_.front().dim(); }
  std::size_t out_dim() const override { return exprs_.size(); }

  Eigen::VectorXd value(const Eigen::VectorXd& x) const override {
    check(x);
    std::vector<double> xs(x.data(), x.data() + x.size());
    Eigen::VectorXd out(static_cast<Eigen::Index>(exprs_.size()));
    for (std::size_t o = 0; o < exprs_.size(); ++o) out[static_cast<Eigen::Index>(o)] = exprs_[o].eval(xs);
    return out;
  }

  Eigen::MatrixXd jacobian(const Eigen::VectorXd& x) const override {
    check(x);
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> j(exprs_.size(), x.size());
    for (std::size_t o = 0; o < exprs_.size(); ++o)
      exprs_[o].value_and_gradient(x.data(), j.data() + static_cast<Eigen::Index>(o) * x.size());
    return j;
  }

  std::vector<Eigen::MatrixXd> hessians(const Eigen::VectorXd& x) const override {
    std::vector<Eigen::MatrixXd> h;
    for (const auto& e : exprs_) {
      auto ast = std::make_shared<const ExprAst>(e);
      h.push_back(ExprFunction(ast).hessians(x).front());
    }
    return h;
  }

 private:
  void check(const Eigen::VectorXd& x) const {
    if (static_cast<std::size_t>(x.size()) != in_dim()) throw PreconditionError("Function: argument has wrong dimension");
  }
  std::vector<ExprAst> exprs_;
};

}  // namespace detail

inline FunctionPtr to_function(std::vector<ExprAst> exprs) {
  return std::make_shared<detail::ExprVectorFunction>(std::move(exprs));
}

/// Vector field from one component expression per chart coordinate.
inline VectorField parse_vector_field(const std::vector<std::string>& components, const ChartDomain& domain) {
  if (components.size() != domain.dim())
    throw ConstructionError("parse_vector_field: expected " + std::to_string(domain.dim()) + " components");
  std::vector<ExprAst> e;
  for (const auto& c : components) e.push_back(parse(c, domain));
  return VectorField(to_function(std::move(e)));
}

/// Antisymmetric field from upper-triangle entries keyed by coordinate
/// names; unspecified entries are zero. Entries with i after j are stored
/// with flipped sign.
template <typename Field>
Field parse_antisym(const std::vector<std::tuple<std::string, std::string, std::string>>& entries,
                    const ChartDomain& domain) {
  const std::size_t n = domain.dim();
  std::vector<std::string> packed(upper_size(n), "0");
  std::vector<bool> seen(upper_size(n), false);
  for (const auto& [a, b, text] : entries) {
    int i = domain.index_of(a), j = domain.index_of(b);
    if (i < 0) throw ConstructionError("unknown coordinate '" + a + "' in antisymmetric entry");
    if (j < 0) throw ConstructionError("unknown coordinate '" + b + "' in antisymmetric entry");
    if (i == j) throw ConstructionError("diagonal entry (" + a + ", " + b + ") of an antisymmetric field");
    bool flip = i > j;
    auto lo = static_cast<std::size_t>(std::min(i, j)), hi = static_cast<std::size_t>(std::max(i, j));
    std::size_t idx = upper_index(n, lo, hi);
    if (seen[idx]) throw ConstructionError("entry (" + a + ", " + b + ") given twice");
    seen[idx] = true;
    packed[idx] = flip ? "-(" + text + ")" : text;
  }
  std::vector<ExprAst> e;
  for (const auto& t : packed) e.push_back(parse(t, domain));
  if (e.empty()) return Field::constant(Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n)));
  return Field(to_function(std::move(e)));
}

inline ScalarField to_field(const ExprAst& e) {
  return ScalarField(std::make_shared<detail::ExprFunction>(std::make_shared<const ExprAst>(e)));
}

inline ScalarField parse_field(std::string_view text, const ChartDomain& domain) {
  return to_field(parse(text, domain));
}

}  // namespace pis::expr
