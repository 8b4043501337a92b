#pragma once

// Arithmetic expression language used for model coefficients: numeric
// literals, `t`, state identifiers x1..xn, declared parameter names, the
// operators + - * / ^ (with unary minus), parentheses, and a small set of
// registered functions.
//
// Parsing produces a postorder program evaluated with an explicit value
// stack, so evaluation is allocation-free (caller supplies the stack) and
// reentrant. The printed form is fully parenthesized and round-trips
// through the parser to an identical program.

#include <charconv>
#include <cmath>
#include <cstdint>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

namespace ecoflux {

struct SourcePos {
  int line = 1;
  int col = 1;
};

/// Parse failure with position info (relative to the parsed text).
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& reason, SourcePos pos)
      : std::runtime_error(reason + " at line " + std::to_string(pos.line) +
                           ", column " + std::to_string(pos.col)),
        pos_(pos),
        reason_(reason) {}

  SourcePos where() const { return pos_; }
  const std::string& reason() const { return reason_; }

 private:
  SourcePos pos_;
  std::string reason_;
};

/// Arithmetic failure during evaluation (division by zero, domain error,
/// unresolved identifier).
class EvalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using ScalarFn = double (*)(double);

struct FunctionDef {
  const char* name;
  ScalarFn fn;
  bool nonneg_arg;  // argument domain is [0, inf)
};

inline const std::vector<FunctionDef>& function_registry() {
  static const std::vector<FunctionDef> fns = {
      {"exp", [](double v) { return std::exp(v); }, false},
      {"sin", [](double v) { return std::sin(v); }, false},
      {"cos", [](double v) { return std::cos(v); }, false},
      {"sqrt", [](double v) { return std::sqrt(v); }, true},
      {"abs", [](double v) { return std::fabs(v); }, false},
  };
  return fns;
}

inline int find_function(std::string_view name) {
  const auto& fns = function_registry();
  for (std::size_t i = 0; i < fns.size(); ++i)
    if (name == fns[i].name) return static_cast<int>(i);
  return -1;
}

enum class ExprOp : std::uint8_t {
  constant,
  time_ref,
  state_ref,  // index = 0-based state slot
  param_ref,  // index = parameter slot, name kept for printing
  ident,      // unresolved identifier (before bind)
  neg,
  add,
  sub,
  mul,
  div,
  pow,
  call,  // index = function_registry slot
};

struct ExprNode {
  ExprOp op = ExprOp::constant;
  double value = 0.0;
  int index = -1;
  std::string name;
};

namespace detail {
inline std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  if (ec != std::errc{}) return "0";
  return std::string(buf, ptr);
}
}  // namespace detail

class Expr {
 public:
  Expr() = default;

  bool empty() const { return code_.empty(); }
  const std::vector<ExprNode>& code() const { return code_; }

  /// True for the single-node program `0` (used to mark declared-but-zero
  /// flows in structural checks).
  bool is_literal_zero() const {
    return code_.size() == 1 && code_[0].op == ExprOp::constant &&
           code_[0].value == 0.0;
  }

  struct Env {
    double t = 0.0;
    std::span<const double> x{};
    std::span<const double> params{};
  };

  /// Evaluate with a caller-provided stack (cleared here; no allocation
  /// once its capacity covers the program depth).
  double eval(const Env& env, std::vector<double>& stack) const {
    if (code_.empty()) return 0.0;
    stack.clear();
    for (const ExprNode& node : code_) {
      switch (node.op) {
        case ExprOp::constant:
          stack.push_back(node.value);
          break;
        case ExprOp::time_ref:
          stack.push_back(env.t);
          break;
        case ExprOp::state_ref:
          if (node.index < 0 ||
              static_cast<std::size_t>(node.index) >= env.x.size())
            throw EvalError("state x" + std::to_string(node.index + 1) +
                            " not available in this context");
          stack.push_back(env.x[static_cast<std::size_t>(node.index)]);
          break;
        case ExprOp::param_ref:
          if (node.index < 0 ||
              static_cast<std::size_t>(node.index) >= env.params.size())
            throw EvalError("parameter '" + node.name +
                            "' not available in this context");
          stack.push_back(env.params[static_cast<std::size_t>(node.index)]);
          break;
        case ExprOp::ident:
          throw EvalError("unresolved identifier '" + node.name + "'");
        case ExprOp::neg:
          stack.back() = -stack.back();
          break;
        case ExprOp::add: {
          double rhs = stack.back();
          stack.pop_back();
          stack.back() += rhs;
          break;
        }
        case ExprOp::sub: {
          double rhs = stack.back();
          stack.pop_back();
          stack.back() -= rhs;
          break;
        }
        case ExprOp::mul: {
          double rhs = stack.back();
          stack.pop_back();
          stack.back() *= rhs;
          break;
        }
        case ExprOp::div: {
          double rhs = stack.back();
          stack.pop_back();
          if (rhs == 0.0) throw EvalError("division by zero");
          stack.back() /= rhs;
          break;
        }
        case ExprOp::pow: {
          double e = stack.back();
          stack.pop_back();
          double b = stack.back();
          if (b < 0.0 && std::nearbyint(e) != e)
            throw EvalError("fractional power of negative base");
          if (b == 0.0 && e < 0.0)
            throw EvalError("zero raised to a negative power");
          stack.back() = std::pow(b, e);
          break;
        }
        case ExprOp::call: {
          const FunctionDef& fn =
              function_registry()[static_cast<std::size_t>(node.index)];
          double a = stack.back();
          if (fn.nonneg_arg && a < 0.0)
            throw EvalError(std::string(fn.name) +
                            " of a negative argument");
          stack.back() = fn.fn(a);
          break;
        }
      }
    }
    return stack.back();
  }

  double eval(const Env& env) const {
    std::vector<double> stack;
    return eval(env, stack);
  }

  /// Canonical fully parenthesized form; Expr::parse(text()) rebuilds an
  /// identical program.
  std::string text() const {
    if (code_.empty()) return "0";
    std::vector<std::string> stack;
    for (const ExprNode& node : code_) {
      switch (node.op) {
        case ExprOp::constant:
          stack.push_back(detail::format_double(node.value));
          break;
        case ExprOp::time_ref:
          stack.push_back("t");
          break;
        case ExprOp::state_ref:
          stack.push_back("x" + std::to_string(node.index + 1));
          break;
        case ExprOp::param_ref:
        case ExprOp::ident:
          stack.push_back(node.name);
          break;
        case ExprOp::neg:
          stack.back() = "(-" + stack.back() + ")";
          break;
        case ExprOp::add:
        case ExprOp::sub:
        case ExprOp::mul:
        case ExprOp::div:
        case ExprOp::pow: {
          const char* sym = node.op == ExprOp::add   ? "+"
                            : node.op == ExprOp::sub ? "-"
                            : node.op == ExprOp::mul ? "*"
                            : node.op == ExprOp::div ? "/"
                                                     : "^";
          std::string rhs = std::move(stack.back());
          stack.pop_back();
          stack.back() = "(" + stack.back() + sym + rhs + ")";
          break;
        }
        case ExprOp::call: {
          const FunctionDef& fn =
              function_registry()[static_cast<std::size_t>(node.index)];
          stack.back() = std::string(fn.name) + "(" + stack.back() + ")";
          break;
        }
      }
    }
    return stack.back();
  }

  /// Resolve identifiers against the state count and parameter table.
  /// Returns the names that stayed unresolved (callers turn these into
  /// validation diagnostics). Safe to call repeatedly.
  std::vector<std::string> bind(int n_states,
                                const std::map<std::string, int>& params) {
    std::vector<std::string> unresolved;
    for (ExprNode& node : code_) {
      if (node.op == ExprOp::state_ref) {
        if (node.index >= n_states)
          unresolved.push_back("x" + std::to_string(node.index + 1));
      } else if (node.op == ExprOp::ident || node.op == ExprOp::param_ref) {
        auto it = params.find(node.name);
        if (it != params.end()) {
          node.op = ExprOp::param_ref;
          node.index = it->second;
        } else {
          node.op = ExprOp::ident;
          node.index = -1;
          unresolved.push_back(node.name);
        }
      }
    }
    return unresolved;
  }

  bool bound() const {
    for (const ExprNode& node : code_)
      if (node.op == ExprOp::ident) return false;
    return true;
  }

  static Expr parse(std::string_view src);

 private:
  friend struct ExprParser;
  std::vector<ExprNode> code_;
};

// ---------------------------------------------------------------------------
// Recursive-descent parser. Precedence (loosest first): + - | * / | unary -
// | ^ (right associative, binds tighter than unary minus: -2^2 == -(2^2)).

struct ExprParser {
  std::string_view src;
  std::size_t pos = 0;
  int line = 1;
  int col = 1;
  std::vector<ExprNode>* out = nullptr;

  [[noreturn]] void fail(const std::string& reason) const {
    throw ParseError(reason, SourcePos{line, col});
  }

  char peek() const { return pos < src.size() ? src[pos] : '\0'; }

  char take() {
    char c = src[pos++];
    if (c == '\n') {
      ++line;
      col = 1;
    } else {
      ++col;
    }
    return c;
  }

  void skip_ws() {
    while (pos < src.size() &&
           (src[pos] == ' ' || src[pos] == '\t' || src[pos] == '\r' ||
            src[pos] == '\n'))
      take();
  }

  bool accept(char c) {
    skip_ws();
    if (peek() == c) {
      take();
      return true;
    }
    return false;
  }

  void expect(char c, const char* what) {
    if (!accept(c)) fail(std::string("expected ") + what);
  }

  void emit(ExprNode node) { out->push_back(std::move(node)); }

  void emit_op(ExprOp op) {
    ExprNode node;
    node.op = op;
    out->push_back(std::move(node));
  }

  void parse_sum() {
    parse_term();
    for (;;) {
      skip_ws();
      char c = peek();
      if (c != '+' && c != '-') return;
      take();
      parse_term();
      emit_op(c == '+' ? ExprOp::add : ExprOp::sub);
    }
  }

  void parse_term() {
    parse_unary();
    for (;;) {
      skip_ws();
      char c = peek();
      if (c != '*' && c != '/') return;
      take();
      parse_unary();
      emit_op(c == '*' ? ExprOp::mul : ExprOp::div);
    }
  }

  void parse_unary() {
    skip_ws();
    if (peek() == '-') {
      take();
      parse_unary();
      emit_op(ExprOp::neg);
      return;
    }
    parse_power();
  }

  void parse_power() {
    parse_primary();
    skip_ws();
    if (peek() == '^') {
      take();
      parse_unary();  // right associative, allows signed exponents
      emit_op(ExprOp::pow);
    }
  }

  void parse_primary() {
    skip_ws();
    char c = peek();
    if (c == '\0') fail("unexpected end of expression");
    if (c == '(') {
      take();
      parse_sum();
      expect(')', "')'");
      return;
    }
    if ((c >= '0' && c <= '9') || c == '.') {
      parse_number();
      return;
    }
    if ((c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || c == '_') {
      parse_identifier();
      return;
    }
    fail(std::string("unexpected character '") + c + "'");
  }

  void parse_number() {
    double value = 0.0;
    const char* begin = src.data() + pos;
    const char* end = src.data() + src.size();
    auto [ptr, ec] = std::from_chars(begin, end, value);
    if (ec != std::errc{} || ptr == begin) fail("invalid number");
    std::size_t consumed = static_cast<std::size_t>(ptr - begin);
    for (std::size_t i = 0; i < consumed; ++i) take();
    ExprNode node;
    node.op = ExprOp::constant;
    node.value = value;
    emit(std::move(node));
  }

  void parse_identifier() {
    SourcePos start{line, col};
    std::string name;
    while (pos < src.size()) {
      char c = peek();
      if ((c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') ||
          (c >= '0' && c <= '9') || c == '_')
        name.push_back(take());
      else
        break;
    }
    skip_ws();
    if (peek() == '(') {
      int fn = find_function(name);
      if (fn < 0)
        throw ParseError("unknown function '" + name + "'", start);
      take();
      parse_sum();
      expect(')', "')'");
      ExprNode node;
      node.op = ExprOp::call;
      node.index = fn;
      node.name = name;
      emit(std::move(node));
      return;
    }
    ExprNode node;
    if (name == "t") {
      node.op = ExprOp::time_ref;
    } else if (name.size() > 1 && name.size() <= 7 && name[0] == 'x' &&
               name.find_first_not_of("0123456789", 1) == std::string::npos &&
               name[1] != '0') {
      node.op = ExprOp::state_ref;
      node.index = std::stoi(name.substr(1)) - 1;
    } else {
      node.op = ExprOp::ident;
      node.name = std::move(name);
    }
    emit(std::move(node));
  }
};

inline Expr Expr::parse(std::string_view src) {
  Expr e;
  ExprParser p;
  p.src = src;
  p.out = &e.code_;
  p.skip_ws();
  if (p.pos == src.size())
    throw ParseError("empty expression", SourcePos{p.line, p.col});
  p.parse_sum();
  p.skip_ws();
  if (p.pos != src.size()) p.fail("unexpected trailing input");
  return e;
}

inline Expr parse_expr(std::string_view src) { return Expr::parse(src); }

}  // namespace ecoflux
