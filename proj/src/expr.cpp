#include "mcbatch/expr.hpp"

#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <map>
#include <numbers>
#include <utility>

namespace mcbatch {

Expr Expr::num(double v) {
  Expr e;
  e.kind = ExprKind::Number;
  e.number = v;
  return e;
}
Expr Expr::var(std::size_t index) {
  Expr e;
  e.kind = ExprKind::Variable;
  e.var_index = index;
  return e;
}
Expr Expr::param(std::string name) {
  Expr e;
  e.kind = ExprKind::Parameter;
  e.name = std::move(name);
  return e;
}
Expr Expr::neg(Expr child) {
  Expr e;
  e.kind = ExprKind::Unary;
  e.uop = UnaryOp::Neg;
  e.children.push_back(std::move(child));
  return e;
}
Expr Expr::binary(BinaryOp op, Expr lhs, Expr rhs) {
  Expr e;
  e.kind = ExprKind::Binary;
  e.bop = op;
  e.children.push_back(std::move(lhs));
  e.children.push_back(std::move(rhs));
  return e;
}
Expr Expr::call(std::string fn, std::vector<Expr> args) {
  Expr e;
  e.kind = ExprKind::Call;
  e.name = std::move(fn);
  e.children = std::move(args);
  return e;
}

bool Expr::operator==(const Expr& o) const {
  if (kind != o.kind) return false;
  switch (kind) {
    case ExprKind::Number:
      return number == o.number;
    case ExprKind::Variable:
      return var_index == o.var_index;
    case ExprKind::Parameter:
      return name == o.name;
    case ExprKind::Unary:
      if (uop != o.uop) return false;
      break;
    case ExprKind::Binary:
      if (bop != o.bop) return false;
      break;
    case ExprKind::Call:
      if (name != o.name) return false;
      break;
  }
  return children == o.children;
}

namespace {

struct FuncInfo {
  OpCode op;
  unsigned arity;
  double (*f1)(double);
  double (*f2)(double, double);
};

double fmin_wrap(double a, double b) { return std::fmin(a, b); }
double fmax_wrap(double a, double b) { return std::fmax(a, b); }

const std::map<std::string, FuncInfo, std::less<>>& function_table() {
  static const std::map<std::string, FuncInfo, std::less<>> table = {
      {"sin", {OpCode::Sin, 1, std::sin, nullptr}},
      {"cos", {OpCode::Cos, 1, std::cos, nullptr}},
      {"tan", {OpCode::Tan, 1, std::tan, nullptr}},
      {"asin", {OpCode::Asin, 1, std::asin, nullptr}},
      {"acos", {OpCode::Acos, 1, std::acos, nullptr}},
      {"atan", {OpCode::Atan, 1, std::atan, nullptr}},
      {"exp", {OpCode::Exp, 1, std::exp, nullptr}},
      {"log", {OpCode::Log, 1, std::log, nullptr}},
      {"sqrt", {OpCode::Sqrt, 1, std::sqrt, nullptr}},
      {"abs", {OpCode::Abs, 1, std::fabs, nullptr}},
      {"floor", {OpCode::Floor, 1, std::floor, nullptr}},
      {"pow", {OpCode::Pow, 2, nullptr, std::pow}},
      {"min", {OpCode::Min, 2, nullptr, fmin_wrap}},
      {"max", {OpCode::Max, 2, nullptr, fmax_wrap}},
  };
  return table;
}

// x followed by a positive decimal index, nothing else.
bool is_variable_name(std::string_view s, std::size_t& index_out) {
  if (s.size() < 2 || s[0] != 'x') return false;
  if (s[1] < '1' || s[1] > '9') return false;
  std::size_t v = 0;
  for (std::size_t i = 1; i < s.size(); ++i) {
    if (!std::isdigit(static_cast<unsigned char>(s[i]))) return false;
    v = v * 10 + static_cast<std::size_t>(s[i] - '0');
    if (v > 1'000'000) throw std::out_of_range("variable index too large");
  }
  index_out = v - 1;
  return true;
}

enum class Tok { Number, Ident, Plus, Minus, Star, Slash, Caret, LParen, RParen, Comma, End };

struct Lexer {
  std::string_view src;
  std::size_t pos = 0;

  Tok tok = Tok::End;
  std::size_t tok_off = 0;
  std::string_view ident;
  double number = 0;

  explicit Lexer(std::string_view s) : src(s) { advance(); }

  void advance() {
    while (pos < src.size() &&
           std::isspace(static_cast<unsigned char>(src[pos])))
      ++pos;
    tok_off = pos;
    if (pos >= src.size()) {
      tok = Tok::End;
      return;
    }
    char c = src[pos];
    switch (c) {
      case '+': tok = Tok::Plus; ++pos; return;
      case '-': tok = Tok::Minus; ++pos; return;
      case '*': tok = Tok::Star; ++pos; return;
      case '/': tok = Tok::Slash; ++pos; return;
      case '^': tok = Tok::Caret; ++pos; return;
      case '(': tok = Tok::LParen; ++pos; return;
      case ')': tok = Tok::RParen; ++pos; return;
      case ',': tok = Tok::Comma; ++pos; return;
      default: break;
    }
    if (std::isdigit(static_cast<unsigned char>(c))) {
      std::size_t start = pos;
      while (pos < src.size() &&
             std::isdigit(static_cast<unsigned char>(src[pos])))
        ++pos;
      if (pos < src.size() && src[pos] == '.') {
        ++pos;
        while (pos < src.size() &&
               std::isdigit(static_cast<unsigned char>(src[pos])))
          ++pos;
      }
      if (pos < src.size() && (src[pos] == 'e' || src[pos] == 'E')) {
        std::size_t save = pos;
        ++pos;
        if (pos < src.size() && (src[pos] == '+' || src[pos] == '-')) ++pos;
        if (pos < src.size() &&
            std::isdigit(static_cast<unsigned char>(src[pos]))) {
          while (pos < src.size() &&
                 std::isdigit(static_cast<unsigned char>(src[pos])))
            ++pos;
        } else {
          pos = save;  // 'e' was an identifier, not an exponent
        }
      }
      std::string text(src.substr(start, pos - start));
      number = std::strtod(text.c_str(), nullptr);
      tok = Tok::Number;
      return;
    }
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
      std::size_t start = pos;
      while (pos < src.size() &&
             (std::isalnum(static_cast<unsigned char>(src[pos])) ||
              src[pos] == '_'))
        ++pos;
      ident = src.substr(start, pos - start);
      tok = Tok::Ident;
      return;
    }
    throw SyntaxError(pos, std::string("unexpected character '") + c + "'");
  }
};

struct Parser {
  Lexer lex;

  explicit Parser(std::string_view s) : lex(s) {}

  Expr parse_expr() {
    Expr lhs = parse_term();
    while (lex.tok == Tok::Plus || lex.tok == Tok::Minus) {
      BinaryOp op = lex.tok == Tok::Plus ? BinaryOp::Add : BinaryOp::Sub;
      lex.advance();
      lhs = Expr::binary(op, std::move(lhs), parse_term());
    }
    return lhs;
  }

  Expr parse_term() {
    Expr lhs = parse_factor();
    while (lex.tok == Tok::Star || lex.tok == Tok::Slash) {
      BinaryOp op = lex.tok == Tok::Star ? BinaryOp::Mul : BinaryOp::Div;
      lex.advance();
      lhs = Expr::binary(op, std::move(lhs), parse_factor());
    }
    return lhs;
  }

  // '^' is right-associative; its right operand is a full factor.
  Expr parse_factor() {
    Expr base = parse_unary();
    if (lex.tok == Tok::Caret) {
      lex.advance();
      return Expr::binary(BinaryOp::Pow, std::move(base), parse_factor());
    }
    return base;
  }

  Expr parse_unary() {
    if (lex.tok == Tok::Minus) {
      lex.advance();
      return Expr::neg(parse_unary());
    }
    return parse_primary();
  }

  Expr parse_primary() {
    switch (lex.tok) {
      case Tok::Number: {
        double v = lex.number;
        lex.advance();
        return Expr::num(v);
      }
      case Tok::LParen: {
        lex.advance();
        Expr inner = parse_expr();
        expect(Tok::RParen, "')'");
        return inner;
      }
      case Tok::Ident: {
        std::string name(lex.ident);
        std::size_t name_off = lex.tok_off;
        lex.advance();
        if (lex.tok == Tok::LParen) {
          auto it = function_table().find(name);
          if (it == function_table().end())
            throw UnknownFunction(name_off, "unknown function '" + name + "'");
          lex.advance();
          std::vector<Expr> args;
          args.push_back(parse_expr());
          while (lex.tok == Tok::Comma) {
            lex.advance();
            args.push_back(parse_expr());
          }
          expect(Tok::RParen, "')'");
          if (args.size() != it->second.arity)
            throw ArityMismatch(name_off, "function '" + name + "' expects " +
                                              std::to_string(it->second.arity) +
                                              " argument(s), got " +
                                              std::to_string(args.size()));
          return Expr::call(std::move(name), std::move(args));
        }
        if (function_table().count(name))
          throw SyntaxError(name_off,
                            "expected '(' after function name '" + name + "'");
        if (name == "pi") return Expr::num(std::numbers::pi);
        if (name == "e") return Expr::num(std::numbers::e);
        std::size_t vidx;
        if (is_variable_name(name, vidx)) return Expr::var(vidx);
        return Expr::param(std::move(name));
      }
      default:
        throw SyntaxError(lex.tok_off,
                          "expected a number, identifier or '('");
    }
  }

  void expect(Tok t, const char* what) {
    if (lex.tok != t)
      throw SyntaxError(lex.tok_off, std::string("expected ") + what);
    lex.advance();
  }
};

}  // namespace

Expr parse(std::string_view source) {
  if (source.empty()) throw SyntaxError(0, "empty expression");
  Parser p(source);
  Expr e = p.parse_expr();
  if (p.lex.tok != Tok::End)
    throw SyntaxError(p.lex.tok_off, "unexpected trailing input");
  return e;
}

namespace {

void print_expr(const Expr& e, std::string& out) {
  char buf[40];
  switch (e.kind) {
    case ExprKind::Number:
      std::snprintf(buf, sizeof buf, "%.17g", e.number);
      out += buf;
      break;
    case ExprKind::Variable:
      out += 'x';
      out += std::to_string(e.var_index + 1);
      break;
    case ExprKind::Parameter:
      out += e.name;
      break;
    case ExprKind::Unary:
      out += "(-";
      print_expr(e.children[0], out);
      out += ')';
      break;
    case ExprKind::Binary: {
      const char* op = nullptr;
      switch (e.bop) {
        case BinaryOp::Add: op = "+"; break;
        case BinaryOp::Sub: op = "-"; break;
        case BinaryOp::Mul: op = "*"; break;
        case BinaryOp::Div: op = "/"; break;
        case BinaryOp::Pow: op = "^"; break;
      }
      out += '(';
      print_expr(e.children[0], out);
      out += op;
      print_expr(e.children[1], out);
      out += ')';
      break;
    }
    case ExprKind::Call:
      out += e.name;
      out += '(';
      for (std::size_t i = 0; i < e.children.size(); ++i) {
        if (i) out += ',';
        print_expr(e.children[i], out);
      }
      out += ')';
      break;
  }
}

}  // namespace

std::string to_string(const Expr& e) {
  std::string out;
  print_expr(e, out);
  return out;
}

namespace {

void collect_vars(const Expr& e, std::set<std::size_t>& out) {
  if (e.kind == ExprKind::Variable) out.insert(e.var_index);
  for (const Expr& c : e.children) collect_vars(c, out);
}

void collect_params(const Expr& e, std::vector<std::string>& out) {
  if (e.kind == ExprKind::Parameter) {
    bool seen = false;
    for (const auto& n : out)
      if (n == e.name) { seen = true; break; }
    if (!seen) out.push_back(e.name);
  }
  for (const Expr& c : e.children) collect_params(c, out);
}

}  // namespace

std::set<std::size_t> free_variables(const Expr& e) {
  std::set<std::size_t> out;
  collect_vars(e, out);
  return out;
}

std::vector<std::string> free_parameters(const Expr& e) {
  std::vector<std::string> out;
  collect_params(e, out);
  return out;
}

double tree_eval(const Expr& e, std::span<const double> point,
                 std::span<const std::string> param_names,
                 std::span<const double> params) {
  switch (e.kind) {
    case ExprKind::Number:
      return e.number;
    case ExprKind::Variable:
      if (e.var_index >= point.size())
        throw DimensionError("variable x" + std::to_string(e.var_index + 1) +
                             " exceeds point dimension");
      return point[e.var_index];
    case ExprKind::Parameter:
      for (std::size_t i = 0; i < param_names.size(); ++i)
        if (param_names[i] == e.name) return params[i];
      throw UnboundParameter("unbound parameter '" + e.name + "'");
    case ExprKind::Unary:
      return -tree_eval(e.children[0], point, param_names, params);
    case ExprKind::Binary: {
      double a = tree_eval(e.children[0], point, param_names, params);
      double b = tree_eval(e.children[1], point, param_names, params);
      switch (e.bop) {
        case BinaryOp::Add: return a + b;
        case BinaryOp::Sub: return a - b;
        case BinaryOp::Mul: return a * b;
        case BinaryOp::Div: return a / b;
        case BinaryOp::Pow: return std::pow(a, b);
      }
      return 0;
    }
    case ExprKind::Call: {
      const FuncInfo& fn = function_table().at(e.name);
      if (fn.arity == 1)
        return fn.f1(tree_eval(e.children[0], point, param_names, params));
      double a = tree_eval(e.children[0], point, param_names, params);
      double b = tree_eval(e.children[1], point, param_names, params);
      return fn.f2(a, b);
    }
  }
  return 0;
}

namespace {

struct Compiler {
  std::vector<Instr>& code;
  std::span<const std::string> param_names;
  std::size_t dim;
  std::size_t depth = 0;
  std::size_t max_depth = 0;

  void push(Instr in, int stack_delta) {
    code.push_back(in);
    depth = static_cast<std::size_t>(static_cast<long>(depth) + stack_delta);
    if (depth > max_depth) max_depth = depth;
  }

  void emit(const Expr& e) {
    switch (e.kind) {
      case ExprKind::Number:
        push({OpCode::PushConst, 0, e.number}, +1);
        break;
      case ExprKind::Variable:
        if (e.var_index >= dim)
          throw DimensionError("x" + std::to_string(e.var_index + 1) +
                               " exceeds dim=" + std::to_string(dim));
        push({OpCode::LoadVar, static_cast<std::uint32_t>(e.var_index), 0},
             +1);
        break;
      case ExprKind::Parameter: {
        std::size_t slot = param_names.size();
        for (std::size_t i = 0; i < param_names.size(); ++i)
          if (param_names[i] == e.name) { slot = i; break; }
        if (slot == param_names.size())
          throw UnboundParameter("unbound parameter '" + e.name + "'");
        push({OpCode::LoadParam, static_cast<std::uint32_t>(slot), 0}, +1);
        break;
      }
      case ExprKind::Unary:
        emit(e.children[0]);
        push({OpCode::Neg, 0, 0}, 0);
        break;
      case ExprKind::Binary: {
        emit(e.children[0]);
        emit(e.children[1]);
        OpCode op;
        switch (e.bop) {
          case BinaryOp::Add: op = OpCode::Add; break;
          case BinaryOp::Sub: op = OpCode::Sub; break;
          case BinaryOp::Mul: op = OpCode::Mul; break;
          case BinaryOp::Div: op = OpCode::Div; break;
          case BinaryOp::Pow: op = OpCode::Pow; break;
          default: op = OpCode::Add; break;
        }
        push({op, 0, 0}, -1);
        break;
      }
      case ExprKind::Call: {
        for (const Expr& c : e.children) emit(c);
        const FuncInfo& fn = function_table().at(e.name);
        push({fn.op, 0, 0}, fn.arity == 2 ? -1 : 0);
        break;
      }
    }
  }
};

}  // namespace

CompiledProgram compile(const Expr& expr, std::size_t dim,
                        std::span<const std::string> param_names) {
  CompiledProgram p;
  p.dim_ = dim;
  p.param_names_.assign(param_names.begin(), param_names.end());
  Compiler c{p.code_, param_names, dim};
  c.emit(expr);
  if (c.depth != 1)
    throw CompileError("internal error: final stack depth != 1");
  p.stack_need_ = c.max_depth;
  return p;
}

double CompiledProgram::evaluate(std::span<const double> point,
                                 std::span<const double> params,
                                 std::vector<double>& stack) const {
  if (stack.size() < stack_need_) stack.resize(stack_need_);
  double* sp = stack.data();
  std::size_t top = 0;
  for (const Instr& in : code_) {
    switch (in.op) {
      case OpCode::PushConst: sp[top++] = in.value; break;
      case OpCode::LoadVar: sp[top++] = point[in.index]; break;
      case OpCode::LoadParam: sp[top++] = params[in.index]; break;
      case OpCode::Neg: sp[top - 1] = -sp[top - 1]; break;
      case OpCode::Add: --top; sp[top - 1] += sp[top]; break;
      case OpCode::Sub: --top; sp[top - 1] -= sp[top]; break;
      case OpCode::Mul: --top; sp[top - 1] *= sp[top]; break;
      case OpCode::Div: --top; sp[top - 1] /= sp[top]; break;
      case OpCode::Pow: --top; sp[top - 1] = std::pow(sp[top - 1], sp[top]); break;
      case OpCode::Sin: sp[top - 1] = std::sin(sp[top - 1]); break;
      case OpCode::Cos: sp[top - 1] = std::cos(sp[top - 1]); break;
      case OpCode::Tan: sp[top - 1] = std::tan(sp[top - 1]); break;
      case OpCode::Asin: sp[top - 1] = std::asin(sp[top - 1]); break;
      case OpCode::Acos: sp[top - 1] = std::acos(sp[top - 1]); break;
      case OpCode::Atan: sp[top - 1] = std::atan(sp[top - 1]); break;
      case OpCode::Exp: sp[top - 1] = std::exp(sp[top - 1]); break;
      case OpCode::Log: sp[top - 1] = std::log(sp[top - 1]); break;
      case OpCode::Sqrt: sp[top - 1] = std::sqrt(sp[top - 1]); break;
      case OpCode::Abs: sp[top - 1] = std::fabs(sp[top - 1]); break;
      case OpCode::Floor: sp[top - 1] = std::floor(sp[top - 1]); break;
      case OpCode::Min: --top; sp[top - 1] = std::fmin(sp[top - 1], sp[top]); break;
      case OpCode::Max: --top; sp[top - 1] = std::fmax(sp[top - 1], sp[top]); break;
    }
  }
  return sp[0];
}

}  // namespace mcbatch
