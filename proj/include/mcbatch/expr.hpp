#pragma once

#include <cstdint>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace mcbatch {

// Small math DSL for integrands.  Variables are x1..xd (0-based
// internally); identifiers that are neither functions nor the constants
// pi/e are free parameters bound at compile time.

enum class ExprKind { Number, Variable, Parameter, Unary, Binary, Call };
enum class UnaryOp { Neg };
enum class BinaryOp { Add, Sub, Mul, Div, Pow };

struct Expr {
  ExprKind kind = ExprKind::Number;
  double number = 0.0;         // Number
  std::size_t var_index = 0;   // Variable
  std::string name;            // Parameter / Call
  UnaryOp uop = UnaryOp::Neg;
  BinaryOp bop = BinaryOp::Add;
  std::vector<Expr> children;

  static Expr num(double v);
  static Expr var(std::size_t index);
  static Expr param(std::string name);
  static Expr neg(Expr e);
  static Expr binary(BinaryOp op, Expr lhs, Expr rhs);
  static Expr call(std::string fn, std::vector<Expr> args);

  bool operator==(const Expr& other) const;
};

struct ParseError : std::runtime_error {
  std::size_t offset;
  ParseError(std::size_t off, const std::string& msg)
      : std::runtime_error(msg + " (at offset " + std::to_string(off) + ")"),
        offset(off) {}
};
struct SyntaxError : ParseError {
  using ParseError::ParseError;
};
struct UnknownFunction : ParseError {
  using ParseError::ParseError;
};
struct ArityMismatch : ParseError {
  using ParseError::ParseError;
};

struct CompileError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct DimensionError : CompileError {
  using CompileError::CompileError;
};
struct UnboundParameter : CompileError {
  using CompileError::CompileError;
};

Expr parse(std::string_view source);

// Fully parenthesized form; parsing it back yields a structurally
// identical tree.
std::string to_string(const Expr& e);

std::set<std::size_t> free_variables(const Expr& e);
// Parameter names in first-appearance (depth-first) order.
std::vector<std::string> free_parameters(const Expr& e);

// Reference tree-walking evaluation. params[i] binds param_names[i].
double tree_eval(const Expr& e, std::span<const double> point,
                 std::span<const std::string> param_names,
                 std::span<const double> params);

enum class OpCode : std::uint8_t {
  PushConst, LoadVar, LoadParam,
  Neg, Add, Sub, Mul, Div, Pow,
  Sin, Cos, Tan, Asin, Acos, Atan,
  Exp, Log, Sqrt, Abs, Floor, Min, Max,
};

struct Instr {
  OpCode op;
  std::uint32_t index = 0;  // LoadVar / LoadParam slot
  double value = 0.0;       // PushConst
};

// Postfix program compiled from an Expr.  Immutable after construction;
// evaluation touches only the caller's scratch stack, so one program may
// be shared across any number of workers.
class CompiledProgram {
 public:
  std::size_t dim() const { return dim_; }
  const std::vector<std::string>& param_names() const { return param_names_; }
  std::size_t stack_need() const { return stack_need_; }
  const std::vector<Instr>& code() const { return code_; }

  double evaluate(std::span<const double> point, std::span<const double> params,
                  std::vector<double>& stack) const;

  friend CompiledProgram compile(const Expr&, std::size_t,
                                 std::span<const std::string>);

 private:
  std::vector<Instr> code_;
  std::vector<std::string> param_names_;
  std::size_t dim_ = 0;
  std::size_t stack_need_ = 0;
};

CompiledProgram compile(const Expr& expr, std::size_t dim,
                        std::span<const std::string> param_names);

}  // namespace mcbatch
