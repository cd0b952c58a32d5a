#pragma once

// Random well-formed DSL expressions for fuzz and property tests.

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "mcbatch/expr.hpp"

namespace testgen {

struct GenConfig {
  std::size_t dim = 3;
  std::vector<std::string> params = {"a", "b"};
  int max_depth = 5;
  bool safe_ops_only = false;  // avoid log/sqrt/div/pow (finite everywhere)
};

inline mcbatch::Expr random_expr(std::mt19937_64& rng, const GenConfig& cfg,
                                 int depth = 0) {
  using mcbatch::Expr;
  using mcbatch::BinaryOp;
  std::uniform_int_distribution<int> pick(0, 99);
  int roll = pick(rng);
  bool leaf = depth >= cfg.max_depth || roll < 35;
  if (leaf) {
    int kind = pick(rng) % 3;
    if (kind == 0) {
      std::uniform_real_distribution<double> num(0.0, 4.0);
      return Expr::num(num(rng));
    }
    if (kind == 1 || cfg.params.empty()) {
      std::uniform_int_distribution<std::size_t> v(0, cfg.dim - 1);
      return Expr::var(v(rng));
    }
    std::uniform_int_distribution<std::size_t> p(0, cfg.params.size() - 1);
    return Expr::param(cfg.params[p(rng)]);
  }
  if (roll < 45) return Expr::neg(random_expr(rng, cfg, depth + 1));
  if (roll < 75) {
    static const BinaryOp all[] = {BinaryOp::Add, BinaryOp::Sub, BinaryOp::Mul,
                                   BinaryOp::Div, BinaryOp::Pow};
    static const BinaryOp safe[] = {BinaryOp::Add, BinaryOp::Sub, BinaryOp::Mul};
    BinaryOp op = cfg.safe_ops_only ? safe[pick(rng) % 3] : all[pick(rng) % 5];
    return Expr::binary(op, random_expr(rng, cfg, depth + 1),
                        random_expr(rng, cfg, depth + 1));
  }
  static const char* all1[] = {"sin", "cos", "tan",  "atan", "exp",
                               "log", "sqrt", "abs", "floor", "asin", "acos"};
  static const char* safe1[] = {"sin", "cos", "atan", "abs"};
  static const char* two[] = {"pow", "min", "max"};
  if (!cfg.safe_ops_only && pick(rng) < 20) {
    const char* fn = two[pick(rng) % 3];
    std::vector<Expr> args;
    args.push_back(random_expr(rng, cfg, depth + 1));
    args.push_back(random_expr(rng, cfg, depth + 1));
    return Expr::call(fn, std::move(args));
  }
  const char* fn = cfg.safe_ops_only ? safe1[pick(rng) % 4]
                                     : all1[pick(rng) % 11];
  std::vector<Expr> args;
  args.push_back(random_expr(rng, cfg, depth + 1));
  return Expr::call(fn, std::move(args));
}

}  // namespace testgen
