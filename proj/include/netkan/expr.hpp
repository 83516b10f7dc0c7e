#pragma once

#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

namespace netkan {

enum class BinOp { Add, Sub, Mul, Div, Pow };
enum class UnOp { Exp, Log, Sin, Cos, Tan, Tanh, Abs };

std::string binop_name(BinOp op);
std::string unop_name(UnOp op);
BinOp binop_from_name(const std::string& s);
UnOp unop_from_name(const std::string& s);

struct ExprNode;
using Expr = std::shared_ptr<ExprNode>;

struct ExprNode {
  enum class Kind { Input, Const, Unary, Binary };
  Kind kind = Kind::Const;
  int slot = 0;        // Input
  double value = 0.0;  // Const
  UnOp un = UnOp::Exp;
  BinOp bin = BinOp::Add;
  Expr a, b;  // Unary uses a; Binary uses a and b
};

Expr make_input(int slot);
Expr make_const(double v);
Expr make_unary(UnOp op, Expr child);
Expr make_binary(BinOp op, Expr lhs, Expr rhs);

Expr clone_expr(const Expr& e);
int expr_size(const Expr& e);  // node count (complexity)

// Total guarded evaluation: log(max(x,1e-8)); exp argument clipped to
// [-50,50]; division by |den|<1e-12 -> 0; pow as |base|^p with p clamped to
// [-1,2]; any residual non-finite value at a node -> 0.
double safe_eval(const Expr& e, const std::vector<double>& inputs);

// Infix text; input slot i renders as names[i] when provided, else x{i}.
std::string expr_to_string(const Expr& e, const std::vector<std::string>& names = {});

nlohmann::json expr_to_json(const Expr& e);
Expr expr_from_json(const nlohmann::json& j);

// All constant nodes in depth-first order (for in-place refinement).
void collect_constants(const Expr& e, std::vector<ExprNode*>& out);

}  // namespace netkan
