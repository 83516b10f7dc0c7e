#include "netkan/expr.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace netkan {

std::string binop_name(BinOp op) {
  switch (op) {
    case BinOp::Add: return "add";
    case BinOp::Sub: return "sub";
    case BinOp::Mul: return "mul";
    case BinOp::Div: return "div";
    case BinOp::Pow: return "pow";
  }
  throw std::logic_error("bad binop");
}

std::string unop_name(UnOp op) {
  switch (op) {
    case UnOp::Exp: return "exp";
    case UnOp::Log: return "log";
    case UnOp::Sin: return "sin";
    case UnOp::Cos: return "cos";
    case UnOp::Tan: return "tan";
    case UnOp::Tanh: return "tanh";
    case UnOp::Abs: return "abs";
  }
  throw std::logic_error("bad unop");
}

BinOp binop_from_name(const std::string& s) {
  if (s == "add") return BinOp::Add;
  if (s == "sub") return BinOp::Sub;
  if (s == "mul") return BinOp::Mul;
  if (s == "div") return BinOp::Div;
  if (s == "pow") return BinOp::Pow;
  throw std::invalid_argument("unknown binary op: " + s);
}

UnOp unop_from_name(const std::string& s) {
  if (s == "exp") return UnOp::Exp;
  if (s == "log") return UnOp::Log;
  if (s == "sin") return UnOp::Sin;
  if (s == "cos") return UnOp::Cos;
  if (s == "tan") return UnOp::Tan;
  if (s == "tanh") return UnOp::Tanh;
  if (s == "abs") return UnOp::Abs;
  throw std::invalid_argument("unknown unary op: " + s);
}

Expr make_input(int slot) {
  auto n = std::make_shared<ExprNode>();
  n->kind = ExprNode::Kind::Input;
  n->slot = slot;
  return n;
}

Expr make_const(double v) {
  auto n = std::make_shared<ExprNode>();
  n->kind = ExprNode::Kind::Const;
  n->value = v;
  return n;
}

Expr make_unary(UnOp op, Expr child) {
  auto n = std::make_shared<ExprNode>();
  n->kind = ExprNode::Kind::Unary;
  n->un = op;
  n->a = std::move(child);
  return n;
}

Expr make_binary(BinOp op, Expr lhs, Expr rhs) {
  auto n = std::make_shared<ExprNode>();
  n->kind = ExprNode::Kind::Binary;
  n->bin = op;
  n->a = std::move(lhs);
  n->b = std::move(rhs);
  return n;
}

Expr clone_expr(const Expr& e) {
  if (!e) return nullptr;
  auto n = std::make_shared<ExprNode>(*e);
  n->a = clone_expr(e->a);
  n->b = clone_expr(e->b);
  return n;
}

int expr_size(const Expr& e) {
  if (!e) return 0;
  return 1 + expr_size(e->a) + expr_size(e->b);
}

namespace {

inline double guard_finite(double v) { return std::isfinite(v) ? v : 0.0; }

}  // namespace

double safe_eval(const Expr& e, const std::vector<double>& inputs) {
  switch (e->kind) {
    case ExprNode::Kind::Input: {
      if (e->slot < 0 || e->slot >= static_cast<int>(inputs.size()))
        throw std::invalid_argument("safe_eval: input slot out of range");
      return guard_finite(inputs[e->slot]);
    }
    case ExprNode::Kind::Const:
      return guard_finite(e->value);
    case ExprNode::Kind::Unary: {
      double x = safe_eval(e->a, inputs);
      double v = 0.0;
      switch (e->un) {
        case UnOp::Exp: v = std::exp(x < -50.0 ? -50.0 : (x > 50.0 ? 50.0 : x)); break;
        case UnOp::Log: v = std::log(x > 1e-8 ? x : 1e-8); break;
        case UnOp::Sin: v = std::sin(x); break;
        case UnOp::Cos: v = std::cos(x); break;
        case UnOp::Tan: v = std::tan(x); break;
        case UnOp::Tanh: v = std::tanh(x); break;
        case UnOp::Abs: v = std::fabs(x); break;
      }
      return guard_finite(v);
    }
    case ExprNode::Kind::Binary: {
      double x = safe_eval(e->a, inputs);
      double y = safe_eval(e->b, inputs);
      double v = 0.0;
      switch (e->bin) {
        case BinOp::Add: v = x + y; break;
        case BinOp::Sub: v = x - y; break;
        case BinOp::Mul: v = x * y; break;
        case BinOp::Div: v = std::fabs(y) < 1e-12 ? 0.0 : x / y; break;
        case BinOp::Pow: {
          double p = y < -1.0 ? -1.0 : (y > 2.0 ? 2.0 : y);
          double base = std::fabs(x);
          v = (base < 1e-12 && p < 0.0) ? 0.0 : std::pow(base, p);
          break;
        }
      }
      return guard_finite(v);
    }
  }
  throw std::logic_error("bad expr node");
}

namespace {

std::string slot_name(int slot, const std::vector<std::string>& names) {
  if (slot < static_cast<int>(names.size())) return names[slot];
  return "x" + std::to_string(slot);
}

}  // namespace

std::string expr_to_string(const Expr& e, const std::vector<std::string>& names) {
  switch (e->kind) {
    case ExprNode::Kind::Input:
      return slot_name(e->slot, names);
    case ExprNode::Kind::Const: {
      std::ostringstream os;
      os.precision(12);
      os << e->value;
      return os.str();
    }
    case ExprNode::Kind::Unary:
      return unop_name(e->un) + "(" + expr_to_string(e->a, names) + ")";
    case ExprNode::Kind::Binary: {
      const char* sym = nullptr;
      switch (e->bin) {
        case BinOp::Add: sym = " + "; break;
        case BinOp::Sub: sym = " - "; break;
        case BinOp::Mul: sym = "*"; break;
        case BinOp::Div: sym = "/"; break;
        case BinOp::Pow: sym = "^"; break;
      }
      return "(" + expr_to_string(e->a, names) + sym + expr_to_string(e->b, names) + ")";
    }
  }
  throw std::logic_error("bad expr node");
}

nlohmann::json expr_to_json(const Expr& e) {
  switch (e->kind) {
    case ExprNode::Kind::Input:
      return nlohmann::json{{"input", e->slot}};
    case ExprNode::Kind::Const:
      return nlohmann::json{{"const", e->value}};
    case ExprNode::Kind::Unary:
      return nlohmann::json{{"op", unop_name(e->un)}, {"a", expr_to_json(e->a)}};
    case ExprNode::Kind::Binary:
      return nlohmann::json{
          {"op", binop_name(e->bin)}, {"a", expr_to_json(e->a)}, {"b", expr_to_json(e->b)}};
  }
  throw std::logic_error("bad expr node");
}

Expr expr_from_json(const nlohmann::json& j) {
  if (j.contains("input")) return make_input(j.at("input").get<int>());
  if (j.contains("const")) return make_const(j.at("const").get<double>());
  std::string op = j.at("op").get<std::string>();
  if (j.contains("b")) return make_binary(binop_from_name(op), expr_from_json(j.at("a")),
                                          expr_from_json(j.at("b")));
  return make_unary(unop_from_name(op), expr_from_json(j.at("a")));
}

void collect_constants(const Expr& e, std::vector<ExprNode*>& out) {
  if (!e) return;
  if (e->kind == ExprNode::Kind::Const) out.push_back(e.get());
  collect_constants(e->a, out);
  collect_constants(e->b, out);
}

}  // namespace netkan
