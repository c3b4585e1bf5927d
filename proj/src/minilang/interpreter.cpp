// Copyright 2026 The peftbench Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <limits>
#include <optional>
#include <sstream>
#include <unordered_map>

#include "peftbench/minilang.hpp"

namespace peftbench::minilang {

std::string_view to_string(ExecStatus s) {
  switch (s) {
    case ExecStatus::value: return "value";
    case ExecStatus::runtime_error: return "runtime-error";
    case ExecStatus::step_budget_exceeded: return "step-budget-exceeded";
    case ExecStatus::parse_error: return "parse-error";
  }
  return "?";
}

namespace {

bool is_number(const Value& v) {
  return std::holds_alternative<std::int64_t>(v.v) || std::holds_alternative<double>(v.v);
}

double as_double(const Value& v) {
  if (auto* i = std::get_if<std::int64_t>(&v.v)) return static_cast<double>(*i);
  return std::get<double>(v.v);
}

std::string type_name(const Value& v) {
  switch (v.v.index()) {
    case 0: return "unit";
    case 1: return "int";
    case 2: return "float";
    case 3: return "bool";
    case 4: return "string";
    default: return "list";
  }
}

bool equal_impl(const Value& a, const Value& b, double rel_tol) {
  if (is_number(a) && is_number(b)) {
    if (std::holds_alternative<std::int64_t>(a.v) && std::holds_alternative<std::int64_t>(b.v)) {
      return std::get<std::int64_t>(a.v) == std::get<std::int64_t>(b.v);
    }
    const double x = as_double(a);
    const double y = as_double(b);
    if (rel_tol == 0.0) return x == y;
    return std::abs(x - y) <= rel_tol * std::max(1.0, std::abs(y));
  }
  if (a.v.index() != b.v.index()) return false;
  switch (a.v.index()) {
    case 0: return true;
    case 3: return std::get<bool>(a.v) == std::get<bool>(b.v);
    case 4: return std::get<std::string>(a.v) == std::get<std::string>(b.v);
    case 5: {
      const List& x = *std::get<ListPtr>(a.v);
      const List& y = *std::get<ListPtr>(b.v);
      if (x.size() != y.size()) return false;
      for (std::size_t i = 0; i < x.size(); ++i)
        if (!equal_impl(x[i], y[i], rel_tol)) return false;
      return true;
    }
  }
  return false;
}

}  // namespace

bool values_equal(const Value& a, const Value& b) { return equal_impl(a, b, 0.0); }
bool values_match(const Value& actual, const Value& expected) {
  return equal_impl(actual, expected, 1e-9);
}

std::string to_display(const Value& v) {
  switch (v.v.index()) {
    case 0: return "unit";
    case 1: return std::to_string(std::get<std::int64_t>(v.v));
    case 2: {
      std::ostringstream os;
      os.precision(17);
      os << std::get<double>(v.v);
      return os.str();
    }
    case 3: return std::get<bool>(v.v) ? "true" : "false";
    case 4: return std::get<std::string>(v.v);
    default: {
      std::string s = "[";
      const List& items = *std::get<ListPtr>(v.v);
      for (std::size_t i = 0; i < items.size(); ++i) {
        if (i) s += ", ";
        s += to_display(items[i]);
      }
      return s + "]";
    }
  }
}

Value value_from_json(const nlohmann::json& j) {
  if (j.is_boolean()) return Value(j.get<bool>());
  if (j.is_number_integer()) return Value(j.get<std::int64_t>());
  if (j.is_number_float()) return Value(j.get<double>());
  if (j.is_string()) return Value(j.get<std::string>());
  if (j.is_array()) {
    List items;
    for (const auto& e : j) items.push_back(value_from_json(e));
    return Value(std::move(items));
  }
  if (j.is_null()) return Value();
  throw DataError("unsupported JSON value for a mini-language argument: " + j.dump());
}

nlohmann::json value_to_json(const Value& v) {
  switch (v.v.index()) {
    case 0: return nullptr;
    case 1: return std::get<std::int64_t>(v.v);
    case 2: return std::get<double>(v.v);
    case 3: return std::get<bool>(v.v);
    case 4: return std::get<std::string>(v.v);
    default: {
      nlohmann::json arr = nlohmann::json::array();
      for (const Value& e : *std::get<ListPtr>(v.v)) arr.push_back(value_to_json(e));
      return arr;
    }
  }
}

namespace {

struct BudgetExceeded {};
struct RuntimeFault {
  std::string message;
};

using Env = std::unordered_map<std::string, Value>;

class Interpreter {
 public:
  Interpreter(const Program& program, std::uint64_t budget) : program_(program), budget_(budget) {}

  std::uint64_t steps() const { return steps_; }
  std::string output;

  Value call(const Node& fn, std::vector<Value> args) {
    if (args.size() != fn.params.size()) {
      fault("function '" + fn.name + "' expects " + std::to_string(fn.params.size()) +
            " arguments, got " + std::to_string(args.size()));
    }
    if (depth_ >= kMaxCallDepth) fault("call depth limit exceeded");
    ++depth_;
    Env env;
    for (std::size_t i = 0; i < args.size(); ++i) env[fn.params[i]] = std::move(args[i]);
    std::optional<Value> ret = block(fn.child(0), env);
    --depth_;
    return ret ? std::move(*ret) : Value();
  }

 private:
  const Program& program_;
  std::uint64_t budget_;
  std::uint64_t steps_ = 0;
  std::size_t depth_ = 0;

  [[noreturn]] static void fault(std::string msg) { throw RuntimeFault{std::move(msg)}; }

  void tick() {
    if (steps_ >= budget_) throw BudgetExceeded{};
    ++steps_;
  }

  std::optional<Value> block(const Node& b, Env& env) {
    tick();
    for (const auto& s : b.children) {
      if (auto r = statement(*s, env)) return r;
    }
    return std::nullopt;
  }

  bool condition(const Node& n, Env& env) {
    Value c = eval(n, env);
    if (auto* b = std::get_if<bool>(&c.v)) return *b;
    fault("condition must be bool, got " + type_name(c));
  }

  std::optional<Value> statement(const Node& s, Env& env) {
    tick();
    switch (s.kind) {
      case NodeKind::Let:
        env[s.name] = eval(s.child(0), env);
        return std::nullopt;
      case NodeKind::Assign: {
        auto it = env.find(s.name);
        if (it == env.end()) fault("assignment to undefined variable '" + s.name + "'");
        it->second = eval(s.child(0), env);
        return std::nullopt;
      }
      case NodeKind::Return:
        return eval(s.child(0), env);
      case NodeKind::ExprStmt:
        eval(s.child(0), env);
        return std::nullopt;
      case NodeKind::If:
        if (condition(s.child(0), env)) return block(s.child(1), env);
        if (s.children.size() > 2) {
          const Node& alt = s.child(2);
          return alt.kind == NodeKind::If ? statement(alt, env) : block(alt, env);
        }
        return std::nullopt;
      case NodeKind::While:
        while (condition(s.child(0), env)) {
          if (auto r = block(s.child(1), env)) return r;
        }
        return std::nullopt;
      default:
        fault("unexpected statement");
    }
  }

  template <typename Op>
  static std::int64_t checked(Op op, std::int64_t x, std::int64_t y) {
    std::int64_t r = 0;
    if (op(x, y, &r)) fault("integer overflow");
    return r;
  }

  Value arith(const std::string& op, const Value& a, const Value& b) {
    if (op == "+") {
      if (auto* x = std::get_if<std::string>(&a.v)) {
        if (auto* y = std::get_if<std::string>(&b.v)) return Value(*x + *y);
      }
      if (auto* x = std::get_if<ListPtr>(&a.v)) {
        if (auto* y = std::get_if<ListPtr>(&b.v)) {
          List joined = **x;
          joined.insert(joined.end(), (*y)->begin(), (*y)->end());
          return Value(std::move(joined));
        }
      }
    }
    if (!is_number(a) || !is_number(b)) {
      fault("operator " + op + " not defined for " + type_name(a) + " and " + type_name(b));
    }
    const bool ints =
        std::holds_alternative<std::int64_t>(a.v) && std::holds_alternative<std::int64_t>(b.v);
    if (ints) {
      const std::int64_t x = std::get<std::int64_t>(a.v);
      const std::int64_t y = std::get<std::int64_t>(b.v);
      using I = std::int64_t;
      if (op == "+")
        return Value(checked([](I p, I q, I* r) { return __builtin_add_overflow(p, q, r); }, x, y));
      if (op == "-")
        return Value(checked([](I p, I q, I* r) { return __builtin_sub_overflow(p, q, r); }, x, y));
      if (op == "*")
        return Value(checked([](I p, I q, I* r) { return __builtin_mul_overflow(p, q, r); }, x, y));
      if (y == 0) fault(op == "/" ? "division by zero" : "modulo by zero");
      if (x == std::numeric_limits<std::int64_t>::min() && y == -1) fault("integer overflow");
      return Value(op == "/" ? x / y : x % y);
    }
    const double x = as_double(a);
    const double y = as_double(b);
    double r = 0.0;
    if (op == "+") r = x + y;
    else if (op == "-") r = x - y;
    else if (op == "*") r = x * y;
    else {
      if (y == 0.0) fault(op == "/" ? "division by zero" : "modulo by zero");
      r = op == "/" ? x / y : std::fmod(x, y);
    }
    if (!std::isfinite(r)) fault("float result is not finite");
    return Value(r);
  }

  Value compare(const std::string& op, const Value& a, const Value& b) {
    if (op == "==") return Value(values_equal(a, b));
    if (op == "!=") return Value(!values_equal(a, b));
    int c = 0;
    if (is_number(a) && is_number(b)) {
      if (std::holds_alternative<std::int64_t>(a.v) && std::holds_alternative<std::int64_t>(b.v)) {
        const auto x = std::get<std::int64_t>(a.v);
        const auto y = std::get<std::int64_t>(b.v);
        c = x < y ? -1 : (x > y ? 1 : 0);
      } else {
        const double x = as_double(a);
        const double y = as_double(b);
        c = x < y ? -1 : (x > y ? 1 : 0);
      }
    } else if (std::holds_alternative<std::string>(a.v) &&
               std::holds_alternative<std::string>(b.v)) {
      c = std::get<std::string>(a.v).compare(std::get<std::string>(b.v));
      c = c < 0 ? -1 : (c > 0 ? 1 : 0);
    } else {
      fault("cannot order " + type_name(a) + " and " + type_name(b));
    }
    if (op == "<") return Value(c < 0);
    if (op == "<=") return Value(c <= 0);
    if (op == ">") return Value(c > 0);
    return Value(c >= 0);
  }

  bool as_bool(const Value& v, const std::string& op) {
    if (auto* b = std::get_if<bool>(&v.v)) return *b;
    fault("operator " + op + " expects bool, got " + type_name(v));
  }

  Value eval(const Node& n, Env& env) {
    tick();
    switch (n.kind) {
      case NodeKind::Literal:
        switch (n.literal) {
          case LiteralType::Int: return Value(static_cast<std::int64_t>(std::stoll(n.name)));
          case LiteralType::Float: return Value(std::stod(n.name));
          case LiteralType::String: return Value(n.name);
          case LiteralType::Bool: return Value(n.name == "true");
        }
        break;
      case NodeKind::Var: {
        auto it = env.find(n.name);
        if (it == env.end()) fault("undefined variable '" + n.name + "'");
        return it->second;
      }
      case NodeKind::List: {
        List items;
        for (const auto& c : n.children) items.push_back(eval(*c, env));
        return Value(std::move(items));
      }
      case NodeKind::Index: {
        const Value target = eval(n.child(0), env);
        const Value idx = eval(n.child(1), env);
        auto* i = std::get_if<std::int64_t>(&idx.v);
        if (!i) fault("index must be int, got " + type_name(idx));
        if (auto* l = std::get_if<ListPtr>(&target.v)) {
          if (*i < 0 || static_cast<std::size_t>(*i) >= (*l)->size()) fault("index out of range");
          return (**l)[static_cast<std::size_t>(*i)];
        }
        if (auto* s = std::get_if<std::string>(&target.v)) {
          if (*i < 0 || static_cast<std::size_t>(*i) >= s->size()) fault("index out of range");
          return Value(std::string(1, (*s)[static_cast<std::size_t>(*i)]));
        }
        fault("cannot index " + type_name(target));
      }
      case NodeKind::UnOp: {
        const Value v = eval(n.child(0), env);
        if (n.name == "!") return Value(!as_bool(v, "!"));
        if (auto* i = std::get_if<std::int64_t>(&v.v)) {
          if (*i == std::numeric_limits<std::int64_t>::min()) fault("integer overflow");
          return Value(-*i);
        }
        if (auto* d = std::get_if<double>(&v.v)) return Value(-*d);
        fault("unary - not defined for " + type_name(v));
      }
      case NodeKind::BinOp: {
        const std::string& op = n.name;
        if (op == "&&" || op == "||") {
          const bool lhs = as_bool(eval(n.child(0), env), op);
          if (op == "&&" && !lhs) return Value(false);
          if (op == "||" && lhs) return Value(true);
          return Value(as_bool(eval(n.child(1), env), op));
        }
        const Value a = eval(n.child(0), env);
        const Value b = eval(n.child(1), env);
        if (op == "+" || op == "-" || op == "*" || op == "/" || op == "%") return arith(op, a, b);
        return compare(op, a, b);
      }
      case NodeKind::Call: {
        std::vector<Value> args;
        for (const auto& c : n.children) args.push_back(eval(*c, env));
        if (n.name == "len") {
          if (args.size() != 1) fault("len expects 1 argument");
          if (auto* s = std::get_if<std::string>(&args[0].v))
            return Value(static_cast<std::int64_t>(s->size()));
          if (auto* l = std::get_if<ListPtr>(&args[0].v))
            return Value(static_cast<std::int64_t>((*l)->size()));
          fault("len not defined for " + type_name(args[0]));
        }
        if (n.name == "print") {
          for (std::size_t i = 0; i < args.size(); ++i) {
            if (i) output += ' ';
            output += to_display(args[i]);
          }
          output += '\n';
          return Value();
        }
        const Node* fn = program_.find_function(n.name);
        if (!fn) fault("undefined function '" + n.name + "'");
        return call(*fn, std::move(args));
      }
      default:
        break;
    }
    fault("unexpected expression");
  }
};

}  // namespace

ExecOutcome execute(const Program& program, std::string_view entry_point,
                    const std::vector<Value>& args, std::uint64_t step_budget) {
  ExecOutcome out;
  Interpreter in(program, step_budget);
  const Node* fn = program.find_function(entry_point);
  if (!fn) {
    out.status = ExecStatus::runtime_error;
    out.message = "entry point '" + std::string(entry_point) + "' not found";
    return out;
  }
  try {
    out.value = in.call(*fn, args);
    out.status = ExecStatus::value;
  } catch (const BudgetExceeded&) {
    out.status = ExecStatus::step_budget_exceeded;
    out.message = "step budget of " + std::to_string(step_budget) + " exhausted";
  } catch (const RuntimeFault& f) {
    out.status = ExecStatus::runtime_error;
    out.message = f.message;
  }
  out.steps_used = in.steps();
  out.output = std::move(in.output);
  return out;
}

ExecOutcome run_source(std::string_view source, std::string_view entry_point,
                       const std::vector<Value>& args, std::uint64_t step_budget) {
  try {
    const Program program = parse_source(source);
    return execute(program, entry_point, args, step_budget);
  } catch (const ParseError& e) {
    ExecOutcome out;
    out.status = ExecStatus::parse_error;
    out.message = e.what();
    return out;
  }
}

}  // namespace peftbench::minilang
