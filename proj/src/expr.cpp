#include "odesr/expr.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>

namespace odesr {

struct Expression::Node {
  Kind kind;
  std::uint8_t op = 0;
  int index = 0;
  double value = 0.0;
  Expression a{nullptr};
  Expression b{nullptr};
};

namespace {

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

}  // namespace

std::string_view name(UnaryOp op) noexcept {
  switch (op) {
    case UnaryOp::sin: return "sin";
    case UnaryOp::cos: return "cos";
    case UnaryOp::tan: return "tan";
    case UnaryOp::cot: return "cot";
    case UnaryOp::exp: return "exp";
    case UnaryOp::log: return "log";
    case UnaryOp::sqrt: return "sqrt";
    case UnaryOp::abs: return "abs";
    case UnaryOp::inv: return "inv";
    case UnaryOp::pow2: return "pow2";
    case UnaryOp::pow3: return "pow3";
    case UnaryOp::neg: return "neg";
  }
  return "?";
}

std::string_view name(BinaryOp op) noexcept { return op == BinaryOp::add ? "add" : "mul"; }

double apply(UnaryOp op, double x) noexcept {
  switch (op) {
    case UnaryOp::sin: return std::sin(x);
    case UnaryOp::cos: return std::cos(x);
    case UnaryOp::tan: return std::tan(x);
    case UnaryOp::cot: return std::cos(x) / std::sin(x);
    case UnaryOp::exp: return std::exp(x);
    case UnaryOp::log: return std::log(x);  // -inf at 0, NaN below
    case UnaryOp::sqrt: return std::sqrt(x);
    case UnaryOp::abs: return std::fabs(x);
    case UnaryOp::inv: return 1.0 / x;
    case UnaryOp::pow2: return x * x;
    case UnaryOp::pow3: return x * x * x;
    case UnaryOp::neg: return -x;
  }
  return std::nan("");
}

double apply(BinaryOp op, double a, double b) noexcept { return op == BinaryOp::add ? a + b : a * b; }

Expression Expression::constant(double value) {
  if (!std::isfinite(value)) throw std::invalid_argument("expression constants must be finite");
  auto n = std::make_shared<Node>();
  n->kind = Kind::constant;
  n->value = value;
  return Expression(std::move(n));
}

Expression Expression::variable(int index) {
  if (index < 0) throw std::invalid_argument("variable index must be non-negative");
  auto n = std::make_shared<Node>();
  n->kind = Kind::variable;
  n->index = index;
  return Expression(std::move(n));
}

Expression Expression::unary(UnaryOp op, Expression child) {
  auto n = std::make_shared<Node>();
  n->kind = Kind::unary;
  n->op = static_cast<std::uint8_t>(op);
  n->a = std::move(child);
  return Expression(std::move(n));
}

Expression Expression::binary(BinaryOp op, Expression lhs, Expression rhs) {
  auto n = std::make_shared<Node>();
  n->kind = Kind::binary;
  n->op = static_cast<std::uint8_t>(op);
  n->a = std::move(lhs);
  n->b = std::move(rhs);
  return Expression(std::move(n));
}

Expression::Kind Expression::kind() const noexcept { return node_->kind; }
double Expression::value() const { return node_->value; }
int Expression::variable_index() const { return node_->index; }
UnaryOp Expression::unary_op() const { return static_cast<UnaryOp>(node_->op); }
BinaryOp Expression::binary_op() const { return static_cast<BinaryOp>(node_->op); }
const Expression& Expression::child() const { return node_->a; }
const Expression& Expression::lhs() const { return node_->a; }
const Expression& Expression::rhs() const { return node_->b; }

bool operator==(const Expression& x, const Expression& y) {
  if (x.node_ == y.node_) return true;
  if (x.kind() != y.kind()) return false;
  switch (x.kind()) {
    case Expression::Kind::constant: return x.value() == y.value();
    case Expression::Kind::variable: return x.variable_index() == y.variable_index();
    case Expression::Kind::unary: return x.unary_op() == y.unary_op() && x.child() == y.child();
    case Expression::Kind::binary:
      return x.binary_op() == y.binary_op() && x.lhs() == y.lhs() && x.rhs() == y.rhs();
  }
  return false;
}

Expression operator+(Expression a, Expression b) {
  return Expression::binary(BinaryOp::add, std::move(a), std::move(b));
}
Expression operator*(Expression a, Expression b) {
  return Expression::binary(BinaryOp::mul, std::move(a), std::move(b));
}

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string symbol_text(const Symbol& s) {
  return std::visit(Overloaded{
                        [](UnaryOp op) { return std::string(name(op)); },
                        [](BinaryOp op) { return std::string(name(op)); },
                        [](VariableSymbol v) { return "x" + std::to_string(v.index); },
                        [](ConstantSymbol c) { return format_double(c.value); },
                    },
                    s);
}

Symbol parse_symbol_text(std::string_view text) {
  for (UnaryOp op : all_unary_ops)
    if (text == name(op)) return op;
  for (BinaryOp op : all_binary_ops)
    if (text == name(op)) return op;
  if (text.size() >= 2 && text[0] == 'x') {
    int index = 0;
    auto [p, ec] = std::from_chars(text.data() + 1, text.data() + text.size(), index);
    if (ec == std::errc{} && p == text.data() + text.size() && index >= 0) return VariableSymbol{index};
  }
  double value = 0.0;
  const char* begin = text.data();
  if (!text.empty() && text[0] == '+') ++begin;
  auto [p, ec] = std::from_chars(begin, text.data() + text.size(), value);
  if (ec == std::errc{} && p == text.data() + text.size() && std::isfinite(value)) return ConstantSymbol{value};
  throw MalformedSequence("unknown symbol '" + std::string(text) + "'");
}

double evaluate(const Expression& e, std::span<const double> x) noexcept {
  switch (e.kind()) {
    case Expression::Kind::constant: return e.value();
    case Expression::Kind::variable: return x[static_cast<std::size_t>(e.variable_index())];
    case Expression::Kind::unary: return apply(e.unary_op(), evaluate(e.child(), x));
    case Expression::Kind::binary:
      return apply(e.binary_op(), evaluate(e.lhs(), x), evaluate(e.rhs(), x));
  }
  return std::nan("");
}

namespace {

void prefix_into(const Expression& e, std::vector<Symbol>& out) {
  switch (e.kind()) {
    case Expression::Kind::constant: out.emplace_back(ConstantSymbol{e.value()}); break;
    case Expression::Kind::variable: out.emplace_back(VariableSymbol{e.variable_index()}); break;
    case Expression::Kind::unary:
      out.emplace_back(e.unary_op());
      prefix_into(e.child(), out);
      break;
    case Expression::Kind::binary:
      out.emplace_back(e.binary_op());
      prefix_into(e.lhs(), out);
      prefix_into(e.rhs(), out);
      break;
  }
}

Expression parse_prefix_at(std::span<const Symbol> symbols, std::size_t& pos) {
  if (pos >= symbols.size()) throw MalformedSequence("prefix sequence is truncated");
  const Symbol& s = symbols[pos++];
  return std::visit(Overloaded{
                        [&](UnaryOp op) { return Expression::unary(op, parse_prefix_at(symbols, pos)); },
                        [&](BinaryOp op) {
                          Expression lhs = parse_prefix_at(symbols, pos);
                          Expression rhs = parse_prefix_at(symbols, pos);
                          return Expression::binary(op, std::move(lhs), std::move(rhs));
                        },
                        [](VariableSymbol v) {
                          if (v.index < 0) throw MalformedSequence("negative variable index");
                          return Expression::variable(v.index);
                        },
                        [](ConstantSymbol c) {
                          if (!std::isfinite(c.value)) throw MalformedSequence("non-finite constant");
                          return Expression::constant(c.value);
                        },
                    },
                    s);
}

}  // namespace

std::vector<Symbol> to_prefix(const Expression& e) {
  std::vector<Symbol> out;
  prefix_into(e, out);
  return out;
}

Expression parse_prefix(std::span<const Symbol> symbols) {
  std::size_t pos = 0;
  Expression e = parse_prefix_at(symbols, pos);
  if (pos != symbols.size()) throw MalformedSequence("trailing symbols after complete expression");
  return e;
}

std::size_t complexity(const Expression& e) noexcept {
  switch (e.kind()) {
    case Expression::Kind::constant:
    case Expression::Kind::variable: return 1;
    case Expression::Kind::unary: return 1 + complexity(e.child());
    case Expression::Kind::binary: return 1 + complexity(e.lhs()) + complexity(e.rhs());
  }
  return 0;
}

std::size_t depth(const Expression& e) noexcept {
  switch (e.kind()) {
    case Expression::Kind::constant:
    case Expression::Kind::variable: return 1;
    case Expression::Kind::unary: return 1 + depth(e.child());
    case Expression::Kind::binary: return 1 + std::max(depth(e.lhs()), depth(e.rhs()));
  }
  return 0;
}

int max_variable_index(const Expression& e) noexcept {
  switch (e.kind()) {
    case Expression::Kind::constant: return -1;
    case Expression::Kind::variable: return e.variable_index();
    case Expression::Kind::unary: return max_variable_index(e.child());
    case Expression::Kind::binary: return std::max(max_variable_index(e.lhs()), max_variable_index(e.rhs()));
  }
  return -1;
}

std::vector<double> constants(const Expression& e) {
  std::vector<double> out;
  for (const Symbol& s : to_prefix(e))
    if (auto c = std::get_if<ConstantSymbol>(&s)) out.push_back(c->value);
  return out;
}

std::size_t constant_count(const Expression& e) noexcept {
  switch (e.kind()) {
    case Expression::Kind::constant: return 1;
    case Expression::Kind::variable: return 0;
    case Expression::Kind::unary: return constant_count(e.child());
    case Expression::Kind::binary: return constant_count(e.lhs()) + constant_count(e.rhs());
  }
  return 0;
}

Expression replace_constants(const Expression& e, std::span<const double> values, std::size_t& cursor) {
  switch (e.kind()) {
    case Expression::Kind::constant:
      if (cursor >= values.size()) throw std::out_of_range("not enough constant values");
      return Expression::constant(values[cursor++]);
    case Expression::Kind::variable: return e;
    case Expression::Kind::unary: return Expression::unary(e.unary_op(), replace_constants(e.child(), values, cursor));
    case Expression::Kind::binary: {
      Expression lhs = replace_constants(e.lhs(), values, cursor);
      Expression rhs = replace_constants(e.rhs(), values, cursor);
      return Expression::binary(e.binary_op(), std::move(lhs), std::move(rhs));
    }
  }
  return e;
}

Expression substitute_variables(const Expression& e, std::span<const Expression> replacement) {
  switch (e.kind()) {
    case Expression::Kind::constant: return e;
    case Expression::Kind::variable: return replacement[static_cast<std::size_t>(e.variable_index())];
    case Expression::Kind::unary: return Expression::unary(e.unary_op(), substitute_variables(e.child(), replacement));
    case Expression::Kind::binary:
      return Expression::binary(e.binary_op(), substitute_variables(e.lhs(), replacement),
                                substitute_variables(e.rhs(), replacement));
  }
  return e;
}

OdeSystem::OdeSystem(std::vector<Expression> components) : components_(std::move(components)) {
  if (components_.empty()) throw std::invalid_argument("an ODE system needs at least one component");
  const int d = dimension();
  for (const Expression& c : components_)
    if (max_variable_index(c) >= d)
      throw std::invalid_argument("variable index exceeds system dimension " + std::to_string(d));
}

void OdeSystem::evaluate(std::span<const double> x, std::span<double> out) const noexcept {
  for (std::size_t i = 0; i < components_.size(); ++i) out[i] = odesr::evaluate(components_[i], x);
}

std::vector<double> OdeSystem::constants() const {
  std::vector<double> out;
  for (const Expression& c : components_) {
    auto v = odesr::constants(c);
    out.insert(out.end(), v.begin(), v.end());
  }
  return out;
}

OdeSystem OdeSystem::with_constants(std::span<const double> values) const {
  std::size_t cursor = 0;
  std::vector<Expression> out;
  out.reserve(components_.size());
  for (const Expression& c : components_) out.push_back(replace_constants(c, values, cursor));
  if (cursor != values.size()) throw std::invalid_argument("too many constant values");
  return OdeSystem(std::move(out));
}

std::size_t system_complexity(const OdeSystem& sys) noexcept {
  std::size_t total = 0;
  for (const Expression& c : sys.components()) total += complexity(c);
  return total;
}

std::string to_prefix_text(const OdeSystem& sys) {
  std::string out;
  for (std::size_t i = 0; i < sys.components().size(); ++i) {
    if (i) out += " | ";
    bool first = true;
    for (const Symbol& s : to_prefix(sys[i])) {
      if (!first) out += ' ';
      out += symbol_text(s);
      first = false;
    }
  }
  return out;
}

OdeSystem parse_prefix_text(std::string_view text) {
  std::vector<Expression> comps;
  std::vector<Symbol> symbols;
  auto close = [&] {
    if (symbols.empty()) throw MalformedSequence("empty component in prefix text");
    comps.push_back(parse_prefix(symbols));
    symbols.clear();
  };
  std::size_t i = 0;
  while (i < text.size()) {
    if (text[i] == ' ') {
      ++i;
      continue;
    }
    std::size_t j = text.find(' ', i);
    if (j == std::string_view::npos) j = text.size();
    const std::string_view word = text.substr(i, j - i);
    if (word == "|")
      close();
    else
      symbols.push_back(parse_symbol_text(word));
    i = j;
  }
  close();
  try {
    return OdeSystem(std::move(comps));
  } catch (const std::invalid_argument& e) {
    throw MalformedSequence(e.what());
  }
}

}  // namespace odesr
