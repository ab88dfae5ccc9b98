#include <cctype>
#include <charconv>
#include <cmath>
#include <optional>

#include "odesr/expr.hpp"

namespace odesr {

namespace {

// Binding strength of a rendered fragment; higher binds tighter.
enum Level : int { sum = 1, product = 2, negation = 3, power = 4, atom = 5 };

struct Rendered {
  std::string text;
  int level;
};

Rendered render(const Expression& e);

std::string wrap_if(const Rendered& r, bool wrap) { return wrap ? "(" + r.text + ")" : r.text; }

bool is_bare_number(const Expression& e) { return e.is_constant() && !std::signbit(e.value()); }

Rendered render(const Expression& e) {
  switch (e.kind()) {
    case Expression::Kind::constant:
      return {format_double(e.value()), std::signbit(e.value()) ? negation : atom};
    case Expression::Kind::variable: return {"x" + std::to_string(e.variable_index()), atom};
    case Expression::Kind::unary: {
      const UnaryOp op = e.unary_op();
      const Rendered arg = render(e.child());
      if (op == UnaryOp::pow2 || op == UnaryOp::pow3)
        return {wrap_if(arg, arg.level < atom) + (op == UnaryOp::pow2 ? "^2" : "^3"), power};
      if (op == UnaryOp::neg)
        // "-2" would read back as a negative literal, so plain numbers get parentheses.
        return {"-" + wrap_if(arg, arg.level < power || is_bare_number(e.child())), negation};
      return {std::string(name(op)) + "(" + arg.text + ")", atom};
    }
    case Expression::Kind::binary: {
      const Rendered lhs = render(e.lhs());
      const Expression& r = e.rhs();
      if (e.binary_op() == BinaryOp::add) {
        if (r.kind() == Expression::Kind::unary && r.unary_op() == UnaryOp::neg) {
          const Rendered sub = render(r.child());
          return {lhs.text + " - " + wrap_if(sub, sub.level < product), sum};
        }
        const Rendered rhs = render(r);
        return {lhs.text + " + " + wrap_if(rhs, rhs.level < product), sum};
      }
      const std::string left = wrap_if(lhs, lhs.level < product);
      if (r.kind() == Expression::Kind::unary && r.unary_op() == UnaryOp::inv) {
        const Rendered den = render(r.child());
        return {left + " / " + wrap_if(den, den.level < negation), product};
      }
      const Rendered rhs = render(r);
      return {left + " * " + wrap_if(rhs, rhs.level < negation), product};
    }
  }
  return {"?", atom};
}

enum class Tok { number, ident, plus, minus, star, slash, caret, lparen, rparen, end };

struct Token {
  Tok kind;
  std::string_view text;
  double number = 0.0;
};

std::vector<Token> lex(std::string_view s) {
  std::vector<Token> out;
  std::size_t i = 0;
  while (i < s.size()) {
    const char c = s[i];
    if (std::isspace(static_cast<unsigned char>(c))) {
      ++i;
      continue;
    }
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
      double v = 0.0;
      auto [p, ec] = std::from_chars(s.data() + i, s.data() + s.size(), v);
      if (ec != std::errc{}) throw MalformedSequence("bad number in '" + std::string(s) + "'");
      const std::size_t len = static_cast<std::size_t>(p - (s.data() + i));
      out.push_back({Tok::number, s.substr(i, len), v});
      i += len;
      continue;
    }
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
      std::size_t j = i;
      while (j < s.size() && (std::isalnum(static_cast<unsigned char>(s[j])) || s[j] == '_')) ++j;
      out.push_back({Tok::ident, s.substr(i, j - i)});
      i = j;
      continue;
    }
    Tok k;
    switch (c) {
      case '+': k = Tok::plus; break;
      case '-': k = Tok::minus; break;
      case '*': k = Tok::star; break;
      case '/': k = Tok::slash; break;
      case '^': k = Tok::caret; break;
      case '(': k = Tok::lparen; break;
      case ')': k = Tok::rparen; break;
      default: throw MalformedSequence("unexpected character '" + std::string(1, c) + "' in infix text");
    }
    out.push_back({k, s.substr(i, 1)});
    ++i;
  }
  out.push_back({Tok::end, {}});
  return out;
}

class InfixParser {
 public:
  InfixParser(std::string_view text, std::span<const double> params) : toks_(lex(text)), params_(params) {}

  Expression parse() {
    Expression e = expr();
    if (peek().kind != Tok::end) throw MalformedSequence("trailing input after expression");
    return e;
  }

 private:
  const Token& peek(std::size_t ahead = 0) const { return toks_[std::min(pos_ + ahead, toks_.size() - 1)]; }
  const Token& take() { return toks_[pos_ < toks_.size() - 1 ? pos_++ : pos_]; }
  void expect(Tok k, const char* what) {
    if (take().kind != k) throw MalformedSequence(std::string("expected ") + what);
  }

  Expression expr() {
    Expression acc = term();
    while (peek().kind == Tok::plus || peek().kind == Tok::minus) {
      const bool minus = take().kind == Tok::minus;
      Expression t = term();
      acc = Expression::binary(BinaryOp::add, std::move(acc),
                               minus ? Expression::unary(UnaryOp::neg, std::move(t)) : std::move(t));
    }
    return acc;
  }

  Expression term() {
    Expression acc = unary();
    while (peek().kind == Tok::star || peek().kind == Tok::slash) {
      const bool divide = take().kind == Tok::slash;
      Expression u = unary();
      acc = Expression::binary(BinaryOp::mul, std::move(acc),
                               divide ? Expression::unary(UnaryOp::inv, std::move(u)) : std::move(u));
    }
    return acc;
  }

  Expression unary() {
    if (peek().kind == Tok::minus) {
      take();
      if (peek().kind == Tok::number && peek(1).kind != Tok::caret) return Expression::constant(-take().number);
      return Expression::unary(UnaryOp::neg, unary());
    }
    return power();
  }

  Expression power() {
    Expression base = primary();
    if (peek().kind != Tok::caret) return base;
    take();
    bool negative = false;
    if (peek().kind == Tok::minus) {
      take();
      negative = true;
    }
    if (peek().kind == Tok::number) {
      const double p = take().number;
      if (std::floor(p) == p && std::fabs(p) <= 64) return integer_power(base, negative ? -p : p);
      return general_power(base, Expression::constant(negative ? -p : p));
    }
    Expression exponent = primary();
    if (negative) exponent = Expression::unary(UnaryOp::neg, std::move(exponent));
    return general_power(base, std::move(exponent));
  }

  static Expression integer_power(const Expression& base, double p) {
    if (p < 0) return Expression::unary(UnaryOp::inv, integer_power(base, -p));
    const long n = static_cast<long>(p);
    if (n == 0) return Expression::constant(1.0);
    if (n == 1) return base;
    if (n == 2) return Expression::unary(UnaryOp::pow2, base);
    if (n == 3) return Expression::unary(UnaryOp::pow3, base);
    if (n % 2 == 0) return Expression::unary(UnaryOp::pow2, integer_power(base, static_cast<double>(n / 2)));
    return Expression::binary(BinaryOp::mul, integer_power(base, static_cast<double>(n - 1)), base);
  }

  static Expression general_power(const Expression& base, Expression exponent) {
    return Expression::unary(
        UnaryOp::exp,
        Expression::binary(BinaryOp::mul, std::move(exponent), Expression::unary(UnaryOp::log, base)));
  }

  Expression primary() {
    const Token t = take();
    switch (t.kind) {
      case Tok::number: return Expression::constant(t.number);
      case Tok::lparen: {
        Expression e = expr();
        expect(Tok::rparen, "')'");
        return e;
      }
      case Tok::ident: return identifier(t.text);
      default: throw MalformedSequence("unexpected token '" + std::string(t.text) + "'");
    }
  }

  Expression identifier(std::string_view id) {
    if (id.size() >= 2 && (id[0] == 'x' || id[0] == 'c')) {
      int index = -1;
      auto [p, ec] = std::from_chars(id.data() + 1, id.data() + id.size(), index);
      if (ec == std::errc{} && p == id.data() + id.size()) {
        if (id[0] == 'x') return Expression::variable(index);
        if (index < 0 || static_cast<std::size_t>(index) >= params_.size())
          throw MalformedSequence("unbound parameter '" + std::string(id) + "'");
        return Expression::constant(params_[static_cast<std::size_t>(index)]);
      }
    }
    for (UnaryOp op : all_unary_ops) {
      if (id == name(op)) {
        expect(Tok::lparen, "'(' after function name");
        Expression arg = expr();
        expect(Tok::rparen, "')'");
        return Expression::unary(op, std::move(arg));
      }
    }
    throw MalformedSequence("unknown identifier '" + std::string(id) + "'");
  }

  std::vector<Token> toks_;
  std::span<const double> params_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string to_infix(const Expression& e) { return render(e).text; }

Expression parse_infix(std::string_view text, std::span<const double> params) {
  return InfixParser(text, params).parse();
}

std::string to_infix(const OdeSystem& sys) {
  std::string out;
  for (std::size_t i = 0; i < sys.components().size(); ++i) {
    if (i) out += " | ";
    out += to_infix(sys[i]);
  }
  return out;
}

OdeSystem parse_infix_system(std::string_view text, std::span<const double> params) {
  std::vector<Expression> comps;
  std::size_t start = 0;
  while (true) {
    const std::size_t bar = text.find('|', start);
    comps.push_back(parse_infix(text.substr(start, bar == std::string_view::npos ? bar : bar - start), params));
    if (bar == std::string_view::npos) break;
    start = bar + 1;
  }
  return OdeSystem(std::move(comps));
}

}  // namespace odesr
