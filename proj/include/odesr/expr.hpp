#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace odesr {

enum class UnaryOp : std::uint8_t { sin, cos, tan, cot, exp, log, sqrt, abs, inv, pow2, pow3, neg };
enum class BinaryOp : std::uint8_t { add, mul };

inline constexpr UnaryOp all_unary_ops[] = {UnaryOp::sin, UnaryOp::cos,  UnaryOp::tan,  UnaryOp::cot,
                                            UnaryOp::exp, UnaryOp::log,  UnaryOp::sqrt, UnaryOp::abs,
                                            UnaryOp::inv, UnaryOp::pow2, UnaryOp::pow3, UnaryOp::neg};
inline constexpr BinaryOp all_binary_ops[] = {BinaryOp::add, BinaryOp::mul};

std::string_view name(UnaryOp op) noexcept;
std::string_view name(BinaryOp op) noexcept;
double apply(UnaryOp op, double x) noexcept;
double apply(BinaryOp op, double a, double b) noexcept;

/// Raised by parsers for truncated, trailing, or unknown input. Callers that
/// decode model output treat it as an invalid prediction.
class MalformedSequence : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Immutable expression tree. Copies share structure; safe across threads.
class Expression {
 public:
  enum class Kind : std::uint8_t { constant, variable, unary, binary };

  static Expression constant(double value);
  static Expression variable(int index);
  static Expression unary(UnaryOp op, Expression child);
  static Expression binary(BinaryOp op, Expression lhs, Expression rhs);

  Kind kind() const noexcept;
  double value() const;           // constant
  int variable_index() const;     // variable
  UnaryOp unary_op() const;       // unary
  BinaryOp binary_op() const;     // binary
  const Expression& child() const;  // unary
  const Expression& lhs() const;    // binary
  const Expression& rhs() const;    // binary

  bool is_constant() const noexcept { return kind() == Kind::constant; }
  bool is_variable() const noexcept { return kind() == Kind::variable; }

  /// Structural equality; constants compare by value.
  friend bool operator==(const Expression& a, const Expression& b);

 private:
  struct Node;
  explicit Expression(std::shared_ptr<const Node> node) : node_(std::move(node)) {}
  std::shared_ptr<const Node> node_;
};

Expression operator+(Expression a, Expression b);
Expression operator*(Expression a, Expression b);

struct VariableSymbol {
  int index;
  friend bool operator==(const VariableSymbol&, const VariableSymbol&) = default;
};
struct ConstantSymbol {
  double value;
  friend bool operator==(const ConstantSymbol&, const ConstantSymbol&) = default;
};

/// One element of a prefix traversal. Constants carry their value; expansion
/// into numeric tokens happens in the tokenizer.
using Symbol = std::variant<UnaryOp, BinaryOp, VariableSymbol, ConstantSymbol>;

/// printf("%.17g"); round-trips every double.
std::string format_double(double v);

std::string symbol_text(const Symbol& s);
/// Inverse of symbol_text; throws MalformedSequence on unknown text.
Symbol parse_symbol_text(std::string_view text);

double evaluate(const Expression& e, std::span<const double> x) noexcept;
std::vector<Symbol> to_prefix(const Expression& e);
Expression parse_prefix(std::span<const Symbol> symbols);
std::size_t complexity(const Expression& e) noexcept;
std::size_t depth(const Expression& e) noexcept;
/// Largest variable index used, or -1 when there is none.
int max_variable_index(const Expression& e) noexcept;

/// Constants in preorder.
std::vector<double> constants(const Expression& e);
std::size_t constant_count(const Expression& e) noexcept;
/// Same tree with constants replaced in preorder from `values`, starting at
/// `cursor` (advanced past the consumed values).
Expression replace_constants(const Expression& e, std::span<const double> values, std::size_t& cursor);
/// Substitute every variable j with `replacement[j]`.
Expression substitute_variables(const Expression& e, std::span<const Expression> replacement);

/// Infix rendering with 17 significant digits; parse_infix(to_infix(e)) == e.
std::string to_infix(const Expression& e);

/// Infix parser. Accepts + - * / ^, parentheses, function calls by operator
/// name, variables x<i>, and parameter placeholders c<i> bound to `params`.
/// Integer powers expand to pow2/pow3/mul/inv; other powers become
/// exp(p * log(base)).
Expression parse_infix(std::string_view text, std::span<const double> params = {});

/// f: R^D -> R^D as D component expressions.
class OdeSystem {
 public:
  OdeSystem() = default;
  /// Throws std::invalid_argument when empty or a variable index is >= D.
  explicit OdeSystem(std::vector<Expression> components);

  int dimension() const noexcept { return static_cast<int>(components_.size()); }
  const std::vector<Expression>& components() const noexcept { return components_; }
  const Expression& operator[](std::size_t i) const { return components_[i]; }

  void evaluate(std::span<const double> x, std::span<double> out) const noexcept;
  std::vector<double> constants() const;
  OdeSystem with_constants(std::span<const double> values) const;

  friend bool operator==(const OdeSystem&, const OdeSystem&) = default;

 private:
  std::vector<Expression> components_;
};

std::size_t system_complexity(const OdeSystem& sys) noexcept;
/// Components joined by " | ".
std::string to_infix(const OdeSystem& sys);
OdeSystem parse_infix_system(std::string_view text, std::span<const double> params = {});

/// Prefix symbols separated by spaces, components by " | ".
std::string to_prefix_text(const OdeSystem& sys);
OdeSystem parse_prefix_text(std::string_view text);

}  // namespace odesr
