#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "odesr/expr.hpp"
#include "odesr/integrator.hpp"

namespace odesr {

using TokenSequence = std::vector<int>;

/// Fixed token table. Layout: PAD BOS EOS | + - 0..9999 E-100..E100
/// <operators> x0..x<max_variables-1>.
class Vocabulary {
 public:
  static constexpr int mantissa_count = 10000;
  static constexpr int min_exponent = -100;
  static constexpr int max_exponent = 100;
  static constexpr int numeric_token_count = 2 + mantissa_count + (max_exponent - min_exponent + 1);

  explicit Vocabulary(int max_variables = 6);

  int size() const noexcept { return static_cast<int>(tokens_.size()); }
  int max_variables() const noexcept { return max_variables_; }
  const std::string& token(int id) const { return tokens_.at(static_cast<std::size_t>(id)); }
  std::optional<int> find(std::string_view text) const;

  static constexpr int pad = 0;
  static constexpr int bos = 1;
  static constexpr int eos = 2;
  static constexpr int separator = 3;
  static constexpr int plus = 4;
  static constexpr int minus = 5;
  static constexpr int first_mantissa = 6;
  static constexpr int first_exponent = first_mantissa + mantissa_count;
  static constexpr int first_operator = first_exponent + (max_exponent - min_exponent + 1);

  static int mantissa_id(int m) noexcept { return first_mantissa + m; }
  static int exponent_id(int e) noexcept { return first_exponent + (e - min_exponent); }
  static bool is_sign(int id) noexcept { return id == plus || id == minus; }
  static bool is_mantissa(int id) noexcept { return id >= first_mantissa && id < first_exponent; }
  static bool is_exponent(int id) noexcept { return id >= first_exponent && id < first_operator; }
  static bool is_numeric(int id) noexcept { return id >= plus && id < first_operator; }

  int unary_id(UnaryOp op) const noexcept;
  int binary_id(BinaryOp op) const noexcept;
  int variable_id(int index) const;

  /// One token per line; line number is the index.
  std::string serialize() const;
  static Vocabulary deserialize(std::string_view text);
  std::uint64_t hash() const;

  friend bool operator==(const Vocabulary& a, const Vocabulary& b) { return a.tokens_ == b.tokens_; }

 private:
  int max_variables_;
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> index_;
};

struct FloatTriplet {
  bool negative = false;
  int mantissa = 0;
  int exponent = 0;
  friend bool operator==(const FloatTriplet&, const FloatTriplet&) = default;
};

/// Rounds half away from zero to 4 significant digits. Magnitudes outside
/// [1e-97, 9.999e103] saturate to the nearest boundary triplet. Throws
/// std::invalid_argument for non-finite input.
FloatTriplet encode_float(double v);
double decode_float(const FloatTriplet& t) noexcept;

TokenSequence encode_expression(const OdeSystem& sys, const Vocabulary& vocab);
/// Throws MalformedSequence for anything that is not BOS <prefix> (| <prefix>)* EOS
/// with at most vocab.max_variables() components.
OdeSystem decode_expression(std::span<const int> tokens, const Vocabulary& vocab);

/// N x (D+1) x 3 numeric tokens, flattened row-major; time first in each point.
struct TokenGrid {
  std::size_t points = 0;
  int dimension = 0;
  std::vector<int> tokens;

  std::size_t point_width() const noexcept { return static_cast<std::size_t>(dimension + 1) * 3; }
  const int* point(std::size_t i) const noexcept { return tokens.data() + i * point_width(); }
};

TokenGrid encode_trajectory(const Trajectory& traj, const Vocabulary& vocab);
Trajectory decode_trajectory(const TokenGrid& grid);

std::string tokens_to_text(std::span<const int> tokens, const Vocabulary& vocab);

}  // namespace odesr
