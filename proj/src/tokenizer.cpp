#include "odesr/tokenizer.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <stdexcept>

namespace odesr {

Vocabulary::Vocabulary(int max_variables) : max_variables_(max_variables) {
  if (max_variables < 1) throw std::invalid_argument("vocabulary needs at least one variable");
  tokens_ = {"<PAD>", "<BOS>", "<EOS>", "|", "+", "-"};
  for (int m = 0; m < mantissa_count; ++m) tokens_.push_back(std::to_string(m));
  for (int e = min_exponent; e <= max_exponent; ++e) tokens_.push_back("E" + std::to_string(e));
  for (UnaryOp op : all_unary_ops) tokens_.emplace_back(name(op));
  for (BinaryOp op : all_binary_ops) tokens_.emplace_back(name(op));
  for (int j = 0; j < max_variables; ++j) tokens_.push_back("x" + std::to_string(j));
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    if (!index_.emplace(tokens_[i], static_cast<int>(i)).second)
      throw std::logic_error("duplicate vocabulary token " + tokens_[i]);
  }
}

std::optional<int> Vocabulary::find(std::string_view text) const {
  const auto it = index_.find(std::string(text));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

int Vocabulary::unary_id(UnaryOp op) const noexcept { return first_operator + static_cast<int>(op); }

int Vocabulary::binary_id(BinaryOp op) const noexcept {
  return first_operator + static_cast<int>(std::size(all_unary_ops)) + static_cast<int>(op);
}

int Vocabulary::variable_id(int index) const {
  if (index < 0 || index >= max_variables_) throw std::out_of_range("variable index outside vocabulary");
  return first_operator + static_cast<int>(std::size(all_unary_ops) + std::size(all_binary_ops)) + index;
}

std::string Vocabulary::serialize() const {
  std::string out;
  for (const std::string& t : tokens_) {
    out += t;
    out += '\n';
  }
  return out;
}

Vocabulary Vocabulary::deserialize(std::string_view text) {
  std::vector<std::string> lines;
  std::size_t start = 0;
  while (start < text.size()) {
    const std::size_t nl = text.find('\n', start);
    const std::size_t end = nl == std::string_view::npos ? text.size() : nl;
    lines.emplace_back(text.substr(start, end - start));
    start = end + 1;
  }
  int vars = 0;
  for (auto it = lines.rbegin(); it != lines.rend() && it->size() > 1 && (*it)[0] == 'x'; ++it) ++vars;
  Vocabulary v(vars > 0 ? vars : 1);
  if (v.tokens_ != lines) throw std::invalid_argument("vocabulary file does not match the token layout");
  return v;
}

std::uint64_t Vocabulary::hash() const { return fnv1a64(serialize()); }

FloatTriplet encode_float(double v) {
  if (!std::isfinite(v)) throw std::invalid_argument("cannot tokenize a non-finite value");
  FloatTriplet t;
  if (v == 0.0) return t;
  t.negative = std::signbit(v);
  const double mag = std::fabs(v);

  // Exact decimal digits of the binary value, then a manual half-away rounding.
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, mag, std::chars_format::scientific, 30);
  const std::string_view s(buf, static_cast<std::size_t>(res.ptr - buf));
  const std::size_t epos = s.find('e');
  int exp10 = 0;
  std::from_chars(s.data() + epos + 1 + (s[epos + 1] == '+'), s.data() + s.size(), exp10);
  int m = s[0] - '0';
  for (std::size_t i = 2; i < 5; ++i) m = m * 10 + (s[i] - '0');
  if (s[5] >= '5') ++m;
  if (m == 10000) {
    m = 1000;
    ++exp10;
  }
  int e = exp10 - 3;
  if (e > Vocabulary::max_exponent) {
    m = 9999;
    e = Vocabulary::max_exponent;
  } else if (e < Vocabulary::min_exponent) {
    m = 1000;
    e = Vocabulary::min_exponent;
  }
  t.mantissa = m;
  t.exponent = e;
  return t;
}

double decode_float(const FloatTriplet& t) noexcept {
  char buf[32];
  const int len = std::snprintf(buf, sizeof buf, "%de%d", t.mantissa, t.exponent);
  double v = 0.0;
  std::from_chars(buf, buf + len, v);
  return t.negative ? -v : v;
}

TokenSequence encode_expression(const OdeSystem& sys, const Vocabulary& vocab) {
  if (sys.dimension() > vocab.max_variables()) throw std::invalid_argument("system dimension exceeds vocabulary");
  TokenSequence out{Vocabulary::bos};
  for (int c = 0; c < sys.dimension(); ++c) {
    if (c) out.push_back(Vocabulary::separator);
    for (const Symbol& s : to_prefix(sys[static_cast<std::size_t>(c)])) {
      if (const auto* u = std::get_if<UnaryOp>(&s)) out.push_back(vocab.unary_id(*u));
      else if (const auto* b = std::get_if<BinaryOp>(&s)) out.push_back(vocab.binary_id(*b));
      else if (const auto* x = std::get_if<VariableSymbol>(&s)) out.push_back(vocab.variable_id(x->index));
      else {
        const FloatTriplet t = encode_float(std::get<ConstantSymbol>(s).value);
        out.push_back(t.negative ? Vocabulary::minus : Vocabulary::plus);
        out.push_back(Vocabulary::mantissa_id(t.mantissa));
        out.push_back(Vocabulary::exponent_id(t.exponent));
      }
    }
  }
  out.push_back(Vocabulary::eos);
  return out;
}

namespace {

Expression decode_component(std::span<const int> toks, const Vocabulary& vocab) {
  if (toks.empty()) throw MalformedSequence("empty component");
  const int var0 = vocab.variable_id(0);
  const int first_binary = vocab.binary_id(BinaryOp::add);
  std::vector<Symbol> symbols;
  for (std::size_t i = 0; i < toks.size(); ++i) {
    const int id = toks[i];
    if (Vocabulary::is_sign(id)) {
      if (i + 2 >= toks.size()) throw MalformedSequence("truncated numeric triplet");
      if (!Vocabulary::is_mantissa(toks[i + 1]) || !Vocabulary::is_exponent(toks[i + 2]))
        throw MalformedSequence("bad numeric triplet");
      const FloatTriplet t{id == Vocabulary::minus, toks[i + 1] - Vocabulary::first_mantissa,
                           toks[i + 2] - Vocabulary::first_exponent + Vocabulary::min_exponent};
      symbols.emplace_back(ConstantSymbol{decode_float(t)});
      i += 2;
    } else if (id >= Vocabulary::first_operator && id < first_binary) {
      symbols.emplace_back(static_cast<UnaryOp>(id - Vocabulary::first_operator));
    } else if (id >= first_binary && id < var0) {
      symbols.emplace_back(static_cast<BinaryOp>(id - first_binary));
    } else if (id >= var0 && id < vocab.size()) {
      symbols.emplace_back(VariableSymbol{id - var0});
    } else {
      throw MalformedSequence("unexpected token in expression");
    }
  }
  return parse_prefix(symbols);
}

}  // namespace

OdeSystem decode_expression(std::span<const int> tokens, const Vocabulary& vocab) {
  if (tokens.size() < 3 || tokens.front() != Vocabulary::bos || tokens.back() != Vocabulary::eos)
    throw MalformedSequence("expression must be BOS ... EOS with a body");
  const std::span<const int> body = tokens.subspan(1, tokens.size() - 2);
  std::vector<Expression> comps;
  std::size_t start = 0;
  for (std::size_t i = 0; i <= body.size(); ++i) {
    if (i == body.size() || body[i] == Vocabulary::separator) {
      comps.push_back(decode_component(body.subspan(start, i - start), vocab));
      start = i + 1;
    }
  }
  if (static_cast<int>(comps.size()) > vocab.max_variables()) throw MalformedSequence("too many components");
  try {
    return OdeSystem(std::move(comps));
  } catch (const std::invalid_argument& e) {
    throw MalformedSequence(e.what());
  }
}

TokenGrid encode_trajectory(const Trajectory& traj, const Vocabulary& vocab) {
  if (traj.dimension() > vocab.max_variables()) throw std::invalid_argument("trajectory dimension exceeds vocabulary");
  TokenGrid g;
  g.points = traj.size();
  g.dimension = traj.dimension();
  g.tokens.reserve(g.points * g.point_width());
  auto push = [&](double v) {
    const FloatTriplet t = encode_float(v);
    g.tokens.push_back(t.negative ? Vocabulary::minus : Vocabulary::plus);
    g.tokens.push_back(Vocabulary::mantissa_id(t.mantissa));
    g.tokens.push_back(Vocabulary::exponent_id(t.exponent));
  };
  for (std::size_t i = 0; i < g.points; ++i) {
    push(traj.times[i]);
    for (std::size_t j = 0; j < static_cast<std::size_t>(g.dimension); ++j) push(traj.states(i, j));
  }
  return g;
}

Trajectory decode_trajectory(const TokenGrid& grid) {
  Trajectory t;
  t.times.resize(grid.points);
  t.states.resize(grid.points, static_cast<std::size_t>(grid.dimension));
  auto read = [&](const int* p) {
    if (!Vocabulary::is_sign(p[0]) || !Vocabulary::is_mantissa(p[1]) || !Vocabulary::is_exponent(p[2]))
      throw MalformedSequence("bad numeric triplet in trajectory grid");
    return decode_float({p[0] == Vocabulary::minus, p[1] - Vocabulary::first_mantissa,
                         p[2] - Vocabulary::first_exponent + Vocabulary::min_exponent});
  };
  for (std::size_t i = 0; i < grid.points; ++i) {
    const int* p = grid.point(i);
    t.times[i] = read(p);
    for (int j = 0; j < grid.dimension; ++j) t.states(i, static_cast<std::size_t>(j)) = read(p + 3 * (j + 1));
  }
  return t;
}

std::string tokens_to_text(std::span<const int> tokens, const Vocabulary& vocab) {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) out += ' ';
    out += tokens[i] >= 0 && tokens[i] < vocab.size() ? vocab.token(tokens[i]) : "<?>";
  }
  return out;
}

}  // namespace odesr
