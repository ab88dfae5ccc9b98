#include "odesr/generator.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace odesr {

void GeneratorConfig::validate() const {
  if (max_dimension < 1) throw std::invalid_argument("max_dimension must be >= 1");
  if (max_binary < 1) throw std::invalid_argument("max_binary must be >= 1");
  if (max_unary < 0) throw std::invalid_argument("max_unary must be >= 0");
  if (!(c_min > 0.0 && c_min < c_max)) throw std::invalid_argument("need 0 < c_min < c_max");
  if (p_add < 0.0 || p_mul < 0.0 || std::fabs(p_add + p_mul - 1.0) > 1e-12)
    throw std::invalid_argument("p_add + p_mul must equal 1");
  if (max_unary > 0 && unary_pool.empty()) throw std::invalid_argument("unary_pool is empty");
  if (max_unary_subtree_depth < 2) throw std::invalid_argument("max_unary_subtree_depth must be >= 2");
}

std::uint64_t catalan(int n) noexcept {
  std::uint64_t c = 1;
  for (int i = 0; i < n; ++i) c = c * 2 * static_cast<std::uint64_t>(2 * i + 1) / static_cast<std::uint64_t>(i + 2);
  return c;
}

int Skeleton::internal_count() const {
  return static_cast<int>(std::count_if(nodes.begin(), nodes.end(), [](const Node& n) { return n.left >= 0; }));
}

namespace {

void code_into(const Skeleton& s, int i, std::string& out) {
  const auto& n = s.nodes[static_cast<std::size_t>(i)];
  if (n.left < 0) {
    out += 'L';
    return;
  }
  out += '(';
  code_into(s, n.left, out);
  code_into(s, n.right, out);
  out += ')';
}

int grow(Skeleton& s, int internal, Rng& rng) {
  const int index = static_cast<int>(s.nodes.size());
  s.nodes.emplace_back();
  if (internal == 0) return index;
  // P(left subtree has k internal nodes) = C(k) C(n-1-k) / C(n).
  auto r = static_cast<std::uint64_t>(rng.uniform_int(0, static_cast<std::int64_t>(catalan(internal)) - 1));
  int k = 0;
  for (;; ++k) {
    const std::uint64_t w = catalan(k) * catalan(internal - 1 - k);
    if (r < w) break;
    r -= w;
  }
  const int left = grow(s, k, rng);
  const int right = grow(s, internal - 1 - k, rng);
  s.nodes[static_cast<std::size_t>(index)].left = left;
  s.nodes[static_cast<std::size_t>(index)].right = right;
  return index;
}

// Mutable working tree for steps 2-6; converted to an Expression at the end.
struct WorkNode {
  enum class Type { leaf, binary, unary } type;
  BinaryOp bop = BinaryOp::add;
  UnaryOp uop = UnaryOp::sin;
  int variable = 0;
  int a = -1;
  int b = -1;
};

struct WorkTree {
  std::vector<WorkNode> nodes;
  int root = 0;

  int depth(int i) const {
    const WorkNode& n = nodes[static_cast<std::size_t>(i)];
    switch (n.type) {
      case WorkNode::Type::leaf: return 1;
      case WorkNode::Type::unary: return 1 + depth(n.a);
      case WorkNode::Type::binary: return 1 + std::max(depth(n.a), depth(n.b));
    }
    return 0;
  }

  void insert_above(int target, UnaryOp op) {
    const int fresh = static_cast<int>(nodes.size());
    nodes.push_back({WorkNode::Type::unary, BinaryOp::add, op, 0, target, -1});
    if (root == target) {
      root = fresh;
      return;
    }
    for (int i = 0; i < fresh; ++i) {
      WorkNode& n = nodes[static_cast<std::size_t>(i)];
      if (n.a == target) {
        n.a = fresh;
        return;
      }
      if (n.b == target) {
        n.b = fresh;
        return;
      }
    }
  }
};

double sample_coefficient(const GeneratorConfig& cfg, Rng& rng, ComponentTrace* trace) {
  const double magnitude = std::exp(rng.uniform(std::log(cfg.c_min), std::log(cfg.c_max)));
  const double value = rng.bernoulli(0.5) ? magnitude : -magnitude;
  if (trace) trace->coefficients.push_back(value);
  return value;
}

Expression build(const WorkTree& t, int i, const GeneratorConfig& cfg, Rng& rng, ComponentTrace* trace) {
  const WorkNode& n = t.nodes[static_cast<std::size_t>(i)];
  switch (n.type) {
    case WorkNode::Type::leaf: return Expression::variable(n.variable);
    case WorkNode::Type::binary: {
      Expression lhs = build(t, n.a, cfg, rng, trace);
      Expression rhs = build(t, n.b, cfg, rng, trace);
      return Expression::binary(n.bop, std::move(lhs), std::move(rhs));
    }
    case WorkNode::Type::unary: {
      Expression arg = build(t, n.a, cfg, rng, trace);
      const double scale = sample_coefficient(cfg, rng, trace);
      const double shift = sample_coefficient(cfg, rng, trace);
      Expression affine = Expression::constant(scale) * std::move(arg) + Expression::constant(shift);
      return Expression::unary(n.uop, std::move(affine));
    }
  }
  return Expression::constant(0.0);
}

// Top-level summands each receive a leading coefficient.
Expression build_terms(const WorkTree& t, int i, const GeneratorConfig& cfg, Rng& rng, ComponentTrace* trace) {
  const WorkNode& n = t.nodes[static_cast<std::size_t>(i)];
  if (n.type == WorkNode::Type::binary && n.bop == BinaryOp::add) {
    Expression lhs = build_terms(t, n.a, cfg, rng, trace);
    Expression rhs = build_terms(t, n.b, cfg, rng, trace);
    return std::move(lhs) + std::move(rhs);
  }
  const double coefficient = sample_coefficient(cfg, rng, trace);
  return Expression::constant(coefficient) * build(t, i, cfg, rng, trace);
}

}  // namespace

std::string Skeleton::code() const {
  std::string out;
  if (!nodes.empty()) code_into(*this, 0, out);
  return out;
}

int sample_dimension(const GeneratorConfig& cfg, Rng& rng) {
  return static_cast<int>(rng.uniform_int(1, cfg.max_dimension));
}

Skeleton sample_binary_skeleton(int internal_nodes, Rng& rng) {
  if (internal_nodes < 0 || internal_nodes > 30) throw std::invalid_argument("internal node count out of range");
  Skeleton s;
  s.nodes.reserve(static_cast<std::size_t>(2 * internal_nodes + 1));
  grow(s, internal_nodes, rng);
  return s;
}

Expression sample_component(const GeneratorConfig& cfg, int dimension, Rng& rng, ComponentTrace* trace) {
  if (dimension < 1 || dimension > cfg.max_dimension) throw std::invalid_argument("dimension out of range");

  const int b = static_cast<int>(rng.uniform_int(1, cfg.max_binary));
  const Skeleton shape = sample_binary_skeleton(b, rng);

  WorkTree tree;
  tree.nodes.reserve(shape.nodes.size() + static_cast<std::size_t>(cfg.max_unary));
  for (const Skeleton::Node& s : shape.nodes) {
    WorkNode n{};
    if (s.left >= 0) {
      n.type = WorkNode::Type::binary;
      n.bop = rng.uniform() < cfg.p_add ? BinaryOp::add : BinaryOp::mul;
      n.a = s.left;
      n.b = s.right;
      if (trace) trace->binary_ops.push_back(n.bop);
    } else {
      n.type = WorkNode::Type::leaf;
    }
    tree.nodes.push_back(n);
  }
  for (WorkNode& n : tree.nodes)
    if (n.type == WorkNode::Type::leaf) n.variable = static_cast<int>(rng.uniform_int(0, dimension - 1));

  const int u = cfg.max_unary > 0 ? static_cast<int>(rng.uniform_int(1, cfg.max_unary)) : 0;
  if (trace) {
    trace->binary_count = b;
    trace->unary_count = u;
  }
  std::vector<int> sites;
  for (int rep = 0; rep < u; ++rep) {
    sites.clear();
    std::vector<int> depths(tree.nodes.size());
    for (int i = 0; i < static_cast<int>(tree.nodes.size()); ++i) {
      depths[static_cast<std::size_t>(i)] = tree.depth(i);
      if (depths[static_cast<std::size_t>(i)] < cfg.max_unary_subtree_depth) sites.push_back(i);
    }
    if (sites.empty()) {
      if (trace) ++trace->skipped_insertions;
      continue;
    }
    const int site = sites[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(sites.size()) - 1))];
    const UnaryOp op = cfg.unary_pool[static_cast<std::size_t>(
        rng.uniform_int(0, static_cast<std::int64_t>(cfg.unary_pool.size()) - 1))];
    tree.insert_above(site, op);
    if (trace) trace->insertions.push_back({op, depths[static_cast<std::size_t>(site)]});
  }

  return build_terms(tree, tree.root, cfg, rng, trace);
}

OdeSystem sample_system(const GeneratorConfig& cfg, Rng& rng) {
  const int d = sample_dimension(cfg, rng);
  std::vector<Expression> comps;
  comps.reserve(static_cast<std::size_t>(d));
  for (int i = 0; i < d; ++i) comps.push_back(sample_component(cfg, d, rng));
  return OdeSystem(std::move(comps));
}

std::size_t component_complexity_bound(const GeneratorConfig& cfg) noexcept {
  const auto b = static_cast<std::size_t>(cfg.max_binary);
  const auto u = static_cast<std::size_t>(std::max(cfg.max_unary, 0));
  return (2 * b + 1) + 5 * u + 2 * (b + 1);
}

}  // namespace odesr
