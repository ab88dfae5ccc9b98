#pragma once

#include <string>
#include <vector>

#include "odesr/expr.hpp"
#include "odesr/random.hpp"

namespace odesr {

struct GeneratorConfig {
  int max_dimension = 6;
  int max_binary = 5;
  int max_unary = 3;
  double c_min = 0.05;
  double c_max = 20.0;
  double p_add = 0.75;
  double p_mul = 0.25;
  std::vector<UnaryOp> unary_pool{UnaryOp::sin, UnaryOp::inv, UnaryOp::pow2};
  /// Unary insertion sites must have a subtree depth strictly below this
  /// (leaves have depth 1).
  int max_unary_subtree_depth = 6;

  /// Throws std::invalid_argument on inconsistent settings.
  void validate() const;
};

/// Full binary tree shape, nodes in preorder; leaves have left == right == -1.
struct Skeleton {
  struct Node {
    int left = -1;
    int right = -1;
  };
  std::vector<Node> nodes;

  int internal_count() const;
  /// Canonical bracket string: leaf "L", internal "(<left><right>)".
  std::string code() const;
};

/// What happened during one unary insertion, for auditing the depth rule.
struct UnaryInsertion {
  UnaryOp op;
  int subtree_depth;  // depth of the node the operator was inserted above
};

struct ComponentTrace {
  int binary_count = 0;
  int unary_count = 0;  // requested u
  std::vector<UnaryInsertion> insertions;
  int skipped_insertions = 0;
  std::vector<BinaryOp> binary_ops;
  std::vector<double> coefficients;  // every sampled constant, in sampling order
};

int sample_dimension(const GeneratorConfig& cfg, Rng& rng);

/// Uniform over the Catalan(b) shapes with b internal nodes.
Skeleton sample_binary_skeleton(int internal_nodes, Rng& rng);

Expression sample_component(const GeneratorConfig& cfg, int dimension, Rng& rng,
                            ComponentTrace* trace = nullptr);

OdeSystem sample_system(const GeneratorConfig& cfg, Rng& rng);

/// Upper bound on the complexity of any sampled component:
/// (2b+1) skeleton nodes + 5u for unaries with their affine wrap + 2(b+1)
/// for the top-level term coefficients.
std::size_t component_complexity_bound(const GeneratorConfig& cfg) noexcept;

/// Catalan number C(n) for n <= 30.
std::uint64_t catalan(int n) noexcept;

}  // namespace odesr
