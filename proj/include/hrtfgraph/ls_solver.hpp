#pragma once

#include <Eigen/Core>

#include "hrtfgraph/spherical_graph.hpp"

namespace hrtfgraph {

struct LsProblem {
  DifferenceGraph graph;
  double lambda = 0.1;  // ignored when the graph has a delta vertex
};

struct LsSolution {
  Eigen::VectorXd node_values;
  Eigen::VectorXd residuals;  // (x[v] - x[u]) - gamma per edge
  double objective = 0.0;     // sum_e w_e r_e^2
  double relative_residual = 0.0;
};

/// Weighted least-squares fit of x[v] - x[u] ~ gamma.
///
/// Without a delta vertex the stacked system [L; 1^T] x = [b + lambda 1; 0]
/// is solved in the least-squares sense. lambda * 1 is orthogonal to the
/// range of the Laplacian L, so the solution is the minimum-norm (zero-mean)
/// weighted fit for every lambda. With a delta vertex, x[delta] = 0 and the
/// remaining block is SPD.
LsSolution solve_ls(const LsProblem& problem);

/// Gradient of sum_e w_e r_e^2 with respect to the node values.
Eigen::VectorXd ls_gradient(const DifferenceGraph& g, const Eigen::VectorXd& node_values);

}  // namespace hrtfgraph
