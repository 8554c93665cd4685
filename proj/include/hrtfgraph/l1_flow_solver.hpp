#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "hrtfgraph/spherical_graph.hpp"

namespace hrtfgraph {

/// Simplices: residuals constrained to cancel around every listed cycle,
/// values recovered by integration. Edgelist: values and residuals fitted
/// jointly. Both minimize sum_e w_e |K_e| with K_e = x[v] - x[u] - gamma_e.
enum class L1Formulation { Simplices, Edgelist };

struct L1Problem {
  DifferenceGraph graph;
  L1Formulation formulation = L1Formulation::Edgelist;
};

struct L1Solution {
  /// Integer vertex values. Gauge: the delta vertex is 0 when present,
  /// otherwise vertex 0 is 0.
  IntVector node_values;
  IntVector residuals;  // per edge
  double objective = 0.0;
};

/// Exact integer minimizer of the weighted L1 fit.
///
/// Edgelist runs a primal-dual successive-shortest-path min-cost
/// circulation; Simplices checks the cycle set and runs a network simplex on
/// the same circulation, then integrates gamma + K along a BFS tree.
/// Both are exact; ties between optima are broken deterministically but
/// differently.
L1Solution solve_l1(const L1Problem& problem);

/// sum_e w_e |K_e| accumulated in edge order.
double l1_objective(const DifferenceGraph& g, const IntVector& residuals);

/// Residuals x[v] - x[u] - gamma for integer values.
IntVector l1_residuals(const DifferenceGraph& g, const IntVector& node_values);

struct VerifyReport {
  bool ok = true;
  std::vector<std::string> reasons;
};

/// Re-checks every solution identity exactly and recomputes the objective.
VerifyReport verify_solution(const L1Problem& problem, const L1Solution& solution);

/// Rounds `value` to an integer gamma; throws NonIntegerGamma if it is
/// further than `tolerance` from one.
std::int64_t integer_gamma(double value, double tolerance = 1e-6);

namespace detail {

struct TensionEdge {
  Eigen::Index u;
  Eigen::Index v;
  std::int64_t gamma;
  double weight;
};

/// Integer potentials minimizing sum w |x[v] - x[u] - gamma|, any gauge.
std::vector<std::int64_t> solve_tension_primal_dual(Eigen::Index num_vertices,
                                                    const std::vector<TensionEdge>& edges);
std::vector<std::int64_t> solve_tension_network_simplex(Eigen::Index num_vertices,
                                                        const std::vector<TensionEdge>& edges);

}  // namespace detail

}  // namespace hrtfgraph
