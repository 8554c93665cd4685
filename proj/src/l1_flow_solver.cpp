#include "hrtfgraph/l1_flow_solver.hpp"

#include <cmath>
#include <sstream>

#include "hrtfgraph/error.hpp"

namespace hrtfgraph {

namespace {

using Eigen::Index;

Index gauge_vertex(const DifferenceGraph& g) { return g.delta_vertex.value_or(0); }

std::vector<detail::TensionEdge> tension_edges(const DifferenceGraph& g) {
  std::vector<detail::TensionEdge> out;
  out.reserve(g.edges.size());
  for (const auto& e : g.edges) out.push_back({e.u, e.v, e.gamma, e.weight});
  return out;
}

// Integrates gamma + K along a BFS tree from the gauge vertex.
IntVector integrate_corrected(const DifferenceGraph& g, const IntVector& residuals) {
  const auto n = static_cast<std::size_t>(g.num_vertices);
  std::vector<std::vector<Index>> incident(n);
  for (Index e = 0; e < g.num_edges(); ++e) {
    incident[static_cast<std::size_t>(g.edges[static_cast<std::size_t>(e)].u)].push_back(e);
    incident[static_cast<std::size_t>(g.edges[static_cast<std::size_t>(e)].v)].push_back(e);
  }
  IntVector x = IntVector::Zero(g.num_vertices);
  std::vector<char> seen(n, 0);
  const Index root = gauge_vertex(g);
  std::vector<Index> queue{root};
  seen[static_cast<std::size_t>(root)] = 1;
  for (std::size_t k = 0; k < queue.size(); ++k) {
    const Index a = queue[k];
    for (Index e : incident[static_cast<std::size_t>(a)]) {
      const auto& edge = g.edges[static_cast<std::size_t>(e)];
      const std::int64_t corrected = edge.gamma + residuals(e);
      const Index b = edge.u == a ? edge.v : edge.u;
      if (seen[static_cast<std::size_t>(b)]) continue;
      seen[static_cast<std::size_t>(b)] = 1;
      x(b) = edge.u == a ? x(a) + corrected : x(a) - corrected;
      queue.push_back(b);
    }
  }
  return x;
}

std::int64_t cycle_sum(const Cycle& c, const IntVector& per_edge) {
  std::int64_t s = 0;
  for (const auto& step : c) s += step.sign * per_edge(step.edge);
  return s;
}

std::int64_t cycle_gamma(const DifferenceGraph& g, const Cycle& c) {
  std::int64_t s = 0;
  for (const auto& step : c) s += step.sign * g.edges[static_cast<std::size_t>(step.edge)].gamma;
  return s;
}

}  // namespace

std::int64_t integer_gamma(double value, double tolerance) {
  const double r = std::round(value);
  if (!std::isfinite(value) || std::abs(value - r) > tolerance) {
    std::ostringstream msg;
    msg << "gamma " << value << " is not an integer";
    throw Error(ErrorCode::NonIntegerGamma, msg.str());
  }
  return static_cast<std::int64_t>(r);
}

double l1_objective(const DifferenceGraph& g, const IntVector& residuals) {
  double total = 0.0;
  for (Index e = 0; e < g.num_edges(); ++e) {
    total += g.edges[static_cast<std::size_t>(e)].weight * static_cast<double>(std::abs(residuals(e)));
  }
  return total;
}

IntVector l1_residuals(const DifferenceGraph& g, const IntVector& node_values) {
  IntVector k(g.num_edges());
  for (Index e = 0; e < g.num_edges(); ++e) {
    const auto& edge = g.edges[static_cast<std::size_t>(e)];
    k(e) = node_values(edge.v) - node_values(edge.u) - edge.gamma;
  }
  return k;
}

L1Solution solve_l1(const L1Problem& problem) {
  const DifferenceGraph& g = problem.graph;
  g.validate();
  const auto edges = tension_edges(g);
  L1Solution sol;
  if (problem.formulation == L1Formulation::Simplices) {
    const bool acyclic = g.num_edges() == g.num_vertices - 1;
    if (!acyclic && (!g.has_cycles() || !g.cycles_cover_edges())) {
      throw Error(ErrorCode::MissingCycles, "cycle set does not cover every edge");
    }
    if (!acyclic && !cycles_span_cycle_space(g)) {
      throw Error(ErrorCode::MissingCycles, "cycle set does not span the cycle space");
    }
    const auto pot = detail::solve_tension_network_simplex(g.num_vertices, edges);
    IntVector x(g.num_vertices);
    for (Index i = 0; i < g.num_vertices; ++i) x(i) = pot[static_cast<std::size_t>(i)];
    sol.residuals = l1_residuals(g, x);
    for (const auto& c : g.cycles) {
      if (cycle_sum(c, sol.residuals) != -cycle_gamma(g, c)) {
        throw Error(ErrorCode::SolverFailure, "residuals violate a cycle constraint");
      }
    }
    sol.node_values = integrate_corrected(g, sol.residuals);
  } else {
    const auto pot = detail::solve_tension_primal_dual(g.num_vertices, edges);
    sol.node_values.resize(g.num_vertices);
    const std::int64_t shift = pot[static_cast<std::size_t>(gauge_vertex(g))];
    for (Index i = 0; i < g.num_vertices; ++i) sol.node_values(i) = pot[static_cast<std::size_t>(i)] - shift;
  }
  sol.residuals = l1_residuals(g, sol.node_values);
  sol.objective = l1_objective(g, sol.residuals);
  return sol;
}

VerifyReport verify_solution(const L1Problem& problem, const L1Solution& solution) {
  const DifferenceGraph& g = problem.graph;
  VerifyReport report;
  auto fail = [&](std::string why) {
    report.ok = false;
    report.reasons.push_back(std::move(why));
  };
  if (solution.node_values.size() != g.num_vertices || solution.residuals.size() != g.num_edges()) {
    fail("shape mismatch");
    return report;
  }
  for (Index e = 0; e < g.num_edges(); ++e) {
    const auto& edge = g.edges[static_cast<std::size_t>(e)];
    if (edge.gamma + solution.residuals(e) != solution.node_values(edge.v) - solution.node_values(edge.u)) {
      fail("edge " + std::to_string(e) + " identity broken");
    }
  }
  for (std::size_t c = 0; c < g.cycles.size(); ++c) {
    if (cycle_sum(g.cycles[c], solution.residuals) != -cycle_gamma(g, g.cycles[c])) {
      fail("cycle " + std::to_string(c) + " does not cancel");
    }
  }
  if (g.delta_vertex && solution.node_values(*g.delta_vertex) != 0) fail("delta vertex is not 0");
  if (l1_objective(g, solution.residuals) != solution.objective) fail("objective mismatch");
  return report;
}

}  // namespace hrtfgraph
