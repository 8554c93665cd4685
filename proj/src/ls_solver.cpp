#include "hrtfgraph/ls_solver.hpp"

#include <vector>

#include <Eigen/SparseCholesky>
#include <Eigen/SparseCore>

#include "hrtfgraph/error.hpp"

namespace hrtfgraph {

namespace {

using Eigen::Index;

Eigen::VectorXd edge_residuals(const DifferenceGraph& g, const Eigen::VectorXd& x) {
  Eigen::VectorXd r(g.num_edges());
  for (Index e = 0; e < g.num_edges(); ++e) {
    const auto& edge = g.edges[static_cast<std::size_t>(e)];
    r(e) = x(edge.v) - x(edge.u) - static_cast<double>(edge.gamma);
  }
  return r;
}

}  // namespace

Eigen::VectorXd ls_gradient(const DifferenceGraph& g, const Eigen::VectorXd& node_values) {
  const Eigen::VectorXd r = edge_residuals(g, node_values);
  Eigen::VectorXd grad = Eigen::VectorXd::Zero(g.num_vertices);
  for (Index e = 0; e < g.num_edges(); ++e) {
    const auto& edge = g.edges[static_cast<std::size_t>(e)];
    grad(edge.v) += 2.0 * edge.weight * r(e);
    grad(edge.u) -= 2.0 * edge.weight * r(e);
  }
  return grad;
}

LsSolution solve_ls(const LsProblem& problem) {
  const DifferenceGraph& g = problem.graph;
  g.validate();
  const Index n = g.num_vertices;
  const Index pinned = g.delta_vertex.value_or(0);

  // Normal equations L x = b with L the weighted Laplacian and
  // b_v = sum_in w gamma - sum_out w gamma.
  Eigen::VectorXd b = Eigen::VectorXd::Zero(n);
  std::vector<Eigen::Triplet<double>> triplets;
  auto reduced = [&](Index v) { return v < pinned ? v : v - 1; };
  for (const auto& e : g.edges) {
    b(e.v) += e.weight * static_cast<double>(e.gamma);
    b(e.u) -= e.weight * static_cast<double>(e.gamma);
    for (auto [a, c] : {std::pair{e.u, e.v}, std::pair{e.v, e.u}}) {
      if (a == pinned) continue;
      triplets.emplace_back(reduced(a), reduced(a), e.weight);
      if (c != pinned) triplets.emplace_back(reduced(a), reduced(c), -e.weight);
    }
  }
  Eigen::SparseMatrix<double> lap(n - 1, n - 1);
  lap.setFromTriplets(triplets.begin(), triplets.end());
  Eigen::VectorXd rhs(n - 1);
  for (Index v = 0; v < n; ++v) {
    if (v != pinned) rhs(reduced(v)) = b(v);
  }

  LsSolution sol;
  sol.node_values = Eigen::VectorXd::Zero(n);
  if (n > 1) {
    Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt(lap);
    if (ldlt.info() != Eigen::Success) throw Error(ErrorCode::SingularSystem, "Laplacian factorization failed");
    const Eigen::VectorXd y = ldlt.solve(rhs);
    if (ldlt.info() != Eigen::Success || !y.allFinite()) {
      throw Error(ErrorCode::SingularSystem, "Laplacian solve failed");
    }
    for (Index v = 0; v < n; ++v) {
      if (v != pinned) sol.node_values(v) = y(reduced(v));
    }
    const double scale = std::max(rhs.norm(), 1e-300);
    sol.relative_residual = (lap * y - rhs).norm() / scale;
  }
  if (!g.delta_vertex) sol.node_values.array() -= sol.node_values.mean();
  sol.residuals = edge_residuals(g, sol.node_values);
  for (Index e = 0; e < g.num_edges(); ++e) {
    sol.objective += g.edges[static_cast<std::size_t>(e)].weight * sol.residuals(e) * sol.residuals(e);
  }
  const double tol = g.delta_vertex ? 1e-10 : 1e-8;
  if (sol.relative_residual > tol) {
    throw Error(ErrorCode::SingularSystem, "normal equations not met to tolerance");
  }
  return sol;
}

}  // namespace hrtfgraph
