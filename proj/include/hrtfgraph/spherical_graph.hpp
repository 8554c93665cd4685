#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "hrtfgraph/hrir_core.hpp"

namespace hrtfgraph {

using IntMatrix = Eigen::Matrix<std::int64_t, Eigen::Dynamic, Eigen::Dynamic>;
using IntVector = Eigen::Matrix<std::int64_t, Eigen::Dynamic, 1>;

/// Lower bound on every edge weight; keeps L2 systems nonsingular and L1 costs meaningful.
inline constexpr double kWeightFloor = 1e-6;

enum class EdgeKind { IntraAural, InterAural, AbsoluteDelta, InterFrequency };

std::string to_string(EdgeKind kind);

/// Directed edge u -> v measuring value[v] - value[u] ~ gamma.
struct GraphEdge {
  Eigen::Index u = 0;
  Eigen::Index v = 0;
  std::int64_t gamma = 0;
  double weight = 1.0;
  EdgeKind kind = EdgeKind::IntraAural;
};

/// One edge of a cycle, traversed along (+1) or against (-1) its direction.
struct CycleStep {
  Eigen::Index edge = 0;
  int sign = 1;
};
using Cycle = std::vector<CycleStep>;

struct DifferenceGraph {
  Eigen::Index num_vertices = 0;
  std::vector<GraphEdge> edges;
  std::optional<Eigen::Index> delta_vertex;  // pinned to 0 by every solver
  std::vector<Cycle> cycles;                 // empty: no cycle set supplied

  Eigen::Index num_edges() const { return static_cast<Eigen::Index>(edges.size()); }
  bool has_cycles() const { return !cycles.empty(); }

  /// Throws on: disconnected graph, self loops, duplicate pairs within a
  /// kind, cycles that do not close, weights below kWeightFloor.
  void validate() const;

  bool is_connected() const;
  /// Every edge appears in at least one cycle.
  bool cycles_cover_edges() const;
};

/// Start vertex of a cycle walk; the walk returns there iff the cycle closes.
bool cycle_closes(const DifferenceGraph& g, const Cycle& cycle);

/// True when the supplied cycles span the whole cycle space (rank |E|-|V|+1).
/// Tries leaf peeling against a spanning tree first, then exact modular
/// elimination of the cycle rows.
bool cycles_span_cycle_space(const DifferenceGraph& g);

/// Triangulated convex hull of points on the unit sphere.
struct HullTriangulation {
  std::vector<std::array<Eigen::Index, 3>> triangles;  // counterclockwise seen from outside
  std::vector<std::array<Eigen::Index, 2>> edges;      // (i, j) with i < j, sorted

  Eigen::Index num_vertices = 0;

  /// Index into `edges` of the unordered pair {a, b}, or -1.
  Eigen::Index edge_index(Eigen::Index a, Eigen::Index b) const;
};

/// Convex hull of the directions. Nearly coplanar facets (cocircular
/// points on common sampling grids) come out as an arbitrary valid
/// triangulation of the planar polygon. Throws DegenerateInput for fewer
/// than 4 points, coplanar input, or a point that does not end up on the hull.
HullTriangulation convex_hull_graph(const std::vector<Direction>& directions);

/// Maximum signed distance of any point above any facet plane; <= 1e-9 for a valid hull.
double hull_max_violation(const HullTriangulation& hull, const std::vector<Direction>& directions);

/// One ear's intra-aural graph. Cycles are the oriented hull triangles.
DifferenceGraph build_intra_graph(const HullTriangulation& hull, const IntVector& gammas,
                                  const Eigen::VectorXd& weights);

/// Joins two same-shape ear graphs; right vertex i becomes i + N and gets an
/// InterAural edge (i, i + N). Adds one quadrilateral cycle per intra edge.
DifferenceGraph join_ears(const DifferenceGraph& left, const DifferenceGraph& right,
                          const IntVector& interaural_gammas,
                          const Eigen::VectorXd& interaural_weights);

/// Adds the auxiliary zero-valued vertex with an AbsoluteDelta edge to every
/// existing vertex, and one triangle cycle per existing edge.
DifferenceGraph add_delta(const DifferenceGraph& g, const IntVector& delta_gammas,
                          const Eigen::VectorXd& delta_weights);

/// Per-edge weights for a frequency stack; empty matrices mean "copy the
/// base weights" and "all ones" respectively.
struct StackWeights {
  Eigen::MatrixXd spherical;  // F x |E|
  Eigen::MatrixXd frequency;  // (F-1) x N
};

/// Stacks F copies of `base` (vertex (i, f) -> f*N + i) joined by
/// InterFrequency edges (f*N+i -> (f+1)*N+i). Cycles: per-frequency
/// triangles plus one quadrilateral per base edge and frequency step.
DifferenceGraph stack_frequencies(const DifferenceGraph& base, Eigen::Index num_frequencies,
                                  const IntMatrix& spherical_gammas, const IntMatrix& freq_gammas,
                                  const StackWeights& weights = {});

/// {"num_vertices", "delta", "edges": [[u,v,gamma,weight,kind]...],
///  "cycles": [[+-(edge_index+1)...]...]} (1-based so edge 0 keeps its sign).
std::string graph_to_json(const DifferenceGraph& g);

}  // namespace hrtfgraph
