#include "hrtfgraph/spherical_graph.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <set>
#include <tuple>

#include <nlohmann/json.hpp>

#include "hrtfgraph/error.hpp"

namespace hrtfgraph {

using Index = Eigen::Index;

std::string to_string(EdgeKind kind) {
  switch (kind) {
    case EdgeKind::IntraAural: return "intra";
    case EdgeKind::InterAural: return "inter";
    case EdgeKind::AbsoluteDelta: return "delta";
    case EdgeKind::InterFrequency: return "freq";
  }
  return "unknown";
}

namespace {

struct DisjointSets {
  std::vector<Index> parent;
  explicit DisjointSets(Index n) : parent(static_cast<std::size_t>(n)) {
    std::iota(parent.begin(), parent.end(), Index{0});
  }
  Index find(Index x) {
    while (parent[static_cast<std::size_t>(x)] != x) {
      parent[static_cast<std::size_t>(x)] = parent[static_cast<std::size_t>(parent[static_cast<std::size_t>(x)])];
      x = parent[static_cast<std::size_t>(x)];
    }
    return x;
  }
  bool unite(Index a, Index b) {
    a = find(a);
    b = find(b);
    if (a == b) return false;
    parent[static_cast<std::size_t>(a)] = b;
    return true;
  }
};

Index step_from(const GraphEdge& e, int sign) { return sign > 0 ? e.u : e.v; }
Index step_to(const GraphEdge& e, int sign) { return sign > 0 ? e.v : e.u; }

// Rank of the signed cycle/edge incidence matrix.
// Rank of the cycle-edge incidence rows over GF(2^61 - 1). It never exceeds
// the rational rank, and every cycle lies in the cycle space, so reaching
// |E| - |V| + 1 here certifies spanning.
Index modular_cycle_rank(const DifferenceGraph& g) {
  using Row = std::vector<std::pair<Index, std::uint64_t>>;
  constexpr std::uint64_t p = (std::uint64_t{1} << 61) - 1;
  auto mul = [](std::uint64_t a, std::uint64_t b) {
    const unsigned __int128 r = static_cast<unsigned __int128>(a) * b;
    std::uint64_t lo = static_cast<std::uint64_t>(r & p) + static_cast<std::uint64_t>(r >> 61);
    return lo >= p ? lo - p : lo;
  };
  auto power = [&](std::uint64_t a, std::uint64_t e) {
    std::uint64_t r = 1;
    for (; e; e >>= 1, a = mul(a, a)) {
      if (e & 1) r = mul(r, a);
    }
    return r;
  };
  std::map<Index, Row> pivots;  // leading column -> row with leading coefficient 1
  for (const auto& cycle : g.cycles) {
    std::map<Index, std::int64_t> acc;
    for (const auto& s : cycle) acc[s.edge] += s.sign;
    Row row;
    for (const auto& [e, c] : acc) {
      if (c != 0) row.emplace_back(e, c > 0 ? static_cast<std::uint64_t>(c) : p - static_cast<std::uint64_t>(-c));
    }
    while (!row.empty()) {
      const auto it = pivots.find(row.front().first);
      if (it == pivots.end()) break;
      // row -= row.front().second * pivot
      const std::uint64_t f = row.front().second;
      Row merged;
      std::size_t a = 0;
      std::size_t b = 0;
      const Row& piv = it->second;
      while (a < row.size() || b < piv.size()) {
        if (b == piv.size() || (a < row.size() && row[a].first < piv[b].first)) {
          merged.push_back(row[a++]);
        } else {
          const std::uint64_t sub = mul(f, piv[b].second);
          if (a < row.size() && row[a].first == piv[b].first) {
            const std::uint64_t v = row[a].second >= sub ? row[a].second - sub : row[a].second + p - sub;
            if (v != 0) merged.emplace_back(row[a].first, v);
            ++a;
          } else {
            merged.emplace_back(piv[b].first, sub == 0 ? 0 : p - sub);
          }
          ++b;
        }
      }
      row = std::move(merged);
    }
    if (row.empty()) continue;
    const std::uint64_t inv = power(row.front().second, p - 2);
    for (auto& [e, c] : row) c = mul(c, inv);
    pivots.emplace(row.front().first, std::move(row));
  }
  return static_cast<Index>(pivots.size());
}

}  // namespace

bool DifferenceGraph::is_connected() const {
  if (num_vertices <= 1) return true;
  DisjointSets sets(num_vertices);
  Index components = num_vertices;
  for (const auto& e : edges) {
    if (sets.unite(e.u, e.v)) --components;
  }
  return components == 1;
}

bool DifferenceGraph::cycles_cover_edges() const {
  std::vector<char> covered(edges.size(), 0);
  for (const auto& c : cycles) {
    for (const auto& s : c) {
      if (s.edge >= 0 && s.edge < num_edges()) covered[static_cast<std::size_t>(s.edge)] = 1;
    }
  }
  return std::all_of(covered.begin(), covered.end(), [](char x) { return x != 0; });
}

bool cycle_closes(const DifferenceGraph& g, const Cycle& cycle) {
  if (cycle.empty()) return false;
  Index at = -1;
  Index start = -1;
  for (const auto& s : cycle) {
    if (s.edge < 0 || s.edge >= g.num_edges() || (s.sign != 1 && s.sign != -1)) return false;
    const auto& e = g.edges[static_cast<std::size_t>(s.edge)];
    const Index from = step_from(e, s.sign);
    if (at < 0) {
      start = from;
    } else if (from != at) {
      return false;
    }
    at = step_to(e, s.sign);
  }
  return at == start;
}

void DifferenceGraph::validate() const {
  if (num_vertices <= 0) throw Error(ErrorCode::InvalidArgument, "graph has no vertices");
  std::set<std::tuple<int, Index, Index>> seen;
  for (std::size_t i = 0; i < edges.size(); ++i) {
    const auto& e = edges[i];
    if (e.u < 0 || e.v < 0 || e.u >= num_vertices || e.v >= num_vertices) {
      throw Error(ErrorCode::InvalidArgument, "edge " + std::to_string(i) + " has an invalid endpoint");
    }
    if (e.u == e.v) throw Error(ErrorCode::InvalidArgument, "edge " + std::to_string(i) + " is a self loop");
    if (!std::isfinite(e.weight) || e.weight < kWeightFloor) {
      throw Error(ErrorCode::InvalidArgument,
                  "edge " + std::to_string(i) + " weight below the floor: " + std::to_string(e.weight));
    }
    const auto key = std::make_tuple(static_cast<int>(e.kind), std::min(e.u, e.v), std::max(e.u, e.v));
    if (!seen.insert(key).second) {
      throw Error(ErrorCode::InvalidArgument, "duplicate edge pair at edge " + std::to_string(i));
    }
  }
  if (delta_vertex && (*delta_vertex < 0 || *delta_vertex >= num_vertices)) {
    throw Error(ErrorCode::InvalidArgument, "delta vertex out of range");
  }
  for (std::size_t c = 0; c < cycles.size(); ++c) {
    if (!cycle_closes(*this, cycles[c])) {
      throw Error(ErrorCode::MissingCycles, "cycle " + std::to_string(c) + " does not close");
    }
  }
  if (!is_connected()) throw Error(ErrorCode::DisconnectedGraph, "graph is not connected");
}

bool cycles_span_cycle_space(const DifferenceGraph& g) {
  const Index rank_needed = g.num_edges() - g.num_vertices + 1;
  if (rank_needed <= 0) return true;
  if (static_cast<Index>(g.cycles.size()) < rank_needed) return false;

  // Peeling: tree edges are fixed; a cycle with a single unfixed edge fixes it.
  // If everything ends up fixed, the only edge vector orthogonal to all cycles
  // and zero on the tree is zero, so the cycles span the cycle space.
  DisjointSets sets(g.num_vertices);
  std::vector<char> known(g.edges.size(), 0);
  Index unknown = 0;
  for (std::size_t i = 0; i < g.edges.size(); ++i) {
    if (sets.unite(g.edges[i].u, g.edges[i].v)) {
      known[i] = 1;
    } else {
      ++unknown;
    }
  }
  std::vector<std::vector<Index>> cycles_of_edge(g.edges.size());
  std::vector<Index> open(g.cycles.size(), 0);
  for (std::size_t c = 0; c < g.cycles.size(); ++c) {
    std::set<Index> distinct;
    for (const auto& s : g.cycles[c]) distinct.insert(s.edge);
    for (Index e : distinct) {
      cycles_of_edge[static_cast<std::size_t>(e)].push_back(static_cast<Index>(c));
      if (!known[static_cast<std::size_t>(e)]) ++open[c];
    }
  }
  std::vector<Index> queue;
  for (std::size_t c = 0; c < g.cycles.size(); ++c) {
    if (open[c] == 1) queue.push_back(static_cast<Index>(c));
  }
  while (!queue.empty() && unknown > 0) {
    const Index c = queue.back();
    queue.pop_back();
    if (open[static_cast<std::size_t>(c)] != 1) continue;
    Index target = -1;
    for (const auto& s : g.cycles[static_cast<std::size_t>(c)]) {
      if (!known[static_cast<std::size_t>(s.edge)]) target = s.edge;
    }
    // A single unknown edge appearing with net zero coefficient is not fixed.
    int net = 0;
    for (const auto& s : g.cycles[static_cast<std::size_t>(c)]) {
      if (s.edge == target) net += s.sign;
    }
    if (net == 0) continue;
    known[static_cast<std::size_t>(target)] = 1;
    --unknown;
    for (Index other : cycles_of_edge[static_cast<std::size_t>(target)]) {
      if (--open[static_cast<std::size_t>(other)] == 1) queue.push_back(other);
    }
  }
  if (unknown == 0) return true;
  return modular_cycle_rank(g) == rank_needed;
}

DifferenceGraph build_intra_graph(const HullTriangulation& hull, const IntVector& gammas,
                                  const Eigen::VectorXd& weights) {
  const Index m = static_cast<Index>(hull.edges.size());
  if (gammas.size() != m || weights.size() != m) {
    throw Error(ErrorCode::LengthMismatch, "need one gamma and one weight per hull edge");
  }
  DifferenceGraph g;
  g.num_vertices = hull.num_vertices;
  g.edges.reserve(static_cast<std::size_t>(m));
  for (Index i = 0; i < m; ++i) {
    g.edges.push_back({hull.edges[static_cast<std::size_t>(i)][0],
                       hull.edges[static_cast<std::size_t>(i)][1], gammas[i], weights[i],
                       EdgeKind::IntraAural});
  }
  g.cycles.reserve(hull.triangles.size());
  for (const auto& t : hull.triangles) {
    Cycle c;
    for (int k = 0; k < 3; ++k) {
      const Index a = t[static_cast<std::size_t>(k)];
      const Index b = t[static_cast<std::size_t>((k + 1) % 3)];
      const Index e = hull.edge_index(a, b);
      c.push_back({e, a < b ? 1 : -1});
    }
    g.cycles.push_back(std::move(c));
  }
  return g;
}

DifferenceGraph join_ears(const DifferenceGraph& left, const DifferenceGraph& right,
                          const IntVector& interaural_gammas,
                          const Eigen::VectorXd& interaural_weights) {
  const Index n = left.num_vertices;
  if (right.num_vertices != n || left.num_edges() != right.num_edges()) {
    throw Error(ErrorCode::SizeMismatch, "ear graphs differ in size");
  }
  if (left.delta_vertex || right.delta_vertex) {
    throw Error(ErrorCode::DeltaAlreadyPresent, "join ears before attaching the delta vertex");
  }
  for (Index e = 0; e < left.num_edges(); ++e) {
    const auto& a = left.edges[static_cast<std::size_t>(e)];
    const auto& b = right.edges[static_cast<std::size_t>(e)];
    if (a.u != b.u || a.v != b.v) throw Error(ErrorCode::SizeMismatch, "ear graphs are not isomorphic");
  }
  if (interaural_gammas.size() != n || interaural_weights.size() != n) {
    throw Error(ErrorCode::SizeMismatch, "need one inter-aural gamma and weight per direction");
  }
  const Index m = left.num_edges();
  DifferenceGraph g;
  g.num_vertices = 2 * n;
  g.edges = left.edges;
  for (auto e : right.edges) {
    e.u += n;
    e.v += n;
    g.edges.push_back(e);
  }
  for (Index i = 0; i < n; ++i) {
    g.edges.push_back({i, i + n, interaural_gammas[i], interaural_weights[i], EdgeKind::InterAural});
  }
  g.cycles = left.cycles;
  for (auto c : right.cycles) {
    for (auto& s : c) s.edge += m;
    g.cycles.push_back(std::move(c));
  }
  // i -> j -> j' -> i' -> i around each intra edge (i, j).
  for (Index e = 0; e < m; ++e) {
    const auto& edge = left.edges[static_cast<std::size_t>(e)];
    g.cycles.push_back({{e, 1}, {2 * m + edge.v, 1}, {m + e, -1}, {2 * m + edge.u, -1}});
  }
  return g;
}

DifferenceGraph add_delta(const DifferenceGraph& g, const IntVector& delta_gammas,
                          const Eigen::VectorXd& delta_weights) {
  if (g.delta_vertex) throw Error(ErrorCode::DeltaAlreadyPresent, "graph already has a delta vertex");
  const Index n = g.num_vertices;
  if (delta_gammas.size() != n || delta_weights.size() != n) {
    throw Error(ErrorCode::LengthMismatch, "need one delta gamma and weight per vertex");
  }
  const Index m = g.num_edges();
  DifferenceGraph out = g;
  const Index delta = n;
  out.num_vertices = n + 1;
  out.delta_vertex = delta;
  for (Index i = 0; i < n; ++i) {
    out.edges.push_back({delta, i, delta_gammas[i], delta_weights[i], EdgeKind::AbsoluteDelta});
  }
  for (Index e = 0; e < m; ++e) {
    const auto& edge = g.edges[static_cast<std::size_t>(e)];
    out.cycles.push_back({{m + edge.u, 1}, {e, 1}, {m + edge.v, -1}});
  }
  return out;
}

DifferenceGraph stack_frequencies(const DifferenceGraph& base, Eigen::Index num_frequencies,
                                  const IntMatrix& spherical_gammas, const IntMatrix& freq_gammas,
                                  const StackWeights& weights) {
  const Index f_count = num_frequencies;
  const Index n = base.num_vertices;
  const Index m = base.num_edges();
  if (f_count < 1) throw Error(ErrorCode::ShapeMismatch, "need at least one frequency");
  if (spherical_gammas.rows() != f_count || spherical_gammas.cols() != m) {
    throw Error(ErrorCode::ShapeMismatch, "spherical gammas must be F x |E|");
  }
  if (f_count > 1 && (freq_gammas.rows() != f_count - 1 || freq_gammas.cols() != n)) {
    throw Error(ErrorCode::ShapeMismatch, "frequency gammas must be (F-1) x N");
  }
  const bool own_sph = weights.spherical.size() > 0;
  const bool own_freq = weights.frequency.size() > 0;
  if (own_sph && (weights.spherical.rows() != f_count || weights.spherical.cols() != m)) {
    throw Error(ErrorCode::ShapeMismatch, "spherical weights must be F x |E|");
  }
  if (own_freq && (weights.frequency.rows() != f_count - 1 || weights.frequency.cols() != n)) {
    throw Error(ErrorCode::ShapeMismatch, "frequency weights must be (F-1) x N");
  }

  DifferenceGraph g;
  g.num_vertices = n * f_count;
  g.edges.reserve(static_cast<std::size_t>(m * f_count + n * (f_count - 1)));
  for (Index f = 0; f < f_count; ++f) {
    for (Index e = 0; e < m; ++e) {
      GraphEdge edge = base.edges[static_cast<std::size_t>(e)];
      edge.u += f * n;
      edge.v += f * n;
      edge.gamma = spherical_gammas(f, e);
      if (own_sph) edge.weight = weights.spherical(f, e);
      g.edges.push_back(edge);
    }
  }
  const Index freq_base = m * f_count;
  for (Index f = 0; f + 1 < f_count; ++f) {
    for (Index i = 0; i < n; ++i) {
      g.edges.push_back({f * n + i, (f + 1) * n + i, freq_gammas(f, i),
                         own_freq ? weights.frequency(f, i) : 1.0, EdgeKind::InterFrequency});
    }
  }
  for (Index f = 0; f < f_count; ++f) {
    for (const auto& c : base.cycles) {
      Cycle shifted = c;
      for (auto& s : shifted) s.edge += f * m;
      g.cycles.push_back(std::move(shifted));
    }
  }
  for (Index f = 0; f + 1 < f_count; ++f) {
    for (Index e = 0; e < m; ++e) {
      const auto& edge = base.edges[static_cast<std::size_t>(e)];
      g.cycles.push_back({{f * m + e, 1},
                          {freq_base + f * n + edge.v, 1},
                          {(f + 1) * m + e, -1},
                          {freq_base + f * n + edge.u, -1}});
    }
  }
  return g;
}

std::string graph_to_json(const DifferenceGraph& g) {
  nlohmann::json j;
  j["num_vertices"] = g.num_vertices;
  j["delta"] = g.delta_vertex ? nlohmann::json(*g.delta_vertex) : nlohmann::json(nullptr);
  nlohmann::json edges = nlohmann::json::array();
  for (const auto& e : g.edges) edges.push_back({e.u, e.v, e.gamma, e.weight, to_string(e.kind)});
  j["edges"] = std::move(edges);
  nlohmann::json cycles = nlohmann::json::array();
  for (const auto& c : g.cycles) {
    nlohmann::json steps = nlohmann::json::array();
    for (const auto& s : c) steps.push_back(s.sign * (s.edge + 1));
    cycles.push_back(std::move(steps));
  }
  j["cycles"] = std::move(cycles);
  return j.dump();
}

}  // namespace hrtfgraph
