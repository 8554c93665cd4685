// Exact integer solvers for min sum_e w_e |x[v] - x[u] - gamma_e|.
//
// LP duality turns the problem into a min-cost circulation: one flow f_e in
// [-w_e, w_e] per edge with cost -gamma_e per unit pushed u -> v. Costs are
// integral, so optimal node potentials are integral and give x = -potential.
// Capacities stay real-valued.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <queue>
#include <vector>

#include "hrtfgraph/error.hpp"
#include "hrtfgraph/l1_flow_solver.hpp"

namespace hrtfgraph::detail {

namespace {

using Index = Eigen::Index;

// Integrates gamma along a BFS tree from vertex 0; unreachable vertices stay 0.
std::vector<std::int64_t> tree_integration(Index n, const std::vector<TensionEdge>& edges) {
  std::vector<std::vector<std::size_t>> incident(static_cast<std::size_t>(n));
  for (std::size_t e = 0; e < edges.size(); ++e) {
    incident[static_cast<std::size_t>(edges[e].u)].push_back(e);
    incident[static_cast<std::size_t>(edges[e].v)].push_back(e);
  }
  std::vector<std::int64_t> x(static_cast<std::size_t>(n), 0);
  std::vector<char> seen(static_cast<std::size_t>(n), 0);
  std::vector<Index> queue;
  for (Index root = 0; root < n; ++root) {
    if (seen[static_cast<std::size_t>(root)]) continue;
    seen[static_cast<std::size_t>(root)] = 1;
    queue.assign(1, root);
    for (std::size_t k = 0; k < queue.size(); ++k) {
      const Index a = queue[k];
      for (std::size_t e : incident[static_cast<std::size_t>(a)]) {
        const auto& edge = edges[e];
        const Index b = edge.u == a ? edge.v : edge.u;
        if (seen[static_cast<std::size_t>(b)]) continue;
        seen[static_cast<std::size_t>(b)] = 1;
        x[static_cast<std::size_t>(b)] =
            edge.u == a ? x[static_cast<std::size_t>(a)] + edge.gamma : x[static_cast<std::size_t>(a)] - edge.gamma;
        queue.push_back(b);
      }
    }
  }
  return x;
}

double capacity_epsilon(const std::vector<TensionEdge>& edges) {
  double max_w = 1.0;
  for (const auto& e : edges) max_w = std::max(max_w, e.weight);
  return 1e-12 * max_w;
}

// Successive shortest paths with Dijkstra on reduced costs, then a
// Dinic-style blocking flow on the zero-reduced-cost subgraph per phase.
class PrimalDualCirculation {
 public:
  PrimalDualCirculation(Index n, const std::vector<TensionEdge>& edges,
                        const std::vector<std::int64_t>& warm)
      : n_(n), edges_(edges), eps_(capacity_epsilon(edges)) {
    const std::size_t m = edges.size();
    shifted_.resize(m);
    flow_.assign(m, 0.0);
    excess_.assign(static_cast<std::size_t>(n), 0.0);
    potential_.assign(static_cast<std::size_t>(n), 0);
    for (std::size_t e = 0; e < m; ++e) {
      const auto& edge = edges[e];
      shifted_[e] = edge.gamma - (warm[static_cast<std::size_t>(edge.v)] - warm[static_cast<std::size_t>(edge.u)]);
      // Saturate every arc with negative cost so all residual costs start >= 0.
      if (shifted_[e] > 0) flow_[e] = edge.weight;
      if (shifted_[e] < 0) flow_[e] = -edge.weight;
      excess_[static_cast<std::size_t>(edge.v)] += flow_[e];
      excess_[static_cast<std::size_t>(edge.u)] -= flow_[e];
    }
    // Arc 2e runs u -> v, arc 2e + 1 runs v -> u.
    first_.assign(static_cast<std::size_t>(n) + 1, 0);
    for (const auto& edge : edges) {
      ++first_[static_cast<std::size_t>(edge.u) + 1];
      ++first_[static_cast<std::size_t>(edge.v) + 1];
    }
    for (std::size_t i = 1; i < first_.size(); ++i) first_[i] += first_[i - 1];
    arcs_.resize(2 * m);
    std::vector<std::size_t> fill(first_.begin(), first_.end() - 1);
    for (std::size_t e = 0; e < m; ++e) {
      arcs_[fill[static_cast<std::size_t>(edges[e].u)]++] = 2 * e;
      arcs_[fill[static_cast<std::size_t>(edges[e].v)]++] = 2 * e + 1;
    }
  }

  std::vector<std::int64_t> run() {
    while (has_excess()) {
      if (!update_potentials()) {
        double leftover = 0.0;
        for (double x : excess_) leftover += std::max(x, 0.0);
        if (leftover <= 1e-9 * static_cast<double>(n_) * eps_ / 1e-12) break;
        throw Error(ErrorCode::SolverFailure, "circulation left unbalanced supply");
      }
      blocking_flow();
    }
    std::vector<std::int64_t> x(static_cast<std::size_t>(n_));
    for (Index i = 0; i < n_; ++i) x[static_cast<std::size_t>(i)] = -potential_[static_cast<std::size_t>(i)];
    return x;
  }

 private:
  Index tail(std::size_t a) const { return a % 2 == 0 ? edges_[a / 2].u : edges_[a / 2].v; }
  Index head(std::size_t a) const { return a % 2 == 0 ? edges_[a / 2].v : edges_[a / 2].u; }
  double residual(std::size_t a) const {
    const double w = edges_[a / 2].weight;
    return a % 2 == 0 ? w - flow_[a / 2] : w + flow_[a / 2];
  }
  std::int64_t cost(std::size_t a) const { return a % 2 == 0 ? -shifted_[a / 2] : shifted_[a / 2]; }
  std::int64_t reduced_cost(std::size_t a) const {
    return cost(a) + potential_[static_cast<std::size_t>(tail(a))] -
           potential_[static_cast<std::size_t>(head(a))];
  }
  void push(std::size_t a, double amount) {
    if (a % 2 == 0) {
      flow_[a / 2] += amount;
    } else {
      flow_[a / 2] -= amount;
    }
  }
  bool admissible(std::size_t a) const { return residual(a) > eps_ && reduced_cost(a) == 0; }

  bool has_excess() const {
    return std::any_of(excess_.begin(), excess_.end(), [&](double x) { return x > eps_; });
  }

  // Dijkstra from all excess vertices; distances are clipped at the nearest
  // deficit so reduced costs stay nonnegative after the update.
  bool update_potentials() {
    constexpr std::int64_t kInf = std::numeric_limits<std::int64_t>::max();
    std::vector<std::int64_t> dist(static_cast<std::size_t>(n_), kInf);
    std::vector<char> done(static_cast<std::size_t>(n_), 0);
    using Item = std::pair<std::int64_t, Index>;
    std::priority_queue<Item, std::vector<Item>, std::greater<>> heap;
    for (Index i = 0; i < n_; ++i) {
      if (excess_[static_cast<std::size_t>(i)] > eps_) {
        dist[static_cast<std::size_t>(i)] = 0;
        heap.emplace(0, i);
      }
    }
    std::int64_t reach = -1;
    while (!heap.empty()) {
      const auto [d, u] = heap.top();
      heap.pop();
      if (done[static_cast<std::size_t>(u)] || d != dist[static_cast<std::size_t>(u)]) continue;
      done[static_cast<std::size_t>(u)] = 1;
      if (excess_[static_cast<std::size_t>(u)] < -eps_) {
        reach = d;
        break;
      }
      for (std::size_t k = first_[static_cast<std::size_t>(u)]; k < first_[static_cast<std::size_t>(u) + 1]; ++k) {
        const std::size_t a = arcs_[k];
        if (residual(a) <= eps_) continue;
        const Index h = head(a);
        const std::int64_t nd = d + reduced_cost(a);
        if (nd < dist[static_cast<std::size_t>(h)]) {
          dist[static_cast<std::size_t>(h)] = nd;
          heap.emplace(nd, h);
        }
      }
    }
    if (reach < 0) return false;
    for (Index i = 0; i < n_; ++i) {
      potential_[static_cast<std::size_t>(i)] += std::min(dist[static_cast<std::size_t>(i)], reach);
    }
    return true;
  }

  void blocking_flow() {
    std::vector<Index> level(static_cast<std::size_t>(n_));
    std::vector<std::size_t> cursor(static_cast<std::size_t>(n_));
    std::vector<std::size_t> path;
    std::vector<Index> queue;
    while (true) {
      std::fill(level.begin(), level.end(), -1);
      queue.clear();
      for (Index i = 0; i < n_; ++i) {
        if (excess_[static_cast<std::size_t>(i)] > eps_) {
          level[static_cast<std::size_t>(i)] = 0;
          queue.push_back(i);
        }
      }
      bool reached = false;
      for (std::size_t k = 0; k < queue.size(); ++k) {
        const Index u = queue[k];
        for (std::size_t j = first_[static_cast<std::size_t>(u)]; j < first_[static_cast<std::size_t>(u) + 1]; ++j) {
          const std::size_t a = arcs_[j];
          const Index h = head(a);
          if (level[static_cast<std::size_t>(h)] >= 0 || !admissible(a)) continue;
          level[static_cast<std::size_t>(h)] = level[static_cast<std::size_t>(u)] + 1;
          if (excess_[static_cast<std::size_t>(h)] < -eps_) reached = true;
          queue.push_back(h);
        }
      }
      if (!reached) return;
      for (Index i = 0; i < n_; ++i) cursor[static_cast<std::size_t>(i)] = first_[static_cast<std::size_t>(i)];

      for (Index s = 0; s < n_; ++s) {
        if (level[static_cast<std::size_t>(s)] != 0) continue;
        while (excess_[static_cast<std::size_t>(s)] > eps_) {
          path.clear();
          Index u = s;
          bool augmented = false;
          while (true) {
            if (u != s && excess_[static_cast<std::size_t>(u)] < -eps_) {
              double amount = std::min(excess_[static_cast<std::size_t>(s)], -excess_[static_cast<std::size_t>(u)]);
              for (std::size_t a : path) amount = std::min(amount, residual(a));
              for (std::size_t a : path) push(a, amount);
              excess_[static_cast<std::size_t>(s)] -= amount;
              excess_[static_cast<std::size_t>(u)] += amount;
              augmented = true;
              break;
            }
            auto& c = cursor[static_cast<std::size_t>(u)];
            const std::size_t end = first_[static_cast<std::size_t>(u) + 1];
            while (c < end) {
              const std::size_t a = arcs_[c];
              if (level[static_cast<std::size_t>(head(a))] == level[static_cast<std::size_t>(u)] + 1 && admissible(a)) break;
              ++c;
            }
            if (c == end) {
              level[static_cast<std::size_t>(u)] = -1;
              if (path.empty()) break;
              u = tail(path.back());
              path.pop_back();
              ++cursor[static_cast<std::size_t>(u)];
            } else {
              path.push_back(arcs_[c]);
              u = head(arcs_[c]);
            }
          }
          if (!augmented) break;
        }
      }
    }
  }

  Index n_;
  const std::vector<TensionEdge>& edges_;
  double eps_;
  std::vector<std::int64_t> shifted_;
  std::vector<double> flow_;
  std::vector<double> excess_;
  std::vector<std::int64_t> potential_;
  std::vector<std::size_t> first_;
  std::vector<std::size_t> arcs_;
};

// Primal network simplex with a strongly feasible spanning tree, block
// search pricing and explicit parent/child lists. Arc flows live in
// [0, 2 w_e] (shifted by +w_e), artificial arcs connect every vertex to an
// extra root.
class NetworkSimplex {
 public:
  NetworkSimplex(Index n, const std::vector<TensionEdge>& edges, const std::vector<std::int64_t>& warm)
      : n_(n), m_(static_cast<Index>(edges.size())), eps_(capacity_epsilon(edges)) {
    const Index total = m_ + n_;
    src_.resize(static_cast<std::size_t>(total));
    dst_.resize(static_cast<std::size_t>(total));
    cap_.resize(static_cast<std::size_t>(total));
    cost_.resize(static_cast<std::size_t>(total));
    flow_.assign(static_cast<std::size_t>(total), 0.0);
    state_.assign(static_cast<std::size_t>(total), kLower);
    std::vector<double> supply(static_cast<std::size_t>(n_), 0.0);
    std::int64_t max_cost = 0;
    for (Index j = 0; j < m_; ++j) {
      const auto& e = edges[static_cast<std::size_t>(j)];
      src_[static_cast<std::size_t>(j)] = e.u;
      dst_[static_cast<std::size_t>(j)] = e.v;
      cap_[static_cast<std::size_t>(j)] = 2.0 * e.weight;
      const std::int64_t g = e.gamma - (warm[static_cast<std::size_t>(e.v)] - warm[static_cast<std::size_t>(e.u)]);
      cost_[static_cast<std::size_t>(j)] = -g;
      max_cost = std::max(max_cost, g < 0 ? -g : g);
      supply[static_cast<std::size_t>(e.u)] += e.weight;
      supply[static_cast<std::size_t>(e.v)] -= e.weight;
    }
    const std::int64_t art = (max_cost + 1) * (n_ + 1);
    root_ = n_;
    parent_.assign(static_cast<std::size_t>(n_) + 1, -1);
    pred_.assign(static_cast<std::size_t>(n_) + 1, -1);
    dir_.assign(static_cast<std::size_t>(n_) + 1, 0);
    depth_.assign(static_cast<std::size_t>(n_) + 1, 0);
    pi_.assign(static_cast<std::size_t>(n_) + 1, 0);
    children_.assign(static_cast<std::size_t>(n_) + 1, {});
    for (Index v = 0; v < n_; ++v) {
      const Index j = m_ + v;
      const auto sj = static_cast<std::size_t>(j);
      const auto sv = static_cast<std::size_t>(v);
      parent_[sv] = root_;
      pred_[sv] = j;
      depth_[sv] = 1;
      state_[sj] = kTree;
      cap_[sj] = std::numeric_limits<double>::infinity();
      children_[static_cast<std::size_t>(root_)].push_back(v);
      if (supply[sv] >= 0.0) {
        src_[sj] = v;
        dst_[sj] = root_;
        flow_[sj] = supply[sv];
        cost_[sj] = 0;
        dir_[sv] = kUp;
        pi_[sv] = 0;
      } else {
        src_[sj] = root_;
        dst_[sj] = v;
        flow_[sj] = -supply[sv];
        cost_[sj] = art;
        dir_[sv] = kDown;
        pi_[sv] = art;
      }
    }
    block_size_ = std::max<Index>(10, static_cast<Index>(std::sqrt(static_cast<double>(m_))));
  }

  std::vector<std::int64_t> run() {
    const std::int64_t max_iterations = 1000 * (m_ + n_) + 100000;
    for (std::int64_t it = 0; find_entering(); ++it) {
      if (it > max_iterations) throw Error(ErrorCode::SolverFailure, "network simplex did not converge");
      pivot();
    }
    for (Index v = 0; v < n_; ++v) {
      if (flow_[static_cast<std::size_t>(m_ + v)] > 1e-9) {
        throw Error(ErrorCode::SolverFailure, "network simplex ended with artificial flow");
      }
    }
    std::vector<std::int64_t> x(static_cast<std::size_t>(n_));
    for (Index v = 0; v < n_; ++v) x[static_cast<std::size_t>(v)] = -pi_[static_cast<std::size_t>(v)];
    return x;
  }

 private:
  static constexpr int kLower = 1;
  static constexpr int kUpper = -1;
  static constexpr int kTree = 0;
  static constexpr int kUp = 1;    // pred arc runs node -> parent
  static constexpr int kDown = -1; // pred arc runs parent -> node

  std::int64_t violation(Index j) const {
    const auto sj = static_cast<std::size_t>(j);
    return state_[sj] * (cost_[sj] + pi_[static_cast<std::size_t>(src_[sj])] - pi_[static_cast<std::size_t>(dst_[sj])]);
  }

  bool find_entering() {
    std::int64_t best = 0;
    Index count = block_size_;
    Index j = next_arc_;
    for (Index scanned = 0; scanned < m_; ++scanned) {
      const std::int64_t c = violation(j);
      if (c < best) {
        best = c;
        in_arc_ = j;
      }
      j = j + 1 == m_ ? 0 : j + 1;
      if (--count == 0) {
        if (best < 0) break;
        count = block_size_;
      }
    }
    next_arc_ = j;
    return best < 0;
  }

  Index find_join(Index a, Index b) const {
    while (a != b) {
      if (depth_[static_cast<std::size_t>(a)] >= depth_[static_cast<std::size_t>(b)]) {
        a = parent_[static_cast<std::size_t>(a)];
      } else {
        b = parent_[static_cast<std::size_t>(b)];
      }
    }
    return a;
  }

  void snap(Index j) {
    auto& f = flow_[static_cast<std::size_t>(j)];
    const double c = cap_[static_cast<std::size_t>(j)];
    if (std::abs(f) <= eps_) f = 0.0;
    if (std::isfinite(c) && std::abs(c - f) <= eps_) f = c;
  }

  void pivot() {
    const auto sin = static_cast<std::size_t>(in_arc_);
    Index first = src_[sin];
    Index second = dst_[sin];
    if (state_[sin] == kUpper) std::swap(first, second);
    const Index join = find_join(first, second);

    // Strongly feasible leaving-arc rule: last blocking arc met when walking
    // the cycle from the join along the flow direction.
    double delta = cap_[sin];
    int result = 0;
    Index u_out = -1;
    bool out_to_upper = false;
    for (Index u = first; u != join; u = parent_[static_cast<std::size_t>(u)]) {
      const auto e = static_cast<std::size_t>(pred_[static_cast<std::size_t>(u)]);
      const bool up = dir_[static_cast<std::size_t>(u)] == kDown;
      const double d = up ? cap_[e] - flow_[e] : flow_[e];
      if (d < delta) {
        delta = d;
        u_out = u;
        result = 1;
        out_to_upper = up;
      }
    }
    for (Index u = second; u != join; u = parent_[static_cast<std::size_t>(u)]) {
      const auto e = static_cast<std::size_t>(pred_[static_cast<std::size_t>(u)]);
      const bool up = dir_[static_cast<std::size_t>(u)] == kUp;
      const double d = up ? cap_[e] - flow_[e] : flow_[e];
      if (d <= delta) {
        delta = d;
        u_out = u;
        result = 2;
        out_to_upper = up;
      }
    }
    if (!std::isfinite(delta)) throw Error(ErrorCode::SolverFailure, "unbounded circulation");

    if (delta > 0.0) {
      const double val = state_[sin] * delta;
      flow_[sin] += val;
      snap(in_arc_);
      for (Index u = src_[sin]; u != join; u = parent_[static_cast<std::size_t>(u)]) {
        const Index e = pred_[static_cast<std::size_t>(u)];
        flow_[static_cast<std::size_t>(e)] -= dir_[static_cast<std::size_t>(u)] * val;
        snap(e);
      }
      for (Index u = dst_[sin]; u != join; u = parent_[static_cast<std::size_t>(u)]) {
        const Index e = pred_[static_cast<std::size_t>(u)];
        flow_[static_cast<std::size_t>(e)] += dir_[static_cast<std::size_t>(u)] * val;
        snap(e);
      }
    }

    if (result == 0) {
      state_[sin] = -state_[sin];
      flow_[sin] = state_[sin] == kLower ? 0.0 : cap_[sin];
      return;
    }
    const Index out_arc = pred_[static_cast<std::size_t>(u_out)];
    state_[static_cast<std::size_t>(out_arc)] = out_to_upper ? kUpper : kLower;
    flow_[static_cast<std::size_t>(out_arc)] = out_to_upper ? cap_[static_cast<std::size_t>(out_arc)] : 0.0;
    state_[sin] = kTree;

    const Index u_in = result == 1 ? first : second;
    const Index v_in = result == 1 ? second : first;
    rehang(u_in, v_in, u_out);
  }

  void detach_child(Index p, Index c) {
    auto& list = children_[static_cast<std::size_t>(p)];
    list.erase(std::find(list.begin(), list.end(), c));
  }

  // Moves the subtree of u_out so that it hangs from v_in through the
  // entering arc at u_in, reversing the tree path u_in .. u_out.
  void rehang(Index u_in, Index v_in, Index u_out) {
    std::vector<Index> path;
    for (Index u = u_in;; u = parent_[static_cast<std::size_t>(u)]) {
      path.push_back(u);
      if (u == u_out) break;
    }
    detach_child(parent_[static_cast<std::size_t>(u_out)], u_out);
    for (std::size_t k = path.size() - 1; k >= 1; --k) {
      const Index child = path[k - 1];
      const Index node = path[k];
      detach_child(node, child);
      parent_[static_cast<std::size_t>(node)] = child;
      pred_[static_cast<std::size_t>(node)] = pred_[static_cast<std::size_t>(child)];
      dir_[static_cast<std::size_t>(node)] = -dir_[static_cast<std::size_t>(child)];
      children_[static_cast<std::size_t>(child)].push_back(node);
    }
    const auto sin = static_cast<std::size_t>(in_arc_);
    parent_[static_cast<std::size_t>(u_in)] = v_in;
    pred_[static_cast<std::size_t>(u_in)] = in_arc_;
    dir_[static_cast<std::size_t>(u_in)] = src_[sin] == u_in ? kUp : kDown;
    children_[static_cast<std::size_t>(v_in)].push_back(u_in);

    // Tree arcs have zero reduced cost: cost + pi[src] - pi[dst] = 0.
    const std::int64_t target = src_[sin] == u_in ? pi_[static_cast<std::size_t>(v_in)] - cost_[sin]
                                                  : pi_[static_cast<std::size_t>(v_in)] + cost_[sin];
    const std::int64_t sigma = target - pi_[static_cast<std::size_t>(u_in)];
    std::vector<Index> stack{u_in};
    while (!stack.empty()) {
      const Index u = stack.back();
      stack.pop_back();
      pi_[static_cast<std::size_t>(u)] += sigma;
      depth_[static_cast<std::size_t>(u)] = depth_[static_cast<std::size_t>(parent_[static_cast<std::size_t>(u)])] + 1;
      for (Index c : children_[static_cast<std::size_t>(u)]) stack.push_back(c);
    }
  }

  Index n_;
  Index m_;
  double eps_;
  Index root_ = 0;
  std::vector<Index> src_, dst_;
  std::vector<double> cap_;
  std::vector<std::int64_t> cost_;
  std::vector<double> flow_;
  std::vector<int> state_;
  std::vector<Index> parent_, pred_;
  std::vector<int> dir_;
  std::vector<Index> depth_;
  std::vector<std::int64_t> pi_;
  std::vector<std::vector<Index>> children_;
  Index block_size_ = 10;
  Index next_arc_ = 0;
  Index in_arc_ = -1;
};

std::vector<std::int64_t> add(const std::vector<std::int64_t>& a, const std::vector<std::int64_t>& b) {
  std::vector<std::int64_t> out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] + b[i];
  return out;
}

}  // namespace

std::vector<std::int64_t> solve_tension_primal_dual(Index num_vertices,
                                                    const std::vector<TensionEdge>& edges) {
  const auto warm = tree_integration(num_vertices, edges);
  PrimalDualCirculation solver(num_vertices, edges, warm);
  return add(warm, solver.run());
}

std::vector<std::int64_t> solve_tension_network_simplex(Index num_vertices,
                                                        const std::vector<TensionEdge>& edges) {
  const auto warm = tree_integration(num_vertices, edges);
  NetworkSimplex solver(num_vertices, edges, warm);
  return add(warm, solver.run());
}

}  // namespace hrtfgraph::detail
