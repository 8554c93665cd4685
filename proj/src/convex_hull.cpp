#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <unordered_map>
#include <vector>

#include <Eigen/Geometry>

#include "hrtfgraph/error.hpp"
#include "hrtfgraph/spherical_graph.hpp"

namespace hrtfgraph {

namespace {

using Index = Eigen::Index;

struct Face {
  Index a, b, c;
  Eigen::Vector3d normal;  // unit, outward
  double offset;           // normal . x = offset on the plane
  bool alive = true;
};

std::uint64_t directed_key(Index u, Index v) {
  return (static_cast<std::uint64_t>(u) << 32) | static_cast<std::uint64_t>(v);
}

class IncrementalHull {
 public:
  explicit IncrementalHull(const std::vector<Eigen::Vector3d>& pts) : pts_(pts) {}

  void build() {
    const Index n = static_cast<Index>(pts_.size());
    std::array<Index, 4> seed = initial_simplex();
    const Eigen::Vector3d centroid =
        (pts_[seed[0]] + pts_[seed[1]] + pts_[seed[2]] + pts_[seed[3]]) / 4.0;
    const std::array<std::array<Index, 3>, 4> tets = {{{seed[0], seed[1], seed[2]},
                                                       {seed[0], seed[1], seed[3]},
                                                       {seed[0], seed[2], seed[3]},
                                                       {seed[1], seed[2], seed[3]}}};
    for (auto t : tets) {
      Face f = make_face(t[0], t[1], t[2]);
      if (f.normal.dot(centroid) - f.offset > 0.0) f = make_face(t[0], t[2], t[1]);
      add_face(f);
    }
    std::vector<bool> used(static_cast<std::size_t>(n), false);
    for (Index s : seed) used[static_cast<std::size_t>(s)] = true;
    for (Index p = 0; p < n; ++p) {
      if (!used[static_cast<std::size_t>(p)]) insert(p);
    }
  }

  std::vector<std::array<Index, 3>> triangles() const {
    std::vector<std::array<Index, 3>> out;
    for (const auto& f : faces_) {
      if (f.alive) out.push_back({f.a, f.b, f.c});
    }
    return out;
  }

 private:
  std::array<Index, 4> initial_simplex() const {
    const Index n = static_cast<Index>(pts_.size());
    Index i0 = 0;
    Index i1 = 0;
    double best = -1.0;
    for (Index i = 1; i < n; ++i) {
      const double d = (pts_[i] - pts_[i0]).squaredNorm();
      if (d > best) best = d, i1 = i;
    }
    Index i2 = 0;
    best = -1.0;
    const Eigen::Vector3d axis = (pts_[i1] - pts_[i0]).normalized();
    for (Index i = 0; i < n; ++i) {
      const double d = axis.cross(pts_[i] - pts_[i0]).squaredNorm();
      if (d > best) best = d, i2 = i;
    }
    if (best < 1e-18) throw Error(ErrorCode::DegenerateInput, "directions are collinear");
    const Eigen::Vector3d normal = (pts_[i1] - pts_[i0]).cross(pts_[i2] - pts_[i0]).normalized();
    Index i3 = 0;
    best = -1.0;
    for (Index i = 0; i < n; ++i) {
      const double d = std::abs(normal.dot(pts_[i] - pts_[i0]));
      if (d > best) best = d, i3 = i;
    }
    if (best < 1e-9) throw Error(ErrorCode::DegenerateInput, "directions are coplanar");
    return {i0, i1, i2, i3};
  }

  Face make_face(Index a, Index b, Index c) const {
    Face f{a, b, c, Eigen::Vector3d::Zero(), 0.0, true};
    const Eigen::Vector3d n = (pts_[b] - pts_[a]).cross(pts_[c] - pts_[a]);
    f.normal = n.normalized();
    f.offset = f.normal.dot((pts_[a] + pts_[b] + pts_[c]) / 3.0);
    return f;
  }

  double height(const Face& f, Index p) const { return f.normal.dot(pts_[p]) - f.offset; }

  void add_face(const Face& f) {
    const Index id = static_cast<Index>(faces_.size());
    faces_.push_back(f);
    edge_owner_[directed_key(f.a, f.b)] = id;
    edge_owner_[directed_key(f.b, f.c)] = id;
    edge_owner_[directed_key(f.c, f.a)] = id;
  }

  Index neighbor(Index u, Index v) const {
    const auto it = edge_owner_.find(directed_key(v, u));
    return it == edge_owner_.end() ? -1 : it->second;
  }

  void insert(Index p) {
    // Seed the visible region at the facet p is highest above.
    Index start = -1;
    double best = 0.0;
    for (Index i = 0; i < static_cast<Index>(faces_.size()); ++i) {
      if (!faces_[i].alive) continue;
      const double h = height(faces_[i], p);
      if (h > best) best = h, start = i;
    }
    if (start < 0) {
      throw Error(ErrorCode::DegenerateInput,
                  "direction " + std::to_string(p) + " is not a vertex of the convex hull");
    }
    // Grow a connected visible region so the horizon stays a single loop.
    std::vector<Index> visible{start};
    std::vector<char> mark(faces_.size(), 0);
    mark[static_cast<std::size_t>(start)] = 1;
    for (std::size_t k = 0; k < visible.size(); ++k) {
      const Face& f = faces_[visible[k]];
      for (auto [u, v] : {std::pair{f.a, f.b}, std::pair{f.b, f.c}, std::pair{f.c, f.a}}) {
        const Index nb = neighbor(u, v);
        if (nb < 0 || mark[static_cast<std::size_t>(nb)]) continue;
        if (height(faces_[nb], p) > 0.0) {
          mark[static_cast<std::size_t>(nb)] = 1;
          visible.push_back(nb);
        }
      }
    }
    std::vector<std::pair<Index, Index>> horizon;
    for (Index id : visible) {
      const Face& f = faces_[id];
      for (auto [u, v] : {std::pair{f.a, f.b}, std::pair{f.b, f.c}, std::pair{f.c, f.a}}) {
        const Index nb = neighbor(u, v);
        if (nb < 0 || !mark[static_cast<std::size_t>(nb)]) horizon.emplace_back(u, v);
      }
    }
    for (Index id : visible) {
      Face& f = faces_[id];
      f.alive = false;
      edge_owner_.erase(directed_key(f.a, f.b));
      edge_owner_.erase(directed_key(f.b, f.c));
      edge_owner_.erase(directed_key(f.c, f.a));
    }
    for (auto [u, v] : horizon) add_face(make_face(u, v, p));
  }

  const std::vector<Eigen::Vector3d>& pts_;
  std::vector<Face> faces_;
  std::unordered_map<std::uint64_t, Index> edge_owner_;
};

}  // namespace

Eigen::Index HullTriangulation::edge_index(Eigen::Index a, Eigen::Index b) const {
  if (a > b) std::swap(a, b);
  const std::array<Eigen::Index, 2> key{a, b};
  const auto it = std::lower_bound(edges.begin(), edges.end(), key);
  if (it == edges.end() || *it != key) return -1;
  return static_cast<Eigen::Index>(it - edges.begin());
}

HullTriangulation convex_hull_graph(const std::vector<Direction>& directions) {
  const Index n = static_cast<Index>(directions.size());
  if (n < 4) throw Error(ErrorCode::DegenerateInput, "convex hull needs at least 4 directions");
  std::vector<Eigen::Vector3d> pts;
  pts.reserve(directions.size());
  for (const auto& d : directions) pts.push_back(d.vec());

  IncrementalHull builder(pts);
  builder.build();

  HullTriangulation hull;
  hull.num_vertices = n;
  hull.triangles = builder.triangles();
  std::vector<char> on_hull(static_cast<std::size_t>(n), 0);
  for (const auto& t : hull.triangles) {
    for (Index k = 0; k < 3; ++k) {
      on_hull[static_cast<std::size_t>(t[k])] = 1;
      Index a = t[k];
      Index b = t[(k + 1) % 3];
      if (a > b) std::swap(a, b);
      hull.edges.push_back({a, b});
    }
  }
  std::sort(hull.edges.begin(), hull.edges.end());
  hull.edges.erase(std::unique(hull.edges.begin(), hull.edges.end()), hull.edges.end());
  for (Index i = 0; i < n; ++i) {
    if (!on_hull[static_cast<std::size_t>(i)]) {
      throw Error(ErrorCode::DegenerateInput, "direction " + std::to_string(i) + " is not on the hull");
    }
  }
  const Index euler = n - static_cast<Index>(hull.edges.size()) +
                      static_cast<Index>(hull.triangles.size());
  if (euler != 2) {
    throw Error(ErrorCode::DegenerateInput,
                "hull is not a closed genus-0 triangulation (V - E + F = " + std::to_string(euler) + ")");
  }
  return hull;
}

double hull_max_violation(const HullTriangulation& hull, const std::vector<Direction>& directions) {
  double worst = -std::numeric_limits<double>::infinity();
  for (const auto& t : hull.triangles) {
    const Eigen::Vector3d& a = directions[static_cast<std::size_t>(t[0])].vec();
    const Eigen::Vector3d& b = directions[static_cast<std::size_t>(t[1])].vec();
    const Eigen::Vector3d& c = directions[static_cast<std::size_t>(t[2])].vec();
    const Eigen::Vector3d normal = (b - a).cross(c - a).normalized();
    for (std::size_t i = 0; i < directions.size(); ++i) {
      const auto idx = static_cast<Index>(i);
      if (idx == t[0] || idx == t[1] || idx == t[2]) continue;
      worst = std::max(worst, normal.dot(directions[i].vec() - a));
    }
  }
  return worst;
}

}  // namespace hrtfgraph
