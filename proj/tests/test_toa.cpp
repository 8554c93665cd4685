#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>

#include "hrtfgraph/dsp.hpp"
#include "hrtfgraph/error.hpp"
#include "hrtfgraph/l1_flow_solver.hpp"
#include "hrtfgraph/sphere_grids.hpp"
#include "hrtfgraph/synth.hpp"
#include "hrtfgraph/toa.hpp"

using namespace hrtfgraph;
using Eigen::Index;
using Eigen::VectorXd;

namespace {

const SynthSet& synthetic() {
  static const SynthSet s = [] {
    SynthConfig c;
    c.num_directions = 80;
    c.num_samples = 128;
    return make_rigid_sphere_set(c);
  }();
  return s;
}

HrirSet identical_set() {
  HrirSet s = synthetic().set;
  for (Index i = 0; i < s.num_directions(); ++i) {
    s.left.row(i) = synthetic().set.left.row(0);
    s.right.row(i) = synthetic().set.left.row(0);
  }
  return s;
}

}  // namespace

TEST_CASE("config parsing and validation") {
  CHECK(parse_algorithm("EDGY") == Algorithm::Edgy);
  CHECK(parse_weighting("corr") == Weighting::Corr);
  CHECK_THROWS_AS(parse_algorithm("ilp"), Error);
  ToaConfig c;
  CHECK_NOTHROW(c.validate());
  c.delta_weight = 0.0;
  CHECK_THROWS_AS(c.validate(), Error);
  c = {};
  c.sigma_deg = -1.0;
  CHECK_THROWS_AS(c.validate(), Error);
  c = {};
  c.use_minphase = true;
  c.use_cross = true;
  CHECK(c.label() == "edgy-exp-min-cross");
}

TEST_CASE("identical responses give zero gammas and flat TOAs") {
  const auto s = identical_set();
  const auto hull = convex_hull_graph(s.directions);
  const auto m = measure_intra_gammas(s, hull, EarSelector::Left, 4);
  CHECK(m.gamma.cwiseAbs().maxCoeff() == 0);
  CHECK((m.peak.array() - 1.0).abs().maxCoeff() < 1e-9);
  const auto x = measure_cross_gammas(s, 4);
  CHECK(x.gamma.cwiseAbs().maxCoeff() == 0);
  for (auto a : {Algorithm::Simp, Algorithm::Edgy, Algorithm::Ls}) {
    ToaConfig c;
    c.algorithm = a;
    c.use_cross = true;
    c.oversample_factor = 4;
    const auto sol = estimate_toa(s, c);
    CHECK(sol.tau_left.cwiseAbs().maxCoeff() < 1e-9);
    CHECK(sol.itd_us.cwiseAbs().maxCoeff() < 1e-9);
  }
  CHECK_THROWS_AS(measure_intra_gammas(s, hull, EarSelector::Both, 4), Error);
}

TEST_CASE("constructed shifts are measured exactly") {
  HrirSet s = synthetic().set;
  const auto hull = convex_hull_graph(s.directions);
  const auto [i, j] = hull.edges.front();
  const VectorXd base = s.left.row(i).transpose();
  // Delay by 3 fine samples at factor 10 = 0.3 coarse samples.
  s.left.row(j) = dsp::fractional_delay(base, -0.3).transpose();
  const auto m = measure_intra_gammas(s, hull, EarSelector::Left, 10);
  CHECK(m.gamma(0) == 3);

  HrirSet lr = s;
  for (Index k = 0; k < lr.num_directions(); ++k) {
    lr.right.row(k) = dsp::fractional_delay(VectorXd(lr.left.row(k).transpose()), -1.7).transpose();
  }
  const auto x = measure_cross_gammas(lr, 10);
  CHECK(x.gamma.minCoeff() == 17);
  CHECK(x.gamma.maxCoeff() == 17);
  CHECK((x.peak.array() <= 1.0 + 1e-12).all());
  CHECK((x.peak.array() >= -1.0 - 1e-12).all());

  // Reversing the edge flips the lag.
  HullTriangulation flipped = hull;
  for (auto& e : flipped.edges) std::swap(e[0], e[1]);
  const auto back = measure_intra_gammas(s, flipped, EarSelector::Left, 10);
  CHECK(back.gamma(0) == -3);
}

TEST_CASE("minimum-phase gammas estimate absolute delay") {
  const auto& syn = synthetic();
  const auto m = measure_minphase_gammas(syn.set, EarSelector::Left, 10);
  for (Index i = 0; i < syn.set.num_directions(); ++i) {
    CHECK(std::abs(static_cast<double>(m.gamma(i)) - syn.tau_left_s(i) * 441000.0) <= 1.0);
    CHECK(m.peak(i) > 0.99);
  }
  // Already minimum phase: zero delay.
  HrirSet mp = syn.set;
  for (Index i = 0; i < mp.num_directions(); ++i) {
    mp.left.row(i) = dsp::minimum_phase(VectorXd(syn.set.left.row(i).transpose())).transpose();
  }
  CHECK(measure_minphase_gammas(mp, EarSelector::Left, 10).gamma.cwiseAbs().maxCoeff() <= 1);
}

TEST_CASE("weights") {
  const auto dirs = fibonacci_sphere(30);
  const auto hull = convex_hull_graph(dirs);
  ToaConfig c;
  const auto none = compute_weights(Weighting::None, EdgeKind::IntraAural, hull, dirs, nullptr, c);
  CHECK(none.size() == static_cast<Index>(hull.edges.size()));
  CHECK(none.minCoeff() == 1.0);

  const std::vector<Direction> pair{Direction::from_az_colat_deg(0, 90), Direction::from_az_colat_deg(8, 90),
                                    Direction::from_az_colat_deg(0, 0), Direction::from_az_colat_deg(0, 180)};
  HullTriangulation h;
  h.num_vertices = 4;
  h.edges = {{0, 1}, {0, 0}};
  const auto w = compute_weights(Weighting::Exp, EdgeKind::IntraAural, h, pair, nullptr, c);
  CHECK(w(0) == doctest::Approx(std::exp(-1.0)).epsilon(1e-9));
  CHECK(w(1) == doctest::Approx(1.0));

  const auto inter = compute_weights(Weighting::Exp, EdgeKind::InterAural, hull, pair, nullptr, c);
  CHECK(inter(0) == doctest::Approx(1.0));  // on the y = 0 plane
  const auto lateral = compute_weights(Weighting::Exp, EdgeKind::InterAural, hull,
                                       {Direction::from_az_colat_deg(90, 90)}, nullptr, c);
  CHECK(lateral(0) < 1e-5);
  const auto delta = compute_weights(Weighting::Exp, EdgeKind::AbsoluteDelta, hull, dirs, nullptr, c);
  CHECK(delta.maxCoeff() == 0.1);

  VectorXd peaks = VectorXd::Zero(static_cast<Index>(hull.edges.size()));
  peaks(1) = 0.7;
  peaks(2) = -0.3;
  const auto corr = compute_weights(Weighting::Corr, EdgeKind::IntraAural, hull, dirs, &peaks, c);
  CHECK(corr(0) == kWeightFloor);
  CHECK(corr(1) == 0.7);
  CHECK(corr(2) == kWeightFloor);
  CHECK_THROWS_AS(compute_weights(Weighting::Corr, EdgeKind::IntraAural, hull, dirs, nullptr, c), Error);
}

TEST_CASE("all configurations recover the synthetic delays") {
  const auto& syn = synthetic();
  const auto hull = convex_hull_graph(syn.set.directions);
  ToaConfig all;
  all.use_cross = true;
  all.use_minphase = true;
  const auto features = measure_features(syn.set, hull, all);
  const double fine = 441000.0;
  for (auto a : {Algorithm::Simp, Algorithm::Edgy, Algorithm::Ls}) {
    for (auto w : {Weighting::None, Weighting::Exp, Weighting::Corr}) {
      for (int flags = 0; flags < 4; ++flags) {
        ToaConfig c;
        c.algorithm = a;
        c.weighting = w;
        c.use_minphase = (flags & 1) != 0;
        c.use_cross = (flags & 2) != 0;
        const auto sol = solve_toa(syn.set, hull, features, c);
        CAPTURE(c.label());
        Index good = 0;
        for (const auto& [i, j] : hull.edges) {
          const double want = (syn.tau_left_s(j) - syn.tau_left_s(i)) * fine;
          good += std::abs(sol.tau_left(j) - sol.tau_left(i) - want) <= 1.0;
        }
        CHECK(static_cast<double>(good) >= 0.97 * static_cast<double>(hull.edges.size()));
        const VectorXd truth = (syn.tau_left_s - syn.tau_right_s) * 1e6;
        CHECK((sol.itd_us - truth).cwiseAbs().mean() < 3.0);
        CHECK((itd_of(sol, syn.set.sample_rate_hz) - sol.itd_us).cwiseAbs().maxCoeff() < 1e-9);
        if (c.use_minphase) {
          CHECK(std::abs(sol.tau_left.mean() - syn.tau_left_s.mean() * fine) < 2.0);
        } else if (c.use_cross) {
          CHECK(std::abs(sol.tau_left.sum() + sol.tau_right.sum()) < 1e-6);
        } else {
          CHECK(std::abs(sol.tau_left.sum()) < 1e-6);
          CHECK(std::abs(sol.tau_right.sum()) < 1e-6);
        }
      }
    }
  }
}

TEST_CASE("simp and edgy reach the same objective on assembled graphs") {
  const auto& syn = synthetic();
  const auto hull = convex_hull_graph(syn.set.directions);
  ToaConfig c;
  c.use_cross = true;
  c.use_minphase = true;
  const auto features = measure_features(syn.set, hull, c);
  const auto g = assemble_graph(hull, syn.set.directions, features, c, Ear::Left);
  const auto a = solve_l1({g, L1Formulation::Simplices});
  const auto b = solve_l1({g, L1Formulation::Edgelist});
  CHECK(a.objective == doctest::Approx(b.objective).epsilon(1e-12));
}

TEST_CASE("cross-feature consistency on noiseless symmetric data") {
  const auto& syn = synthetic();
  const auto hull = convex_hull_graph(syn.set.directions);
  ToaConfig c;
  c.use_cross = true;
  c.weighting = Weighting::None;
  const auto features = measure_features(syn.set, hull, c);
  const auto sol = solve_toa(syn.set, hull, features, c);
  Index matched = 0;
  for (Index i = 0; i < syn.set.num_directions(); ++i) {
    matched += std::abs(sol.tau_right(i) - sol.tau_left(i) - static_cast<double>(features.cross->gamma(i))) <= 1.0;
  }
  CHECK(static_cast<double>(matched) >= 0.95 * static_cast<double>(syn.set.num_directions()));
}

TEST_CASE("alignment removes relative delays") {
  const auto& syn = synthetic();
  ToaConfig c;
  c.use_cross = true;
  const auto sol = estimate_toa(syn.set, c);
  const auto hull = convex_hull_graph(syn.set.directions);
  const auto m = measure_intra_gammas(sol.aligned, hull, EarSelector::Left, 10);
  Index near_zero = 0;
  for (Index e = 0; e < m.gamma.size(); ++e) near_zero += std::abs(m.gamma(e)) <= 1;
  CHECK(near_zero == m.gamma.size());
  // Gauge shift leaves ITDs unchanged.
  auto shifted = sol;
  shifted.tau_left.array() += 12.5;
  shifted.tau_right.array() += 12.5;
  CHECK((itd_of(shifted, syn.set.sample_rate_hz) - sol.itd_us).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("interaural delay unit conversion") {
  HrirSet s = identical_set();
  for (Index k = 0; k < s.num_directions(); ++k) {
    s.left.row(k) = dsp::fractional_delay(VectorXd(s.right.row(k).transpose()), -0.5).transpose();
  }
  ToaConfig c;
  c.use_cross = true;
  const auto sol = estimate_toa(s, c);
  CHECK((sol.itd_us.array() - 5.0 / 0.441).abs().maxCoeff() < 1e-6);
}

TEST_CASE("csv export") {
  const auto& syn = synthetic();
  const auto sol = estimate_toa(syn.set, ToaConfig{});
  const auto path = std::filesystem::temp_directory_path() / "hrtfgraph_toa.csv";
  write_toa_csv(sol, syn.set, path, "config edgy-exp");
  std::ifstream in(path);
  std::string line;
  std::getline(in, line);
  CHECK(line == "# config edgy-exp");
  std::getline(in, line);
  CHECK(line == "index,az_deg,colat_deg,tau_left_us,tau_right_us,itd_us");
  Index rows = 0;
  while (std::getline(in, line)) ++rows;
  CHECK(rows == syn.set.num_directions());
}
