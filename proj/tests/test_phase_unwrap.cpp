#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <random>

#include "hrtfgraph/error.hpp"
#include "hrtfgraph/phase_unwrap.hpp"
#include "hrtfgraph/sphere_grids.hpp"
#include "hrtfgraph/synth.hpp"
#include "hrtfgraph/toa.hpp"

using namespace hrtfgraph;
using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;
constexpr double kPi = std::numbers::pi;

namespace {

// Left-ear rigid-sphere delays in samples.
VectorXd sphere_delays(const std::vector<Direction>& dirs, double fs, double radius = 0.0875) {
  VectorXd tau(static_cast<Index>(dirs.size()));
  const Direction ear(Eigen::Vector3d::UnitY());
  for (std::size_t i = 0; i < dirs.size(); ++i) {
    tau(static_cast<Index>(i)) = fs * woodworth_delay_s(dirs[i].angle_to(ear), radius, 343.0);
  }
  return tau;
}

double max_edge_step(const MatrixXd& phi, const HullTriangulation& hull) {
  double worst = 0.0;
  for (Index f = 0; f < phi.cols(); ++f) {
    for (const auto& [u, v] : hull.edges) worst = std::max(worst, std::abs(phi(v, f) - phi(u, f)));
  }
  for (Index f = 0; f + 1 < phi.cols(); ++f) worst = std::max(worst, (phi.col(f + 1) - phi.col(f)).cwiseAbs().maxCoeff());
  return worst;
}

void check_wrap_consistent(const UnwrappedField& u, const PhaseField& field) {
  CHECK(u.phase.rows() == field.wrapped.rows());
  CHECK(u.phase.cols() == field.wrapped.cols());
  const MatrixXd gap = u.phase - field.wrapped - 2.0 * kPi * u.residual_l.cast<double>();
  CHECK(gap.cwiseAbs().maxCoeff() < 1e-9);
  double worst = 0.0;
  for (Index i = 0; i < u.phase.rows(); ++i) {
    for (Index f = 0; f < u.phase.cols(); ++f) {
      const double d = std::abs(wrap(u.phase(i, f)) - field.wrapped(i, f));
      worst = std::max(worst, std::min(d, 2.0 * kPi - d));
    }
  }
  CHECK(worst < 1e-9);
}

std::vector<Direction> tetrahedron() {
  return {Direction::normalized({1, 1, 1}), Direction::normalized({1, -1, -1}), Direction::normalized({-1, 1, -1}),
          Direction::normalized({-1, -1, 1})};
}

}  // namespace

TEST_CASE("wrap") {
  CHECK(wrap(0.0) == 0.0);
  CHECK(wrap(kPi) == -kPi);
  CHECK(wrap(3.0 * kPi / 2.0) == doctest::Approx(-kPi / 2.0));
  CHECK(wrap(-kPi) == -kPi);
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-50.0, 50.0);
  for (int k = 0; k < 200; ++k) {
    const double x = u(rng);
    const double w = wrap(x);
    CHECK(w >= -kPi);
    CHECK(w < kPi);
    for (int m : {-3, 1, 7}) CHECK(std::abs(wrap(x + 2.0 * kPi * m) - w) < 1e-9);
  }
}

TEST_CASE("edge datum") {
  bool amb = true;
  CHECK(phase_edge_gamma(0.1, 0.5, &amb) == 0);
  CHECK_FALSE(amb);
  CHECK(phase_edge_gamma(3.0, -3.0, &amb) == 1);   // true step +0.28 crosses the cut
  CHECK(phase_edge_gamma(-3.0, 3.0, &amb) == -1);
  phase_edge_gamma(-kPi / 2, kPi / 2, &amb);
  CHECK(amb);
  phase_edge_gamma(0.0, kPi - 1e-12, &amb);
  CHECK(amb);
}

TEST_CASE("frequency unwrapping examples") {
  PhaseField lin;
  lin.wrapped.resize(1, 12);
  lin.bin_freqs_hz = VectorXd::LinSpaced(12, 0, 11);
  MatrixXd truth(1, 12);
  for (Index f = 0; f < 12; ++f) {
    truth(0, f) = -0.4 * kPi * static_cast<double>(f);
    lin.wrapped(0, f) = wrap(truth(0, f));
  }
  const auto u = unwrap_frequency(lin);
  CHECK((u.phase - truth).cwiseAbs().maxCoeff() < 1e-12);
  check_wrap_consistent(u, lin);

  PhaseField flat = lin;
  flat.wrapped.setConstant(0.7);
  const auto c = unwrap_frequency(flat);
  CHECK((c.phase - flat.wrapped).cwiseAbs().maxCoeff() == 0.0);
  CHECK(c.residual_l.cwiseAbs().maxCoeff() == 0);

  PhaseField hand;
  hand.wrapped.resize(1, 3);
  hand.wrapped << 0.0, 3.0, 6.0 - 2.0 * kPi;
  hand.bin_freqs_hz = VectorXd::LinSpaced(3, 0, 2);
  const auto h = unwrap_frequency(hand);
  CHECK(h.phase(0, 2) == doctest::Approx(6.0));
  CHECK(h.residual_l(0, 2) == 1);

  PhaseField one;
  one.wrapped = MatrixXd::Zero(3, 1);
  one.bin_freqs_hz = VectorXd::Zero(1);
  CHECK_THROWS_AS(unwrap_frequency(one), Error);
  PhaseField bad = lin;
  bad.wrapped(0, 0) = kPi;
  CHECK_THROWS_AS(unwrap_frequency(bad), Error);
}

TEST_CASE("joint unwrapping recovers pure-delay fields satisfying the edge condition") {
  const auto dirs = fibonacci_sphere(150);
  const auto hull = convex_hull_graph(dirs);
  const double fs = 8000.0;
  MatrixXd truth;
  const auto field = pure_delay_field(sphere_delays(dirs, fs), 64, fs, &truth);
  REQUIRE(max_edge_step(truth, hull) < kPi);
  for (auto form : {L1Formulation::Edgelist, L1Formulation::Simplices}) {
    const auto u = unwrap_joint(field, hull, {form, {}});
    CHECK(u.objective == 0.0);
    CHECK((u.phase - truth).cwiseAbs().maxCoeff() < 1e-9);
    check_wrap_consistent(u, field);
    const MatrixXd pd = phase_delay(u);
    const MatrixXd want = phase_delay({truth, {}, UnwrapMethod::Joint, false, 0.0, field.bin_freqs_hz});
    CHECK((pd - want).cwiseAbs().maxCoeff() <= 1e-6);
  }
}

TEST_CASE("a global offset in the field only shifts the solution by whole turns") {
  const auto dirs = fibonacci_sphere(60);
  const auto hull = convex_hull_graph(dirs);
  MatrixXd truth;
  auto field = pure_delay_field(sphere_delays(dirs, 8000.0), 32, 8000.0, &truth);
  // Constant phase added everywhere keeps every edge difference.
  field.wrapped = (truth.array() + 2.5).matrix().unaryExpr([](double x) { return wrap(x); });
  const auto u = unwrap_joint(field, hull);
  const MatrixXd diff = (u.phase - truth).array() - 2.5;
  const double turns = diff(0, 0) / (2.0 * kPi);
  CHECK(std::abs(turns - std::round(turns)) < 1e-9);
  CHECK((diff.array() - diff(0, 0)).abs().maxCoeff() < 1e-9);
}

TEST_CASE("pre-alignment") {
  const auto dirs = fibonacci_sphere(100);
  const auto hull = convex_hull_graph(dirs);
  const double fs = 44100.0;
  MatrixXd truth;
  const VectorXd tau = sphere_delays(dirs, fs).array() + 44.1;
  const auto field = pure_delay_field(tau, 256, fs, &truth);
  REQUIRE(max_edge_step(truth, hull) > kPi);

  const auto plain = unwrap_joint(field, hull);
  JointOptions opt;
  opt.prealign_samples = (tau * 10.0).array().round() / 10.0;  // fine-sample estimates
  const auto aligned = unwrap_joint(field, hull, opt);
  CHECK(aligned.prealigned);
  CHECK(aligned.objective < plain.objective);
  check_wrap_consistent(aligned, field);
  check_wrap_consistent(plain, field);
  CHECK((aligned.phase - truth).cwiseAbs().maxCoeff() < 1e-9);

  // Where both runs are exact, restoring the removed ramp gives the same phase.
  const auto small = pure_delay_field(sphere_delays(dirs, 8000.0), 64, 8000.0);
  JointOptions near;
  near.prealign_samples = sphere_delays(dirs, 8000.0) * 0.5;
  const auto a = unwrap_joint(small, hull);
  const auto b = unwrap_joint(small, hull, near);
  CHECK((a.phase - b.phase).cwiseAbs().maxCoeff() < 1e-9);

  JointOptions wrong;
  wrong.prealign_samples = VectorXd::Zero(3);
  CHECK_THROWS_AS(unwrap_joint(field, hull, wrong), Error);
}

TEST_CASE("pre-alignment delays come from the matching ear") {
  ToaSolution toa;
  toa.tau_left = VectorXd::Constant(3, 20.0);
  toa.tau_right = VectorXd::Constant(3, 40.0);
  toa.config.oversample_factor = 10;
  CHECK(prealign_samples(toa, Ear::Left)(0) == 2.0);
  CHECK(prealign_samples(toa, Ear::Right)(2) == 4.0);
}

TEST_CASE("spherical simulation") {
  const auto dirs = fibonacci_sphere(80);
  const auto hull = convex_hull_graph(dirs);
  MatrixXd truth;
  const auto field = pure_delay_field(sphere_delays(dirs, 8000.0), 64, 8000.0, &truth);
  const auto s = unwrap_spherical_sim(field, hull, 2);
  const auto j = unwrap_joint(field, hull);
  const MatrixXd diff = s.phase - j.phase;
  CHECK((diff.array() - diff(0, 0)).abs().maxCoeff() < 1e-9);
  CHECK(std::abs(std::remainder(diff(0, 0), 2.0 * kPi)) < 1e-9);
  check_wrap_consistent(s, field);
  CHECK(s.method == UnwrapMethod::SphericalOnly);

  // One bin: the same problem as the joint graph.
  PhaseField slice = field;
  slice.wrapped = field.wrapped.col(20);
  slice.bin_freqs_hz = field.bin_freqs_hz.segment(20, 1);
  const auto s1 = unwrap_spherical_sim(slice, hull);
  const auto j1 = unwrap_joint(slice, hull);
  CHECK((s1.phase - j1.phase).cwiseAbs().maxCoeff() < 1e-12);
  CHECK(s1.objective == j1.objective);
}

TEST_CASE("spherical simulation offset ties go to the smallest magnitude") {
  const auto dirs = tetrahedron();
  const auto hull = convex_hull_graph(dirs);
  for (double sign : {1.0, -1.0}) {
    PhaseField f;
    f.bin_freqs_hz = VectorXd::LinSpaced(2, 0, 1);
    f.wrapped = MatrixXd::Zero(4, 2);
    VectorXd x(4);
    x << -0.4, -0.45, -0.55, -0.6;
    x *= sign;
    for (Index i = 0; i < 4; ++i) f.wrapped(i, 1) = wrap(2.0 * kPi * x(i));
    const auto u = unwrap_spherical_sim(f, hull);
    // Offsets 0 and -sign tie; 0 is kept.
    CHECK((u.phase.col(1) - 2.0 * kPi * x).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("wrap consistency on random fields") {
  const auto dirs = fibonacci_sphere(30);
  const auto hull = convex_hull_graph(dirs);
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(-kPi, kPi);
  PhaseField f;
  f.wrapped.resize(30, 9);
  for (Index i = 0; i < f.wrapped.size(); ++i) f.wrapped(i) = wrap(u(rng));
  f.bin_freqs_hz = VectorXd::LinSpaced(9, 0, 8);
  check_wrap_consistent(unwrap_frequency(f), f);
  check_wrap_consistent(unwrap_spherical_sim(f, hull), f);
  const auto j = unwrap_joint(f, hull);
  check_wrap_consistent(j, f);
  CHECK(j.residual_l(0, 0) == 0);
  CHECK(unwrap_joint(f, hull).phase == j.phase);  // deterministic
  CHECK_THROWS_AS(unwrap_joint(f, convex_hull_graph(fibonacci_sphere(31))), Error);
}

TEST_CASE("phase delay") {
  const auto field = pure_delay_field(VectorXd::Constant(2, 3.0), 32, 8000.0);
  const auto u = unwrap_frequency(field);
  const MatrixXd pd = phase_delay(u);
  CHECK(pd.cols() == 16);
  CHECK((pd.array() - 3.0 / 8000.0).abs().maxCoeff() < 1e-15);
  UnwrappedField twice = u;
  twice.phase *= 2.0;
  CHECK((phase_delay(twice) - 2.0 * pd).cwiseAbs().maxCoeff() < 1e-15);
  UnwrappedField zero = u;
  zero.phase.setZero();
  CHECK(phase_delay(zero).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("phase field from responses") {
  SynthConfig c;
  c.num_directions = 20;
  const auto s = make_rigid_sphere_set(c);
  const auto f = phase_field(s.set, Ear::Right, 512);
  CHECK(f.num_bins() == 257);
  CHECK(f.bin_freqs_hz(256) == doctest::Approx(22050.0));
  CHECK(f.ear == Ear::Right);
  CHECK_NOTHROW(f.validate());
  CHECK_THROWS_AS(phase_field(s.set, Ear::Left, 100), Error);
}

TEST_CASE("method names and csv") {
  CHECK(parse_unwrap_method("Joint") == UnwrapMethod::Joint);
  CHECK(to_string(UnwrapMethod::SphericalOnly) == "spherical");
  CHECK_THROWS_AS(parse_unwrap_method("quality"), Error);
  const auto path = std::filesystem::temp_directory_path() / "hrtfgraph_pd.csv";
  write_long_csv(MatrixXd::Ones(2, 3), VectorXd::LinSpaced(3, 10, 30), path, "joint");
  std::ifstream in(path);
  std::string line;
  std::getline(in, line);
  CHECK(line == "# joint");
  std::getline(in, line);
  CHECK(line == "direction_index,freq_hz,value");
  std::getline(in, line);
  CHECK(line == "0,10,1");
}
