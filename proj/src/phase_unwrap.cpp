#include "hrtfgraph/phase_unwrap.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>

#include "hrtfgraph/dsp.hpp"
#include "hrtfgraph/error.hpp"
#include "hrtfgraph/parallel.hpp"
#include "hrtfgraph/toa.hpp"

namespace hrtfgraph {

namespace {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

constexpr double kTwoPi = 2.0 * std::numbers::pi;
constexpr double kBoundaryGuard = 1e-9;

IntMatrix residuals_of(const MatrixXd& phase, const MatrixXd& wrapped) {
  IntMatrix l(phase.rows(), phase.cols());
  for (Index i = 0; i < phase.rows(); ++i) {
    for (Index f = 0; f < phase.cols(); ++f) {
      l(i, f) = static_cast<std::int64_t>(std::llround((phase(i, f) - wrapped(i, f)) / kTwoPi));
    }
  }
  return l;
}

void check_hull(const PhaseField& field, const HullTriangulation& hull) {
  if (hull.num_vertices != field.num_directions()) {
    throw Error(ErrorCode::ShapeMismatch, "hull has " + std::to_string(hull.num_vertices) +
                                              " vertices, field has " +
                                              std::to_string(field.num_directions()) + " directions");
  }
}

// Per-bin spherical gammas and weights of one slice.
void slice_edges(const MatrixXd& psi, Index f, const HullTriangulation& hull, IntVector& gammas,
                 VectorXd& weights) {
  const auto m = static_cast<Index>(hull.edges.size());
  gammas.resize(m);
  weights.resize(m);
  for (Index e = 0; e < m; ++e) {
    const auto [u, v] = hull.edges[static_cast<std::size_t>(e)];
    bool ambiguous = false;
    gammas(e) = phase_edge_gamma(psi(u, f), psi(v, f), &ambiguous);
    weights(e) = ambiguous ? kWeightFloor : 1.0;
  }
}

}  // namespace

void PhaseField::validate() const {
  if (wrapped.cols() < 1 || wrapped.rows() < 1) throw Error(ErrorCode::ShapeMismatch, "empty phase field");
  if (bin_freqs_hz.size() != wrapped.cols()) {
    throw Error(ErrorCode::ShapeMismatch, "one frequency per bin expected");
  }
  if (!wrapped.allFinite()) throw Error(ErrorCode::InvalidArgument, "non-finite phase");
  if ((wrapped.array() < -std::numbers::pi).any() || (wrapped.array() >= std::numbers::pi).any()) {
    throw Error(ErrorCode::InvalidArgument, "wrapped phase outside [-pi, pi)");
  }
}

std::string to_string(UnwrapMethod method) {
  switch (method) {
    case UnwrapMethod::FreqOnly:
      return "freq";
    case UnwrapMethod::SphericalOnly:
      return "spherical";
    case UnwrapMethod::Joint:
      return "joint";
  }
  return "?";
}

UnwrapMethod parse_unwrap_method(const std::string& name) {
  std::string s = name;
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  if (s == "freq") return UnwrapMethod::FreqOnly;
  if (s == "spherical") return UnwrapMethod::SphericalOnly;
  if (s == "joint") return UnwrapMethod::Joint;
  throw Error(ErrorCode::InvalidArgument, "unknown unwrap method '" + name + "'");
}

double wrap(double x) { return dsp::wrap_phase(x); }

PhaseField phase_field(const HrirSet& set, Ear ear, Index fft_size) {
  if (fft_size < set.num_samples() || fft_size < 2) {
    throw Error(ErrorCode::BadFftSize, "fft size must cover the response length");
  }
  PhaseField field;
  field.fft_size = fft_size;
  field.sample_rate_hz = set.sample_rate_hz;
  field.ear = ear;
  const Index n = set.num_directions();
  const Index bins = fft_size / 2 + 1;
  field.wrapped.resize(n, bins);
  for (Index i = 0; i < n; ++i) {
    const auto s = dsp::spectrum(set.ear(ear).row(i).transpose(), fft_size, set.sample_rate_hz);
    field.wrapped.row(i) = s.wrapped_phase.transpose();
    if (i == 0) field.bin_freqs_hz = s.bin_freqs_hz;
  }
  return field;
}

PhaseField pure_delay_field(const VectorXd& delays_samples, Index fft_size, double sample_rate_hz,
                            MatrixXd* true_phase) {
  if (fft_size < 2) throw Error(ErrorCode::BadFftSize, "fft size must be at least 2");
  const Index bins = fft_size / 2 + 1;
  PhaseField field;
  field.fft_size = fft_size;
  field.sample_rate_hz = sample_rate_hz;
  field.bin_freqs_hz = VectorXd::LinSpaced(bins, 0.0, static_cast<double>(bins - 1)) * sample_rate_hz /
                       static_cast<double>(fft_size);
  const MatrixXd phi = -kTwoPi * delays_samples *
                       VectorXd::LinSpaced(bins, 0.0, static_cast<double>(bins - 1)).transpose() /
                       static_cast<double>(fft_size);
  field.wrapped = phi.unaryExpr([](double x) { return wrap(x); });
  if (true_phase != nullptr) *true_phase = phi;
  return field;
}

std::int64_t phase_edge_gamma(double psi_u, double psi_v, bool* ambiguous) {
  const double d = psi_v - psi_u;
  if (ambiguous != nullptr) *ambiguous = std::abs(std::abs(d) - std::numbers::pi) <= kBoundaryGuard;
  return static_cast<std::int64_t>(std::llround((wrap(d) - d) / kTwoPi));
}

UnwrappedField unwrap_frequency(const PhaseField& field) {
  field.validate();
  if (field.num_bins() < 2) throw Error(ErrorCode::InvalidArgument, "frequency unwrapping needs F >= 2");
  UnwrappedField out;
  out.method = UnwrapMethod::FreqOnly;
  out.bin_freqs_hz = field.bin_freqs_hz;
  out.phase.resize(field.num_directions(), field.num_bins());
  for (Index i = 0; i < field.num_directions(); ++i) {
    out.phase(i, 0) = field.wrapped(i, 0);
    for (Index f = 1; f < field.num_bins(); ++f) {
      out.phase(i, f) = out.phase(i, f - 1) + wrap(field.wrapped(i, f) - field.wrapped(i, f - 1));
    }
  }
  out.residual_l = residuals_of(out.phase, field.wrapped);
  return out;
}

Eigen::VectorXd prealign_samples(const ToaSolution& toa, Ear ear) {
  const VectorXd& tau = ear == Ear::Left ? toa.tau_left : toa.tau_right;
  return tau / static_cast<double>(toa.config.oversample_factor);
}

UnwrappedField unwrap_joint(const PhaseField& field, const HullTriangulation& hull, const JointOptions& options) {
  field.validate();
  check_hull(field, hull);
  const Index n = field.num_directions();
  const Index bins = field.num_bins();
  const bool prealign = options.prealign_samples.size() > 0;
  if (prealign && options.prealign_samples.size() != n) {
    throw Error(ErrorCode::ShapeMismatch, "one pre-alignment delay per direction expected");
  }
  if (prealign && !(field.sample_rate_hz > 0.0)) {
    throw Error(ErrorCode::InvalidArgument, "pre-alignment needs the sample rate");
  }

  // Linear phase of the delays; removing it shrinks spherical differences.
  MatrixXd ramp = MatrixXd::Zero(n, bins);
  if (prealign) {
    ramp = kTwoPi * options.prealign_samples * (field.bin_freqs_hz / field.sample_rate_hz).transpose();
  }
  MatrixXd psi = field.wrapped;
  if (prealign) psi = (field.wrapped + ramp).unaryExpr([](double x) { return wrap(x); });

  const auto m = static_cast<Index>(hull.edges.size());
  const DifferenceGraph base = build_intra_graph(hull, IntVector::Zero(m), VectorXd::Ones(m));
  IntMatrix sph(bins, m);
  IntMatrix freq(std::max<Index>(bins - 1, 0), n);
  StackWeights weights;
  weights.spherical = MatrixXd::Ones(bins, m);
  weights.frequency = MatrixXd::Ones(std::max<Index>(bins - 1, 0), n);
  IntVector g;
  VectorXd w;
  for (Index f = 0; f < bins; ++f) {
    slice_edges(psi, f, hull, g, w);
    sph.row(f) = g.transpose();
    weights.spherical.row(f) = w.transpose();
  }
  for (Index f = 0; f + 1 < bins; ++f) {
    for (Index i = 0; i < n; ++i) {
      bool ambiguous = false;
      freq(f, i) = phase_edge_gamma(psi(i, f), psi(i, f + 1), &ambiguous);
      if (ambiguous) weights.frequency(f, i) = kWeightFloor;
    }
  }
  if (bins == 1) weights.frequency.resize(0, 0);
  const DifferenceGraph graph = stack_frequencies(base, bins, sph, freq, weights);
  const L1Solution sol = solve_l1({graph, options.formulation});

  UnwrappedField out;
  out.method = UnwrapMethod::Joint;
  out.prealigned = prealign;
  out.objective = sol.objective;
  out.bin_freqs_hz = field.bin_freqs_hz;
  out.phase.resize(n, bins);
  for (Index f = 0; f < bins; ++f) {
    for (Index i = 0; i < n; ++i) {
      out.phase(i, f) = psi(i, f) + kTwoPi * static_cast<double>(sol.node_values(f * n + i)) - ramp(i, f);
    }
  }
  out.residual_l = residuals_of(out.phase, field.wrapped);
  return out;
}

UnwrappedField unwrap_spherical_sim(const PhaseField& field, const HullTriangulation& hull, int jobs) {
  field.validate();
  check_hull(field, hull);
  const Index n = field.num_directions();
  const Index bins = field.num_bins();
  MatrixXd phase(n, bins);
  VectorXd objectives(bins);
  parallel_for(bins, jobs, [&](std::int64_t f) {
    IntVector g;
    VectorXd w;
    slice_edges(field.wrapped, f, hull, g, w);
    const L1Solution sol = solve_l1({build_intra_graph(hull, g, w), L1Formulation::Edgelist});
    phase.col(f) = field.wrapped.col(f) + kTwoPi * sol.node_values.cast<double>();
    objectives(f) = sol.objective;
  });

  // Offsets in order: c minimizes sum_i |phi_i[f] + 2 pi c - phi_i[f-1]|.
  std::vector<double> d(static_cast<std::size_t>(n));
  for (Index f = 1; f < bins; ++f) {
    for (Index i = 0; i < n; ++i) d[static_cast<std::size_t>(i)] = (phase(i, f - 1) - phase(i, f)) / kTwoPi;
    std::sort(d.begin(), d.end());
    // The cost is convex in c; integer minimizers lie between the medians' floor and ceil.
    const auto lo = static_cast<std::int64_t>(std::floor(d[static_cast<std::size_t>((n - 1) / 2)]));
    const auto hi = static_cast<std::int64_t>(std::ceil(d[static_cast<std::size_t>(n / 2)]));
    std::int64_t best_c = 0;
    double best = std::numeric_limits<double>::infinity();
    for (std::int64_t c = lo; c <= hi; ++c) {
      double cost = 0.0;
      for (double x : d) cost += std::abs(static_cast<double>(c) - x);
      const bool tie = std::abs(cost - best) <= 1e-9 * (1.0 + best);
      if ((!tie && cost < best) || (tie && std::abs(c) < std::abs(best_c))) {
        best = cost;
        best_c = c;
      }
    }
    phase.col(f).array() += kTwoPi * static_cast<double>(best_c);
  }

  UnwrappedField out;
  out.method = UnwrapMethod::SphericalOnly;
  out.objective = objectives.sum();
  out.bin_freqs_hz = field.bin_freqs_hz;
  out.phase = std::move(phase);
  out.residual_l = residuals_of(out.phase, field.wrapped);
  return out;
}

Eigen::MatrixXd phase_delay(const UnwrappedField& u) {
  const Index bins = u.phase.cols();
  if (bins < 2) throw Error(ErrorCode::InvalidArgument, "phase delay needs F >= 2");
  MatrixXd out(u.phase.rows(), bins - 1);
  for (Index f = 1; f < bins; ++f) out.col(f - 1) = -u.phase.col(f) / (kTwoPi * u.bin_freqs_hz(f));
  return out;
}

void write_long_csv(const Eigen::MatrixXd& values, const Eigen::VectorXd& freqs_hz, const std::filesystem::path& path,
                    const std::string& header_comment) {
  if (values.cols() != freqs_hz.size()) throw Error(ErrorCode::ShapeMismatch, "one frequency per column expected");
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::IoFailure, "cannot write " + path.string());
  out.precision(17);
  if (!header_comment.empty()) out << "# " << header_comment << '\n';
  out << "direction_index,freq_hz,value\n";
  for (Index i = 0; i < values.rows(); ++i) {
    for (Index f = 0; f < values.cols(); ++f) out << i << ',' << freqs_hz(f) << ',' << values(i, f) << '\n';
  }
  if (!out) throw Error(ErrorCode::IoFailure, "write failed for " + path.string());
}

}  // namespace hrtfgraph
