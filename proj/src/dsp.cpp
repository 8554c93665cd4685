#include "hrtfgraph/dsp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include <unsupported/Eigen/FFT>

#include "hrtfgraph/error.hpp"

namespace hrtfgraph::dsp {

namespace {

// Eigen::FFT caches plans internally and is not safe to share across threads.
Eigen::FFT<double>& fft_engine() {
  thread_local Eigen::FFT<double> engine;
  return engine;
}

Eigen::Index next_pow2(Eigen::Index n) {
  Eigen::Index p = 1;
  while (p < n) p <<= 1;
  return p;
}

double energy_norm(const Eigen::Ref<const Eigen::VectorXd>& x) {
  const double e = x.norm();
  if (!(e > 0.0) || !std::isfinite(e)) {
    throw Error(ErrorCode::ZeroEnergySignal, "signal has zero or non-finite energy");
  }
  return e;
}

}  // namespace

ComplexVector fft(const Eigen::Ref<const Eigen::VectorXd>& x, Eigen::Index n) {
  if (n < x.size()) throw Error(ErrorCode::BadFftSize, "fft size smaller than signal");
  std::vector<double> in(static_cast<std::size_t>(n), 0.0);
  std::copy(x.data(), x.data() + x.size(), in.begin());
  std::vector<std::complex<double>> out;
  fft_engine().fwd(out, in);
  return Eigen::Map<ComplexVector>(out.data(), n);
}

Eigen::VectorXd ifft_real(const ComplexVector& spectrum) {
  std::vector<std::complex<double>> in(spectrum.data(), spectrum.data() + spectrum.size());
  std::vector<double> out;
  fft_engine().inv(out, in);
  return Eigen::Map<Eigen::VectorXd>(out.data(), spectrum.size());
}

Eigen::VectorXd oversample(const Eigen::Ref<const Eigen::VectorXd>& signal, int factor) {
  if (signal.size() == 0) throw Error(ErrorCode::EmptySignal, "cannot oversample an empty signal");
  if (factor < 1) throw Error(ErrorCode::InvalidArgument, "oversampling factor must be >= 1");
  if (factor == 1) return signal;

  const Eigen::Index t = signal.size();
  const Eigen::Index n = t * factor;
  const ComplexVector x = fft(signal, t);
  ComplexVector y = ComplexVector::Zero(n);
  const Eigen::Index half = (t - 1) / 2;  // strictly positive bins below Nyquist
  y[0] = x[0];
  for (Eigen::Index k = 1; k <= half; ++k) {
    y[k] = x[k];
    y[n - k] = x[t - k];
  }
  if (t % 2 == 0) {
    // Split the Nyquist bin so the interpolant stays real.
    y[t / 2] = 0.5 * x[t / 2];
    y[n - t / 2] = 0.5 * x[t / 2];
  }
  return ifft_real(y) * static_cast<double>(factor);
}

Eigen::Index correlation_fft_size(Eigen::Index length) {
  // Smallest 5-smooth size that holds the full linear correlation.
  for (Eigen::Index n = std::max<Eigen::Index>(2 * length - 1, 1);; ++n) {
    Eigen::Index r = n;
    for (Eigen::Index p : {2, 3, 5}) {
      while (r % p == 0) r /= p;
    }
    if (r == 1) return n;
  }
}

CorrelationOperand::CorrelationOperand(const Eigen::Ref<const Eigen::VectorXd>& signal,
                                       Eigen::Index fft_size)
    : length_(signal.size()) {
  if (signal.size() == 0) throw Error(ErrorCode::EmptySignal, "empty correlation operand");
  const double e = energy_norm(signal);
  spectrum_ = fft(signal / e, fft_size);
}

namespace {
// c[k] = sum_t a[t] b[t + k] with circular index; picks the maximizing lag.
CorrelationResult best_lag(const Eigen::VectorXd& c, long max_lag);
}  // namespace

CorrelationResult xcorr_lag(const CorrelationOperand& a, const CorrelationOperand& b,
                            long max_lag) {
  const Eigen::Index n = a.fft_size();
  if (b.fft_size() != n || n < a.length() + b.length() - 1) {
    throw Error(ErrorCode::BadFftSize, "correlation operands need a common linear-size FFT");
  }
  const long full = static_cast<long>(std::max(a.length(), b.length())) - 1;
  if (max_lag < 0) max_lag = full;
  max_lag = std::min(max_lag, full);

  const ComplexVector prod = a.spectrum().conjugate().cwiseProduct(b.spectrum());
  return best_lag(ifft_real(prod), max_lag);
}

CorrelationResult circular_xcorr_lag(const Eigen::Ref<const Eigen::VectorXd>& a,
                                     const Eigen::Ref<const Eigen::VectorXd>& b, long max_lag) {
  const Eigen::Index n = a.size();
  if (b.size() != n) throw Error(ErrorCode::LengthMismatch, "circular correlation needs equal lengths");
  const CorrelationOperand ca(a, n);
  const CorrelationOperand cb(b, n);
  const long full = static_cast<long>((n - 1) / 2);
  max_lag = max_lag < 0 ? full : std::min(max_lag, full);
  return best_lag(ifft_real(ca.spectrum().conjugate().cwiseProduct(cb.spectrum())), max_lag);
}

namespace {

CorrelationResult best_lag(const Eigen::VectorXd& c, long max_lag) {
  const auto n = static_cast<long>(c.size());
  auto at = [&](long lag) { return lag >= 0 ? c[lag] : c[n + lag]; };

  double best = -std::numeric_limits<double>::infinity();
  for (long lag = -max_lag; lag <= max_lag; ++lag) best = std::max(best, at(lag));
  // Candidates within rounding of the maximum are ties; scan outward from 0.
  const double tie = 1e-12;
  for (long mag = 0; mag <= max_lag; ++mag) {
    if (at(-mag) >= best - tie) return {-mag, std::clamp(at(-mag), -1.0, 1.0)};
    if (at(mag) >= best - tie) return {mag, std::clamp(at(mag), -1.0, 1.0)};
  }
  return {0, std::clamp(at(0), -1.0, 1.0)};
}

}  // namespace

CorrelationResult xcorr_lag(const Eigen::Ref<const Eigen::VectorXd>& a,
                            const Eigen::Ref<const Eigen::VectorXd>& b, long max_lag) {
  const Eigen::Index n = correlation_fft_size(std::max(a.size(), b.size()));
  return xcorr_lag(CorrelationOperand(a, n), CorrelationOperand(b, n), max_lag);
}

namespace {

Eigen::VectorXd folded_cepstrum_response(const Eigen::Ref<const Eigen::VectorXd>& h, Eigen::Index n,
                                         bool& floored) {
  const ComplexVector spec = fft(h, n);
  const Eigen::VectorXd mag = spec.cwiseAbs();
  const double floor = 1e-12 * mag.maxCoeff();
  ComplexVector log_mag(n);
  for (Eigen::Index k = 0; k < n; ++k) {
    double m = mag[k];
    if (m < floor) {
      m = floor;
      floored = true;
    }
    log_mag[k] = std::log(m);
  }
  const Eigen::VectorXd cep = ifft_real(log_mag);
  // Fold the real cepstrum onto its causal part.
  Eigen::VectorXd folded = Eigen::VectorXd::Zero(n);
  folded[0] = cep[0];
  folded[n / 2] = cep[n / 2];
  folded.segment(1, n / 2 - 1) = 2.0 * cep.segment(1, n / 2 - 1);
  ComplexVector min_spec = fft(folded, n);
  for (Eigen::Index k = 0; k < n; ++k) min_spec[k] = std::exp(min_spec[k]);
  return ifft_real(min_spec).head(h.size());
}

}  // namespace

Eigen::VectorXd minimum_phase(const Eigen::Ref<const Eigen::VectorXd>& h, MinimumPhaseInfo* info,
                              Eigen::Index max_fft_size) {
  const Eigen::Index t = h.size();
  if (t == 0) throw Error(ErrorCode::EmptySignal, "empty response");
  energy_norm(h);
  // Cepstral aliasing shrinks with the transform length; zeros close to the
  // unit circle need more than 8 T.
  Eigen::Index cap = std::max<Eigen::Index>(next_pow2(8 * t), next_pow2(std::min<Eigen::Index>(256 * t, 1 << 20)));
  if (max_fft_size > 0) cap = std::min(cap, max_fft_size);
  Eigen::Index n = next_pow2(8 * t);
  bool floored = false;
  Eigen::VectorXd out = folded_cepstrum_response(h, n, floored);
  const double tol = 1e-12 * h.cwiseAbs().maxCoeff();
  while (n < cap) {
    n *= 2;
    Eigen::VectorXd next = folded_cepstrum_response(h, n, floored);
    const double change = (next - out).cwiseAbs().maxCoeff();
    out = std::move(next);
    if (change <= tol) break;
  }
  if (info != nullptr) {
    info->spectral_zero_floored = floored;
    info->internal_fft_size = n;
  }
  return out;
}

Eigen::VectorXd fractional_delay_full(const Eigen::Ref<const Eigen::VectorXd>& h, double shift) {
  const Eigen::Index t = h.size();
  if (t == 0) throw Error(ErrorCode::EmptySignal, "empty response");
  if (!std::isfinite(shift) || std::abs(shift) >= 0.5 * static_cast<double>(t)) {
    throw Error(ErrorCode::ShiftTooLarge,
                "shift " + std::to_string(shift) + " exceeds half the response length");
  }
  const Eigen::Index n = 2 * t + 1;
  ComplexVector spec = fft(h, n);
  const double base = 2.0 * std::numbers::pi / static_cast<double>(n);
  for (Eigen::Index k = 1; k < n; ++k) {
    const Eigen::Index signed_k = k <= n / 2 ? k : k - n;
    spec[k] *= std::polar(1.0, base * static_cast<double>(signed_k) * shift);
  }
  return ifft_real(spec);
}

Eigen::VectorXd fractional_delay(const Eigen::Ref<const Eigen::VectorXd>& h, double shift) {
  if (shift == 0.0) return h;
  return fractional_delay_full(h, shift).head(h.size());
}

Spectrum spectrum(const Eigen::Ref<const Eigen::VectorXd>& h, Eigen::Index fft_size,
                  double sample_rate_hz) {
  if (fft_size < h.size() || fft_size < 2) {
    throw Error(ErrorCode::BadFftSize, "fft size " + std::to_string(fft_size) +
                                           " smaller than response length");
  }
  const ComplexVector x = fft(h, fft_size);
  const Eigen::Index f = fft_size / 2 + 1;
  Spectrum s;
  s.magnitude_db.resize(f);
  s.wrapped_phase.resize(f);
  s.bin_freqs_hz.resize(f);
  for (Eigen::Index k = 0; k < f; ++k) {
    s.magnitude_db[k] = 20.0 * std::log10(std::max(std::abs(x[k]), 1e-12));
    s.wrapped_phase[k] = wrap_phase(std::atan2(x[k].imag(), x[k].real()));
    s.bin_freqs_hz[k] = static_cast<double>(k) * sample_rate_hz / static_cast<double>(fft_size);
  }
  return s;
}

Eigen::VectorXd magnitude_db(const Eigen::Ref<const Eigen::VectorXd>& h, Eigen::Index fft_size) {
  if (fft_size < h.size()) throw Error(ErrorCode::BadFftSize, "fft size smaller than response");
  const ComplexVector x = fft(h, fft_size);
  const Eigen::Index f = fft_size / 2 + 1;
  Eigen::VectorXd out(f);
  for (Eigen::Index k = 0; k < f; ++k) out[k] = 20.0 * std::log10(std::max(std::abs(x[k]), 1e-12));
  return out;
}

}  // namespace hrtfgraph::dsp
