#pragma once

#include <cmath>
#include <complex>
#include <numbers>

#include <Eigen/Core>

namespace hrtfgraph::dsp {

using ComplexVector = Eigen::VectorXcd;

/// Maps x into [-pi, pi). wrap(x + 2*pi*k) == wrap(x) for integer k.
template <typename Scalar>
Scalar wrap_phase(Scalar x) {
  constexpr Scalar two_pi = Scalar(2) * std::numbers::pi_v<Scalar>;
  Scalar r = x - two_pi * std::floor((x + std::numbers::pi_v<Scalar>) / two_pi);
  // floor can land on the upper edge through rounding.
  if (r >= std::numbers::pi_v<Scalar>) r -= two_pi;
  if (r < -std::numbers::pi_v<Scalar>) r += two_pi;
  return r;
}

/// Full-length complex DFT of `x` zero-padded to `n`.
ComplexVector fft(const Eigen::Ref<const Eigen::VectorXd>& x, Eigen::Index n);
/// Inverse DFT (scaled by 1/n) of a full Hermitian-symmetric spectrum.
/// Only bins 0..n/2 are read when n is even.
Eigen::VectorXd ifft_real(const ComplexVector& spectrum);

/// Band-limited interpolation by `factor` (spectral zero-padding).
/// Original grid points are preserved: out[factor * t] == in[t].
Eigen::VectorXd oversample(const Eigen::Ref<const Eigen::VectorXd>& signal, int factor);

struct CorrelationResult {
  long lag = 0;       // positive: second signal arrives later
  double peak = 0.0;  // normalized correlation at `lag`, in [-1, 1]
};

/// Precomputed spectrum of a unit-energy signal for repeated correlation.
class CorrelationOperand {
 public:
  CorrelationOperand(const Eigen::Ref<const Eigen::VectorXd>& signal, Eigen::Index fft_size);

  Eigen::Index length() const { return length_; }
  Eigen::Index fft_size() const { return spectrum_.size(); }
  const ComplexVector& spectrum() const { return spectrum_; }

 private:
  Eigen::Index length_;
  ComplexVector spectrum_;
};

/// FFT length for linear correlation of two length-`length` signals:
/// the smallest size >= 2 length - 1 with no prime factor above 5.
Eigen::Index correlation_fft_size(Eigen::Index length);

/// Lag maximizing the linear cross-correlation sum_t a[t] b[t + lag] of the
/// unit-energy normalized signals, searched over [-max_lag, max_lag].
/// Ties go to the smallest |lag|, then to the negative lag.
/// `max_lag < 0` selects full overlap (T - 1).
CorrelationResult xcorr_lag(const Eigen::Ref<const Eigen::VectorXd>& a,
                            const Eigen::Ref<const Eigen::VectorXd>& b, long max_lag = -1);
CorrelationResult xcorr_lag(const CorrelationOperand& a, const CorrelationOperand& b,
                            long max_lag = -1);

/// Circular variant for two signals of equal length n, treating both as one
/// period. Lags are searched over [-max_lag, max_lag], at most (n - 1) / 2.
CorrelationResult circular_xcorr_lag(const Eigen::Ref<const Eigen::VectorXd>& a,
                                     const Eigen::Ref<const Eigen::VectorXd>& b, long max_lag = -1);

struct MinimumPhaseInfo {
  bool spectral_zero_floored = false;  // some bin was below 1e-12 of the peak
  Eigen::Index internal_fft_size = 0;
};

/// Minimum-phase response with the magnitude of `h`, via real-cepstrum
/// folding. The internal length starts at 8 T and doubles until the
/// result settles to 1e-12 of the peak; truncated back to T samples.
/// `max_fft_size` > 0 caps the doubling (8 T or less: a single pass).
Eigen::VectorXd minimum_phase(const Eigen::Ref<const Eigen::VectorXd>& h,
                              MinimumPhaseInfo* info = nullptr, Eigen::Index max_fft_size = 0);

/// Returns h[t + shift] for real `shift` (positive advances the response).
/// Applied as a linear phase at an odd internal length 2T + 1, so the
/// operation is exactly all-pass before truncation back to T.
Eigen::VectorXd fractional_delay(const Eigen::Ref<const Eigen::VectorXd>& h, double shift);

/// Internal all-pass stage of fractional_delay, untruncated (length 2T+1).
Eigen::VectorXd fractional_delay_full(const Eigen::Ref<const Eigen::VectorXd>& h, double shift);

struct Spectrum {
  Eigen::VectorXd magnitude_db;
  Eigen::VectorXd wrapped_phase;  // [-pi, pi)
  Eigen::VectorXd bin_freqs_hz;
};

/// One-sided spectrum (fft_size / 2 + 1 bins).
Spectrum spectrum(const Eigen::Ref<const Eigen::VectorXd>& h, Eigen::Index fft_size,
                  double sample_rate_hz = 1.0);

/// Magnitudes in dB of the one-sided spectrum, floored at 1e-12.
Eigen::VectorXd magnitude_db(const Eigen::Ref<const Eigen::VectorXd>& h, Eigen::Index fft_size);

}  // namespace hrtfgraph::dsp
