#include "sedattack/features.hpp"

#include <cmath>
#include <complex>
#include <numbers>

#include "sedattack/error.hpp"

namespace sedattack {

namespace {

using cplx = std::complex<double>;

// In-place iterative radix-2 FFT, e^{-i...} sign convention.
class Fft {
 public:
  explicit Fft(std::size_t n) : n_(n), rev_(n), twiddle_(n / 2) {
    std::size_t bits = 0;
    while ((std::size_t{1} << bits) < n) ++bits;
    for (std::size_t i = 0; i < n; ++i) {
      std::size_t r = 0;
      for (std::size_t b = 0; b < bits; ++b) r |= ((i >> b) & 1u) << (bits - 1 - b);
      rev_[i] = r;
    }
    for (std::size_t k = 0; k < n / 2; ++k) {
      const double a = -2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(n);
      twiddle_[k] = cplx(std::cos(a), std::sin(a));
    }
  }

  void operator()(std::vector<cplx>& x) const {
    for (std::size_t i = 0; i < n_; ++i)
      if (i < rev_[i]) std::swap(x[i], x[rev_[i]]);
    for (std::size_t len = 2; len <= n_; len <<= 1) {
      const std::size_t half = len / 2, stride = n_ / len;
      for (std::size_t s = 0; s < n_; s += len) {
        for (std::size_t j = 0; j < half; ++j) {
          // Explicit product: std::complex operator* goes through the
          // NaN-recovering __muldc3 path.
          const cplx u = x[s + j];
          const cplx a = x[s + j + half];
          const cplx w = twiddle_[j * stride];
          const cplx v(a.real() * w.real() - a.imag() * w.imag(),
                       a.real() * w.imag() + a.imag() * w.real());
          x[s + j] = u + v;
          x[s + j + half] = u - v;
        }
      }
    }
  }

 private:
  std::size_t n_;
  std::vector<std::size_t> rev_;
  std::vector<cplx> twiddle_;
};

void check_rate(const Waveform& w, const MelFrontendConfig& cfg) {
  if (w.sample_rate() != cfg.sample_rate) {
    throw ValidationError("frontend configured for " + std::to_string(cfg.sample_rate) +
                          " Hz but waveform is " + std::to_string(w.sample_rate()) + " Hz");
  }
}

}  // namespace

void MelFrontendConfig::validate() const {
  if (window_len < 2 || (window_len & (window_len - 1)) != 0)
    throw ValidationError("window_len must be a power of two");
  if (hop <= 0 || window_len % hop != 0) throw ValidationError("hop must divide window_len");
  if (n_mels <= 0 || n_mels >= num_bins())
    throw ValidationError("n_mels must be positive and below window_len/2 + 1");
  if (sample_rate <= 0) throw ValidationError("sample_rate must be positive");
  if (fmin < 0.0 || !(upper_frequency() > fmin) || upper_frequency() > sample_rate / 2.0)
    throw ValidationError("mel band edges must satisfy 0 <= fmin < fmax <= sample_rate/2");
}

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

std::vector<double> hann_window(int n) {
  std::vector<double> w(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) w[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * i / n);
  return w;
}

namespace {

std::vector<double> band_edges(const MelFrontendConfig& cfg) {
  const double lo = hz_to_mel(cfg.fmin), hi = hz_to_mel(cfg.upper_frequency());
  std::vector<double> hz(static_cast<std::size_t>(cfg.n_mels) + 2);
  for (std::size_t i = 0; i < hz.size(); ++i) {
    hz[i] = mel_to_hz(lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(hz.size() - 1));
  }
  return hz;
}

}  // namespace

std::vector<double> mel_center_frequencies(const MelFrontendConfig& cfg) {
  const auto edges = band_edges(cfg);
  return {edges.begin() + 1, edges.end() - 1};
}

ad::Tensor mel_filterbank(const MelFrontendConfig& cfg) {
  cfg.validate();
  const auto edges = band_edges(cfg);
  const std::size_t bins = cfg.num_bins(), mels = cfg.n_mels;
  ad::Tensor fb = ad::Tensor::zeros({bins, mels});
  for (std::size_t k = 0; k < bins; ++k) {
    const double f = static_cast<double>(k) * cfg.sample_rate / cfg.window_len;
    for (std::size_t m = 0; m < mels; ++m) {
      const double l = edges[m], c = edges[m + 1], r = edges[m + 2];
      const double w = std::min((f - l) / (c - l), (r - f) / (r - c));
      if (w > 0.0) fb[k * mels + m] = w;
    }
  }
  return fb;
}

std::size_t reflect_index(long long i, std::size_t n) {
  if (n == 1) return 0;
  const long long period = 2 * (static_cast<long long>(n) - 1);
  long long j = i % period;
  if (j < 0) j += period;
  if (j >= static_cast<long long>(n)) j = period - j;
  return static_cast<std::size_t>(j);
}

ad::Var stft_power(ad::Var samples, const MelFrontendConfig& cfg) {
  cfg.validate();
  const ad::Tensor& x = samples.value();
  if (x.rank() != 1) throw ShapeError("stft_power: samples must be rank 1");
  const std::size_t n = x.size();
  const std::size_t win = cfg.window_len, hop = cfg.hop, bins = cfg.num_bins();
  const std::size_t frames = cfg.num_frames(n);
  const long long half = static_cast<long long>(win / 2);
  const auto window = hann_window(cfg.window_len);
  const Fft fft(win);

  // Source sample index for every (frame, tap), shared with backward.
  std::vector<std::uint32_t> source(frames * win);
  for (std::size_t t = 0; t < frames; ++t) {
    const long long start = static_cast<long long>(t * hop) - half;
    for (std::size_t j = 0; j < win; ++j) {
      source[t * win + j] =
          static_cast<std::uint32_t>(reflect_index(start + static_cast<long long>(j), n));
    }
  }

  ad::Tensor power = ad::Tensor::zeros({frames, bins});
  std::vector<cplx> spectra(frames * bins);
  std::vector<cplx> buf(win);
  for (std::size_t t = 0; t < frames; ++t) {
    for (std::size_t j = 0; j < win; ++j) buf[j] = cplx(window[j] * x[source[t * win + j]], 0.0);
    fft(buf);
    for (std::size_t k = 0; k < bins; ++k) {
      spectra[t * bins + k] = buf[k];
      power[t * bins + k] = std::norm(buf[k]);
    }
  }

  return samples.tape->record(
      std::move(power), {samples},
      [samples, win, bins, frames, window, source = std::move(source),
       spectra = std::move(spectra)](ad::Tape& tape, std::size_t self) {
        const auto& g = tape.grad_buffer(self);
        auto& gx = tape.grad_buffer(samples);
        const Fft fft(win);
        std::vector<cplx> z(win);
        // d/du_n sum_k g_k |X_k|^2 = 2 Re(sum_k g_k X_k e^{+i 2 pi k n / N})
        //                          = 2 Re(FFT(conj(g X))_n).
        for (std::size_t t = 0; t < frames; ++t) {
          std::fill(z.begin(), z.end(), cplx(0.0, 0.0));
          for (std::size_t k = 0; k < bins; ++k) z[k] = std::conj(spectra[t * bins + k]) * g[t * bins + k];
          fft(z);
          for (std::size_t j = 0; j < win; ++j) {
            gx[source[t * win + j]] += 2.0 * z[j].real() * window[j];
          }
        }
      });
}

ad::Var mel_project(ad::Var power, const MelFrontendConfig& cfg) {
  const ad::Tensor& p = power.value();
  if (p.rank() != 2 || p.dim(1) != static_cast<std::size_t>(cfg.num_bins())) {
    throw ShapeError("mel_project: power must be [T, window_len/2 + 1]");
  }
  ad::Var fb = power.tape->constant(mel_filterbank(cfg));
  return ad::log_floor(ad::matmul(power, fb), kLogFloorEnergy);
}

ad::Var frontend(ad::Var samples, const MelFrontendConfig& cfg) {
  return mel_project(stft_power(samples, cfg), cfg);
}

ad::Tensor stft_power(const Waveform& w, const MelFrontendConfig& cfg) {
  check_rate(w, cfg);
  ad::Tape tape;
  return stft_power(tape.constant(ad::Tensor({w.size()}, w.samples())), cfg).value();
}

LogMelSpectrogram mel_project(const ad::Tensor& power, const MelFrontendConfig& cfg) {
  ad::Tape tape;
  return {mel_project(tape.constant(power), cfg).value(), cfg};
}

LogMelSpectrogram frontend(const Waveform& w, const MelFrontendConfig& cfg) {
  check_rate(w, cfg);
  ad::Tape tape;
  return {frontend(tape.constant(ad::Tensor({w.size()}, w.samples())), cfg).value(), cfg};
}

}  // namespace sedattack
