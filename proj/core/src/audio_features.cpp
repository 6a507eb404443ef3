// Copyright 2026 The Triad Authors
// SPDX-License-Identifier: Apache-2.0

#include "triad/audio_features.hpp"

#include <fftw3.h>

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <numbers>

#include "triad/error.hpp"

namespace triad {

namespace {

static_assert(std::endian::native == std::endian::little, "waveform IO assumes a little-endian host");

struct FftPlan {
  std::size_t size;
  double* input;
  fftw_complex* output;
  fftw_plan plan;

  explicit FftPlan(std::size_t n)
      : size(n),
        input(fftw_alloc_real(n)),
        output(fftw_alloc_complex(n / 2 + 1)),
        plan(fftw_plan_dft_r2c_1d(static_cast<int>(n), input, output, FFTW_ESTIMATE)) {}
  ~FftPlan() {
    fftw_destroy_plan(plan);
    fftw_free(input);
    fftw_free(output);
  }
  FftPlan(const FftPlan&) = delete;
  FftPlan& operator=(const FftPlan&) = delete;
};

// [mel_bins][fft_size / 2 + 1] triangular weights laid out in the mel domain.
std::vector<std::vector<double>> mel_filters(const MelConfig& c) {
  const double nyquist = c.sample_rate / 2.0;
  const double high = c.high_hz > 0.0 ? c.high_hz : nyquist;
  if (!(c.low_hz >= 0.0 && c.low_hz < high && high <= nyquist)) {
    throw ConfigError("mel band edges must satisfy 0 <= low < high <= Nyquist");
  }
  const std::size_t bins = c.fft_size() / 2 + 1;
  const double mel_low = hz_to_mel(c.low_hz);
  const double mel_high = hz_to_mel(high);
  const double step = (mel_high - mel_low) / static_cast<double>(c.mel_bins + 1);
  std::vector<std::vector<double>> filters(c.mel_bins, std::vector<double>(bins, 0.0));
  for (std::size_t m = 0; m < c.mel_bins; ++m) {
    const double left = mel_low + step * static_cast<double>(m);
    const double center = left + step;
    const double right = center + step;
    for (std::size_t k = 0; k < bins; ++k) {
      const double mel = hz_to_mel(c.sample_rate * static_cast<double>(k) / static_cast<double>(c.fft_size()));
      if (mel > left && mel < right) {
        filters[m][k] = mel <= center ? (mel - left) / (center - left) : (right - mel) / (right - center);
      }
    }
  }
  return filters;
}

}  // namespace

std::size_t MelConfig::window_samples() const {
  return static_cast<std::size_t>(std::lround(sample_rate * window_ms / 1000.0));
}

std::size_t MelConfig::hop_samples() const { return static_cast<std::size_t>(std::lround(sample_rate * hop_ms / 1000.0)); }

std::size_t MelConfig::fft_size() const { return std::bit_ceil(std::max<std::size_t>(window_samples(), 2)); }

double hz_to_mel(double hz) { return 1127.0 * std::log(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::exp(mel / 1127.0) - 1.0); }

Tensor mel_spectrogram(std::span<const double> waveform, const MelConfig& config) {
  if (!(config.sample_rate > 0.0)) throw InputError("sample rate must be positive");
  if (config.mel_bins == 0 || config.frames == 0) throw ConfigError("mel bins and frame count must be positive");
  const std::size_t win = config.window_samples();
  const std::size_t hop = config.hop_samples();
  if (win == 0 || hop == 0) throw ConfigError("window and hop must cover at least one sample");
  if (waveform.size() < win) {
    throw InputError("waveform of " + std::to_string(waveform.size()) + " samples is shorter than one " +
                     std::to_string(win) + "-sample window");
  }
  const auto filters = mel_filters(config);
  const std::size_t bins = config.fft_size() / 2 + 1;
  std::vector<double> window(win);
  for (std::size_t n = 0; n < win; ++n) {
    window[n] = 0.54 - 0.46 * std::cos(2.0 * std::numbers::pi * static_cast<double>(n) / static_cast<double>(win - 1));
  }

  const double floor_value = std::log(config.log_floor);
  std::vector<double> out(config.mel_bins * config.frames, floor_value);
  const std::size_t available = 1 + (waveform.size() - win) / hop;
  const std::size_t frames = std::min(available, config.frames);
  FftPlan fft(config.fft_size());
  std::vector<double> magnitude(bins);
  for (std::size_t f = 0; f < frames; ++f) {
    std::fill_n(fft.input, fft.size, 0.0);
    for (std::size_t n = 0; n < win; ++n) {
      const double s = waveform[f * hop + n];
      if (!std::isfinite(s)) throw InputError("waveform contains a non-finite sample");
      fft.input[n] = s * window[n];
    }
    fftw_execute(fft.plan);
    for (std::size_t k = 0; k < bins; ++k) magnitude[k] = std::hypot(fft.output[k][0], fft.output[k][1]);
    for (std::size_t m = 0; m < config.mel_bins; ++m) {
      double energy = 0.0;
      for (std::size_t k = 0; k < bins; ++k) energy += filters[m][k] * magnitude[k];
      out[m * config.frames + f] = std::log(std::max(energy, config.log_floor));
    }
  }
  return Tensor({config.mel_bins, config.frames}, std::move(out));
}

std::vector<std::vector<double>> split_clips(std::span<const double> waveform, const MelConfig& config) {
  const auto clip = static_cast<std::size_t>(std::lround(config.sample_rate * config.clip_seconds));
  if (clip == 0) throw ConfigError("clip length must be positive");
  std::vector<std::vector<double>> clips;
  for (std::size_t start = 0; start < waveform.size(); start += clip) {
    const std::size_t n = std::min(clip, waveform.size() - start);
    if (n < config.window_samples()) break;
    std::vector<double> c(clip, 0.0);
    std::copy_n(waveform.begin() + static_cast<std::ptrdiff_t>(start), n, c.begin());
    clips.push_back(std::move(c));
  }
  return clips;
}

std::vector<double> read_waveform(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open waveform file " + path.string());
  std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (bytes.size() % sizeof(float) != 0) {
    throw InputError("waveform file " + path.string() + " size is not a multiple of 4 bytes");
  }
  std::vector<double> samples(bytes.size() / sizeof(float));
  for (std::size_t i = 0; i < samples.size(); ++i) {
    float v;
    std::memcpy(&v, bytes.data() + i * sizeof(float), sizeof(float));
    samples[i] = v;
  }
  return samples;
}

void write_waveform(const std::filesystem::path& path, std::span<const double> samples) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write waveform file " + path.string());
  for (double s : samples) {
    const auto v = static_cast<float>(s);
    out.write(reinterpret_cast<const char*>(&v), sizeof(v));
  }
}

}  // namespace triad
