// Copyright 2026 The Triad Authors
// SPDX-License-Identifier: Apache-2.0
//
// Log-Mel filterbank featurization of raw waveforms.

#pragma once

#include <filesystem>
#include <span>
#include <vector>

#include "triad/tensor.hpp"

namespace triad {

struct MelConfig {
  double sample_rate = 16000.0;
  double window_ms = 25.0;
  double hop_ms = 10.0;
  std::size_t mel_bins = 64;
  // Frame axis is right-padded with log(log_floor) or truncated to this length.
  std::size_t frames = 512;
  double low_hz = 20.0;
  // 0 means the Nyquist frequency.
  double high_hz = 0.0;
  double log_floor = 1e-10;
  double clip_seconds = 5.0;

  std::size_t window_samples() const;
  std::size_t hop_samples() const;
  std::size_t fft_size() const;
};

double hz_to_mel(double hz);
double mel_to_hz(double mel);

/// Spectrogram of one clip as [mel_bins, frames]: Hamming-windowed STFT
/// magnitudes pooled by triangular mel filters, then the natural log of
/// max(energy, log_floor).
///
/// Throws InputError for a non-positive sample rate or a waveform shorter than
/// one analysis window.
Tensor mel_spectrogram(std::span<const double> waveform, const MelConfig& config = {});

/// Consecutive clip_seconds-long clips; a short tail is zero-padded when it
/// still covers one analysis window, otherwise dropped.
std::vector<std::vector<double>> split_clips(std::span<const double> waveform, const MelConfig& config = {});

// Headerless little-endian float32 samples.
std::vector<double> read_waveform(const std::filesystem::path& path);
void write_waveform(const std::filesystem::path& path, std::span<const double> samples);

}  // namespace triad
