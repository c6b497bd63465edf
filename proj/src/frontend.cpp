// Copyright 2026 speechlm authors
// SPDX-License-Identifier: Apache-2.0

#include "speechlm/frontend.hpp"

#include <cmath>
#include <complex>
#include <vector>

#include "speechlm/error.hpp"

namespace speechlm {

namespace {

constexpr double kPi = 3.14159265358979323846;

int next_pow2(int n) {
    int p = 1;
    while (p < n) p <<= 1;
    return p;
}

// Iterative radix-2 FFT, in place. n must be a power of two.
void fft_inplace(std::vector<std::complex<double>>& a) {
    const size_t n = a.size();
    for (size_t i = 1, j = 0; i < n; ++i) {
        size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) std::swap(a[i], a[j]);
    }
    for (size_t len = 2; len <= n; len <<= 1) {
        const double ang = -2.0 * kPi / static_cast<double>(len);
        const std::complex<double> wlen(std::cos(ang), std::sin(ang));
        for (size_t i = 0; i < n; i += len) {
            std::complex<double> w(1.0, 0.0);
            for (size_t j = 0; j < len / 2; ++j) {
                const std::complex<double> u = a[i + j];
                const std::complex<double> v = a[i + j + len / 2] * w;
                a[i + j] = u + v;
                a[i + j + len / 2] = u - v;
                w *= wlen;
            }
        }
    }
}

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }

// Triangular mel filter bank over FFT bins [0, n_fft/2].
std::vector<std::vector<std::pair<int, double>>> build_mel_bank(int n_mels, int n_fft,
                                                                int sample_rate) {
    const int n_bins = n_fft / 2 + 1;
    const double mel_lo = hz_to_mel(0.0);
    const double mel_hi = hz_to_mel(sample_rate / 2.0);
    std::vector<double> centers(n_mels + 2);
    for (int i = 0; i < n_mels + 2; ++i) {
        centers[i] = mel_lo + (mel_hi - mel_lo) * i / (n_mels + 1);
    }
    std::vector<std::vector<std::pair<int, double>>> bank(n_mels);
    for (int b = 0; b < n_bins; ++b) {
        const double freq = static_cast<double>(b) * sample_rate / n_fft;
        const double mel = hz_to_mel(freq);
        for (int m = 0; m < n_mels; ++m) {
            const double lo = centers[m], mid = centers[m + 1], hi = centers[m + 2];
            if (mel <= lo || mel >= hi) continue;
            const double w = mel <= mid ? (mel - lo) / (mid - lo) : (hi - mel) / (hi - mid);
            bank[m].emplace_back(b, w);
        }
    }
    return bank;
}

}  // namespace

FeatureSequence compute_fbank(const AudioWave& wave, const FrontendConfig& cfg) {
    if (cfg.n_mels <= 0) throw ConfigError("n_mels must be positive");
    if (cfg.frame_length_ms < cfg.frame_shift_ms) {
        throw ConfigError("frame_length_ms must be >= frame_shift_ms");
    }
    if (wave.sample_rate <= 0) throw InputError("sample_rate must be positive");
    const int window = static_cast<int>(std::lround(cfg.frame_length_ms * wave.sample_rate / 1000.0));
    const int shift = static_cast<int>(std::lround(cfg.frame_shift_ms * wave.sample_rate / 1000.0));
    const int n = static_cast<int>(wave.samples.size());
    if (n < window) {
        throw InputError("wave of " + std::to_string(n) + " samples is shorter than one " +
                         std::to_string(window) + "-sample frame window");
    }
    for (double s : wave.samples) {
        if (!std::isfinite(s)) throw InputError("wave contains non-finite samples");
    }

    const int t = (n - window) / shift + 1;
    const int n_fft = next_pow2(window);
    const auto bank = build_mel_bank(cfg.n_mels, n_fft, wave.sample_rate);

    std::vector<double> hann(window);
    for (int i = 0; i < window; ++i) {
        hann[i] = 0.5 - 0.5 * std::cos(2.0 * kPi * i / (window - 1));
    }

    FeatureSequence out;
    out.frame_shift_ms = cfg.frame_shift_ms;
    out.frames = Matrix(t, cfg.n_mels);
    std::vector<std::complex<double>> buf(n_fft);
    std::vector<double> power(n_fft / 2 + 1);
    for (int fi = 0; fi < t; ++fi) {
        const int start = fi * shift;
        for (int i = 0; i < window; ++i) {
            buf[i] = std::complex<double>(wave.samples[start + i] * hann[i], 0.0);
        }
        for (int i = window; i < n_fft; ++i) buf[i] = 0.0;
        fft_inplace(buf);
        for (int b = 0; b <= n_fft / 2; ++b) power[b] = std::norm(buf[b]);
        double* row = out.frames.row(fi);
        for (int m = 0; m < cfg.n_mels; ++m) {
            double e = 0.0;
            for (const auto& [bin, w] : bank[m]) e += w * power[bin];
            row[m] = std::log(std::max(e, cfg.log_floor));
        }
    }
    return out;
}

LfrSequence apply_lfr(const FeatureSequence& feats, int m, int n) {
    if (m < 1 || n < 1) throw InputError("LFR stack m and hop n must be >= 1");
    const int t = feats.frames.rows();
    if (t < 1) throw InputError("apply_lfr on empty feature sequence");
    const int t_out = (t + n - 1) / n;
    const int dim = feats.frames.cols();

    LfrSequence out;
    out.m = m;
    out.n = n;
    out.effective_shift_ms = feats.frame_shift_ms * n;
    out.frames = Matrix(t_out, dim * m);
    for (int i = 0; i < t_out; ++i) {
        double* row = out.frames.row(i);
        for (int j = 0; j < m; ++j) {
            const int src = std::min(i * n + j, t - 1);
            const double* f = feats.frames.row(src);
            for (int c = 0; c < dim; ++c) row[j * dim + c] = f[c];
        }
    }
    return out;
}

}  // namespace speechlm
