#pragma once

// Deterministic signal transforms: STFT, mel filterbank, constant-Q
// frames. The same framing/window/FFT kernels back both the pure
// functions here and the differentiable nodes in autograd_spectral.hpp,
// so forward values agree bit for bit.

#include <complex>

#include "audio.hpp"
#include "fft.hpp"
#include "tensor.hpp"

namespace hhc {

struct SpectrogramConfig {
    long n_fft = 1024;
    long hop = 256;
    long win = 1024;
    long n_mels = 100;
    double fmin = 0.0;
    double fmax = 12000.0;
    bool center = true;  // false = hop-aligned framing (train-time mels)
    long sample_rate = kSampleRate;

    long bins() const { return n_fft / 2 + 1; }
    void validate() const {
        if (n_fft < win) throw ConfigError("spectrogram: n_fft < win");
        if (!(fmin >= 0 && fmin < fmax && fmax <= double(sample_rate) / 2 + 1e-9))
            throw ConfigError("spectrogram: need 0 <= fmin < fmax <= sample_rate/2");
        if (hop <= 0 || win <= 0) throw ConfigError("spectrogram: hop/win must be positive");
    }
};

inline constexpr double kMelLogFloor = 1e-5;  // clamp before natural log

// Spec'd frame counts: floor(len/hop)+1 centered, floor(len/hop) aligned.
inline long frame_count(long n, const SpectrogramConfig& cfg) {
    if (n <= 0) throw DataError("stft: empty input");
    return cfg.center ? n / cfg.hop + 1 : n / cfg.hop;
}

inline long frame_left_pad(const SpectrogramConfig& cfg) {
    return cfg.center ? cfg.win / 2 : (cfg.win - cfg.hop) / 2;
}

// Reflective index into a length-n signal.
inline long reflect_index(long i, long n) {
    if (n == 1) return 0;
    while (i < 0 || i >= n) {
        if (i < 0) i = -i;
        if (i >= n) i = 2 * n - 2 - i;
    }
    return i;
}

template <typename T>
std::vector<T> hann_window(long n) {
    std::vector<T> w((size_t)n);
    for (long i = 0; i < n; ++i) w[(size_t)i] = T(0.5 - 0.5 * std::cos(2.0 * M_PI * double(i) / double(n)));
    return w;
}

// Windowed frames [F, n_fft] (win taps centered, zero-padded to n_fft).
template <typename T>
Tensor<T> frame_signal(const T* x, long n, const SpectrogramConfig& cfg) {
    cfg.validate();
    long f = frame_count(n, cfg);
    long lp = frame_left_pad(cfg);
    auto w = hann_window<T>(cfg.win);
    long off = (cfg.n_fft - cfg.win) / 2;
    Tensor<T> out({f, cfg.n_fft});
    for (long fi = 0; fi < f; ++fi) {
        T* row = out.row(fi);
        long t0 = fi * cfg.hop - lp;
        for (long j = 0; j < cfg.win; ++j) row[off + j] = x[reflect_index(t0 + j, n)] * w[(size_t)j];
    }
    return out;
}

// One-sided complex STFT, interleaved (re, im): [F, 2 * (n_fft/2 + 1)].
template <typename T>
Tensor<T> stft_ri(const T* x, long n, const SpectrogramConfig& cfg) {
    Tensor<T> frames = frame_signal(x, n, cfg);
    long f = frames.rows(), bins = cfg.bins();
    Tensor<T> out({f, 2 * bins});
    std::vector<std::complex<T>> spec((size_t)bins);
    for (long fi = 0; fi < f; ++fi) {
        rfft(frames.row(fi), cfg.n_fft, spec.data());
        T* row = out.row(fi);
        for (long k = 0; k < bins; ++k) {
            row[2 * k] = spec[(size_t)k].real();
            row[2 * k + 1] = spec[(size_t)k].imag();
        }
    }
    return out;
}

template <typename T>
Tensor<T> stft_magnitude(const T* x, long n, const SpectrogramConfig& cfg) {
    Tensor<T> ri = stft_ri(x, n, cfg);
    long f = ri.rows(), bins = cfg.bins();
    Tensor<T> out({f, bins});
    for (long fi = 0; fi < f; ++fi)
        for (long k = 0; k < bins; ++k) {
            T re = ri.at(fi, 2 * k), im = ri.at(fi, 2 * k + 1);
            out.at(fi, k) = std::sqrt(re * re + im * im);
        }
    return out;
}

// HTK mel scale.
inline double hz_to_mel(double f) { return 2595.0 * std::log10(1.0 + f / 700.0); }
inline double mel_to_hz(double m) { return 700.0 * (std::pow(10.0, m / 2595.0) - 1.0); }

// Triangular filterbank as a [bins, n_mels] matrix (ready for frames*FB).
template <typename T>
Tensor<T> mel_filterbank(const SpectrogramConfig& cfg) {
    long bins = cfg.bins(), m = cfg.n_mels;
    Tensor<T> fb({bins, m});
    double mel_lo = hz_to_mel(cfg.fmin), mel_hi = hz_to_mel(cfg.fmax);
    std::vector<double> edges((size_t)m + 2);
    for (long i = 0; i < m + 2; ++i) edges[(size_t)i] = mel_to_hz(mel_lo + (mel_hi - mel_lo) * double(i) / double(m + 1));
    double bin_hz = double(cfg.sample_rate) / double(cfg.n_fft);
    for (long k = 0; k < bins; ++k) {
        double f = k * bin_hz;
        for (long j = 0; j < m; ++j) {
            double lo = edges[(size_t)j], cf = edges[(size_t)j + 1], hi = edges[(size_t)j + 2];
            double v = 0;
            if (f >= lo && f <= cf && cf > lo)
                v = (f - lo) / (cf - lo);
            else if (f > cf && f <= hi && hi > cf)
                v = (hi - f) / (hi - cf);
            fb.at(k, j) = T(v);
        }
    }
    return fb;
}

template <typename T>
struct MelSpectrogram {
    Tensor<T> frames;  // [time, n_mels], natural-log of clamped mel energy
    long hop = 256;
    long win = 1024;
    long n_mels = 100;
};

template <typename T>
MelSpectrogram<T> mel_spectrogram_of(const T* x, long n, const SpectrogramConfig& cfg) {
    Tensor<T> mag = stft_magnitude(x, n, cfg);
    Tensor<T> fb = mel_filterbank<T>(cfg);
    long f = mag.rows();
    MelSpectrogram<T> out;
    out.hop = cfg.hop;
    out.win = cfg.win;
    out.n_mels = cfg.n_mels;
    out.frames = Tensor<T>({f, cfg.n_mels});
    for (long fi = 0; fi < f; ++fi) {
        const T* mr = mag.row(fi);
        T* orow = out.frames.row(fi);
        for (long j = 0; j < cfg.n_mels; ++j) orow[j] = 0;
        for (long k = 0; k < mag.cols(); ++k) {
            T mv = mr[k];
            if (mv == T(0)) continue;
            axpy(orow, mv, fb.row(k), cfg.n_mels);
        }
        for (long j = 0; j < cfg.n_mels; ++j) orow[j] = std::log(std::max(orow[j], T(kMelLogFloor)));
    }
    return out;
}

// AudioBuffer front-ends (the dsp module's public surface).
inline Tensor<double> stft(const AudioBuffer& buf, const SpectrogramConfig& cfg) {
    std::vector<double> x(buf.samples.begin(), buf.samples.end());
    return stft_ri<double>(x.data(), (long)x.size(), cfg);
}

inline MelSpectrogram<double> mel_spectrogram(const AudioBuffer& buf, const SpectrogramConfig& cfg) {
    std::vector<double> x(buf.samples.begin(), buf.samples.end());
    return mel_spectrogram_of<double>(x.data(), (long)x.size(), cfg);
}

// ---- constant-Q transform ----

struct CqtConfig {
    long bins_per_octave = 12;
    long n_octaves = 7;
    double fmin = 55.0;
    long hop = 256;  // matches the STFT hop at the coarsest scale
    long sample_rate = kSampleRate;

    long bins() const { return bins_per_octave * n_octaves; }
    void validate() const {
        if (fmin <= 0 || bins_per_octave < 1 || n_octaves < 1) throw ConfigError("cqt: bad geometry");
        if (fmin * std::pow(2.0, double(n_octaves)) > double(sample_rate) / 2 + 1e-6)
            throw ConfigError("cqt: frequency range exceeds Nyquist");
    }
};

// Precomputed complex correlation kernels, one per bin.
template <typename T>
struct CqtKernels {
    std::vector<std::vector<T>> re, im;  // Hann-enveloped cos/-sin taps
    std::vector<long> half;              // taps span [-half, half]
    long hop = 256;

    static CqtKernels make(const CqtConfig& cfg) {
        cfg.validate();
        CqtKernels k;
        k.hop = cfg.hop;
        double q = 1.0 / (std::pow(2.0, 1.0 / double(cfg.bins_per_octave)) - 1.0);
        for (long j = 0; j < cfg.bins(); ++j) {
            double f = cfg.fmin * std::pow(2.0, double(j) / double(cfg.bins_per_octave));
            long len = (long)std::ceil(q * double(cfg.sample_rate) / f);
            len |= 1;  // odd, symmetric around the frame center
            long half = len / 2;
            std::vector<T> re((size_t)len), im((size_t)len);
            double wsum = 0;
            for (long n = 0; n < len; ++n) wsum += 0.5 - 0.5 * std::cos(2.0 * M_PI * double(n) / double(len - 1));
            double norm = 2.0 / wsum;  // unit-amplitude sine at f -> magnitude ~1
            for (long n = 0; n < len; ++n) {
                double w = (0.5 - 0.5 * std::cos(2.0 * M_PI * double(n) / double(len - 1))) * norm;
                double ph = -2.0 * M_PI * f * double(n - half) / double(cfg.sample_rate);
                re[(size_t)n] = T(w * std::cos(ph));
                im[(size_t)n] = T(w * std::sin(ph));
            }
            k.re.push_back(std::move(re));
            k.im.push_back(std::move(im));
            k.half.push_back(half);
        }
        return k;
    }
};

// Complex CQT frames, interleaved (re, im): [F, 2 * bins]. Frames are
// centered at multiples of hop with reflect padding, F = floor(n/hop)+1.
template <typename T>
Tensor<T> cqt_frames(const T* x, long n, const CqtKernels<T>& k) {
    if (n <= 0) throw DataError("cqt: empty input");
    long f = n / k.hop + 1;
    long bins = (long)k.re.size();
    Tensor<T> out({f, 2 * bins});
    for (long fi = 0; fi < f; ++fi) {
        long c = fi * k.hop;
        T* row = out.row(fi);
        for (long j = 0; j < bins; ++j) {
            const auto& re = k.re[(size_t)j];
            const auto& im = k.im[(size_t)j];
            long half = k.half[(size_t)j];
            T ar = 0, ai = 0;
            for (long t = 0; t < (long)re.size(); ++t) {
                T xv = x[reflect_index(c + t - half, n)];
                ar += xv * re[(size_t)t];
                ai += xv * im[(size_t)t];
            }
            row[2 * j] = ar;
            row[2 * j + 1] = ai;
        }
    }
    return out;
}

inline Tensor<double> cqt(const AudioBuffer& buf, long bins_per_octave, long n_octaves, double fmin) {
    CqtConfig cfg;
    cfg.bins_per_octave = bins_per_octave;
    cfg.n_octaves = n_octaves;
    cfg.fmin = fmin;
    cfg.sample_rate = buf.sample_rate;
    auto kernels = CqtKernels<double>::make(cfg);
    std::vector<double> x(buf.samples.begin(), buf.samples.end());
    return cqt_frames<double>(x.data(), (long)x.size(), kernels);
}

// ---- debug spectrogram dump: "HHSP" + u32 rows + u32 cols + f32 data ----

inline void write_matrix_dump(const std::string& path, const Tensor<float>& m) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw DataError("cannot write: " + path);
    f.write("HHSP", 4);
    std::uint32_t r = (std::uint32_t)m.rows(), c = (std::uint32_t)m.cols();
    f.write(reinterpret_cast<const char*>(&r), 4);
    f.write(reinterpret_cast<const char*>(&c), 4);
    f.write(reinterpret_cast<const char*>(m.ptr()), (std::streamsize)(sizeof(float) * (size_t)m.numel()));
}

inline Tensor<float> read_matrix_dump(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw DataError("cannot read: " + path);
    char magic[4];
    f.read(magic, 4);
    if (!f || std::memcmp(magic, "HHSP", 4) != 0) throw DataError("bad matrix dump magic: " + path);
    std::uint32_t r = 0, c = 0;
    f.read(reinterpret_cast<char*>(&r), 4);
    f.read(reinterpret_cast<char*>(&c), 4);
    Tensor<float> m({(long)r, (long)c});
    f.read(reinterpret_cast<char*>(m.ptr()), (std::streamsize)(sizeof(float) * (size_t)m.numel()));
    if (!f) throw DataError("truncated matrix dump: " + path);
    return m;
}

}  // namespace hhc
