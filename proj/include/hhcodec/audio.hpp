#pragma once

// Audio ingestion: WAV read/write, windowed-sinc resampling to 24 kHz,
// deterministic window cropping, and manifest handling.

#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>

#include "common.hpp"
#include "tensor.hpp"

namespace hhc {

inline constexpr long kSampleRate = 24000;

struct AudioBuffer {
    std::vector<float> samples;  // mono, [-1, 1]
    long sample_rate = kSampleRate;

    long size() const { return (long)samples.size(); }
    double duration_seconds() const { return double(samples.size()) / double(sample_rate); }
};

// ---- WAV I/O (PCM 16/24-bit and float32) ----

namespace wav_detail {
inline std::uint32_t rd_u32(const unsigned char* p) {
    return p[0] | (p[1] << 8) | (std::uint32_t(p[2]) << 16) | (std::uint32_t(p[3]) << 24);
}
inline std::uint16_t rd_u16(const unsigned char* p) { return std::uint16_t(p[0] | (p[1] << 8)); }
}  // namespace wav_detail

// Reads a WAV file at its native rate; channels averaged to mono.
inline AudioBuffer read_wav(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw DataError("cannot open audio file: " + path);
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    using namespace wav_detail;
    if (bytes.size() < 44 || std::memcmp(bytes.data(), "RIFF", 4) != 0 || std::memcmp(bytes.data() + 8, "WAVE", 4) != 0)
        throw DataError("not a RIFF/WAVE file: " + path);
    size_t pos = 12;
    int fmt_code = -1, channels = 0, bits = 0;
    long rate = 0;
    const unsigned char* data_ptr = nullptr;
    size_t data_len = 0;
    while (pos + 8 <= bytes.size()) {
        std::uint32_t sz = rd_u32(bytes.data() + pos + 4);
        const unsigned char* body = bytes.data() + pos + 8;
        if (pos + 8 + sz > bytes.size()) sz = std::uint32_t(bytes.size() - pos - 8);
        if (std::memcmp(bytes.data() + pos, "fmt ", 4) == 0 && sz >= 16) {
            fmt_code = rd_u16(body);
            channels = rd_u16(body + 2);
            rate = (long)rd_u32(body + 4);
            bits = rd_u16(body + 14);
            if (fmt_code == 0xFFFE && sz >= 40) fmt_code = rd_u16(body + 24);  // extensible
        } else if (std::memcmp(bytes.data() + pos, "data", 4) == 0) {
            data_ptr = body;
            data_len = sz;
        }
        pos += 8 + sz + (sz & 1);
    }
    if (fmt_code < 0 || !data_ptr) throw DataError("missing fmt/data chunk: " + path);
    if (channels < 1) throw DataError("invalid channel count: " + path);
    bool is_float = (fmt_code == 3);
    if (!(fmt_code == 1 || fmt_code == 3)) throw DataError("unsupported WAV format code: " + path);
    if (is_float && bits != 32) throw DataError("unsupported float WAV bit depth: " + path);
    if (!is_float && !(bits == 16 || bits == 24)) throw DataError("unsupported PCM bit depth: " + path);
    long bytes_per = bits / 8;
    long frames = (long)(data_len / (size_t)(bytes_per * channels));
    if (frames == 0) throw DataError("empty audio: " + path);
    AudioBuffer out;
    out.sample_rate = rate;
    out.samples.resize((size_t)frames);
    for (long i = 0; i < frames; ++i) {
        double acc = 0;
        for (int c = 0; c < channels; ++c) {
            const unsigned char* p = data_ptr + (i * channels + c) * bytes_per;
            double v;
            if (is_float) {
                float fv;
                std::memcpy(&fv, p, 4);
                v = fv;
            } else if (bits == 16) {
                std::int16_t s = std::int16_t(p[0] | (p[1] << 8));
                v = double(s) / 32768.0;
            } else {  // 24-bit
                std::int32_t s = p[0] | (p[1] << 8) | (p[2] << 16);
                if (s & 0x800000) s |= ~0xFFFFFF;
                v = double(s) / 8388608.0;
            }
            acc += v;
        }
        out.samples[(size_t)i] = float(acc / channels);
    }
    return out;
}

inline void write_wav_16(const std::string& path, const AudioBuffer& buf) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw DataError("cannot write audio file: " + path);
    auto w16 = [&](std::uint16_t v) { f.put(char(v & 0xFF)).put(char(v >> 8)); };
    auto w32 = [&](std::uint32_t v) {
        f.put(char(v & 0xFF)).put(char((v >> 8) & 0xFF)).put(char((v >> 16) & 0xFF)).put(char(v >> 24));
    };
    std::uint32_t n = (std::uint32_t)buf.samples.size();
    f.write("RIFF", 4);
    w32(36 + 2 * n);
    f.write("WAVE", 4);
    f.write("fmt ", 4);
    w32(16);
    w16(1);  // PCM
    w16(1);  // mono
    w32((std::uint32_t)buf.sample_rate);
    w32((std::uint32_t)(buf.sample_rate * 2));
    w16(2);
    w16(16);
    f.write("data", 4);
    w32(2 * n);
    for (float s : buf.samples) {
        float c = std::min(1.0f, std::max(-1.0f, s));
        int v = (int)std::lrint(c * 32767.0f);
        w16((std::uint16_t)(std::int16_t)v);
    }
    if (!f) throw DataError("short write: " + path);
}

// ---- resampling ----

// Windowed-sinc rational resampler. Kernel: Hann-windowed sinc with
// cutoff at the narrower of the two Nyquist bands, 16 zero crossings.
inline std::vector<float> resample_sinc(const std::vector<float>& in, long in_rate, long out_rate) {
    if (in_rate == out_rate) return in;
    if (in.empty()) return {};
    long g = std::gcd(in_rate, out_rate);
    long up = out_rate / g, down = in_rate / g;
    long out_len = (long)((__int128)in.size() * up / down);
    // keep |out_len - in_len*out/in| <= 1 while covering the full span
    if ((long)((__int128)in.size() * up % down) != 0) out_len += 1;
    double fc = 0.5 * std::min(1.0, double(up) / double(down));  // in input-sample units
    const double zero_crossings = 16.0;
    double half = zero_crossings / (2.0 * fc);
    long H = (long)std::ceil(half);
    std::vector<float> out((size_t)out_len);
    long n_in = (long)in.size();
    for (long t = 0; t < out_len; ++t) {
        double p = double(t) * double(down) / double(up);  // position in input samples
        long m0 = (long)std::floor(p) - H;
        long m1 = (long)std::floor(p) + H + 1;
        double acc = 0;
        for (long m = std::max(0L, m0); m <= std::min(n_in - 1, m1); ++m) {
            double d = p - double(m);
            double x = 2.0 * fc * d;
            double sinc = (std::fabs(x) < 1e-12) ? 1.0 : std::sin(M_PI * x) / (M_PI * x);
            double wnd = 0.5 + 0.5 * std::cos(M_PI * d / half);
            if (std::fabs(d) > half) wnd = 0.0;
            acc += double(in[(size_t)m]) * 2.0 * fc * sinc * wnd;
        }
        out[(size_t)t] = float(acc);
    }
    return out;
}

// Full ingestion contract: mono, 24 kHz, peak-safe amplitude.
inline AudioBuffer load_audio(const std::string& path) {
    AudioBuffer raw = read_wav(path);
    AudioBuffer out;
    out.sample_rate = kSampleRate;
    out.samples = resample_sinc(raw.samples, raw.sample_rate, kSampleRate);
    if (out.samples.empty()) throw DataError("empty audio after resampling: " + path);
    float peak = 0;
    for (float s : out.samples) peak = std::max(peak, std::fabs(s));
    if (peak > 1.0f) {
        float inv = 1.0f / peak;
        for (float& s : out.samples) s *= inv;
    }
    for (float s : out.samples)
        if (!std::isfinite(s)) throw DataError("non-finite sample in: " + path);
    return out;
}

// ---- window cropping ----

// Contiguous crop of round(window_seconds * 24000) samples at an offset
// drawn uniformly under the seed. Short buffers either zero-pad on the
// right (pad_short) or raise.
inline AudioBuffer sample_window(const AudioBuffer& buf, double window_seconds, std::uint64_t rng_seed,
                                 bool pad_short = false) {
    long need = (long)std::llround(window_seconds * double(buf.sample_rate));
    AudioBuffer out;
    out.sample_rate = buf.sample_rate;
    long n = buf.size();
    if (n < need) {
        if (!pad_short)
            throw DataError("buffer shorter than window (" + std::to_string(n) + " < " + std::to_string(need) + ")");
        out.samples.assign(buf.samples.begin(), buf.samples.end());
        out.samples.resize((size_t)need, 0.0f);
        return out;
    }
    long span = n - need;
    long off = span == 0 ? 0 : (long)Rng(rng_seed).below((std::uint64_t)span + 1);
    out.samples.assign(buf.samples.begin() + off, buf.samples.begin() + off + need);
    return out;
}

// ---- manifests ----

struct ManifestEntry {
    std::string path;  // resolved
    double duration_seconds = 0;
    std::string split_tag = "train";
};

struct DatasetManifest {
    std::vector<ManifestEntry> entries;
    std::uint64_t content_hash = 0;
};

// One relative path per line, UTF-8, '#' comments. Entries that do not
// exist, do not decode, or are shorter than window_seconds are excluded
// with a logged reason.
inline DatasetManifest load_manifest(const std::string& manifest_path, double window_seconds,
                                     const std::function<void(const std::string&)>& log = {}) {
    std::ifstream f(manifest_path);
    if (!f) throw DataError("cannot open manifest: " + manifest_path);
    auto base = std::filesystem::path(manifest_path).parent_path();
    DatasetManifest m;
    std::string raw_content, line;
    while (std::getline(f, line)) {
        raw_content += line;
        raw_content += '\n';
        auto hash_pos = line.find('#');
        if (hash_pos != std::string::npos) line = line.substr(0, hash_pos);
        while (!line.empty() && (line.back() == ' ' || line.back() == '\t' || line.back() == '\r')) line.pop_back();
        size_t b = line.find_first_not_of(" \t");
        if (b == std::string::npos) continue;
        line = line.substr(b);
        std::string resolved = (base / line).string();
        try {
            AudioBuffer buf = load_audio(resolved);
            if (buf.duration_seconds() + 1e-9 < window_seconds) {
                if (log)
                    log("manifest: excluding " + line + " (duration " + std::to_string(buf.duration_seconds()) +
                        "s < window " + std::to_string(window_seconds) + "s)");
                continue;
            }
            m.entries.push_back({resolved, buf.duration_seconds(), "train"});
        } catch (const DataError& e) {
            if (log) log("manifest: excluding " + line + " (" + e.what() + ")");
        }
    }
    m.content_hash = fnv1a(raw_content);
    return m;
}

// Deterministic per-epoch ordering: pure function of (content, seed, epoch).
inline std::vector<long> manifest_epoch_order(const DatasetManifest& m, std::uint64_t seed, long epoch) {
    std::vector<long> idx(m.entries.size());
    for (size_t i = 0; i < idx.size(); ++i) idx[i] = (long)i;
    Rng rng(seed ^ m.content_hash ^ (0x9E3779B97F4A7C15ull * (std::uint64_t)(epoch + 1)));
    for (long i = (long)idx.size() - 1; i > 0; --i) {
        long j = (long)rng.below((std::uint64_t)i + 1);
        std::swap(idx[(size_t)i], idx[(size_t)j]);
    }
    return idx;
}

}  // namespace hhc
