#pragma once

// Differentiable spectral front-ends. Forward math reuses the dsp.hpp
// kernels; backward passes are the exact adjoints of those linear maps.

#include <memory>

#include "autograd.hpp"
#include "dsp.hpp"

namespace hhc {

// Windowed framing [N] -> [F, n_fft]; adjoint scatter-adds through the
// same reflect map.
template <typename T>
Var frame_rows(Graph<T>& g, Var x, const SpectrogramConfig& cfg) {
    const Tensor<T>& X = g.val(x);
    long n = X.numel();
    Tensor<T> out = frame_signal(X.ptr(), n, cfg);
    long f = out.rows();
    bool want = g.wants(x);
    int ix = x.id;
    SpectrogramConfig c = cfg;
    return g.make_node(std::move(out), want, !want ? nullptr : std::function<void(Graph<T>&, int)>(
        [ix, n, f, c](Graph<T>& g2, int id) {
            Var vx{ix};
            const Tensor<T>& gy = g2.grad_buf(Var{id});
            Tensor<T>& gx = g2.grad_buf(vx);
            auto w = hann_window<T>(c.win);
            long lp = frame_left_pad(c);
            long off = (c.n_fft - c.win) / 2;
            for (long fi = 0; fi < f; ++fi) {
                const T* gr = gy.row(fi);
                long t0 = fi * c.hop - lp;
                for (long j = 0; j < c.win; ++j)
                    gx.at(reflect_index(t0 + j, n)) += gr[off + j] * w[(size_t)j];
            }
        }));
}

// Row-wise one-sided FFT [F, n] -> [F, 2*(n/2+1)] interleaved (re, im).
template <typename T>
Var rfft_rows(Graph<T>& g, Var frames) {
    const Tensor<T>& X = g.val(frames);
    long f = X.rows(), n = X.cols(), bins = n / 2 + 1;
    Tensor<T> out({f, 2 * bins});
    std::vector<std::complex<T>> spec((size_t)bins);
    for (long fi = 0; fi < f; ++fi) {
        rfft(X.row(fi), n, spec.data());
        T* row = out.row(fi);
        for (long k = 0; k < bins; ++k) {
            row[2 * k] = spec[(size_t)k].real();
            row[2 * k + 1] = spec[(size_t)k].imag();
        }
    }
    bool want = g.wants(frames);
    int ix = frames.id;
    return g.make_node(std::move(out), want, !want ? nullptr : std::function<void(Graph<T>&, int)>(
        [ix, f, n, bins](Graph<T>& g2, int id) {
            Var vx{ix};
            const Tensor<T>& gy = g2.grad_buf(Var{id});
            Tensor<T>& gx = g2.grad_buf(vx);
            std::vector<std::complex<T>> gb((size_t)bins);
            for (long fi = 0; fi < f; ++fi) {
                const T* gr = gy.row(fi);
                for (long k = 0; k < bins; ++k) gb[(size_t)k] = {gr[2 * k], gr[2 * k + 1]};
                rfft_adjoint(gb.data(), n, gx.row(fi));
            }
        }));
}

// |z| per interleaved pair: [F, 2B] -> [F, B].
template <typename T>
Var complex_mag(Graph<T>& g, Var ri) {
    const Tensor<T>& X = g.val(ri);
    long f = X.rows(), bins = X.cols() / 2;
    Tensor<T> out({f, bins});
    for (long fi = 0; fi < f; ++fi)
        for (long k = 0; k < bins; ++k) {
            T re = X.at(fi, 2 * k), im = X.at(fi, 2 * k + 1);
            out.at(fi, k) = std::sqrt(re * re + im * im);
        }
    bool want = g.wants(ri);
    int ix = ri.id;
    return g.make_node(std::move(out), want, !want ? nullptr : std::function<void(Graph<T>&, int)>(
        [ix, f, bins](Graph<T>& g2, int id) {
            Var vx{ix};
            const Tensor<T>& gy = g2.grad_buf(Var{id});
            const Tensor<T>& y = g2.val(Var{id});
            const Tensor<T>& X = g2.val(vx);
            Tensor<T>& gx = g2.grad_buf(vx);
            for (long fi = 0; fi < f; ++fi)
                for (long k = 0; k < bins; ++k) {
                    T m = std::max(y.at(fi, k), T(1e-20));
                    T gv = gy.at(fi, k) / m;
                    gx.at(fi, 2 * k) += gv * X.at(fi, 2 * k);
                    gx.at(fi, 2 * k + 1) += gv * X.at(fi, 2 * k + 1);
                }
        }));
}

// Full log-mel pipeline on the tape: audio [N] -> [F, n_mels].
template <typename T>
Var mel_log_rows(Graph<T>& g, Var audio, const SpectrogramConfig& cfg) {
    Var fr = frame_rows(g, audio, cfg);
    Var ri = rfft_rows(g, fr);
    Var mag = complex_mag(g, ri);
    Var fb = g.constant(mel_filterbank<T>(cfg));
    Var mel = g.matmul(mag, fb);
    return g.log_(g.clamp_min(mel, T(kMelLogFloor)));
}

// Complex CQT frames on the tape: audio [N] -> [F, 2*bins].
template <typename T>
Var cqt_rows(Graph<T>& g, Var audio, std::shared_ptr<const CqtKernels<T>> kernels) {
    const Tensor<T>& X = g.val(audio);
    long n = X.numel();
    Tensor<T> out = cqt_frames(X.ptr(), n, *kernels);
    long f = out.rows();
    bool want = g.wants(audio);
    int ix = audio.id;
    return g.make_node(std::move(out), want, !want ? nullptr : std::function<void(Graph<T>&, int)>(
        [ix, n, f, kernels](Graph<T>& g2, int id) {
            Var vx{ix};
            const Tensor<T>& gy = g2.grad_buf(Var{id});
            Tensor<T>& gx = g2.grad_buf(vx);
            long bins = (long)kernels->re.size();
            for (long fi = 0; fi < f; ++fi) {
                long c = fi * kernels->hop;
                const T* gr = gy.row(fi);
                for (long j = 0; j < bins; ++j) {
                    const auto& re = kernels->re[(size_t)j];
                    const auto& im = kernels->im[(size_t)j];
                    long half = kernels->half[(size_t)j];
                    T gre = gr[2 * j], gim = gr[2 * j + 1];
                    if (gre == T(0) && gim == T(0)) continue;
                    for (long t = 0; t < (long)re.size(); ++t)
                        gx.at(reflect_index(c + t - half, n)) += gre * re[(size_t)t] + gim * im[(size_t)t];
                }
            }
        }));
}

}  // namespace hhc
