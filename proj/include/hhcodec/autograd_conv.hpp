#pragma once

// Convolution nodes for the tape. Sequences are [T, C] row-major so the
// inner loops run over contiguous channel vectors.
//
// Weight layouts:
//   conv1d:            [C_out, k, C_in]   (w.row-major, per-out-channel patch)
//   conv_transpose1d:  [C_in,  k, C_out]  (contiguous out-channel vectors)
//   conv2d:            [C_out, kh, kw, C_in], images are [H, W, C]

#include "autograd.hpp"

namespace hhc {

template <typename T>
Var conv1d(Graph<T>& g, Var x, Var w, Var b, long stride, long dilation, long pad) {
    const Tensor<T>& X = g.val(x);
    const Tensor<T>& W = g.val(w);
    long tin = X.rows(), cin = X.cols();
    long cout = W.dim(0), k = W.dim(1);
    if (W.dim(2) != cin) throw std::logic_error("conv1d: channel mismatch");
    long tout = (tin + 2 * pad - dilation * (k - 1) - 1) / stride + 1;
    if (tout < 1) throw std::logic_error("conv1d: output would be empty");
    Tensor<T> out({tout, cout});
    const Tensor<T>& B = g.val(b);
    const long kc = k * cin;
    for (long to = 0; to < tout; ++to) {
        T* yo = out.row(to);
        long t0 = to * stride - pad;
        for (long co = 0; co < cout; ++co) {
            const T* wr = W.ptr() + co * kc;
            T acc = B.at(co);
            for (long dt = 0; dt < k; ++dt) {
                long ti = t0 + dt * dilation;
                if (ti < 0 || ti >= tin) continue;
                acc += dot(X.row(ti), wr + dt * cin, cin);
            }
            yo[co] = acc;
        }
    }
    bool want = g.wants(x) || g.wants(w) || g.wants(b);
    int ix = x.id, iw = w.id, ib = b.id;
    return g.make_node(std::move(out), want, !want ? nullptr : std::function<void(Graph<T>&, int)>(
        [ix, iw, ib, stride, dilation, pad, tin, cin, cout, k, tout, kc](Graph<T>& g2, int id) {
            const Tensor<T>& gy = g2.grad_buf(Var{id});
            Var vx{ix}, vw{iw}, vb{ib};
            const Tensor<T>& X = g2.val(vx);
            const Tensor<T>& W = g2.val(vw);
            bool wx = g2.wants(vx), ww = g2.wants(vw), wb = g2.wants(vb);
            Tensor<T>* gx = wx ? &g2.grad_buf(vx) : nullptr;
            Tensor<T>* gw = ww ? &g2.grad_buf(vw) : nullptr;
            Tensor<T>* gb = wb ? &g2.grad_buf(vb) : nullptr;
            for (long to = 0; to < tout; ++to) {
                const T* gyo = gy.row(to);
                long t0 = to * stride - pad;
                if (wb)
                    for (long co = 0; co < cout; ++co) gb->at(co) += gyo[co];
                for (long dt = 0; dt < k; ++dt) {
                    long ti = t0 + dt * dilation;
                    if (ti < 0 || ti >= tin) continue;
                    for (long co = 0; co < cout; ++co) {
                        T gv = gyo[co];
                        if (gv == T(0)) continue;
                        if (wx) axpy(gx->row(ti), gv, W.ptr() + co * kc + dt * cin, cin);
                        if (ww) axpy(gw->ptr() + co * kc + dt * cin, gv, X.row(ti), cin);
                    }
                }
            }
        }));
}

template <typename T>
Var conv_transpose1d(Graph<T>& g, Var x, Var w, Var b, long stride, long pad) {
    const Tensor<T>& X = g.val(x);
    const Tensor<T>& W = g.val(w);
    long tin = X.rows(), cin = X.cols();
    if (W.dim(0) != cin) throw std::logic_error("conv_transpose1d: channel mismatch");
    long k = W.dim(1), cout = W.dim(2);
    long tout = (tin - 1) * stride + k - 2 * pad;
    if (tout < 1) throw std::logic_error("conv_transpose1d: output would be empty");
    Tensor<T> out({tout, cout});
    const Tensor<T>& B = g.val(b);
    for (long to = 0; to < tout; ++to) {
        T* yo = out.row(to);
        for (long co = 0; co < cout; ++co) yo[co] = B.at(co);
        // to = ti*stride + dt - pad  =>  dt = to + pad - ti*stride
        long ti_lo = std::max(0L, (to + pad - (k - 1) + stride - 1) / stride);
        long ti_hi = std::min(tin - 1, (to + pad) / stride);
        for (long ti = ti_lo; ti <= ti_hi; ++ti) {
            long dt = to + pad - ti * stride;
            const T* xr = X.row(ti);
            for (long ci = 0; ci < cin; ++ci) {
                T xv = xr[ci];
                if (xv == T(0)) continue;
                axpy(yo, xv, W.ptr() + (ci * k + dt) * cout, cout);
            }
        }
    }
    bool want = g.wants(x) || g.wants(w) || g.wants(b);
    int ix = x.id, iw = w.id, ib = b.id;
    return g.make_node(std::move(out), want, !want ? nullptr : std::function<void(Graph<T>&, int)>(
        [ix, iw, ib, stride, pad, tin, cin, cout, k, tout](Graph<T>& g2, int id) {
            const Tensor<T>& gy = g2.grad_buf(Var{id});
            Var vx{ix}, vw{iw}, vb{ib};
            const Tensor<T>& X = g2.val(vx);
            const Tensor<T>& W = g2.val(vw);
            bool wx = g2.wants(vx), ww = g2.wants(vw), wb = g2.wants(vb);
            Tensor<T>* gx = wx ? &g2.grad_buf(vx) : nullptr;
            Tensor<T>* gw = ww ? &g2.grad_buf(vw) : nullptr;
            Tensor<T>* gb = wb ? &g2.grad_buf(vb) : nullptr;
            if (wb)
                for (long to = 0; to < tout; ++to) axpy(gb->ptr(), T(1), gy.row(to), cout);
            for (long ti = 0; ti < tin; ++ti) {
                const T* xr = X.row(ti);
                T* gxr = wx ? gx->row(ti) : nullptr;
                for (long dt = 0; dt < k; ++dt) {
                    long to = ti * stride + dt - pad;
                    if (to < 0 || to >= tout) continue;
                    const T* gyo = gy.row(to);
                    for (long ci = 0; ci < cin; ++ci) {
                        const T* wr = W.ptr() + (ci * k + dt) * cout;
                        if (wx) gxr[ci] += dot(gyo, wr, cout);
                        if (ww) axpy(gw->ptr() + (ci * k + dt) * cout, xr[ci], gyo, cout);
                    }
                }
            }
        }));
}

template <typename T>
Var conv2d(Graph<T>& g, Var x, Var w, Var b, long sh, long sw, long ph, long pw) {
    const Tensor<T>& X = g.val(x);
    const Tensor<T>& W = g.val(w);
    long h = X.dim(0), wd = X.dim(1), cin = X.dim(2);
    long cout = W.dim(0), kh = W.dim(1), kw = W.dim(2);
    if (W.dim(3) != cin) throw std::logic_error("conv2d: channel mismatch");
    long ho = (h + 2 * ph - kh) / sh + 1;
    long wo = (wd + 2 * pw - kw) / sw + 1;
    if (ho < 1 || wo < 1) throw std::logic_error("conv2d: output would be empty");
    Tensor<T> out({ho, wo, cout});
    const Tensor<T>& B = g.val(b);
    auto xat = [&](long yy, long xx) { return X.ptr() + (yy * wd + xx) * cin; };
    for (long oy = 0; oy < ho; ++oy)
        for (long ox = 0; ox < wo; ++ox) {
            T* yo = out.ptr() + (oy * wo + ox) * cout;
            long y0 = oy * sh - ph, x0 = ox * sw - pw;
            for (long co = 0; co < cout; ++co) {
                T acc = B.at(co);
                const T* wc = W.ptr() + co * kh * kw * cin;
                for (long ky = 0; ky < kh; ++ky) {
                    long iy = y0 + ky;
                    if (iy < 0 || iy >= h) continue;
                    for (long kx = 0; kx < kw; ++kx) {
                        long ix2 = x0 + kx;
                        if (ix2 < 0 || ix2 >= wd) continue;
                        acc += dot(xat(iy, ix2), wc + (ky * kw + kx) * cin, cin);
                    }
                }
                yo[co] = acc;
            }
        }
    bool want = g.wants(x) || g.wants(w) || g.wants(b);
    int ix = x.id, iw = w.id, ib = b.id;
    return g.make_node(std::move(out), want, !want ? nullptr : std::function<void(Graph<T>&, int)>(
        [ix, iw, ib, sh, sw, ph, pw, h, wd, cin, cout, kh, kw, ho, wo](Graph<T>& g2, int id) {
            const Tensor<T>& gy = g2.grad_buf(Var{id});
            Var vx{ix}, vw{iw}, vb{ib};
            const Tensor<T>& X = g2.val(vx);
            const Tensor<T>& W = g2.val(vw);
            bool wx = g2.wants(vx), ww = g2.wants(vw), wb = g2.wants(vb);
            Tensor<T>* gx = wx ? &g2.grad_buf(vx) : nullptr;
            Tensor<T>* gw = ww ? &g2.grad_buf(vw) : nullptr;
            Tensor<T>* gb = wb ? &g2.grad_buf(vb) : nullptr;
            for (long oy = 0; oy < ho; ++oy)
                for (long ox = 0; ox < wo; ++ox) {
                    const T* gyo = gy.ptr() + (oy * wo + ox) * cout;
                    long y0 = oy * sh - ph, x0 = ox * sw - pw;
                    if (wb)
                        for (long co = 0; co < cout; ++co) gb->at(co) += gyo[co];
                    for (long ky = 0; ky < kh; ++ky) {
                        long iy = y0 + ky;
                        if (iy < 0 || iy >= h) continue;
                        for (long kx = 0; kx < kw; ++kx) {
                            long ix2 = x0 + kx;
                            if (ix2 < 0 || ix2 >= wd) continue;
                            const T* xr = X.ptr() + (iy * wd + ix2) * cin;
                            T* gxr = wx ? gx->ptr() + (iy * wd + ix2) * cin : nullptr;
                            for (long co = 0; co < cout; ++co) {
                                T gv = gyo[co];
                                if (gv == T(0)) continue;
                                long off = (co * kh * kw + ky * kw + kx) * cin;
                                if (wx) axpy(gxr, gv, W.ptr() + off, cin);
                                if (ww) axpy(gw->ptr() + off, gv, xr, cin);
                            }
                        }
                    }
                }
        }));
}

}  // namespace hhc
