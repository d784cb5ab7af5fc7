#pragma once

// Reverse-mode autodiff tape over Tensor<T>. Define-by-run: every op
// appends a node holding the forward value and a backward closure.
// Gradients accumulate into per-node buffers; parameter leaves forward
// their gradient into the owning Parameter at backward time.
//
// All reductions run in a fixed serial order, so results are bit-stable
// for a given build regardless of how callers batch work.

#include <functional>
#include <memory>

#include "tensor.hpp"

namespace hhc {

template <typename T>
struct Parameter {
    std::string name;
    Tensor<T> value;
    Tensor<T> grad;     // same shape as value once touched
    Tensor<T> adam_m;   // optimizer state lives with the parameter
    Tensor<T> adam_v;
    bool trainable = true;

    void ensure_grad() {
        if (grad.shape != value.shape) grad = Tensor<T>::zeros(value.shape);
    }
    void zero_grad() {
        if (!grad.data.empty()) grad.zero();
    }
};

struct Var {
    int id = -1;
    bool valid() const { return id >= 0; }
};

template <typename T>
class Graph {
public:
    struct Node {
        Tensor<T> value;
        Tensor<T> grad;
        bool want = false;      // participates in backprop
        bool touched = false;   // grad buffer has been written
        std::function<void(Graph&, int)> back;  // may be empty (leaf)
    };

    Tensor<T>& val(Var v) { return nodes_[(size_t)v.id]->value; }
    const Tensor<T>& val(Var v) const { return nodes_[(size_t)v.id]->value; }
    bool wants(Var v) const { return nodes_[(size_t)v.id]->want; }
    size_t size() const { return nodes_.size(); }

    // Gradient buffer, allocated and zeroed on first access.
    Tensor<T>& grad_buf(Var v) {
        Node& n = *nodes_[(size_t)v.id];
        if (n.grad.shape != n.value.shape) n.grad = Tensor<T>::zeros(n.value.shape);
        n.touched = true;
        return n.grad;
    }
    bool touched(Var v) const { return nodes_[(size_t)v.id]->touched; }

    // Core extension point: other headers register ops through this.
    Var make_node(Tensor<T> value, bool want, std::function<void(Graph&, int)> back) {
        auto n = std::make_unique<Node>();
        n->value = std::move(value);
        n->want = want;
        n->back = std::move(back);
        nodes_.push_back(std::move(n));
        return Var{(int)nodes_.size() - 1};
    }

    Var constant(Tensor<T> v) { return make_node(std::move(v), false, nullptr); }
    Var constant(T v) { return constant(Tensor<T>::scalar(v)); }

    // Leaf tied to a Parameter; trainable parameters receive gradients.
    Var param(Parameter<T>& p, bool train = true) {
        bool want = train && p.trainable;
        Parameter<T>* pp = &p;
        return make_node(p.value, want, want ? std::function<void(Graph&, int)>([pp](Graph& g, int id) {
            pp->ensure_grad();
            Node& n = *g.nodes_[(size_t)id];
            for (long i = 0; i < n.grad.numel(); ++i) pp->grad.at(i) += n.grad.at(i);
        })
                                             : std::function<void(Graph&, int)>(nullptr));
    }

    // A leaf that exposes its gradient for inspection (tests, encoders).
    Var leaf(Tensor<T> v, bool want = true) { return make_node(std::move(v), want, nullptr); }

    // Stops gradient flow: forward copy, no backward edge.
    Var detach(Var a) { return constant(val(a)); }

    void backward(Var loss) {
        Node& ln = *nodes_[(size_t)loss.id];
        if (ln.value.numel() != 1) throw std::logic_error("backward: loss must be scalar");
        grad_buf(loss).fill(T(1));
        for (long i = loss.id; i >= 0; --i) {
            Node& n = *nodes_[(size_t)i];
            if (n.touched && n.back) n.back(*this, (int)i);
        }
    }

    // ---- elementwise binary ----

    Var add(Var a, Var b) { return ew2(a, b, [](T x, T y) { return x + y; }, T(1), T(1)); }
    Var sub(Var a, Var b) { return ew2(a, b, [](T x, T y) { return x - y; }, T(1), T(-1)); }

    Var mul(Var a, Var b) {
        check_same(a, b, "mul");
        Tensor<T> out(val(a).shape);
        const Tensor<T>&A = val(a), &B = val(b);
        for (long i = 0; i < out.numel(); ++i) out.at(i) = A.at(i) * B.at(i);
        bool w = wants(a) || wants(b);
        int ia = a.id, ib = b.id;
        return make_node(std::move(out), w, !w ? nullptr : std::function<void(Graph&, int)>([ia, ib](Graph& g, int id) {
            const Tensor<T>& gy = g.nodes_[(size_t)id]->grad;
            Var va{ia}, vb{ib};
            if (g.wants(va)) {
                Tensor<T>& ga = g.grad_buf(va);
                const Tensor<T>& B = g.val(vb);
                for (long i = 0; i < gy.numel(); ++i) ga.at(i) += gy.at(i) * B.at(i);
            }
            if (g.wants(vb)) {
                Tensor<T>& gb = g.grad_buf(vb);
                const Tensor<T>& A = g.val(va);
                for (long i = 0; i < gy.numel(); ++i) gb.at(i) += gy.at(i) * A.at(i);
            }
        }));
    }

    // ---- scalar / unary ----

    Var scale(Var a, T c) {
        Tensor<T> out(val(a).shape);
        for (long i = 0; i < out.numel(); ++i) out.at(i) = val(a).at(i) * c;
        return unary(a, std::move(out), [c](Graph& g, const Tensor<T>& gy, Tensor<T>& ga, const Tensor<T>&) {
            (void)g;
            for (long i = 0; i < gy.numel(); ++i) ga.at(i) += gy.at(i) * c;
        });
    }

    Var add_const(Var a, T c) {
        Tensor<T> out(val(a).shape);
        for (long i = 0; i < out.numel(); ++i) out.at(i) = val(a).at(i) + c;
        return unary(a, std::move(out), pass_through());
    }

    Var neg(Var a) { return scale(a, T(-1)); }

    Var relu(Var a) {
        return map(a, [](T x) { return x > 0 ? x : T(0); }, [](T x, T) { return x > 0 ? T(1) : T(0); });
    }

    Var leaky_relu(Var a, T slope) {
        return map(a, [slope](T x) { return x > 0 ? x : slope * x; },
                   [slope](T x, T) { return x > 0 ? T(1) : slope; });
    }

    Var abs(Var a) {
        return map(a, [](T x) { return std::fabs(x); },
                   [](T x, T) { return x > 0 ? T(1) : (x < 0 ? T(-1) : T(0)); });
    }

    Var square(Var a) {
        return map(a, [](T x) { return x * x; }, [](T x, T) { return T(2) * x; });
    }

    Var sqrt_(Var a) {
        return map(a, [](T x) { return std::sqrt(x); },
                   [](T, T y) { return T(0.5) / std::max(y, T(1e-30)); });
    }

    Var exp_(Var a) {
        return map(a, [](T x) { return std::exp(x); }, [](T, T y) { return y; });
    }

    Var log_(Var a) {
        return map(a, [](T x) { return std::log(x); }, [](T x, T) { return T(1) / x; });
    }

    Var sigmoid(Var a) {
        return map(a, [](T x) { return T(1) / (T(1) + std::exp(-x)); },
                   [](T, T y) { return y * (T(1) - y); });
    }

    Var tanh_(Var a) {
        return map(a, [](T x) { return std::tanh(x); }, [](T, T y) { return T(1) - y * y; });
    }

    // GELU, tanh approximation (decoder blocks use this).
    Var gelu(Var a) {
        const T k = T(0.7978845608028654);  // sqrt(2/pi)
        const T c = T(0.044715);
        return map(a,
                   [k, c](T x) {
                       T u = k * (x + c * x * x * x);
                       return T(0.5) * x * (T(1) + std::tanh(u));
                   },
                   [k, c](T x, T) {
                       T u = k * (x + c * x * x * x);
                       T t = std::tanh(u);
                       return T(0.5) * (T(1) + t) + T(0.5) * x * (T(1) - t * t) * k * (T(1) + T(3) * c * x * x);
                   });
    }

    // Clamp from below; zero subgradient on the clamped side.
    Var clamp_min(Var a, T floor_v) {
        return map(a, [floor_v](T x) { return x < floor_v ? floor_v : x; },
                   [floor_v](T x, T) { return x > floor_v ? T(1) : T(0); });
    }

    // ---- reductions ----

    Var sum_all(Var a) {
        T s = 0;
        const Tensor<T>& A = val(a);
        for (long i = 0; i < A.numel(); ++i) s += A.at(i);
        return unary(a, Tensor<T>::scalar(s), [](Graph&, const Tensor<T>& gy, Tensor<T>& ga, const Tensor<T>&) {
            T g = gy.at(0);
            for (long i = 0; i < ga.numel(); ++i) ga.at(i) += g;
        });
    }

    Var mean_all(Var a) {
        long n = val(a).numel();
        return scale(sum_all(a), T(1) / T(n));
    }

    // mean |a - b|, the workhorse of Eq. 3-style terms
    Var l1_mean(Var a, Var b) { return mean_all(abs(sub(a, b))); }
    // mean (a - b)^2
    Var mse_mean(Var a, Var b) { return mean_all(square(sub(a, b))); }

    // ---- linear algebra ----

    // Y[m,n] = A[m,k] * B[k,n]
    Var matmul(Var a, Var b) {
        const Tensor<T>&A = val(a), &B = val(b);
        long m = A.rows(), k = A.cols(), n = B.cols();
        if (B.rows() != k) throw std::logic_error("matmul: inner dims");
        Tensor<T> out({m, n});
        for (long i = 0; i < m; ++i) {
            T* yi = out.row(i);
            const T* ai = A.row(i);
            for (long p = 0; p < k; ++p) axpy(yi, ai[p], B.row(p), n);
        }
        bool w = wants(a) || wants(b);
        int ia = a.id, ib = b.id;
        return make_node(std::move(out), w, !w ? nullptr : std::function<void(Graph&, int)>([ia, ib, m, k, n](Graph& g, int id) {
            const Tensor<T>& gy = g.nodes_[(size_t)id]->grad;
            Var va{ia}, vb{ib};
            if (g.wants(va)) {
                Tensor<T>& ga = g.grad_buf(va);
                const Tensor<T>& B = g.val(vb);
                for (long i = 0; i < m; ++i) {
                    T* gai = ga.row(i);
                    const T* gyi = gy.row(i);
                    for (long p = 0; p < k; ++p) gai[p] += dot(gyi, B.row(p), n);
                }
            }
            if (g.wants(vb)) {
                Tensor<T>& gb = g.grad_buf(vb);
                const Tensor<T>& A = g.val(va);
                for (long i = 0; i < m; ++i) {
                    const T* ai = A.row(i);
                    const T* gyi = gy.row(i);
                    for (long p = 0; p < k; ++p) axpy(gb.row(p), ai[p], gyi, n);
                }
            }
        }));
    }

    // Y[m,n] = A[m,k] * B[n,k]^T  (dot-product form; weights stay row-major)
    Var matmul_nt(Var a, Var b) {
        const Tensor<T>&A = val(a), &B = val(b);
        long m = A.rows(), k = A.cols(), n = B.rows();
        if (B.cols() != k) throw std::logic_error("matmul_nt: inner dims");
        Tensor<T> out({m, n});
        for (long i = 0; i < m; ++i) {
            const T* ai = A.row(i);
            T* yi = out.row(i);
            for (long j = 0; j < n; ++j) yi[j] = dot(ai, B.row(j), k);
        }
        bool w = wants(a) || wants(b);
        int ia = a.id, ib = b.id;
        return make_node(std::move(out), w, !w ? nullptr : std::function<void(Graph&, int)>([ia, ib, m, k, n](Graph& g, int id) {
            const Tensor<T>& gy = g.nodes_[(size_t)id]->grad;
            Var va{ia}, vb{ib};
            if (g.wants(va)) {
                Tensor<T>& ga = g.grad_buf(va);
                const Tensor<T>& B = g.val(vb);
                for (long i = 0; i < m; ++i) {
                    T* gai = ga.row(i);
                    const T* gyi = gy.row(i);
                    for (long j = 0; j < n; ++j) axpy(gai, gyi[j], B.row(j), k);
                }
            }
            if (g.wants(vb)) {
                Tensor<T>& gb = g.grad_buf(vb);
                const Tensor<T>& A = g.val(va);
                for (long i = 0; i < m; ++i) {
                    const T* ai = A.row(i);
                    const T* gyi = gy.row(i);
                    for (long j = 0; j < n; ++j) axpy(gb.row(j), gyi[j], ai, k);
                }
            }
        }));
    }

    // y[t,:] = x[t,:] * W^T + b ; W is [out,in], b is [out]
    Var linear(Var x, Var w, Var b) {
        Var y = matmul_nt(x, w);
        return add_bias(y, b);
    }

    // broadcast-add a [C] bias over rows of [T,C]
    Var add_bias(Var x, Var b) {
        const Tensor<T>&X = val(x), &B = val(b);
        long rows = X.rows(), c = X.cols();
        if (B.numel() != c) throw std::logic_error("add_bias: width mismatch");
        Tensor<T> out = X;
        for (long r = 0; r < rows; ++r) axpy(out.row(r), T(1), B.ptr(), c);
        bool w = wants(x) || wants(b);
        int ix = x.id, ib = b.id;
        return make_node(std::move(out), w, !w ? nullptr : std::function<void(Graph&, int)>([ix, ib, rows, c](Graph& g, int id) {
            const Tensor<T>& gy = g.nodes_[(size_t)id]->grad;
            Var vx{ix}, vb{ib};
            if (g.wants(vx)) {
                Tensor<T>& gx = g.grad_buf(vx);
                for (long i = 0; i < gy.numel(); ++i) gx.at(i) += gy.at(i);
            }
            if (g.wants(vb)) {
                Tensor<T>& gb = g.grad_buf(vb);
                for (long r = 0; r < rows; ++r) axpy(gb.ptr(), T(1), gy.row(r), c);
            }
        }));
    }

    // multiply each row of x[F,N] by weights w[N] (window application)
    Var rowwise_mul(Var x, Var w) {
        const Tensor<T>&X = val(x), &W = val(w);
        long rows = X.rows(), c = X.cols();
        if (W.numel() != c) throw std::logic_error("rowwise_mul: width mismatch");
        Tensor<T> out(X.shape);
        for (long r = 0; r < rows; ++r)
            for (long j = 0; j < c; ++j) out.at(r, j) = X.at(r, j) * W.at(j);
        bool want = wants(x) || wants(w);
        int ix = x.id, iw = w.id;
        return make_node(std::move(out), want, !want ? nullptr : std::function<void(Graph&, int)>([ix, iw, rows, c](Graph& g, int id) {
            const Tensor<T>& gy = g.nodes_[(size_t)id]->grad;
            Var vx{ix}, vw{iw};
            if (g.wants(vx)) {
                Tensor<T>& gx = g.grad_buf(vx);
                const Tensor<T>& W = g.val(vw);
                for (long r = 0; r < rows; ++r)
                    for (long j = 0; j < c; ++j) gx.at(r, j) += gy.at(r, j) * W.at(j);
            }
            if (g.wants(vw)) {
                Tensor<T>& gw = g.grad_buf(vw);
                const Tensor<T>& X = g.val(vx);
                for (long r = 0; r < rows; ++r)
                    for (long j = 0; j < c; ++j) gw.at(j) += gy.at(r, j) * X.at(r, j);
            }
        }));
    }

    // ---- softmax / layer norm ----

    Var softmax_rows(Var a) {
        const Tensor<T>& A = val(a);
        long rows = A.rows(), c = A.cols();
        Tensor<T> out(A.shape);
        for (long r = 0; r < rows; ++r) {
            const T* x = A.row(r);
            T* y = out.row(r);
            T mx = x[0];
            for (long j = 1; j < c; ++j) mx = std::max(mx, x[j]);
            T s = 0;
            for (long j = 0; j < c; ++j) {
                y[j] = std::exp(x[j] - mx);
                s += y[j];
            }
            T inv = T(1) / s;
            for (long j = 0; j < c; ++j) y[j] *= inv;
        }
        return unary(a, std::move(out), [rows, c](Graph& g, const Tensor<T>& gy, Tensor<T>& ga, const Tensor<T>& y) {
            (void)g;
            for (long r = 0; r < rows; ++r) {
                const T* yr = y.row(r);
                const T* gr = gy.row(r);
                T d = dot(gr, yr, c);
                T* gar = ga.row(r) - 0;  // same row pointer arithmetic
                for (long j = 0; j < c; ++j) gar[j] += yr[j] * (gr[j] - d);
            }
        });
    }

    // LayerNorm over the last axis of [T,C] with affine params.
    Var layer_norm(Var x, Var gamma, Var beta, T eps = T(1e-5)) {
        const Tensor<T>& X = val(x);
        long rows = X.rows(), c = X.cols();
        Tensor<T> out(X.shape);
        Tensor<T> xhat(X.shape);
        Tensor<T> inv_sigma({rows});
        const Tensor<T>&G = val(gamma), &B = val(beta);
        for (long r = 0; r < rows; ++r) {
            const T* xr = X.row(r);
            T mu = 0;
            for (long j = 0; j < c; ++j) mu += xr[j];
            mu /= T(c);
            T var = 0;
            for (long j = 0; j < c; ++j) {
                T d = xr[j] - mu;
                var += d * d;
            }
            var /= T(c);
            T is = T(1) / std::sqrt(var + eps);
            inv_sigma.at(r) = is;
            T* hr = xhat.row(r);
            T* yr = out.row(r);
            for (long j = 0; j < c; ++j) {
                hr[j] = (xr[j] - mu) * is;
                yr[j] = hr[j] * G.at(j) + B.at(j);
            }
        }
        bool w = wants(x) || wants(gamma) || wants(beta);
        int ix = x.id, ig = gamma.id, ib = beta.id;
        auto xh = std::make_shared<Tensor<T>>(std::move(xhat));
        auto is = std::make_shared<Tensor<T>>(std::move(inv_sigma));
        return make_node(std::move(out), w, !w ? nullptr : std::function<void(Graph&, int)>([ix, ig, ib, xh, is, rows, c](Graph& g, int id) {
            const Tensor<T>& gy = g.nodes_[(size_t)id]->grad;
            Var vx{ix}, vg{ig}, vb{ib};
            const Tensor<T>& G = g.val(vg);
            if (g.wants(vg)) {
                Tensor<T>& gg = g.grad_buf(vg);
                for (long r = 0; r < rows; ++r)
                    for (long j = 0; j < c; ++j) gg.at(j) += gy.at(r, j) * xh->at(r, j);
            }
            if (g.wants(vb)) {
                Tensor<T>& gb = g.grad_buf(vb);
                for (long r = 0; r < rows; ++r) axpy(gb.ptr(), T(1), gy.row(r), c);
            }
            if (g.wants(vx)) {
                Tensor<T>& gx = g.grad_buf(vx);
                for (long r = 0; r < rows; ++r) {
                    T m1 = 0, m2 = 0;
                    for (long j = 0; j < c; ++j) {
                        T t = gy.at(r, j) * G.at(j);
                        m1 += t;
                        m2 += t * xh->at(r, j);
                    }
                    m1 /= T(c);
                    m2 /= T(c);
                    T isr = is->at(r);
                    for (long j = 0; j < c; ++j) {
                        T t = gy.at(r, j) * G.at(j);
                        gx.at(r, j) += (t - m1 - xh->at(r, j) * m2) * isr;
                    }
                }
            }
        }));
    }

    // Snake activation x + sin^2(alpha x)/alpha with per-channel alpha ([C]).
    Var snake(Var x, Var alpha) {
        const Tensor<T>& X = val(x);
        const Tensor<T>& A = val(alpha);
        long rows = X.rows(), c = X.cols();
        if (A.numel() != c) throw std::logic_error("snake: alpha width");
        Tensor<T> out(X.shape);
        for (long r = 0; r < rows; ++r)
            for (long j = 0; j < c; ++j) {
                T al = A.at(j);
                T s = std::sin(al * X.at(r, j));
                out.at(r, j) = X.at(r, j) + s * s / (al + (al >= 0 ? T(1e-9) : T(-1e-9)));
            }
        bool w = wants(x) || wants(alpha);
        int ix = x.id, ia = alpha.id;
        return make_node(std::move(out), w, !w ? nullptr : std::function<void(Graph&, int)>([ix, ia, rows, c](Graph& g, int id) {
            const Tensor<T>& gy = g.nodes_[(size_t)id]->grad;
            Var vx{ix}, va{ia};
            const Tensor<T>& X = g.val(vx);
            const Tensor<T>& A = g.val(va);
            bool wx = g.wants(vx), wa = g.wants(va);
            Tensor<T>* gx = wx ? &g.grad_buf(vx) : nullptr;
            Tensor<T>* ga = wa ? &g.grad_buf(va) : nullptr;
            for (long r = 0; r < rows; ++r)
                for (long j = 0; j < c; ++j) {
                    T al = A.at(j);
                    T safe = al + (al >= 0 ? T(1e-9) : T(-1e-9));
                    T xv = X.at(r, j);
                    T s = std::sin(al * xv);
                    T s2a = std::sin(T(2) * al * xv);
                    T gyv = gy.at(r, j);
                    if (wx) gx->at(r, j) += gyv * (T(1) + s2a);
                    if (wa) ga->at(j) += gyv * (xv * s2a / safe - s * s / (safe * safe));
                }
        }));
    }

    // ---- shape ops ----

    Var reshape(Var a, std::vector<long> shp) {
        Tensor<T> out = val(a);
        if (Tensor<T>::count(shp) != out.numel()) throw std::logic_error("reshape: numel");
        out.shape = std::move(shp);
        return unary(a, std::move(out), pass_through());
    }

    Var transpose2d(Var a) {
        const Tensor<T>& A = val(a);
        long m = A.rows(), n = A.cols();
        Tensor<T> out({n, m});
        for (long i = 0; i < m; ++i)
            for (long j = 0; j < n; ++j) out.at(j, i) = A.at(i, j);
        return unary(a, std::move(out), [m, n](Graph&, const Tensor<T>& gy, Tensor<T>& ga, const Tensor<T>&) {
            for (long i = 0; i < m; ++i)
                for (long j = 0; j < n; ++j) ga.at(i, j) += gy.at(j, i);
        });
    }

    Var slice_rows(Var a, long start, long len) {
        const Tensor<T>& A = val(a);
        long c = A.cols();
        Tensor<T> out({len, c});
        std::memcpy(out.ptr(), A.row(start), sizeof(T) * (size_t)(len * c));
        return unary(a, std::move(out), [start, len, c](Graph&, const Tensor<T>& gy, Tensor<T>& ga, const Tensor<T>&) {
            for (long r = 0; r < len; ++r) axpy(ga.row(start + r), T(1), gy.row(r), c);
        });
    }

    Var slice_cols(Var a, long start, long len) {
        const Tensor<T>& A = val(a);
        long rows = A.rows();
        Tensor<T> out({rows, len});
        for (long r = 0; r < rows; ++r) std::memcpy(out.row(r), A.row(r) + start, sizeof(T) * (size_t)len);
        return unary(a, std::move(out), [start, len, rows](Graph&, const Tensor<T>& gy, Tensor<T>& ga, const Tensor<T>&) {
            for (long r = 0; r < rows; ++r) axpy(ga.row(r) + start, T(1), gy.row(r), len);
        });
    }

    Var concat_rows(Var a, Var b) {
        const Tensor<T>&A = val(a), &B = val(b);
        if (A.cols() != B.cols()) throw std::logic_error("concat_rows: widths");
        long c = A.cols(), ra = A.rows(), rb = B.rows();
        Tensor<T> out({ra + rb, c});
        std::memcpy(out.ptr(), A.ptr(), sizeof(T) * (size_t)A.numel());
        std::memcpy(out.row(ra), B.ptr(), sizeof(T) * (size_t)B.numel());
        bool w = wants(a) || wants(b);
        int ia = a.id, ib = b.id;
        return make_node(std::move(out), w, !w ? nullptr : std::function<void(Graph&, int)>([ia, ib, ra, rb, c](Graph& g, int id) {
            const Tensor<T>& gy = g.nodes_[(size_t)id]->grad;
            Var va{ia}, vb{ib};
            if (g.wants(va)) {
                Tensor<T>& ga = g.grad_buf(va);
                for (long i = 0; i < ra * c; ++i) ga.at(i) += gy.at(i);
            }
            if (g.wants(vb)) {
                Tensor<T>& gb = g.grad_buf(vb);
                const T* src = gy.ptr() + ra * c;
                for (long i = 0; i < rb * c; ++i) gb.at(i) += src[i];
            }
        }));
    }

    Var concat_cols(Var a, Var b) {
        const Tensor<T>&A = val(a), &B = val(b);
        if (A.rows() != B.rows()) throw std::logic_error("concat_cols: rows");
        long rows = A.rows(), ca = A.cols(), cb = B.cols();
        Tensor<T> out({rows, ca + cb});
        for (long r = 0; r < rows; ++r) {
            std::memcpy(out.row(r), A.row(r), sizeof(T) * (size_t)ca);
            std::memcpy(out.row(r) + ca, B.row(r), sizeof(T) * (size_t)cb);
        }
        bool w = wants(a) || wants(b);
        int ia = a.id, ib = b.id;
        return make_node(std::move(out), w, !w ? nullptr : std::function<void(Graph&, int)>([ia, ib, rows, ca, cb](Graph& g, int id) {
            const Tensor<T>& gy = g.nodes_[(size_t)id]->grad;
            Var va{ia}, vb{ib};
            if (g.wants(va)) {
                Tensor<T>& ga = g.grad_buf(va);
                for (long r = 0; r < rows; ++r) axpy(ga.row(r), T(1), gy.row(r), ca);
            }
            if (g.wants(vb)) {
                Tensor<T>& gb = g.grad_buf(vb);
                for (long r = 0; r < rows; ++r) axpy(gb.row(r), T(1), gy.row(r) + ca, cb);
            }
        }));
    }

    Var reverse_rows(Var a) {
        const Tensor<T>& A = val(a);
        long rows = A.rows(), c = A.cols();
        Tensor<T> out(A.shape);
        for (long r = 0; r < rows; ++r) std::memcpy(out.row(r), A.row(rows - 1 - r), sizeof(T) * (size_t)c);
        return unary(a, std::move(out), [rows, c](Graph&, const Tensor<T>& gy, Tensor<T>& ga, const Tensor<T>&) {
            for (long r = 0; r < rows; ++r) axpy(ga.row(rows - 1 - r), T(1), gy.row(r), c);
        });
    }

    // rows of M[K,d] selected by a fixed index list; backward scatter-adds
    Var gather_rows(Var m, std::vector<long> idx) {
        const Tensor<T>& M = val(m);
        long d = M.cols();
        Tensor<T> out({(long)idx.size(), d});
        for (size_t r = 0; r < idx.size(); ++r) std::memcpy(out.row((long)r), M.row(idx[r]), sizeof(T) * (size_t)d);
        auto ids = std::make_shared<std::vector<long>>(std::move(idx));
        return unary(m, std::move(out), [ids, d](Graph&, const Tensor<T>& gy, Tensor<T>& ga, const Tensor<T>&) {
            for (size_t r = 0; r < ids->size(); ++r) axpy(ga.row((*ids)[r]), T(1), gy.row((long)r), d);
        });
    }

    // mean of a list of scalar vars
    Var mean_of(const std::vector<Var>& xs) {
        if (xs.empty()) throw std::logic_error("mean_of: empty");
        Var s = xs[0];
        for (size_t i = 1; i < xs.size(); ++i) s = add(s, xs[i]);
        return scale(s, T(1) / T(xs.size()));
    }

private:
    std::vector<std::unique_ptr<Node>> nodes_;

    void check_same(Var a, Var b, const char* who) {
        if (!val(a).same_shape(val(b))) throw std::logic_error(std::string(who) + ": shape mismatch");
    }

    template <typename F>
    Var ew2(Var a, Var b, F f, T da, T db) {
        check_same(a, b, "ew2");
        const Tensor<T>&A = val(a), &B = val(b);
        Tensor<T> out(A.shape);
        for (long i = 0; i < out.numel(); ++i) out.at(i) = f(A.at(i), B.at(i));
        bool w = wants(a) || wants(b);
        int ia = a.id, ib = b.id;
        return make_node(std::move(out), w, !w ? nullptr : std::function<void(Graph&, int)>([ia, ib, da, db](Graph& g, int id) {
            const Tensor<T>& gy = g.nodes_[(size_t)id]->grad;
            Var va{ia}, vb{ib};
            if (g.wants(va)) {
                Tensor<T>& ga = g.grad_buf(va);
                for (long i = 0; i < gy.numel(); ++i) ga.at(i) += da * gy.at(i);
            }
            if (g.wants(vb)) {
                Tensor<T>& gb = g.grad_buf(vb);
                for (long i = 0; i < gy.numel(); ++i) gb.at(i) += db * gy.at(i);
            }
        }));
    }

    // unary op with backward expressed on (grad_out, grad_in, value_out)
    template <typename Back>
    Var unary(Var a, Tensor<T> out, Back back) {
        bool w = wants(a);
        int ia = a.id;
        return make_node(std::move(out), w, !w ? nullptr : std::function<void(Graph&, int)>([ia, back](Graph& g, int id) {
            Var va{ia};
            if (!g.wants(va)) return;
            back(g, g.nodes_[(size_t)id]->grad, g.grad_buf(va), g.nodes_[(size_t)id]->value);
        }));
    }

    static auto pass_through() {
        return [](Graph&, const Tensor<T>& gy, Tensor<T>& ga, const Tensor<T>&) {
            for (long i = 0; i < gy.numel(); ++i) ga.at(i) += gy.at(i);
        };
    }

    // elementwise map with pointwise derivative df(x, y)
    template <typename F, typename DF>
    Var map(Var a, F f, DF df) {
        const Tensor<T>& A = val(a);
        Tensor<T> out(A.shape);
        for (long i = 0; i < out.numel(); ++i) out.at(i) = f(A.at(i));
        bool w = wants(a);
        int ia = a.id;
        return make_node(std::move(out), w, !w ? nullptr : std::function<void(Graph&, int)>([ia, df](Graph& g, int id) {
            Var va{ia};
            if (!g.wants(va)) return;
            const Tensor<T>& gy = g.nodes_[(size_t)id]->grad;
            const Tensor<T>& y = g.nodes_[(size_t)id]->value;
            const Tensor<T>& x = g.val(va);
            Tensor<T>& ga = g.grad_buf(va);
            for (long i = 0; i < gy.numel(); ++i) ga.at(i) += gy.at(i) * df(x.at(i), y.at(i));
        }));
    }
};

}  // namespace hhc
