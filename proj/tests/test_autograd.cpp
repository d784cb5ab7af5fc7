#include <doctest.h>

#include "hhcodec/autograd.hpp"
#include "hhcodec/autograd_conv.hpp"
#include "hhcodec/autograd_spectral.hpp"
#include "testutil.hpp"

using namespace hhc;
using hhctest::check_gradients;
using hhctest::random_tensor;

TEST_CASE("elementwise and reduction gradients match finite differences") {
    Rng rng(7);
    Tensor<double> x = random_tensor({4, 5}, rng);

    auto cases = std::vector<std::pair<const char*, std::function<Var(Graph<double>&, Var)>>>{
        {"mean_abs", [](Graph<double>& g, Var v) { return g.mean_all(g.abs(g.add_const(v, 0.3))); }},
        {"square", [](Graph<double>& g, Var v) { return g.mean_all(g.square(v)); }},
        {"sigmoid", [](Graph<double>& g, Var v) { return g.mean_all(g.sigmoid(v)); }},
        {"tanh", [](Graph<double>& g, Var v) { return g.mean_all(g.tanh_(v)); }},
        {"gelu", [](Graph<double>& g, Var v) { return g.mean_all(g.gelu(v)); }},
        {"exp", [](Graph<double>& g, Var v) { return g.mean_all(g.exp_(v)); }},
        {"log(clamped)", [](Graph<double>& g, Var v) { return g.mean_all(g.log_(g.clamp_min(g.square(v), 1e-3))); }},
        {"leaky_relu", [](Graph<double>& g, Var v) { return g.mean_all(g.leaky_relu(v, 0.1)); }},
        {"softmax", [](Graph<double>& g, Var v) { return g.mean_all(g.square(g.softmax_rows(v))); }},
        {"mul", [](Graph<double>& g, Var v) { return g.mean_all(g.mul(v, g.add_const(v, 1.0))); }},
    };
    for (auto& [name, fn] : cases) {
        CAPTURE(name);
        auto r = check_gradients(x, fn);
        CHECK(r.max_rel_err < 1e-5);
    }
}

TEST_CASE("matmul family gradients") {
    Rng rng(11);
    Tensor<double> x = random_tensor({3, 4}, rng);
    Tensor<double> w = random_tensor({5, 4}, rng);
    Tensor<double> b = random_tensor({5}, rng);

    auto r1 = check_gradients(x, [&](Graph<double>& g, Var v) {
        Var wc = g.leaf(w, false);
        Var bc = g.leaf(b, false);
        return g.mean_all(g.square(g.linear(v, wc, bc)));
    });
    CHECK(r1.max_rel_err < 1e-6);

    auto r2 = check_gradients(w, [&](Graph<double>& g, Var v) {
        Var xc = g.leaf(x, false);
        Var bc = g.leaf(b, false);
        return g.mean_all(g.square(g.linear(xc, v, bc)));
    });
    CHECK(r2.max_rel_err < 1e-6);

    Tensor<double> a = random_tensor({3, 4}, rng);
    Tensor<double> bm = random_tensor({4, 6}, rng);
    auto r3 = check_gradients(a, [&](Graph<double>& g, Var v) {
        Var bc = g.leaf(bm, false);
        return g.mean_all(g.abs(g.matmul(v, bc)));
    });
    CHECK(r3.max_rel_err < 1e-5);
    auto r4 = check_gradients(bm, [&](Graph<double>& g, Var v) {
        Var ac = g.leaf(a, false);
        return g.mean_all(g.abs(g.matmul(ac, v)));
    });
    CHECK(r4.max_rel_err < 1e-5);
}

TEST_CASE("layer norm and snake gradients") {
    Rng rng(13);
    Tensor<double> x = random_tensor({6, 8}, rng);
    Tensor<double> gamma = random_tensor({8}, rng, 0.5);
    Tensor<double> beta = random_tensor({8}, rng, 0.5);
    for (long i = 0; i < gamma.numel(); ++i) gamma.at(i) += 1.0;

    auto rx = check_gradients(x, [&](Graph<double>& g, Var v) {
        return g.mean_all(g.square(g.layer_norm(v, g.leaf(gamma, false), g.leaf(beta, false))));
    });
    CHECK(rx.max_rel_err < 1e-4);
    auto rg = check_gradients(gamma, [&](Graph<double>& g, Var v) {
        return g.mean_all(g.square(g.layer_norm(g.leaf(x, false), v, g.leaf(beta, false))));
    });
    CHECK(rg.max_rel_err < 1e-5);

    Tensor<double> alpha({8});
    for (long i = 0; i < 8; ++i) alpha.at(i) = 0.5 + 0.25 * i;
    auto rs = check_gradients(x, [&](Graph<double>& g, Var v) {
        return g.mean_all(g.square(g.snake(v, g.leaf(alpha, false))));
    });
    CHECK(rs.max_rel_err < 1e-5);
    auto ra = check_gradients(alpha, [&](Graph<double>& g, Var v) {
        return g.mean_all(g.square(g.snake(g.leaf(x, false), v)));
    });
    CHECK(ra.max_rel_err < 1e-5);
}

TEST_CASE("shape op gradients") {
    Rng rng(17);
    Tensor<double> x = random_tensor({5, 6}, rng);
    auto cases = std::vector<std::function<Var(Graph<double>&, Var)>>{
        [](Graph<double>& g, Var v) { return g.mean_all(g.square(g.transpose2d(v))); },
        [](Graph<double>& g, Var v) { return g.mean_all(g.square(g.slice_rows(v, 1, 3))); },
        [](Graph<double>& g, Var v) { return g.mean_all(g.square(g.slice_cols(v, 2, 3))); },
        [](Graph<double>& g, Var v) { return g.mean_all(g.square(g.reverse_rows(v))); },
        [](Graph<double>& g, Var v) { return g.mean_all(g.square(g.concat_rows(v, v))); },
        [](Graph<double>& g, Var v) { return g.mean_all(g.square(g.concat_cols(v, g.scale(v, 2.0)))); },
        [](Graph<double>& g, Var v) { return g.mean_all(g.square(g.gather_rows(v, {4, 0, 2, 2}))); },
        [](Graph<double>& g, Var v) { return g.mean_all(g.square(g.reshape(v, {3, 10}))); },
    };
    for (size_t i = 0; i < cases.size(); ++i) {
        CAPTURE(i);
        auto r = check_gradients(x, cases[i]);
        CHECK(r.max_rel_err < 1e-6);
    }
}

TEST_CASE("conv1d gradients (stride, dilation, padding)") {
    Rng rng(19);
    Tensor<double> x = random_tensor({13, 3}, rng);
    Tensor<double> w = random_tensor({4, 5, 3}, rng, 0.4);
    Tensor<double> b = random_tensor({4}, rng, 0.1);
    for (auto [stride, dil, pad] : std::vector<std::array<long, 3>>{{1, 1, 2}, {2, 1, 2}, {1, 3, 6}, {3, 1, 0}}) {
        CAPTURE(stride);
        CAPTURE(dil);
        CAPTURE(pad);
        auto rx = check_gradients(x, [&](Graph<double>& g, Var v) {
            return g.mean_all(g.square(conv1d(g, v, g.leaf(w, false), g.leaf(b, false), stride, dil, pad)));
        });
        CHECK(rx.max_rel_err < 1e-5);
        auto rw = check_gradients(w, [&](Graph<double>& g, Var v) {
            return g.mean_all(g.square(conv1d(g, g.leaf(x, false), v, g.leaf(b, false), stride, dil, pad)));
        });
        CHECK(rw.max_rel_err < 1e-5);
        auto rb = check_gradients(b, [&](Graph<double>& g, Var v) {
            return g.mean_all(g.square(conv1d(g, g.leaf(x, false), g.leaf(w, false), v, stride, dil, pad)));
        });
        CHECK(rb.max_rel_err < 1e-5);
    }
}

TEST_CASE("conv_transpose1d gradients and exact upsampling length") {
    Rng rng(23);
    Tensor<double> x = random_tensor({6, 3}, rng);
    Tensor<double> w = random_tensor({3, 8, 2}, rng, 0.4);  // [cin, k, cout]
    Tensor<double> b = random_tensor({2}, rng, 0.1);
    // k = 2*stride, pad = stride/2 gives exactly T*stride outputs
    {
        Graph<double> g;
        Var y = conv_transpose1d(g, g.leaf(x, false), g.leaf(w, false), g.leaf(b, false), 4, 2);
        CHECK(g.val(y).rows() == 24);
    }
    auto rx = check_gradients(x, [&](Graph<double>& g, Var v) {
        return g.mean_all(g.square(conv_transpose1d(g, v, g.leaf(w, false), g.leaf(b, false), 4, 2)));
    });
    CHECK(rx.max_rel_err < 1e-5);
    auto rw = check_gradients(w, [&](Graph<double>& g, Var v) {
        return g.mean_all(g.square(conv_transpose1d(g, g.leaf(x, false), v, g.leaf(b, false), 4, 2)));
    });
    CHECK(rw.max_rel_err < 1e-5);
}

TEST_CASE("conv2d gradients") {
    Rng rng(29);
    Tensor<double> x = random_tensor({7, 6, 2}, rng);
    Tensor<double> w = random_tensor({3, 3, 2, 2}, rng, 0.4);
    Tensor<double> b = random_tensor({3}, rng, 0.1);
    auto rx = check_gradients(x, [&](Graph<double>& g, Var v) {
        return g.mean_all(g.square(conv2d(g, v, g.leaf(w, false), g.leaf(b, false), 2, 1, 1, 0)));
    });
    CHECK(rx.max_rel_err < 1e-5);
    auto rw = check_gradients(w, [&](Graph<double>& g, Var v) {
        return g.mean_all(g.square(conv2d(g, g.leaf(x, false), v, g.leaf(b, false), 2, 1, 1, 0)));
    });
    CHECK(rw.max_rel_err < 1e-5);
}

TEST_CASE("spectral node gradients (frame, rfft, magnitude, mel, cqt)") {
    Rng rng(31);
    Tensor<double> x = random_tensor({300}, rng, 0.3);
    SpectrogramConfig cfg;
    cfg.n_fft = 64;
    cfg.win = 64;
    cfg.hop = 16;
    cfg.n_mels = 8;
    cfg.fmax = 12000;

    auto rframe = check_gradients(x, [&](Graph<double>& g, Var v) {
        return g.mean_all(g.square(frame_rows(g, v, cfg)));
    });
    CHECK(rframe.max_rel_err < 1e-5);

    auto rfftg = check_gradients(x, [&](Graph<double>& g, Var v) {
        return g.mean_all(g.square(rfft_rows(g, frame_rows(g, v, cfg))));
    });
    CHECK(rfftg.max_rel_err < 1e-5);

    auto rmag = check_gradients(x, [&](Graph<double>& g, Var v) {
        return g.mean_all(complex_mag(g, rfft_rows(g, frame_rows(g, v, cfg))));
    });
    CHECK(rmag.max_rel_err < 1e-4);

    auto rmel = check_gradients(x, [&](Graph<double>& g, Var v) {
        return g.mean_all(g.square(mel_log_rows(g, v, cfg)));
    });
    CHECK(rmel.max_rel_err < 1e-4);

    CqtConfig cq;
    cq.bins_per_octave = 4;
    cq.n_octaves = 3;
    cq.fmin = 500;
    cq.hop = 64;
    auto kern = std::make_shared<CqtKernels<double>>(CqtKernels<double>::make(cq));
    auto rcqt = check_gradients(x, [&](Graph<double>& g, Var v) {
        return g.mean_all(g.square(complex_mag(g, cqt_rows(g, v, kern))));
    });
    CHECK(rcqt.max_rel_err < 1e-4);
}

TEST_CASE("detach stops gradient flow") {
    Rng rng(37);
    Tensor<double> x = random_tensor({3, 3}, rng);
    Graph<double> g;
    Var v = g.leaf(x);
    Var loss = g.mean_all(g.mul(g.detach(v), v));  // only the live side contributes
    g.backward(loss);
    const Tensor<double>& gr = g.grad_buf(v);
    for (long i = 0; i < x.numel(); ++i) CHECK(gr.at(i) == doctest::Approx(x.at(i) / 9.0).epsilon(1e-12));
}

TEST_CASE("parameter leaves accumulate into Parameter::grad") {
    Parameter<double> p;
    p.name = "w";
    p.value = Tensor<double>({2, 2});
    p.value.at(0) = 1;
    p.value.at(1) = 2;
    p.value.at(2) = 3;
    p.value.at(3) = 4;
    Graph<double> g;
    Var v = g.param(p);
    g.backward(g.sum_all(g.square(v)));
    REQUIRE(p.grad.numel() == 4);
    for (long i = 0; i < 4; ++i) CHECK(p.grad.at(i) == doctest::Approx(2.0 * p.value.at(i)));

    // frozen parameters receive nothing
    Parameter<double> q = p;
    q.trainable = false;
    q.grad = Tensor<double>();
    Graph<double> g2;
    Var vq = g2.param(q);
    g2.backward(g2.sum_all(g2.square(vq)));
    CHECK(q.grad.numel() == 0);
}
