#pragma once

// Shared helpers for the test suites: finite-difference gradient checks
// and small random tensors.

#include <functional>

#include "hhcodec/autograd.hpp"
#include "hhcodec/common.hpp"

namespace hhctest {

using hhc::Graph;
using hhc::Rng;
using hhc::Tensor;
using hhc::Var;

inline Tensor<double> random_tensor(std::vector<long> shape, hhc::Rng& rng, double scale = 1.0) {
    Tensor<double> t(std::move(shape));
    for (long i = 0; i < t.numel(); ++i) t.at(i) = rng.normal() * scale;
    return t;
}

// Central finite differences on a scalar-valued graph builder.
// build(graph, leaf) must construct the loss from the leaf alone
// (internally created constants are fine).
struct GradCheckResult {
    double max_rel_err = 0;
    double max_abs_err = 0;
    long checked = 0;
};

inline GradCheckResult check_gradients(const Tensor<double>& x0,
                                       const std::function<Var(Graph<double>&, Var)>& build,
                                       double eps = 1e-5, long max_coords = -1) {
    Graph<double> g;
    Var x = g.leaf(x0);
    Var loss = build(g, x);
    g.backward(loss);
    Tensor<double> analytic = g.grad_buf(x);

    auto eval = [&](const Tensor<double>& xv) {
        Graph<double> g2;
        Var x2 = g2.leaf(xv, false);
        Var l2 = build(g2, x2);
        return g2.val(l2).at(0);
    };

    GradCheckResult res;
    long n = x0.numel();
    long step = 1;
    if (max_coords > 0 && n > max_coords) step = n / max_coords;
    for (long i = 0; i < n; i += step) {
        Tensor<double> xp = x0, xm = x0;
        xp.at(i) += eps;
        xm.at(i) -= eps;
        double num = (eval(xp) - eval(xm)) / (2 * eps);
        double ana = analytic.at(i);
        double abs_err = std::fabs(num - ana);
        double rel = abs_err / std::max({std::fabs(num), std::fabs(ana), 1e-8});
        res.max_rel_err = std::max(res.max_rel_err, rel);
        res.max_abs_err = std::max(res.max_abs_err, abs_err);
        ++res.checked;
    }
    return res;
}

}  // namespace hhctest
