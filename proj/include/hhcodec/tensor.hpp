#pragma once

// Dense row-major tensor of float or double. Shapes are small vectors of
// longs; most ops in autograd.hpp know their shapes statically and index
// raw pointers directly.

#include <algorithm>
#include <cassert>
#include <cstring>
#include <initializer_list>
#include <numeric>
#include <vector>

#include "common.hpp"

namespace hhc {

template <typename T>
struct Tensor {
    std::vector<long> shape;
    std::vector<T> data;

    Tensor() = default;
    explicit Tensor(std::vector<long> s) : shape(std::move(s)), data(count(shape)) {}
    Tensor(std::vector<long> s, T fill) : shape(std::move(s)), data(count(shape), fill) {}

    static long count(const std::vector<long>& s) {
        long n = 1;
        for (long d : s) n *= d;
        return n;
    }

    static Tensor zeros(std::vector<long> s) { return Tensor(std::move(s)); }
    static Tensor full(std::vector<long> s, T v) { return Tensor(std::move(s), v); }
    static Tensor scalar(T v) { return Tensor({1}, v); }

    long numel() const { return (long)data.size(); }
    long dim(int i) const { return shape[(size_t)i]; }
    int ndim() const { return (int)shape.size(); }
    bool same_shape(const Tensor& o) const { return shape == o.shape; }

    T* ptr() { return data.data(); }
    const T* ptr() const { return data.data(); }

    // 2-D helpers (row-major): shape {rows, cols}
    long rows() const { return shape.at(0); }
    long cols() const { return shape.at(1); }
    T* row(long r) { return data.data() + r * cols(); }
    const T* row(long r) const { return data.data() + r * cols(); }

    T& at(long i) { return data[(size_t)i]; }
    const T& at(long i) const { return data[(size_t)i]; }
    T& at(long r, long c) { return data[(size_t)(r * cols() + c)]; }
    const T& at(long r, long c) const { return data[(size_t)(r * cols() + c)]; }

    void fill(T v) { std::fill(data.begin(), data.end(), v); }
    void zero() { fill(T(0)); }

    bool all_finite() const {
        for (T v : data)
            if (!std::isfinite((double)v)) return false;
        return true;
    }

    template <typename U>
    Tensor<U> cast() const {
        Tensor<U> out;
        out.shape = shape;
        out.data.resize(data.size());
        for (size_t i = 0; i < data.size(); ++i) out.data[i] = (U)data[i];
        return out;
    }
};

// y += a * x over n elements; the one axpy every backward pass leans on.
template <typename T>
inline void axpy(T* y, T a, const T* x, long n) {
    for (long i = 0; i < n; ++i) y[i] += a * x[i];
}

template <typename T>
inline T dot(const T* a, const T* b, long n) {
    T s = 0;
    for (long i = 0; i < n; ++i) s += a[i] * b[i];
    return s;
}

}  // namespace hhc
