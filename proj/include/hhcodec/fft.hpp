#pragma once

// Iterative radix-2 complex FFT, power-of-two sizes only. Twiddles are
// cached per size. Enough for the 512/1024/2048 transforms this codec
// uses; no attempt at split-radix cleverness.

#include <complex>
#include <map>
#include <vector>

#include "common.hpp"

namespace hhc {

namespace detail {
template <typename T>
const std::vector<std::complex<T>>& twiddles(long n, bool inverse) {
    thread_local std::map<std::pair<long, bool>, std::vector<std::complex<T>>> cache;
    auto key = std::make_pair(n, inverse);
    auto it = cache.find(key);
    if (it != cache.end()) return it->second;
    std::vector<std::complex<T>> tw((size_t)n / 2);
    double sign = inverse ? 1.0 : -1.0;
    for (long i = 0; i < n / 2; ++i) {
        double a = sign * 2.0 * M_PI * double(i) / double(n);
        tw[(size_t)i] = {T(std::cos(a)), T(std::sin(a))};
    }
    return cache.emplace(key, std::move(tw)).first->second;
}
}  // namespace detail

// In-place transform; no 1/n normalization on the inverse.
template <typename T>
void fft_inplace(std::complex<T>* a, long n, bool inverse) {
    if (n <= 1) return;
    if (n & (n - 1)) throw std::logic_error("fft: size must be a power of two");
    // bit-reversal permutation
    for (long i = 1, j = 0; i < n; ++i) {
        long bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) std::swap(a[i], a[j]);
    }
    const auto& tw = detail::twiddles<T>(n, inverse);
    for (long len = 2; len <= n; len <<= 1) {
        long step = n / len;
        for (long i = 0; i < n; i += len) {
            for (long j = 0; j < len / 2; ++j) {
                std::complex<T> w = tw[(size_t)(j * step)];
                std::complex<T> u = a[i + j];
                std::complex<T> v = a[i + j + len / 2] * w;
                a[i + j] = u + v;
                a[i + j + len / 2] = u - v;
            }
        }
    }
}

// One-sided DFT of a real frame: out has n/2+1 complex bins.
template <typename T>
void rfft(const T* x, long n, std::complex<T>* out) {
    std::vector<std::complex<T>> buf((size_t)n);
    for (long i = 0; i < n; ++i) buf[(size_t)i] = {x[i], T(0)};
    fft_inplace(buf.data(), n, false);
    for (long k = 0; k <= n / 2; ++k) out[k] = buf[(size_t)k];
}

// Adjoint of rfft as a real-linear map: given the gradient on the
// one-sided bins, returns the gradient on the n real inputs.
// grad_x[t] = sum_k (gre_k cos(2 pi k t / n) - gim_k sin(2 pi k t / n))
template <typename T>
void rfft_adjoint(const std::complex<T>* gbins, long n, T* grad_x) {
    std::vector<std::complex<T>> buf((size_t)n, std::complex<T>(0, 0));
    for (long k = 0; k <= n / 2; ++k) buf[(size_t)k] = gbins[k];
    fft_inplace(buf.data(), n, true);  // unnormalized inverse
    for (long t = 0; t < n; ++t) grad_x[t] += buf[(size_t)t].real();
}

}  // namespace hhc
