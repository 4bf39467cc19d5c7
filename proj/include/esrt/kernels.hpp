#pragma once

#include <Eigen/Core>
#include <cstring>

#include "esrt/tensor.hpp"

// Dense inner kernels. Everything routes through Eigen so float and double
// paths share one implementation and get SIMD for free.

namespace esrt::detail {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatMap = Eigen::Map<RowMat<T>>;
template <typename T>
using ConstMatMap = Eigen::Map<const RowMat<T>>;

// C(M,N) = A(M,K) * B(K,N)
template <typename T>
void gemm_nn(int64_t m, int64_t n, int64_t k, const T* a, const T* b, T* c,
             bool accumulate = false) {
    ConstMatMap<T> am(a, m, k);
    ConstMatMap<T> bm(b, k, n);
    MatMap<T> cm(c, m, n);
    if (accumulate)
        cm.noalias() += am * bm;
    else
        cm.noalias() = am * bm;
}

// C(M,N) = A(M,K) * B'(N,K)^T
template <typename T>
void gemm_nt(int64_t m, int64_t n, int64_t k, const T* a, const T* b, T* c,
             bool accumulate = false) {
    ConstMatMap<T> am(a, m, k);
    ConstMatMap<T> bm(b, n, k);
    MatMap<T> cm(c, m, n);
    if (accumulate)
        cm.noalias() += am * bm.transpose();
    else
        cm.noalias() = am * bm.transpose();
}

// C(M,N) = A'(K,M)^T * B(K,N)
template <typename T>
void gemm_tn(int64_t m, int64_t n, int64_t k, const T* a, const T* b, T* c,
             bool accumulate = false) {
    ConstMatMap<T> am(a, k, m);
    ConstMatMap<T> bm(b, k, n);
    MatMap<T> cm(c, m, n);
    if (accumulate)
        cm.noalias() += am.transpose() * bm;
    else
        cm.noalias() = am.transpose() * bm;
}

// Patch extraction for conv2d/unfold: stride 1, zero padding (k-1)/2, so the
// column count equals H*W. Row layout is c*k*k + ki*k + kj, matching the
// usual im2col convention.
template <typename T>
void im2col(const T* x, int64_t c_in, int64_t h, int64_t w, int64_t k, T* col) {
    const int64_t pad = (k - 1) / 2;
    const int64_t n = h * w;
    for (int64_t c = 0; c < c_in; ++c) {
        const T* plane = x + c * h * w;
        for (int64_t ki = 0; ki < k; ++ki) {
            for (int64_t kj = 0; kj < k; ++kj) {
                T* row = col + ((c * k + ki) * k + kj) * n;
                const int64_t dy = ki - pad;
                const int64_t dx = kj - pad;
                for (int64_t y = 0; y < h; ++y) {
                    T* dst = row + y * w;
                    const int64_t sy = y + dy;
                    if (sy < 0 || sy >= h) {
                        std::memset(dst, 0, size_t(w) * sizeof(T));
                        continue;
                    }
                    const T* src = plane + sy * w;
                    // valid x range: 0 <= x+dx < w
                    const int64_t x0 = std::max<int64_t>(0, -dx);
                    const int64_t x1 = std::min<int64_t>(w, w - dx);
                    if (x0 > 0) std::memset(dst, 0, size_t(x0) * sizeof(T));
                    if (x1 > x0)
                        std::memcpy(dst + x0, src + x0 + dx, size_t(x1 - x0) * sizeof(T));
                    if (x1 < w) std::memset(dst + x1, 0, size_t(w - x1) * sizeof(T));
                }
            }
        }
    }
}

// Adjoint of im2col: overlap-add of patch columns back onto the image grid.
// Accumulates into x, which the caller must zero first.
template <typename T>
void col2im(const T* col, int64_t c_in, int64_t h, int64_t w, int64_t k, T* x) {
    const int64_t pad = (k - 1) / 2;
    const int64_t n = h * w;
    for (int64_t c = 0; c < c_in; ++c) {
        T* plane = x + c * h * w;
        for (int64_t ki = 0; ki < k; ++ki) {
            for (int64_t kj = 0; kj < k; ++kj) {
                const T* row = col + ((c * k + ki) * k + kj) * n;
                const int64_t dy = ki - pad;
                const int64_t dx = kj - pad;
                for (int64_t y = 0; y < h; ++y) {
                    const int64_t sy = y + dy;
                    if (sy < 0 || sy >= h) continue;
                    const T* src = row + y * w;
                    T* dst = plane + sy * w;
                    const int64_t x0 = std::max<int64_t>(0, -dx);
                    const int64_t x1 = std::min<int64_t>(w, w - dx);
                    for (int64_t xx = x0; xx < x1; ++xx) dst[xx + dx] += src[xx];
                }
            }
        }
    }
}

}  // namespace esrt::detail
