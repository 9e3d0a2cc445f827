#pragma once

// Small single-threaded GEMM kernels. Inner loops are contiguous axpy or
// fixed-order multi-accumulator dots so they vectorise without
// reassociation; results are bitwise reproducible.

#include <cstdint>

namespace lutfuse::ad::detail {

inline float dot(const float* a, const float* b, std::int64_t n) {
    float acc[8] = {0, 0, 0, 0, 0, 0, 0, 0};
    std::int64_t j = 0;
    for (; j + 8 <= n; j += 8) {
        for (int l = 0; l < 8; ++l) acc[l] += a[j + l] * b[j + l];
    }
    float tail = 0.0f;
    for (; j < n; ++j) tail += a[j] * b[j];
    return ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7])) + tail;
}

inline void axpy(float a, const float* x, float* y, std::int64_t n) {
    for (std::int64_t j = 0; j < n; ++j) y[j] += a * x[j];
}

// C[M,N] += A[M,K] · B[K,N]
inline void gemm_nn(std::int64_t m, std::int64_t n, std::int64_t k, const float* a, const float* b, float* c) {
    for (std::int64_t i = 0; i < m; ++i) {
        float* ci = c + i * n;
        const float* ai = a + i * k;
        for (std::int64_t p = 0; p < k; ++p) {
            const float s = ai[p];
            if (s == 0.0f) continue;
            axpy(s, b + p * n, ci, n);
        }
    }
}

// C[M,N] += A[K,M]ᵀ · B[K,N]
inline void gemm_tn(std::int64_t m, std::int64_t n, std::int64_t k, const float* a, const float* b, float* c) {
    for (std::int64_t p = 0; p < k; ++p) {
        const float* ap = a + p * m;
        const float* bp = b + p * n;
        for (std::int64_t i = 0; i < m; ++i) {
            const float s = ap[i];
            if (s == 0.0f) continue;
            axpy(s, bp, c + i * n, n);
        }
    }
}

// C[M,N] += A[M,K] · B[N,K]ᵀ
inline void gemm_nt(std::int64_t m, std::int64_t n, std::int64_t k, const float* a, const float* b, float* c) {
    for (std::int64_t i = 0; i < m; ++i) {
        const float* ai = a + i * k;
        float* ci = c + i * n;
        for (std::int64_t j = 0; j < n; ++j) ci[j] += dot(ai, b + j * k, k);
    }
}

}  // namespace lutfuse::ad::detail
