// AVX2+FMA backend. Compiled with -mavx2 -mfma (see src/CMakeLists.txt);
// only ever dispatched to after a runtime CPUID check. Each kernel mirrors
// the scalar reference's accumulation order exactly so results are
// bit-identical: vector lanes run across independent outputs, every fused
// multiply-add pairs std::fma with _mm256_fmadd_pd, and tails reuse the
// scalar lane assignment.

#include "untangle/kernels.hpp"

#if defined(__AVX2__) && defined(__FMA__)

#include <immintrin.h>

#include <cmath>
#include <cstring>

namespace untangle::kernels {
namespace avx2 {

void matmul_nn(const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n) {
    std::memset(c, 0, sizeof(double) * static_cast<size_t>(m * n));
    for (int64_t i = 0; i < m; ++i) {
        double* crow = c + i * n;
        const double* arow = a + i * k;
        int64_t p = 0;
        for (; p + 4 <= k; p += 4) {
            __m256d a0 = _mm256_set1_pd(arow[p]);
            __m256d a1 = _mm256_set1_pd(arow[p + 1]);
            __m256d a2 = _mm256_set1_pd(arow[p + 2]);
            __m256d a3 = _mm256_set1_pd(arow[p + 3]);
            const double* b0 = b + p * n;
            const double* b1 = b0 + n;
            const double* b2 = b1 + n;
            const double* b3 = b2 + n;
            int64_t j = 0;
            for (; j + 4 <= n; j += 4) {
                __m256d cv = _mm256_loadu_pd(crow + j);
                cv = _mm256_fmadd_pd(a0, _mm256_loadu_pd(b0 + j), cv);
                cv = _mm256_fmadd_pd(a1, _mm256_loadu_pd(b1 + j), cv);
                cv = _mm256_fmadd_pd(a2, _mm256_loadu_pd(b2 + j), cv);
                cv = _mm256_fmadd_pd(a3, _mm256_loadu_pd(b3 + j), cv);
                _mm256_storeu_pd(crow + j, cv);
            }
            for (; j < n; ++j) {
                double cj = crow[j];
                cj = std::fma(arow[p], b0[j], cj);
                cj = std::fma(arow[p + 1], b1[j], cj);
                cj = std::fma(arow[p + 2], b2[j], cj);
                cj = std::fma(arow[p + 3], b3[j], cj);
                crow[j] = cj;
            }
        }
        for (; p < k; ++p) {
            double av = arow[p];
            __m256d avv = _mm256_set1_pd(av);
            const double* brow = b + p * n;
            int64_t j = 0;
            for (; j + 4 <= n; j += 4) {
                __m256d cv = _mm256_loadu_pd(crow + j);
                cv = _mm256_fmadd_pd(avv, _mm256_loadu_pd(brow + j), cv);
                _mm256_storeu_pd(crow + j, cv);
            }
            for (; j < n; ++j) crow[j] = std::fma(av, brow[j], crow[j]);
        }
    }
}

void matmul_tn(const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n) {
    std::memset(c, 0, sizeof(double) * static_cast<size_t>(k * n));
    int64_t i = 0;
    for (; i + 4 <= m; i += 4) {
        const double* b0 = b + i * n;
        const double* b1 = b0 + n;
        const double* b2 = b1 + n;
        const double* b3 = b2 + n;
        for (int64_t p = 0; p < k; ++p) {
            double s0 = a[i * k + p];
            double s1 = a[(i + 1) * k + p];
            double s2 = a[(i + 2) * k + p];
            double s3 = a[(i + 3) * k + p];
            __m256d a0 = _mm256_set1_pd(s0);
            __m256d a1 = _mm256_set1_pd(s1);
            __m256d a2 = _mm256_set1_pd(s2);
            __m256d a3 = _mm256_set1_pd(s3);
            double* crow = c + p * n;
            int64_t j = 0;
            for (; j + 4 <= n; j += 4) {
                __m256d cv = _mm256_loadu_pd(crow + j);
                cv = _mm256_fmadd_pd(a0, _mm256_loadu_pd(b0 + j), cv);
                cv = _mm256_fmadd_pd(a1, _mm256_loadu_pd(b1 + j), cv);
                cv = _mm256_fmadd_pd(a2, _mm256_loadu_pd(b2 + j), cv);
                cv = _mm256_fmadd_pd(a3, _mm256_loadu_pd(b3 + j), cv);
                _mm256_storeu_pd(crow + j, cv);
            }
            for (; j < n; ++j) {
                double cj = crow[j];
                cj = std::fma(s0, b0[j], cj);
                cj = std::fma(s1, b1[j], cj);
                cj = std::fma(s2, b2[j], cj);
                cj = std::fma(s3, b3[j], cj);
                crow[j] = cj;
            }
        }
    }
    for (; i < m; ++i) {
        const double* brow = b + i * n;
        for (int64_t p = 0; p < k; ++p) {
            double av = a[i * k + p];
            __m256d avv = _mm256_set1_pd(av);
            double* crow = c + p * n;
            int64_t j = 0;
            for (; j + 4 <= n; j += 4) {
                __m256d cv = _mm256_loadu_pd(crow + j);
                cv = _mm256_fmadd_pd(avv, _mm256_loadu_pd(brow + j), cv);
                _mm256_storeu_pd(crow + j, cv);
            }
            for (; j < n; ++j) crow[j] = std::fma(av, brow[j], crow[j]);
        }
    }
}

namespace {

inline double hsum_lanes(__m256d acc, const double* x, const double* y, int64_t from, int64_t n) {
    alignas(32) double lanes[4];
    _mm256_store_pd(lanes, acc);
    for (int64_t j = from; j < n; ++j) lanes[j & 3] = std::fma(x[j], y[j], lanes[j & 3]);
    return (lanes[0] + lanes[1]) + (lanes[2] + lanes[3]);
}

}  // namespace

void matmul_nt(const double* a, const double* b, double* c, int64_t m, int64_t n, int64_t k) {
    int64_t i = 0;
    for (; i + 2 <= m; i += 2) {
        const double* a0 = a + i * n;
        const double* a1 = a0 + n;
        int64_t p = 0;
        for (; p + 2 <= k; p += 2) {
            const double* b0 = b + p * n;
            const double* b1 = b0 + n;
            __m256d acc00 = _mm256_setzero_pd();
            __m256d acc01 = _mm256_setzero_pd();
            __m256d acc10 = _mm256_setzero_pd();
            __m256d acc11 = _mm256_setzero_pd();
            int64_t j = 0;
            for (; j + 4 <= n; j += 4) {
                __m256d va0 = _mm256_loadu_pd(a0 + j);
                __m256d va1 = _mm256_loadu_pd(a1 + j);
                __m256d vb0 = _mm256_loadu_pd(b0 + j);
                __m256d vb1 = _mm256_loadu_pd(b1 + j);
                acc00 = _mm256_fmadd_pd(va0, vb0, acc00);
                acc01 = _mm256_fmadd_pd(va0, vb1, acc01);
                acc10 = _mm256_fmadd_pd(va1, vb0, acc10);
                acc11 = _mm256_fmadd_pd(va1, vb1, acc11);
            }
            c[i * k + p] = hsum_lanes(acc00, a0, b0, j, n);
            c[i * k + p + 1] = hsum_lanes(acc01, a0, b1, j, n);
            c[(i + 1) * k + p] = hsum_lanes(acc10, a1, b0, j, n);
            c[(i + 1) * k + p + 1] = hsum_lanes(acc11, a1, b1, j, n);
        }
        for (; p < k; ++p) {
            const double* brow = b + p * n;
            __m256d acc0 = _mm256_setzero_pd();
            __m256d acc1 = _mm256_setzero_pd();
            int64_t j = 0;
            for (; j + 4 <= n; j += 4) {
                __m256d vb = _mm256_loadu_pd(brow + j);
                acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a0 + j), vb, acc0);
                acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(a1 + j), vb, acc1);
            }
            c[i * k + p] = hsum_lanes(acc0, a0, brow, j, n);
            c[(i + 1) * k + p] = hsum_lanes(acc1, a1, brow, j, n);
        }
    }
    for (; i < m; ++i) {
        const double* arow = a + i * n;
        for (int64_t p = 0; p < k; ++p) {
            const double* brow = b + p * n;
            __m256d acc = _mm256_setzero_pd();
            int64_t j = 0;
            for (; j + 4 <= n; j += 4)
                acc = _mm256_fmadd_pd(_mm256_loadu_pd(arow + j), _mm256_loadu_pd(brow + j), acc);
            c[i * k + p] = hsum_lanes(acc, arow, brow, j, n);
        }
    }
}

void add(const double* a, const double* b, double* y, int64_t n) {
    int64_t i = 0;
    for (; i + 4 <= n; i += 4)
        _mm256_storeu_pd(y + i, _mm256_add_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
    for (; i < n; ++i) y[i] = a[i] + b[i];
}

void sub(const double* a, const double* b, double* y, int64_t n) {
    int64_t i = 0;
    for (; i + 4 <= n; i += 4)
        _mm256_storeu_pd(y + i, _mm256_sub_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
    for (; i < n; ++i) y[i] = a[i] - b[i];
}

void mul(const double* a, const double* b, double* y, int64_t n) {
    int64_t i = 0;
    for (; i + 4 <= n; i += 4)
        _mm256_storeu_pd(y + i, _mm256_mul_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
    for (; i < n; ++i) y[i] = a[i] * b[i];
}

void scale(double alpha, const double* x, double* y, int64_t n) {
    __m256d av = _mm256_set1_pd(alpha);
    int64_t i = 0;
    for (; i + 4 <= n; i += 4) _mm256_storeu_pd(y + i, _mm256_mul_pd(av, _mm256_loadu_pd(x + i)));
    for (; i < n; ++i) y[i] = alpha * x[i];
}

void axpy(double alpha, const double* x, double* y, int64_t n) {
    __m256d av = _mm256_set1_pd(alpha);
    int64_t i = 0;
    for (; i + 4 <= n; i += 4) {
        __m256d yv = _mm256_loadu_pd(y + i);
        _mm256_storeu_pd(y + i, _mm256_fmadd_pd(av, _mm256_loadu_pd(x + i), yv));
    }
    for (; i < n; ++i) y[i] = std::fma(alpha, x[i], y[i]);
}

void relu_fwd(const double* x, double* y, int64_t n) {
    __m256d zero = _mm256_setzero_pd();
    int64_t i = 0;
    for (; i + 4 <= n; i += 4) {
        __m256d xv = _mm256_loadu_pd(x + i);
        __m256d mask = _mm256_cmp_pd(xv, zero, _CMP_GT_OQ);
        _mm256_storeu_pd(y + i, _mm256_and_pd(mask, xv));
    }
    for (; i < n; ++i) y[i] = x[i] > 0.0 ? x[i] : 0.0;
}

void relu_bwd(const double* x, const double* dy, double* dx, int64_t n) {
    __m256d zero = _mm256_setzero_pd();
    int64_t i = 0;
    for (; i + 4 <= n; i += 4) {
        __m256d xv = _mm256_loadu_pd(x + i);
        __m256d mask = _mm256_cmp_pd(xv, zero, _CMP_GT_OQ);
        __m256d dxv = _mm256_loadu_pd(dx + i);
        __m256d summed = _mm256_add_pd(dxv, _mm256_loadu_pd(dy + i));
        // blend, not add-of-zero: keeps dx bits untouched where x <= 0
        _mm256_storeu_pd(dx + i, _mm256_blendv_pd(dxv, summed, mask));
    }
    for (; i < n; ++i) dx[i] += x[i] > 0.0 ? dy[i] : 0.0;
}

void adam_update(double* p, double* m, double* v, const double* g, int64_t n, double lr_t,
                 double beta1, double beta2, double eps) {
    double omb1 = 1.0 - beta1;
    double omb2 = 1.0 - beta2;
    __m256d b1v = _mm256_set1_pd(beta1), omb1v = _mm256_set1_pd(omb1);
    __m256d b2v = _mm256_set1_pd(beta2), omb2v = _mm256_set1_pd(omb2);
    __m256d lrv = _mm256_set1_pd(lr_t), epsv = _mm256_set1_pd(eps);
    int64_t i = 0;
    for (; i + 4 <= n; i += 4) {
        __m256d gv = _mm256_loadu_pd(g + i);
        __m256d mv = _mm256_fmadd_pd(b1v, _mm256_loadu_pd(m + i), _mm256_mul_pd(omb1v, gv));
        __m256d vv = _mm256_fmadd_pd(b2v, _mm256_loadu_pd(v + i),
                                     _mm256_mul_pd(omb2v, _mm256_mul_pd(gv, gv)));
        _mm256_storeu_pd(m + i, mv);
        _mm256_storeu_pd(v + i, vv);
        __m256d denom = _mm256_add_pd(_mm256_sqrt_pd(vv), epsv);
        __m256d step = _mm256_div_pd(_mm256_mul_pd(lrv, mv), denom);
        _mm256_storeu_pd(p + i, _mm256_sub_pd(_mm256_loadu_pd(p + i), step));
    }
    for (; i < n; ++i) {
        double gi = g[i];
        m[i] = std::fma(beta1, m[i], omb1 * gi);
        v[i] = std::fma(beta2, v[i], omb2 * (gi * gi));
        p[i] -= lr_t * m[i] / (std::sqrt(v[i]) + eps);
    }
}

double reduce_sum(const double* x, int64_t n) {
    __m256d accv = _mm256_setzero_pd();
    int64_t i = 0;
    for (; i + 4 <= n; i += 4) accv = _mm256_add_pd(accv, _mm256_loadu_pd(x + i));
    alignas(32) double acc[4];
    _mm256_store_pd(acc, accv);
    for (; i < n; ++i) acc[i & 3] += x[i];
    return (acc[0] + acc[1]) + (acc[2] + acc[3]);
}

}  // namespace avx2

namespace {
const Table kAvx2Table = {
    "avx2",         avx2::matmul_nn, avx2::matmul_tn, avx2::matmul_nt, avx2::add,
    avx2::sub,      avx2::mul,       avx2::scale,     avx2::axpy,      avx2::relu_fwd,
    avx2::relu_bwd, avx2::adam_update, avx2::reduce_sum,
};
}  // namespace

const Table* avx2_table_or_null() { return &kAvx2Table; }

}  // namespace untangle::kernels

#else  // translation unit built without AVX2+FMA

namespace untangle::kernels {
const Table* avx2_table_or_null() { return nullptr; }
}  // namespace untangle::kernels

#endif
