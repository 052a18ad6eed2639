#include <cmath>
#include <cstring>

#include "untangle/kernels.hpp"

// Reference backend. These loops define the numeric contract; keep every
// fused multiply-add explicit. The contraction loops are unrolled 4-wide,
// which leaves the per-output-element accumulation order sequential and
// therefore does not change any rounding.

namespace untangle::kernels {
namespace scalar {

void matmul_nn(const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n) {
    std::memset(c, 0, sizeof(double) * static_cast<size_t>(m * n));
    for (int64_t i = 0; i < m; ++i) {
        double* crow = c + i * n;
        const double* arow = a + i * k;
        int64_t p = 0;
        for (; p + 4 <= k; p += 4) {
            double a0 = arow[p], a1 = arow[p + 1], a2 = arow[p + 2], a3 = arow[p + 3];
            const double* b0 = b + p * n;
            const double* b1 = b0 + n;
            const double* b2 = b1 + n;
            const double* b3 = b2 + n;
            for (int64_t j = 0; j < n; ++j) {
                double cj = crow[j];
                cj = std::fma(a0, b0[j], cj);
                cj = std::fma(a1, b1[j], cj);
                cj = std::fma(a2, b2[j], cj);
                cj = std::fma(a3, b3[j], cj);
                crow[j] = cj;
            }
        }
        for (; p < k; ++p) {
            double av = arow[p];
            const double* brow = b + p * n;
            for (int64_t j = 0; j < n; ++j) crow[j] = std::fma(av, brow[j], crow[j]);
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
            double a0 = a[i * k + p];
            double a1 = a[(i + 1) * k + p];
            double a2 = a[(i + 2) * k + p];
            double a3 = a[(i + 3) * k + p];
            double* crow = c + p * n;
            for (int64_t j = 0; j < n; ++j) {
                double cj = crow[j];
                cj = std::fma(a0, b0[j], cj);
                cj = std::fma(a1, b1[j], cj);
                cj = std::fma(a2, b2[j], cj);
                cj = std::fma(a3, b3[j], cj);
                crow[j] = cj;
            }
        }
    }
    for (; i < m; ++i) {
        const double* brow = b + i * n;
        for (int64_t p = 0; p < k; ++p) {
            double av = a[i * k + p];
            double* crow = c + p * n;
            for (int64_t j = 0; j < n; ++j) crow[j] = std::fma(av, brow[j], crow[j]);
        }
    }
}

namespace {

// Four-lane dot product: element j accumulates into lane j%4, lanes combined
// as (l0+l1)+(l2+l3). This order is the contract shared with the AVX2 path.
inline double dot_blocked(const double* x, const double* y, int64_t n) {
    double acc[4] = {0.0, 0.0, 0.0, 0.0};
    int64_t j = 0;
    for (; j + 4 <= n; j += 4) {
        acc[0] = std::fma(x[j], y[j], acc[0]);
        acc[1] = std::fma(x[j + 1], y[j + 1], acc[1]);
        acc[2] = std::fma(x[j + 2], y[j + 2], acc[2]);
        acc[3] = std::fma(x[j + 3], y[j + 3], acc[3]);
    }
    for (; j < n; ++j) acc[j & 3] = std::fma(x[j], y[j], acc[j & 3]);
    return (acc[0] + acc[1]) + (acc[2] + acc[3]);
}

}  // namespace

void matmul_nt(const double* a, const double* b, double* c, int64_t m, int64_t n, int64_t k) {
    // 2x2 output blocking: four independent accumulator chains per pass.
    int64_t i = 0;
    for (; i + 2 <= m; i += 2) {
        const double* a0 = a + i * n;
        const double* a1 = a0 + n;
        int64_t p = 0;
        for (; p + 2 <= k; p += 2) {
            const double* b0 = b + p * n;
            const double* b1 = b0 + n;
            double acc00[4] = {0, 0, 0, 0}, acc01[4] = {0, 0, 0, 0};
            double acc10[4] = {0, 0, 0, 0}, acc11[4] = {0, 0, 0, 0};
            int64_t j = 0;
            for (; j + 4 <= n; j += 4) {
                for (int l = 0; l < 4; ++l) {
                    acc00[l] = std::fma(a0[j + l], b0[j + l], acc00[l]);
                    acc01[l] = std::fma(a0[j + l], b1[j + l], acc01[l]);
                    acc10[l] = std::fma(a1[j + l], b0[j + l], acc10[l]);
                    acc11[l] = std::fma(a1[j + l], b1[j + l], acc11[l]);
                }
            }
            for (; j < n; ++j) {
                acc00[j & 3] = std::fma(a0[j], b0[j], acc00[j & 3]);
                acc01[j & 3] = std::fma(a0[j], b1[j], acc01[j & 3]);
                acc10[j & 3] = std::fma(a1[j], b0[j], acc10[j & 3]);
                acc11[j & 3] = std::fma(a1[j], b1[j], acc11[j & 3]);
            }
            c[i * k + p] = (acc00[0] + acc00[1]) + (acc00[2] + acc00[3]);
            c[i * k + p + 1] = (acc01[0] + acc01[1]) + (acc01[2] + acc01[3]);
            c[(i + 1) * k + p] = (acc10[0] + acc10[1]) + (acc10[2] + acc10[3]);
            c[(i + 1) * k + p + 1] = (acc11[0] + acc11[1]) + (acc11[2] + acc11[3]);
        }
        for (; p < k; ++p) {
            const double* brow = b + p * n;
            c[i * k + p] = dot_blocked(a0, brow, n);
            c[(i + 1) * k + p] = dot_blocked(a1, brow, n);
        }
    }
    for (; i < m; ++i) {
        const double* arow = a + i * n;
        for (int64_t p = 0; p < k; ++p) c[i * k + p] = dot_blocked(arow, b + p * n, n);
    }
}

void add(const double* a, const double* b, double* y, int64_t n) {
    for (int64_t i = 0; i < n; ++i) y[i] = a[i] + b[i];
}

void sub(const double* a, const double* b, double* y, int64_t n) {
    for (int64_t i = 0; i < n; ++i) y[i] = a[i] - b[i];
}

void mul(const double* a, const double* b, double* y, int64_t n) {
    for (int64_t i = 0; i < n; ++i) y[i] = a[i] * b[i];
}

void scale(double alpha, const double* x, double* y, int64_t n) {
    for (int64_t i = 0; i < n; ++i) y[i] = alpha * x[i];
}

void axpy(double alpha, const double* x, double* y, int64_t n) {
    for (int64_t i = 0; i < n; ++i) y[i] = std::fma(alpha, x[i], y[i]);
}

void relu_fwd(const double* x, double* y, int64_t n) {
    for (int64_t i = 0; i < n; ++i) y[i] = x[i] > 0.0 ? x[i] : 0.0;
}

void relu_bwd(const double* x, const double* dy, double* dx, int64_t n) {
    for (int64_t i = 0; i < n; ++i) dx[i] += x[i] > 0.0 ? dy[i] : 0.0;
}

void adam_update(double* p, double* m, double* v, const double* g, int64_t n, double lr_t,
                 double beta1, double beta2, double eps) {
    double omb1 = 1.0 - beta1;
    double omb2 = 1.0 - beta2;
    for (int64_t i = 0; i < n; ++i) {
        double gi = g[i];
        m[i] = std::fma(beta1, m[i], omb1 * gi);
        v[i] = std::fma(beta2, v[i], omb2 * (gi * gi));
        p[i] -= lr_t * m[i] / (std::sqrt(v[i]) + eps);
    }
}

double reduce_sum(const double* x, int64_t n) {
    double acc[4] = {0.0, 0.0, 0.0, 0.0};
    int64_t i = 0;
    for (; i + 4 <= n; i += 4) {
        acc[0] += x[i];
        acc[1] += x[i + 1];
        acc[2] += x[i + 2];
        acc[3] += x[i + 3];
    }
    for (; i < n; ++i) acc[i & 3] += x[i];
    return (acc[0] + acc[1]) + (acc[2] + acc[3]);
}

}  // namespace scalar

extern const Table kScalarTable;
const Table kScalarTable = {
    "scalar",         scalar::matmul_nn, scalar::matmul_tn, scalar::matmul_nt, scalar::add,
    scalar::sub,      scalar::mul,       scalar::scale,     scalar::axpy,      scalar::relu_fwd,
    scalar::relu_bwd, scalar::adam_update, scalar::reduce_sum,
};

}  // namespace untangle::kernels
