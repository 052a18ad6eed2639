#pragma once

#include <cstdint>
#include <string>

namespace untangle::kernels {

// Data-parallel inner loops behind the tensor graph. Two backends share one
// contract: the scalar reference defines the arithmetic (including the exact
// accumulation order and explicit std::fma fusion), and the AVX2 backend
// must reproduce it bit for bit. Equivalence is enforced by tests/test_kernels.
//
// Accumulation-order contract:
//  * matmul_nn / matmul_tn update each output element sequentially along the
//    contraction axis (axpy form), so vectorizing across independent outputs
//    cannot change per-element rounding.
//  * matmul_nt and reduce_sum use four interleaved accumulators (element i
//    goes to accumulator i%4) combined as (a0+a1)+(a2+a3).
//  * every multiply-add is fused: std::fma on the scalar path,
//    _mm256_fmadd_pd on the AVX2 path.

struct Table {
    const char* name;

    // C[M x N] = A[M x K] * B[K x N]
    void (*matmul_nn)(const double* a, const double* b, double* c, int64_t m, int64_t k,
                      int64_t n);
    // C[K x N] = A^T * B where A is [M x K], B is [M x N]
    void (*matmul_tn)(const double* a, const double* b, double* c, int64_t m, int64_t k,
                      int64_t n);
    // C[M x K] = A * B^T where A is [M x N], B is [K x N]
    void (*matmul_nt)(const double* a, const double* b, double* c, int64_t m, int64_t n,
                      int64_t k);

    void (*add)(const double* a, const double* b, double* y, int64_t n);
    void (*sub)(const double* a, const double* b, double* y, int64_t n);
    void (*mul)(const double* a, const double* b, double* y, int64_t n);
    void (*scale)(double alpha, const double* x, double* y, int64_t n);
    void (*axpy)(double alpha, const double* x, double* y, int64_t n);  // y += alpha * x

    void (*relu_fwd)(const double* x, double* y, int64_t n);
    // dx += (x > 0) * dy
    void (*relu_bwd)(const double* x, const double* dy, double* dx, int64_t n);

    // One bias-corrected Adam update; lr_t is lr * sqrt(1-b2^t) / (1-b1^t).
    void (*adam_update)(double* p, double* m, double* v, const double* g, int64_t n, double lr_t,
                        double beta1, double beta2, double eps);

    double (*reduce_sum)(const double* x, int64_t n);
};

enum class Backend { scalar, avx2 };

const Table& table(Backend b);  // throws if the backend is not available here
bool backend_available(Backend b);

// Active table: picked at startup (AVX2+FMA when the CPU has them, scalar
// otherwise), overridable with UNTANGLE_KERNELS=scalar|avx2|auto or
// set_backend().
const Table& active();
void set_backend(Backend b);
std::string active_name();

}  // namespace untangle::kernels
