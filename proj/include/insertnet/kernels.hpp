#pragma once

#include <cstddef>

// Hot numeric kernels. Every entry point has a scalar reference
// implementation and may have SIMD variants; the active table is picked at
// runtime from CPU features (override with INSERTNET_KERNELS=scalar|avx2).
// Variants agree with the reference to rounding order, not bitwise; the
// equivalence tests pin the tolerance.
namespace insertnet::kern {

struct Ops {
    const char* name;

    // C[m x n] = A[m x k] * B[k x n] (+ C if accumulate); row-major.
    void (*gemm_nn)(int m, int n, int k, const double* a, int lda,
                    const double* b, int ldb, double* c, int ldc, bool accumulate);
    // C[m x n] = A^T * B where A is [k x m]: column-walk on A.
    void (*gemm_tn)(int m, int n, int k, const double* a, int lda,
                    const double* b, int ldb, double* c, int ldc, bool accumulate);
    // C[m x n] = A * B^T where B is [n x k]: dot products over k.
    void (*gemm_nt)(int m, int n, int k, const double* a, int lda,
                    const double* b, int ldb, double* c, int ldc, bool accumulate);

    void (*axpy)(int n, double alpha, const double* x, double* y); // y += alpha*x
    double (*dot)(int n, const double* a, const double* b);
    double (*sum)(int n, const double* a);
    void (*vmul)(int n, const double* a, const double* b, double* out);
    void (*leaky_relu)(int n, const double* x, double slope, double* y);
    // gx += gy * (x > 0 ? 1 : slope)
    void (*leaky_relu_grad)(int n, const double* x, const double* gy, double slope, double* gx);
    void (*adam_step)(int n, double* p, const double* g, double* m, double* v,
                      double lr, double beta1, double beta2, double eps,
                      double bias1, double bias2);
};

const Ops& scalar_ops();
#if defined(__x86_64__) || defined(__i386__)
const Ops& avx2_ops();
#endif

// Table selected at first use; stable for the process lifetime.
const Ops& ops();
const char* active_kernel_name();

} // namespace insertnet::kern
