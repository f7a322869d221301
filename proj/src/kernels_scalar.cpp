#include "insertnet/kernels.hpp"

#include <cmath>

namespace insertnet::kern {
namespace {

void sc_gemm_nn(int m, int n, int k, const double* a, int lda,
                const double* b, int ldb, double* c, int ldc, bool accumulate) {
    for (int i = 0; i < m; ++i) {
        double* crow = c + static_cast<std::size_t>(i) * ldc;
        if (!accumulate)
            for (int j = 0; j < n; ++j) crow[j] = 0.0;
        const double* arow = a + static_cast<std::size_t>(i) * lda;
        for (int l = 0; l < k; ++l) {
            const double av = arow[l];
            const double* brow = b + static_cast<std::size_t>(l) * ldb;
            for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

void sc_gemm_tn(int m, int n, int k, const double* a, int lda,
                const double* b, int ldb, double* c, int ldc, bool accumulate) {
    if (!accumulate)
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < n; ++j) c[static_cast<std::size_t>(i) * ldc + j] = 0.0;
    for (int l = 0; l < k; ++l) {
        const double* arow = a + static_cast<std::size_t>(l) * lda;
        const double* brow = b + static_cast<std::size_t>(l) * ldb;
        for (int i = 0; i < m; ++i) {
            const double av = arow[i];
            double* crow = c + static_cast<std::size_t>(i) * ldc;
            for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

void sc_gemm_nt(int m, int n, int k, const double* a, int lda,
                const double* b, int ldb, double* c, int ldc, bool accumulate) {
    for (int i = 0; i < m; ++i) {
        const double* arow = a + static_cast<std::size_t>(i) * lda;
        double* crow = c + static_cast<std::size_t>(i) * ldc;
        for (int j = 0; j < n; ++j) {
            const double* brow = b + static_cast<std::size_t>(j) * ldb;
            double acc = 0.0;
            for (int l = 0; l < k; ++l) acc += arow[l] * brow[l];
            crow[j] = accumulate ? crow[j] + acc : acc;
        }
    }
}

void sc_axpy(int n, double alpha, const double* x, double* y) {
    for (int i = 0; i < n; ++i) y[i] += alpha * x[i];
}

double sc_dot(int n, const double* a, const double* b) {
    double acc = 0.0;
    for (int i = 0; i < n; ++i) acc += a[i] * b[i];
    return acc;
}

double sc_sum(int n, const double* a) {
    double acc = 0.0;
    for (int i = 0; i < n; ++i) acc += a[i];
    return acc;
}

void sc_vmul(int n, const double* a, const double* b, double* out) {
    for (int i = 0; i < n; ++i) out[i] = a[i] * b[i];
}

void sc_leaky_relu(int n, const double* x, double slope, double* y) {
    for (int i = 0; i < n; ++i) y[i] = x[i] > 0.0 ? x[i] : slope * x[i];
}

void sc_leaky_relu_grad(int n, const double* x, const double* gy, double slope, double* gx) {
    for (int i = 0; i < n; ++i) gx[i] += gy[i] * (x[i] > 0.0 ? 1.0 : slope);
}

void sc_adam_step(int n, double* p, const double* g, double* m, double* v,
                  double lr, double beta1, double beta2, double eps,
                  double bias1, double bias2) {
    for (int i = 0; i < n; ++i) {
        m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
        v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
        const double mhat = m[i] / bias1;
        const double vhat = v[i] / bias2;
        p[i] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
}

} // namespace

const Ops& scalar_ops() {
    static const Ops table = {
        "scalar",
        sc_gemm_nn, sc_gemm_tn, sc_gemm_nt,
        sc_axpy,    sc_dot,     sc_sum,    sc_vmul,
        sc_leaky_relu, sc_leaky_relu_grad, sc_adam_step,
    };
    return table;
}

} // namespace insertnet::kern
