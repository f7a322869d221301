#if defined(__x86_64__) || defined(__i386__)

#include "insertnet/kernels.hpp"

#include <immintrin.h>

#include <algorithm>
#include <cmath>

namespace insertnet::kern {
namespace {

constexpr int kLane = 4; // doubles per ymm

inline double hsum(__m256d v) {
    __m128d lo = _mm256_castpd256_pd128(v);
    __m128d hi = _mm256_extractf128_pd(v, 1);
    lo = _mm_add_pd(lo, hi);
    __m128d sh = _mm_unpackhi_pd(lo, lo);
    return _mm_cvtsd_f64(_mm_add_sd(lo, sh));
}

// C row-panel kernel: 4 rows x 8 columns of C in registers (falls back to a
// 2 x 16 tile, then scalars, on the fringes). k is accumulated inside.
void v_gemm_nn_panel(int m, int n, int k, const double* a, int lda,
                     const double* b, int ldb, double* c, int ldc, bool accumulate) {
    int i = 0;
    for (; i + 4 <= m; i += 4) {
        const double* a0 = a + static_cast<std::size_t>(i) * lda;
        const double* a1 = a0 + lda;
        const double* a2 = a1 + lda;
        const double* a3 = a2 + lda;
        double* c0 = c + static_cast<std::size_t>(i) * ldc;
        double* c1 = c0 + ldc;
        double* c2 = c1 + ldc;
        double* c3 = c2 + ldc;
        int j = 0;
        for (; j + 8 <= n; j += 8) {
            __m256d r00, r01, r10, r11, r20, r21, r30, r31;
            if (accumulate) {
                r00 = _mm256_loadu_pd(c0 + j); r01 = _mm256_loadu_pd(c0 + j + 4);
                r10 = _mm256_loadu_pd(c1 + j); r11 = _mm256_loadu_pd(c1 + j + 4);
                r20 = _mm256_loadu_pd(c2 + j); r21 = _mm256_loadu_pd(c2 + j + 4);
                r30 = _mm256_loadu_pd(c3 + j); r31 = _mm256_loadu_pd(c3 + j + 4);
            } else {
                r00 = r01 = r10 = r11 = _mm256_setzero_pd();
                r20 = r21 = r30 = r31 = _mm256_setzero_pd();
            }
            for (int l = 0; l < k; ++l) {
                const double* brow = b + static_cast<std::size_t>(l) * ldb + j;
                const __m256d b0 = _mm256_loadu_pd(brow);
                const __m256d b1 = _mm256_loadu_pd(brow + 4);
                __m256d av = _mm256_set1_pd(a0[l]);
                r00 = _mm256_fmadd_pd(av, b0, r00);
                r01 = _mm256_fmadd_pd(av, b1, r01);
                av = _mm256_set1_pd(a1[l]);
                r10 = _mm256_fmadd_pd(av, b0, r10);
                r11 = _mm256_fmadd_pd(av, b1, r11);
                av = _mm256_set1_pd(a2[l]);
                r20 = _mm256_fmadd_pd(av, b0, r20);
                r21 = _mm256_fmadd_pd(av, b1, r21);
                av = _mm256_set1_pd(a3[l]);
                r30 = _mm256_fmadd_pd(av, b0, r30);
                r31 = _mm256_fmadd_pd(av, b1, r31);
            }
            _mm256_storeu_pd(c0 + j, r00); _mm256_storeu_pd(c0 + j + 4, r01);
            _mm256_storeu_pd(c1 + j, r10); _mm256_storeu_pd(c1 + j + 4, r11);
            _mm256_storeu_pd(c2 + j, r20); _mm256_storeu_pd(c2 + j + 4, r21);
            _mm256_storeu_pd(c3 + j, r30); _mm256_storeu_pd(c3 + j + 4, r31);
        }
        for (; j < n; ++j) {
            double acc0 = accumulate ? c0[j] : 0.0;
            double acc1 = accumulate ? c1[j] : 0.0;
            double acc2 = accumulate ? c2[j] : 0.0;
            double acc3 = accumulate ? c3[j] : 0.0;
            for (int l = 0; l < k; ++l) {
                const double bv = b[static_cast<std::size_t>(l) * ldb + j];
                acc0 += a0[l] * bv;
                acc1 += a1[l] * bv;
                acc2 += a2[l] * bv;
                acc3 += a3[l] * bv;
            }
            c0[j] = acc0;
            c1[j] = acc1;
            c2[j] = acc2;
            c3[j] = acc3;
        }
    }
    const int nb = 16; // 2 x 16 fringe tile
    for (; i + 1 < m; i += 2) {
        const double* a0 = a + static_cast<std::size_t>(i) * lda;
        const double* a1 = a0 + lda;
        double* c0 = c + static_cast<std::size_t>(i) * ldc;
        double* c1 = c0 + ldc;
        int j = 0;
        for (; j + nb <= n; j += nb) {
            __m256d r00, r01, r02, r03, r10, r11, r12, r13;
            if (accumulate) {
                r00 = _mm256_loadu_pd(c0 + j);      r01 = _mm256_loadu_pd(c0 + j + 4);
                r02 = _mm256_loadu_pd(c0 + j + 8);  r03 = _mm256_loadu_pd(c0 + j + 12);
                r10 = _mm256_loadu_pd(c1 + j);      r11 = _mm256_loadu_pd(c1 + j + 4);
                r12 = _mm256_loadu_pd(c1 + j + 8);  r13 = _mm256_loadu_pd(c1 + j + 12);
            } else {
                r00 = r01 = r02 = r03 = _mm256_setzero_pd();
                r10 = r11 = r12 = r13 = _mm256_setzero_pd();
            }
            for (int l = 0; l < k; ++l) {
                const double* brow = b + static_cast<std::size_t>(l) * ldb + j;
                const __m256d b0 = _mm256_loadu_pd(brow);
                const __m256d b1 = _mm256_loadu_pd(brow + 4);
                const __m256d b2 = _mm256_loadu_pd(brow + 8);
                const __m256d b3 = _mm256_loadu_pd(brow + 12);
                const __m256d av0 = _mm256_set1_pd(a0[l]);
                const __m256d av1 = _mm256_set1_pd(a1[l]);
                r00 = _mm256_fmadd_pd(av0, b0, r00);
                r01 = _mm256_fmadd_pd(av0, b1, r01);
                r02 = _mm256_fmadd_pd(av0, b2, r02);
                r03 = _mm256_fmadd_pd(av0, b3, r03);
                r10 = _mm256_fmadd_pd(av1, b0, r10);
                r11 = _mm256_fmadd_pd(av1, b1, r11);
                r12 = _mm256_fmadd_pd(av1, b2, r12);
                r13 = _mm256_fmadd_pd(av1, b3, r13);
            }
            _mm256_storeu_pd(c0 + j, r00);      _mm256_storeu_pd(c0 + j + 4, r01);
            _mm256_storeu_pd(c0 + j + 8, r02); _mm256_storeu_pd(c0 + j + 12, r03);
            _mm256_storeu_pd(c1 + j, r10);      _mm256_storeu_pd(c1 + j + 4, r11);
            _mm256_storeu_pd(c1 + j + 8, r12); _mm256_storeu_pd(c1 + j + 12, r13);
        }
        for (; j < n; ++j) {
            double acc0 = accumulate ? c0[j] : 0.0;
            double acc1 = accumulate ? c1[j] : 0.0;
            for (int l = 0; l < k; ++l) {
                const double bv = b[static_cast<std::size_t>(l) * ldb + j];
                acc0 += a0[l] * bv;
                acc1 += a1[l] * bv;
            }
            c0[j] = acc0;
            c1[j] = acc1;
        }
    }
    for (; i < m; ++i) {
        const double* a0 = a + static_cast<std::size_t>(i) * lda;
        double* c0 = c + static_cast<std::size_t>(i) * ldc;
        int j = 0;
        for (; j + nb <= n; j += nb) {
            __m256d r0, r1, r2, r3;
            if (accumulate) {
                r0 = _mm256_loadu_pd(c0 + j);      r1 = _mm256_loadu_pd(c0 + j + 4);
                r2 = _mm256_loadu_pd(c0 + j + 8);  r3 = _mm256_loadu_pd(c0 + j + 12);
            } else {
                r0 = r1 = r2 = r3 = _mm256_setzero_pd();
            }
            for (int l = 0; l < k; ++l) {
                const double* brow = b + static_cast<std::size_t>(l) * ldb + j;
                const __m256d av = _mm256_set1_pd(a0[l]);
                r0 = _mm256_fmadd_pd(av, _mm256_loadu_pd(brow), r0);
                r1 = _mm256_fmadd_pd(av, _mm256_loadu_pd(brow + 4), r1);
                r2 = _mm256_fmadd_pd(av, _mm256_loadu_pd(brow + 8), r2);
                r3 = _mm256_fmadd_pd(av, _mm256_loadu_pd(brow + 12), r3);
            }
            _mm256_storeu_pd(c0 + j, r0);      _mm256_storeu_pd(c0 + j + 4, r1);
            _mm256_storeu_pd(c0 + j + 8, r2); _mm256_storeu_pd(c0 + j + 12, r3);
        }
        for (; j < n; ++j) {
            double acc = accumulate ? c0[j] : 0.0;
            for (int l = 0; l < k; ++l) acc += a0[l] * b[static_cast<std::size_t>(l) * ldb + j];
            c0[j] = acc;
        }
    }
}

// column-block the panel kernel so the active B slab stays cache-resident
// while every row strip of C sweeps over it
void v_gemm_nn(int m, int n, int k, const double* a, int lda,
               const double* b, int ldb, double* c, int ldc, bool accumulate) {
    constexpr int kNB = 512;
    if (static_cast<long>(k) * n <= 64 * 1024 || n <= kNB) {
        v_gemm_nn_panel(m, n, k, a, lda, b, ldb, c, ldc, accumulate);
        return;
    }
    for (int j = 0; j < n; j += kNB) {
        const int nb = std::min(kNB, n - j);
        v_gemm_nn_panel(m, nb, k, a, lda, b + j, ldb, c + j, ldc, accumulate);
    }
}

// same 4 x 8 tile as the NN panel; A is walked down its columns
void v_gemm_tn_panel(int m, int n, int k, const double* a, int lda,
                     const double* b, int ldb, double* c, int ldc, bool accumulate) {
    int i = 0;
    for (; i + 4 <= m; i += 4) {
        double* c0 = c + static_cast<std::size_t>(i) * ldc;
        double* c1 = c0 + ldc;
        double* c2 = c1 + ldc;
        double* c3 = c2 + ldc;
        int j = 0;
        for (; j + 8 <= n; j += 8) {
            __m256d r00, r01, r10, r11, r20, r21, r30, r31;
            if (accumulate) {
                r00 = _mm256_loadu_pd(c0 + j); r01 = _mm256_loadu_pd(c0 + j + 4);
                r10 = _mm256_loadu_pd(c1 + j); r11 = _mm256_loadu_pd(c1 + j + 4);
                r20 = _mm256_loadu_pd(c2 + j); r21 = _mm256_loadu_pd(c2 + j + 4);
                r30 = _mm256_loadu_pd(c3 + j); r31 = _mm256_loadu_pd(c3 + j + 4);
            } else {
                r00 = r01 = r10 = r11 = _mm256_setzero_pd();
                r20 = r21 = r30 = r31 = _mm256_setzero_pd();
            }
            for (int l = 0; l < k; ++l) {
                const double* acol = a + static_cast<std::size_t>(l) * lda + i;
                const double* brow = b + static_cast<std::size_t>(l) * ldb + j;
                const __m256d b0 = _mm256_loadu_pd(brow);
                const __m256d b1 = _mm256_loadu_pd(brow + 4);
                __m256d av = _mm256_set1_pd(acol[0]);
                r00 = _mm256_fmadd_pd(av, b0, r00);
                r01 = _mm256_fmadd_pd(av, b1, r01);
                av = _mm256_set1_pd(acol[1]);
                r10 = _mm256_fmadd_pd(av, b0, r10);
                r11 = _mm256_fmadd_pd(av, b1, r11);
                av = _mm256_set1_pd(acol[2]);
                r20 = _mm256_fmadd_pd(av, b0, r20);
                r21 = _mm256_fmadd_pd(av, b1, r21);
                av = _mm256_set1_pd(acol[3]);
                r30 = _mm256_fmadd_pd(av, b0, r30);
                r31 = _mm256_fmadd_pd(av, b1, r31);
            }
            _mm256_storeu_pd(c0 + j, r00); _mm256_storeu_pd(c0 + j + 4, r01);
            _mm256_storeu_pd(c1 + j, r10); _mm256_storeu_pd(c1 + j + 4, r11);
            _mm256_storeu_pd(c2 + j, r20); _mm256_storeu_pd(c2 + j + 4, r21);
            _mm256_storeu_pd(c3 + j, r30); _mm256_storeu_pd(c3 + j + 4, r31);
        }
        for (; j < n; ++j) {
            double acc0 = accumulate ? c0[j] : 0.0;
            double acc1 = accumulate ? c1[j] : 0.0;
            double acc2 = accumulate ? c2[j] : 0.0;
            double acc3 = accumulate ? c3[j] : 0.0;
            for (int l = 0; l < k; ++l) {
                const double* acol = a + static_cast<std::size_t>(l) * lda + i;
                const double bv = b[static_cast<std::size_t>(l) * ldb + j];
                acc0 += acol[0] * bv;
                acc1 += acol[1] * bv;
                acc2 += acol[2] * bv;
                acc3 += acol[3] * bv;
            }
            c0[j] = acc0;
            c1[j] = acc1;
            c2[j] = acc2;
            c3[j] = acc3;
        }
    }
    for (; i < m; ++i) {
        double* crow = c + static_cast<std::size_t>(i) * ldc;
        if (!accumulate)
            for (int j = 0; j < n; ++j) crow[j] = 0.0;
        for (int l = 0; l < k; ++l) {
            const __m256d av = _mm256_set1_pd(a[static_cast<std::size_t>(l) * lda + i]);
            const double* brow = b + static_cast<std::size_t>(l) * ldb;
            int j = 0;
            for (; j + kLane <= n; j += kLane) {
                __m256d cv = _mm256_loadu_pd(crow + j);
                cv = _mm256_fmadd_pd(av, _mm256_loadu_pd(brow + j), cv);
                _mm256_storeu_pd(crow + j, cv);
            }
            for (; j < n; ++j) crow[j] += a[static_cast<std::size_t>(l) * lda + i] * brow[j];
        }
    }
}

// keep the written C panel cache-resident: block over columns
void v_gemm_tn(int m, int n, int k, const double* a, int lda,
               const double* b, int ldb, double* c, int ldc, bool accumulate) {
    constexpr int kNB = 256;
    if (static_cast<long>(m) * n <= 48 * 1024 || n <= kNB) {
        v_gemm_tn_panel(m, n, k, a, lda, b, ldb, c, ldc, accumulate);
        return;
    }
    for (int j = 0; j < n; j += kNB) {
        const int nb = std::min(kNB, n - j);
        v_gemm_tn_panel(m, nb, k, a, lda, b + j, ldb, c + j, ldc, accumulate);
    }
}

void v_gemm_nt_panel(int m, int n, int k, const double* a, int lda,
                     const double* b, int ldb, double* c, int ldc, bool accumulate) {
    for (int i = 0; i < m; ++i) {
        const double* arow = a + static_cast<std::size_t>(i) * lda;
        double* crow = c + static_cast<std::size_t>(i) * ldc;
        int j = 0;
        for (; j + 2 <= n; j += 2) {
            const double* b0 = b + static_cast<std::size_t>(j) * ldb;
            const double* b1 = b0 + ldb;
            __m256d acc0 = _mm256_setzero_pd();
            __m256d acc1 = _mm256_setzero_pd();
            int l = 0;
            for (; l + kLane <= k; l += kLane) {
                const __m256d av = _mm256_loadu_pd(arow + l);
                acc0 = _mm256_fmadd_pd(av, _mm256_loadu_pd(b0 + l), acc0);
                acc1 = _mm256_fmadd_pd(av, _mm256_loadu_pd(b1 + l), acc1);
            }
            double s0 = hsum(acc0);
            double s1 = hsum(acc1);
            for (; l < k; ++l) {
                s0 += arow[l] * b0[l];
                s1 += arow[l] * b1[l];
            }
            crow[j] = accumulate ? crow[j] + s0 : s0;
            crow[j + 1] = accumulate ? crow[j + 1] + s1 : s1;
        }
        for (; j < n; ++j) {
            const double* brow = b + static_cast<std::size_t>(j) * ldb;
            __m256d acc = _mm256_setzero_pd();
            int l = 0;
            for (; l + kLane <= k; l += kLane)
                acc = _mm256_fmadd_pd(_mm256_loadu_pd(arow + l), _mm256_loadu_pd(brow + l), acc);
            double s = hsum(acc);
            for (; l < k; ++l) s += arow[l] * brow[l];
            crow[j] = accumulate ? crow[j] + s : s;
        }
    }
}

// block over the reduction axis so the B slab is reused across all of C
void v_gemm_nt(int m, int n, int k, const double* a, int lda,
               const double* b, int ldb, double* c, int ldc, bool accumulate) {
    constexpr int kKB = 384;
    if (static_cast<long>(n) * k <= 64 * 1024 || k <= kKB) {
        v_gemm_nt_panel(m, n, k, a, lda, b, ldb, c, ldc, accumulate);
        return;
    }
    bool acc = accumulate;
    for (int l = 0; l < k; l += kKB) {
        const int kb = std::min(kKB, k - l);
        v_gemm_nt_panel(m, n, kb, a + l, lda, b + l, ldb, c, ldc, acc);
        acc = true;
    }
}

void v_axpy(int n, double alpha, const double* x, double* y) {
    const __m256d av = _mm256_set1_pd(alpha);
    int i = 0;
    for (; i + kLane <= n; i += kLane) {
        __m256d yv = _mm256_loadu_pd(y + i);
        yv = _mm256_fmadd_pd(av, _mm256_loadu_pd(x + i), yv);
        _mm256_storeu_pd(y + i, yv);
    }
    for (; i < n; ++i) y[i] += alpha * x[i];
}

double v_dot(int n, const double* a, const double* b) {
    __m256d acc = _mm256_setzero_pd();
    int i = 0;
    for (; i + kLane <= n; i += kLane)
        acc = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc);
    double s = hsum(acc);
    for (; i < n; ++i) s += a[i] * b[i];
    return s;
}

double v_sum(int n, const double* a) {
    __m256d acc = _mm256_setzero_pd();
    int i = 0;
    for (; i + kLane <= n; i += kLane) acc = _mm256_add_pd(acc, _mm256_loadu_pd(a + i));
    double s = hsum(acc);
    for (; i < n; ++i) s += a[i];
    return s;
}

void v_vmul(int n, const double* a, const double* b, double* out) {
    int i = 0;
    for (; i + kLane <= n; i += kLane)
        _mm256_storeu_pd(out + i, _mm256_mul_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
    for (; i < n; ++i) out[i] = a[i] * b[i];
}

void v_leaky_relu(int n, const double* x, double slope, double* y) {
    const __m256d sl = _mm256_set1_pd(slope);
    const __m256d zero = _mm256_setzero_pd();
    int i = 0;
    for (; i + kLane <= n; i += kLane) {
        const __m256d xv = _mm256_loadu_pd(x + i);
        const __m256d neg = _mm256_mul_pd(xv, sl);
        const __m256d mask = _mm256_cmp_pd(xv, zero, _CMP_GT_OQ);
        _mm256_storeu_pd(y + i, _mm256_blendv_pd(neg, xv, mask));
    }
    for (; i < n; ++i) y[i] = x[i] > 0.0 ? x[i] : slope * x[i];
}

void v_leaky_relu_grad(int n, const double* x, const double* gy, double slope, double* gx) {
    const __m256d sl = _mm256_set1_pd(slope);
    const __m256d one = _mm256_set1_pd(1.0);
    const __m256d zero = _mm256_setzero_pd();
    int i = 0;
    for (; i + kLane <= n; i += kLane) {
        const __m256d xv = _mm256_loadu_pd(x + i);
        const __m256d mask = _mm256_cmp_pd(xv, zero, _CMP_GT_OQ);
        const __m256d der = _mm256_blendv_pd(sl, one, mask);
        __m256d gv = _mm256_loadu_pd(gx + i);
        gv = _mm256_fmadd_pd(der, _mm256_loadu_pd(gy + i), gv);
        _mm256_storeu_pd(gx + i, gv);
    }
    for (; i < n; ++i) gx[i] += gy[i] * (x[i] > 0.0 ? 1.0 : slope);
}

void v_adam_step(int n, double* p, const double* g, double* m, double* v,
                 double lr, double beta1, double beta2, double eps,
                 double bias1, double bias2) {
    const __m256d b1 = _mm256_set1_pd(beta1);
    const __m256d b2 = _mm256_set1_pd(beta2);
    const __m256d ob1 = _mm256_set1_pd(1.0 - beta1);
    const __m256d ob2 = _mm256_set1_pd(1.0 - beta2);
    const __m256d ib1 = _mm256_set1_pd(1.0 / bias1);
    const __m256d ib2 = _mm256_set1_pd(1.0 / bias2);
    const __m256d lrv = _mm256_set1_pd(lr);
    const __m256d epsv = _mm256_set1_pd(eps);
    int i = 0;
    for (; i + kLane <= n; i += kLane) {
        const __m256d gv = _mm256_loadu_pd(g + i);
        __m256d mv = _mm256_loadu_pd(m + i);
        __m256d vv = _mm256_loadu_pd(v + i);
        mv = _mm256_fmadd_pd(ob1, gv, _mm256_mul_pd(b1, mv));
        vv = _mm256_fmadd_pd(ob2, _mm256_mul_pd(gv, gv), _mm256_mul_pd(b2, vv));
        _mm256_storeu_pd(m + i, mv);
        _mm256_storeu_pd(v + i, vv);
        const __m256d mhat = _mm256_mul_pd(mv, ib1);
        const __m256d vhat = _mm256_mul_pd(vv, ib2);
        const __m256d denom = _mm256_add_pd(_mm256_sqrt_pd(vhat), epsv);
        __m256d pv = _mm256_loadu_pd(p + i);
        pv = _mm256_fnmadd_pd(lrv, _mm256_div_pd(mhat, denom), pv);
        _mm256_storeu_pd(p + i, pv);
    }
    for (; i < n; ++i) {
        m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
        v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
        p[i] -= lr * (m[i] / bias1) / (std::sqrt(v[i] / bias2) + eps);
    }
}

} // namespace

const Ops& avx2_ops() {
    static const Ops table = {
        "avx2",
        v_gemm_nn, v_gemm_tn, v_gemm_nt,
        v_axpy,    v_dot,     v_sum,    v_vmul,
        v_leaky_relu, v_leaky_relu_grad, v_adam_step,
    };
    return table;
}

} // namespace insertnet::kern

#endif // x86
