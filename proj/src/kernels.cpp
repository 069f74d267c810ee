#include "sci/kernels.hpp"

#include <algorithm>
#include <cstdlib>
#include <string>

#if defined(_OPENMP)
#include <omp.h>
#endif

namespace sci::kernels {

int max_threads() {
#if defined(_OPENMP)
    int n = omp_get_max_threads();
    if (const char* env = std::getenv("SCI_THREADS")) {
        const int cap = std::atoi(env);
        if (cap >= 1) n = std::min(n, cap);
    }
    return n;
#else
    return 1;
#endif
}

void parallel_for(int64_t n, void* ctx, void (*body)(void* ctx, int64_t i)) {
    const int nthreads = max_threads();
    if (nthreads <= 1 || n < 2) {
        for (int64_t i = 0; i < n; ++i) body(ctx, i);
        return;
    }
#if defined(_OPENMP)
#pragma omp parallel for schedule(static) num_threads(nthreads)
    for (int64_t i = 0; i < n; ++i) body(ctx, i);
#else
    for (int64_t i = 0; i < n; ++i) body(ctx, i);
#endif
}

namespace {

// One output row of a·b; fixed k-order accumulation shared by serial and
// parallel entry points so both produce identical bits.
inline void row_nn(const float* a, const float* b, float* out, int k, int n) {
    std::fill(out, out + n, 0.0f);
    for (int kk = 0; kk < k; ++kk) {
        const float av = a[kk];
        const float* brow = b + static_cast<size_t>(kk) * n;
        for (int j = 0; j < n; ++j) out[j] += av * brow[j];
    }
}

inline void row_nt(const float* a, const float* b, float* out, int k, int n) {
    for (int j = 0; j < n; ++j) {
        const float* brow = b + static_cast<size_t>(j) * k;
        float acc = 0.0f;
        for (int kk = 0; kk < k; ++kk) acc += a[kk] * brow[kk];
        out[j] = acc;
    }
}

// Row i of aᵀ·b, i.e. out[i][j] = sum_kk a[kk][i] * b[kk][j].
inline void row_tn(const float* a, const float* b, float* out, int i, int m, int k, int n) {
    std::fill(out, out + n, 0.0f);
    for (int kk = 0; kk < k; ++kk) {
        const float av = a[static_cast<size_t>(kk) * m + i];
        const float* brow = b + static_cast<size_t>(kk) * n;
        for (int j = 0; j < n; ++j) out[j] += av * brow[j];
    }
}

inline void row_dist(const float* q, const float* g, float* out, int gcount, int d) {
    for (int j = 0; j < gcount; ++j) {
        const float* grow = g + static_cast<size_t>(j) * d;
        float acc = 0.0f;
        for (int kk = 0; kk < d; ++kk) acc += q[kk] * grow[kk];
        out[j] = 1.0f - acc;
    }
}

} // namespace

void matmul_nn_serial(std::span<const float> a, std::span<const float> b,
                      std::span<float> out, int m, int k, int n) {
    for (int i = 0; i < m; ++i)
        row_nn(a.data() + static_cast<size_t>(i) * k, b.data(),
               out.data() + static_cast<size_t>(i) * n, k, n);
}

void matmul_nn(std::span<const float> a, std::span<const float> b,
               std::span<float> out, int m, int k, int n) {
    const float* ap = a.data();
    const float* bp = b.data();
    float* op = out.data();
    parallel_for(m, [=](int64_t i) {
        row_nn(ap + static_cast<size_t>(i) * k, bp, op + static_cast<size_t>(i) * n, k, n);
    });
}

void matmul_nt_serial(std::span<const float> a, std::span<const float> b,
                      std::span<float> out, int m, int k, int n) {
    for (int i = 0; i < m; ++i)
        row_nt(a.data() + static_cast<size_t>(i) * k, b.data(),
               out.data() + static_cast<size_t>(i) * n, k, n);
}

void matmul_nt(std::span<const float> a, std::span<const float> b,
               std::span<float> out, int m, int k, int n) {
    const float* ap = a.data();
    const float* bp = b.data();
    float* op = out.data();
    parallel_for(m, [=](int64_t i) {
        row_nt(ap + static_cast<size_t>(i) * k, bp, op + static_cast<size_t>(i) * n, k, n);
    });
}

void matmul_tn_serial(std::span<const float> a, std::span<const float> b,
                      std::span<float> out, int m, int k, int n) {
    for (int i = 0; i < m; ++i)
        row_tn(a.data(), b.data(), out.data() + static_cast<size_t>(i) * n, i, m, k, n);
}

void matmul_tn(std::span<const float> a, std::span<const float> b,
               std::span<float> out, int m, int k, int n) {
    const float* ap = a.data();
    const float* bp = b.data();
    float* op = out.data();
    parallel_for(m, [=](int64_t i) {
        row_tn(ap, bp, op + static_cast<size_t>(i) * n, static_cast<int>(i), m, k, n);
    });
}

void cosine_distance_serial(std::span<const float> queries, std::span<const float> gallery,
                            std::span<float> out, int q, int g, int d) {
    for (int i = 0; i < q; ++i)
        row_dist(queries.data() + static_cast<size_t>(i) * d, gallery.data(),
                 out.data() + static_cast<size_t>(i) * g, g, d);
}

void cosine_distance(std::span<const float> queries, std::span<const float> gallery,
                     std::span<float> out, int q, int g, int d) {
    const float* qp = queries.data();
    const float* gp = gallery.data();
    float* op = out.data();
    parallel_for(q, [=](int64_t i) {
        row_dist(qp + static_cast<size_t>(i) * d, gp, op + static_cast<size_t>(i) * g, g, d);
    });
}

} // namespace sci::kernels
