#pragma once

#include <cstdint>
#include <span>

namespace sci::kernels {

/// Worker threads used by the parallel kernels. Honors SCI_THREADS (caps the
/// OpenMP default); returns 1 when built without OpenMP.
int max_threads();

/// parallel_for dispatches [0, n) over OpenMP threads. Each index must write
/// only its own outputs; results are then identical to the serial loop.
void parallel_for(int64_t n, void* ctx, void (*body)(void* ctx, int64_t i));

template <typename F>
void parallel_for(int64_t n, F&& body) {
    auto thunk = [](void* ctx, int64_t i) { (*static_cast<F*>(ctx))(i); };
    parallel_for(n, const_cast<void*>(static_cast<const void*>(&body)), thunk);
}

// Dense f32 kernels. The *_serial variants are the reference implementations;
// the unsuffixed entry points parallelize over output rows and match them
// bitwise (per-element accumulation order is identical).

/// out[m×n] = a[m×k] · b[k×n]
void matmul_nn(std::span<const float> a, std::span<const float> b,
               std::span<float> out, int m, int k, int n);
void matmul_nn_serial(std::span<const float> a, std::span<const float> b,
                      std::span<float> out, int m, int k, int n);

/// out[m×n] = a[m×k] · b[n×k]ᵀ
void matmul_nt(std::span<const float> a, std::span<const float> b,
               std::span<float> out, int m, int k, int n);
void matmul_nt_serial(std::span<const float> a, std::span<const float> b,
                      std::span<float> out, int m, int k, int n);

/// out[m×n] = a[k×m]ᵀ · b[k×n]
void matmul_tn(std::span<const float> a, std::span<const float> b,
               std::span<float> out, int m, int k, int n);
void matmul_tn_serial(std::span<const float> a, std::span<const float> b,
                      std::span<float> out, int m, int k, int n);

/// out[q×g] = 1 - Q·Gᵀ for row-normalized Q[q×d], G[g×d] (cosine distance).
void cosine_distance(std::span<const float> queries, std::span<const float> gallery,
                     std::span<float> out, int q, int g, int d);
void cosine_distance_serial(std::span<const float> queries, std::span<const float> gallery,
                            std::span<float> out, int q, int g, int d);

} // namespace sci::kernels
