// Timing comparison of the serial reference kernels against the OpenMP
// entry points, with a bitwise-equality check on every case.

#include <chrono>
#include <cstdio>
#include <cstring>
#include <functional>
#include <vector>

#include "sci/kernels.hpp"
#include "sci/rng.hpp"

namespace {

using Clock = std::chrono::steady_clock;

double time_ms(int reps, const std::function<void()>& fn) {
    fn(); // warm-up
    const auto start = Clock::now();
    for (int r = 0; r < reps; ++r) fn();
    const auto end = Clock::now();
    return std::chrono::duration<double, std::milli>(end - start).count() / reps;
}

std::vector<float> random_buf(size_t n, sci::Rng& rng) {
    std::vector<float> buf(n);
    for (float& v : buf) v = rng.gaussian();
    return buf;
}

bool bitwise_equal(const std::vector<float>& a, const std::vector<float>& b) {
    return a.size() == b.size() && std::memcmp(a.data(), b.data(), a.size() * sizeof(float)) == 0;
}

void report(const char* name, double serial_ms, double parallel_ms, bool equal) {
    std::printf("%-24s serial %8.3f ms   omp %8.3f ms   speedup %5.2fx   %s\n", name, serial_ms,
                parallel_ms, serial_ms / parallel_ms, equal ? "bitwise-equal" : "MISMATCH");
}

} // namespace

int main() {
    sci::Rng rng(42);
    std::printf("threads: %d\n\n", sci::kernels::max_threads());

    {
        const int m = 384, k = 384, n = 384;
        auto a = random_buf(static_cast<size_t>(m) * k, rng);
        auto b = random_buf(static_cast<size_t>(k) * n, rng);
        std::vector<float> out_s(static_cast<size_t>(m) * n), out_p(out_s.size());
        const double ts = time_ms(5, [&] { sci::kernels::matmul_nn_serial(a, b, out_s, m, k, n); });
        const double tp = time_ms(5, [&] { sci::kernels::matmul_nn(a, b, out_p, m, k, n); });
        report("matmul_nn 384^3", ts, tp, bitwise_equal(out_s, out_p));
    }
    {
        const int m = 384, k = 384, n = 384;
        auto a = random_buf(static_cast<size_t>(m) * k, rng);
        auto b = random_buf(static_cast<size_t>(n) * k, rng);
        std::vector<float> out_s(static_cast<size_t>(m) * n), out_p(out_s.size());
        const double ts = time_ms(5, [&] { sci::kernels::matmul_nt_serial(a, b, out_s, m, k, n); });
        const double tp = time_ms(5, [&] { sci::kernels::matmul_nt(a, b, out_p, m, k, n); });
        report("matmul_nt 384^3", ts, tp, bitwise_equal(out_s, out_p));
    }
    {
        const int m = 384, k = 384, n = 384;
        auto a = random_buf(static_cast<size_t>(k) * m, rng);
        auto b = random_buf(static_cast<size_t>(k) * n, rng);
        std::vector<float> out_s(static_cast<size_t>(m) * n), out_p(out_s.size());
        const double ts = time_ms(5, [&] { sci::kernels::matmul_tn_serial(a, b, out_s, m, k, n); });
        const double tp = time_ms(5, [&] { sci::kernels::matmul_tn(a, b, out_p, m, k, n); });
        report("matmul_tn 384^3", ts, tp, bitwise_equal(out_s, out_p));
    }
    {
        const int q = 512, g = 4096, d = 64;
        auto qa = random_buf(static_cast<size_t>(q) * d, rng);
        auto ga = random_buf(static_cast<size_t>(g) * d, rng);
        std::vector<float> out_s(static_cast<size_t>(q) * g), out_p(out_s.size());
        const double ts =
            time_ms(5, [&] { sci::kernels::cosine_distance_serial(qa, ga, out_s, q, g, d); });
        const double tp = time_ms(5, [&] { sci::kernels::cosine_distance(qa, ga, out_p, q, g, d); });
        report("cosine_distance 512x4096", ts, tp, bitwise_equal(out_s, out_p));
    }
    return 0;
}
