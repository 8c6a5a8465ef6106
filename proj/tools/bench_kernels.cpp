// Times the serial reference kernels against their OpenMP variants and
// verifies that both produce bit-identical output.
#include <chrono>
#include <cstdio>
#include <cstring>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "reidkit/kernels.hpp"
#include "reidkit/rng.hpp"

namespace {

using Clock = std::chrono::steady_clock;

std::vector<double> random_vec(std::size_t n, reidkit::Rng& rng) {
    std::vector<double> v(n);
    for (double& x : v) x = rng.uniform(-1.0, 1.0);
    return v;
}

template <typename F>
double time_best_of(int reps, F&& fn) {
    double best = 1e300;
    for (int r = 0; r < reps; ++r) {
        const auto start = Clock::now();
        fn();
        const auto stop = Clock::now();
        best = std::min(best, std::chrono::duration<double, std::milli>(stop - start).count());
    }
    return best;
}

void report(const char* name, double serial_ms, double parallel_ms, bool identical) {
    std::printf("%-24s %10.2f ms %10.2f ms %8.2fx   %s\n", name, serial_ms, parallel_ms,
                serial_ms / parallel_ms, identical ? "bit-identical" : "MISMATCH");
}

}  // namespace

int main() {
#ifdef _OPENMP
    std::printf("OpenMP threads: %d\n", omp_get_max_threads());
#else
    std::printf("built without OpenMP; both columns run serially\n");
#endif
    std::printf("%-24s %13s %13s %9s\n", "kernel", "serial", "parallel", "speedup");

    reidkit::Rng rng(20240901);

    {
        const std::size_t m = 384, k = 384, n = 384;
        const auto a = random_vec(m * k, rng), b = random_vec(k * n, rng);
        std::vector<double> c0(m * n), c1(m * n);
        const double ts = time_best_of(3, [&] {
            reidkit::kernels::matmul_serial(a.data(), b.data(), c0.data(), m, k, n);
        });
        const double tp = time_best_of(3, [&] {
            reidkit::kernels::matmul(a.data(), b.data(), c1.data(), m, k, n);
        });
        report("matmul 384^3", ts, tp, std::memcmp(c0.data(), c1.data(), m * n * 8) == 0);
    }
    {
        const std::size_t n = 16, c = 16, h = 32, w = 32, oc = 32, kh = 3, kw = 3;
        const auto x = random_vec(n * c * h * w, rng), wt = random_vec(oc * c * kh * kw, rng);
        const std::size_t oh = h, ow = w;  // stride 1, pad 1
        std::vector<double> y0(n * oc * oh * ow), y1(y0.size());
        const double ts = time_best_of(3, [&] {
            reidkit::kernels::conv2d_serial(x.data(), wt.data(), y0.data(), n, c, h, w, oc, kh, kw,
                                            1, 1);
        });
        const double tp = time_best_of(3, [&] {
            reidkit::kernels::conv2d(x.data(), wt.data(), y1.data(), n, c, h, w, oc, kh, kw, 1, 1);
        });
        report("conv2d 16x16x32x32", ts, tp,
               std::memcmp(y0.data(), y1.data(), y0.size() * 8) == 0);
    }
    {
        const std::size_t n = 16, c = 16, h = 32, w = 32, oc = 32;
        const auto x = random_vec(n * c * h * w, rng), wt = random_vec(oc * c * 9, rng);
        const auto g = random_vec(n * oc * h * w, rng);
        std::vector<double> gx0(x.size()), gx1(x.size());
        const double ts = time_best_of(3, [&] {
            std::fill(gx0.begin(), gx0.end(), 0.0);
            reidkit::kernels::conv2d_grad_input_serial(g.data(), wt.data(), gx0.data(), n, c, h, w,
                                                       oc, 3, 3, 1, 1);
        });
        const double tp = time_best_of(3, [&] {
            std::fill(gx1.begin(), gx1.end(), 0.0);
            reidkit::kernels::conv2d_grad_input(g.data(), wt.data(), gx1.data(), n, c, h, w, oc, 3,
                                                3, 1, 1);
        });
        report("conv2d grad-input", ts, tp,
               std::memcmp(gx0.data(), gx1.data(), gx0.size() * 8) == 0);

        std::vector<double> gw0(wt.size()), gw1(wt.size());
        const double ts2 = time_best_of(3, [&] {
            std::fill(gw0.begin(), gw0.end(), 0.0);
            reidkit::kernels::conv2d_grad_weight_serial(x.data(), g.data(), gw0.data(), n, c, h, w,
                                                        oc, 3, 3, 1, 1);
        });
        const double tp2 = time_best_of(3, [&] {
            std::fill(gw1.begin(), gw1.end(), 0.0);
            reidkit::kernels::conv2d_grad_weight(x.data(), g.data(), gw1.data(), n, c, h, w, oc, 3,
                                                 3, 1, 1);
        });
        report("conv2d grad-weight", ts2, tp2,
               std::memcmp(gw0.data(), gw1.data(), gw0.size() * 8) == 0);
    }
    {
        const std::size_t na = 1500, nb = 1500, d = 64;
        const auto a = random_vec(na * d, rng), b = random_vec(nb * d, rng);
        std::vector<double> d0(na * nb), d1(na * nb);
        const double ts = time_best_of(3, [&] {
            reidkit::kernels::pairwise_euclidean_serial(a.data(), na, b.data(), nb, d, d0.data());
        });
        const double tp = time_best_of(3, [&] {
            reidkit::kernels::pairwise_euclidean(a.data(), na, b.data(), nb, d, d1.data());
        });
        report("euclidean 1500x1500", ts, tp,
               std::memcmp(d0.data(), d1.data(), d0.size() * 8) == 0);

        const double ts2 = time_best_of(3, [&] {
            reidkit::kernels::pairwise_cosine_serial(a.data(), na, b.data(), nb, d, d0.data());
        });
        const double tp2 = time_best_of(3, [&] {
            reidkit::kernels::pairwise_cosine(a.data(), na, b.data(), nb, d, d1.data());
        });
        report("cosine 1500x1500", ts2, tp2,
               std::memcmp(d0.data(), d1.data(), d0.size() * 8) == 0);
    }
    return 0;
}
