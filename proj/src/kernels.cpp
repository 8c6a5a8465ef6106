#include "reidkit/kernels.hpp"

#include <cmath>
#include <cstdint>

namespace reidkit::kernels {

// The per-element helpers below are noinline: serial and parallel entry
// points must run the same machine code, otherwise FP contraction may
// round their sums differently and break bit-equality.
namespace {

__attribute__((noinline)) double dot_stride(const double* a, const double* b, std::size_t n, std::size_t bstride) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) acc += a[i] * b[i * bstride];
    return acc;
}

}  // namespace

void matmul_serial(const double* a, const double* b, double* c,
                   std::size_t m, std::size_t k, std::size_t n) {
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j)
            c[i * n + j] = dot_stride(a + i * k, b + j, k, n);
}

void matmul(const double* a, const double* b, double* c,
            std::size_t m, std::size_t k, std::size_t n) {
#pragma omp parallel for schedule(static)
    for (std::int64_t i = 0; i < static_cast<std::int64_t>(m); ++i)
        for (std::size_t j = 0; j < n; ++j)
            c[i * n + j] = dot_stride(a + i * k, b + j, k, n);
}

namespace {

// One (sample, out-channel) plane of the convolution. The accumulation
// order per output element is the loop nest (ic, ky, kx), identical for
// the serial and parallel entry points, so both stay bit-equal.
__attribute__((noinline)) void conv_plane(const double* xs, const double* wk, double* os,
                       std::size_t c, std::size_t h, std::size_t wd,
                       std::size_t kh, std::size_t kw,
                       std::size_t stride, std::size_t pad,
                       std::size_t oh, std::size_t ow) {
    std::fill(os, os + oh * ow, 0.0);
    for (std::size_t ic = 0; ic < c; ++ic)
        for (std::size_t ky = 0; ky < kh; ++ky)
            for (std::size_t kx = 0; kx < kw; ++kx) {
                const double wval = wk[(ic * kh + ky) * kw + kx];
                const std::int64_t dy = static_cast<std::int64_t>(ky) -
                                        static_cast<std::int64_t>(pad);
                const std::int64_t dx = static_cast<std::int64_t>(kx) -
                                        static_cast<std::int64_t>(pad);
                for (std::size_t oy = 0; oy < oh; ++oy) {
                    const std::int64_t iy = static_cast<std::int64_t>(oy * stride) + dy;
                    if (iy < 0 || iy >= static_cast<std::int64_t>(h)) continue;
                    // branch-free ox range with 0 <= ox*stride+dx < wd
                    std::size_t ox_lo = 0;
                    if (dx < 0) ox_lo = (static_cast<std::size_t>(-dx) + stride - 1) / stride;
                    std::size_t ox_hi = ow;
                    if (static_cast<std::int64_t>(wd) - dx >= 1) {
                        const std::size_t limit =
                            (static_cast<std::size_t>(static_cast<std::int64_t>(wd) - dx) - 1) /
                                stride + 1;
                        ox_hi = std::min(ow, limit);
                    } else {
                        ox_hi = 0;
                    }
                    const double* xrow = xs + (ic * h + static_cast<std::size_t>(iy)) * wd;
                    double* orow = os + oy * ow;
                    for (std::size_t ox = ox_lo; ox < ox_hi; ++ox)
                        orow[ox] += xrow[ox * stride + static_cast<std::size_t>(dx)] * wval;
                }
            }
}

}  // namespace

void conv2d_serial(const double* x, const double* w, double* out,
                   std::size_t n, std::size_t c, std::size_t h, std::size_t wd,
                   std::size_t oc, std::size_t kh, std::size_t kw,
                   std::size_t stride, std::size_t pad) {
    const std::size_t oh = (h + 2 * pad - kh) / stride + 1;
    const std::size_t ow = (wd + 2 * pad - kw) / stride + 1;
    for (std::size_t in = 0; in < n; ++in)
        for (std::size_t o = 0; o < oc; ++o)
            conv_plane(x + in * c * h * wd, w + o * c * kh * kw,
                       out + (in * oc + o) * oh * ow, c, h, wd, kh, kw, stride, pad, oh, ow);
}

void conv2d(const double* x, const double* w, double* out,
            std::size_t n, std::size_t c, std::size_t h, std::size_t wd,
            std::size_t oc, std::size_t kh, std::size_t kw,
            std::size_t stride, std::size_t pad) {
    const std::size_t oh = (h + 2 * pad - kh) / stride + 1;
    const std::size_t ow = (wd + 2 * pad - kw) / stride + 1;
    const std::int64_t planes = static_cast<std::int64_t>(n * oc);
#pragma omp parallel for schedule(static)
    for (std::int64_t p = 0; p < planes; ++p) {
        const std::size_t o = static_cast<std::size_t>(p) % oc;
        const std::size_t in = static_cast<std::size_t>(p) / oc;
        conv_plane(x + in * c * h * wd, w + o * c * kh * kw,
                   out + static_cast<std::size_t>(p) * oh * ow, c, h, wd, kh, kw, stride, pad,
                   oh, ow);
    }
}

namespace {

// Gradient plane for one (sample, in-channel): scatter every output
// gradient through the kernel taps in fixed (oc, ky, kx, oy, ox) order.
__attribute__((noinline)) void conv_grad_input_plane(const double* gout, const double* w, double* gxp,
                                  std::size_t c, std::size_t h, std::size_t wd,
                                  std::size_t oc, std::size_t kh, std::size_t kw,
                                  std::size_t stride, std::size_t pad,
                                  std::size_t oh, std::size_t ow,
                                  std::size_t in, std::size_t ic) {
    for (std::size_t o = 0; o < oc; ++o) {
        const double* gs = gout + (in * oc + o) * oh * ow;
        const double* wk = w + (o * c + ic) * kh * kw;
        for (std::size_t ky = 0; ky < kh; ++ky)
            for (std::size_t kx = 0; kx < kw; ++kx) {
                const double wval = wk[ky * kw + kx];
                const std::int64_t dy = static_cast<std::int64_t>(ky) -
                                        static_cast<std::int64_t>(pad);
                const std::int64_t dx = static_cast<std::int64_t>(kx) -
                                        static_cast<std::int64_t>(pad);
                for (std::size_t oy = 0; oy < oh; ++oy) {
                    const std::int64_t iy = static_cast<std::int64_t>(oy * stride) + dy;
                    if (iy < 0 || iy >= static_cast<std::int64_t>(h)) continue;
                    std::size_t ox_lo = 0;
                    if (dx < 0) ox_lo = (static_cast<std::size_t>(-dx) + stride - 1) / stride;
                    std::size_t ox_hi = 0;
                    if (static_cast<std::int64_t>(wd) - dx >= 1)
                        ox_hi = std::min(ow, (static_cast<std::size_t>(
                                                  static_cast<std::int64_t>(wd) - dx) - 1) /
                                                 stride + 1);
                    const double* grow = gs + oy * ow;
                    double* xrow = gxp + static_cast<std::size_t>(iy) * wd;
                    for (std::size_t ox = ox_lo; ox < ox_hi; ++ox)
                        xrow[ox * stride + static_cast<std::size_t>(dx)] += grow[ox] * wval;
                }
            }
    }
}

}  // namespace

void conv2d_grad_input_serial(const double* gout, const double* w, double* gx,
                              std::size_t n, std::size_t c, std::size_t h, std::size_t wd,
                              std::size_t oc, std::size_t kh, std::size_t kw,
                              std::size_t stride, std::size_t pad) {
    const std::size_t oh = (h + 2 * pad - kh) / stride + 1;
    const std::size_t ow = (wd + 2 * pad - kw) / stride + 1;
    for (std::size_t in = 0; in < n; ++in)
        for (std::size_t ic = 0; ic < c; ++ic)
            conv_grad_input_plane(gout, w, gx + (in * c + ic) * h * wd, c, h, wd, oc, kh, kw,
                                  stride, pad, oh, ow, in, ic);
}

void conv2d_grad_input(const double* gout, const double* w, double* gx,
                       std::size_t n, std::size_t c, std::size_t h, std::size_t wd,
                       std::size_t oc, std::size_t kh, std::size_t kw,
                       std::size_t stride, std::size_t pad) {
    const std::size_t oh = (h + 2 * pad - kh) / stride + 1;
    const std::size_t ow = (wd + 2 * pad - kw) / stride + 1;
    const std::int64_t planes = static_cast<std::int64_t>(n * c);
#pragma omp parallel for schedule(static)
    for (std::int64_t p = 0; p < planes; ++p) {
        const std::size_t ic = static_cast<std::size_t>(p) % c;
        const std::size_t in = static_cast<std::size_t>(p) / c;
        conv_grad_input_plane(gout, w, gx + static_cast<std::size_t>(p) * h * wd, c, h, wd, oc,
                              kh, kw, stride, pad, oh, ow, in, ic);
    }
}

namespace {

// Weight-gradient tile for one (out-channel, in-channel) pair: every
// kernel tap accumulates over (n, oy, ox) ascending, one pass over the
// output gradients.
__attribute__((noinline)) void conv_weight_grad_tile(const double* x, const double* gout,
                                     double* tile,
                                     std::size_t n, std::size_t c,
                                     std::size_t h, std::size_t wd,
                                     std::size_t oc, std::size_t oh, std::size_t ow,
                                     std::size_t kh, std::size_t kw,
                                     std::size_t stride, std::size_t pad,
                                     std::size_t o, std::size_t ic) {
    for (std::size_t ky = 0; ky < kh; ++ky)
        for (std::size_t kx = 0; kx < kw; ++kx) {
            const std::int64_t dy = static_cast<std::int64_t>(ky) -
                                    static_cast<std::int64_t>(pad);
            const std::int64_t dx = static_cast<std::int64_t>(kx) -
                                    static_cast<std::int64_t>(pad);
            std::size_t ox_lo = 0;
            if (dx < 0) ox_lo = (static_cast<std::size_t>(-dx) + stride - 1) / stride;
            std::size_t ox_hi = 0;
            if (static_cast<std::int64_t>(wd) - dx >= 1)
                ox_hi = std::min(ow, (static_cast<std::size_t>(
                                          static_cast<std::int64_t>(wd) - dx) - 1) /
                                         stride + 1);
            double acc = 0.0;
            for (std::size_t in = 0; in < n; ++in) {
                const double* xs = x + (in * c + ic) * h * wd;
                const double* gs = gout + (in * oc + o) * oh * ow;
                for (std::size_t oy = 0; oy < oh; ++oy) {
                    const std::int64_t iy = static_cast<std::int64_t>(oy * stride) + dy;
                    if (iy < 0 || iy >= static_cast<std::int64_t>(h)) continue;
                    const double* xrow = xs + static_cast<std::size_t>(iy) * wd;
                    const double* grow = gs + oy * ow;
                    for (std::size_t ox = ox_lo; ox < ox_hi; ++ox)
                        acc += xrow[ox * stride + static_cast<std::size_t>(dx)] * grow[ox];
                }
            }
            tile[ky * kw + kx] += acc;
        }
}

}  // namespace

void conv2d_grad_weight_serial(const double* x, const double* gout, double* gw,
                               std::size_t n, std::size_t c, std::size_t h, std::size_t wd,
                               std::size_t oc, std::size_t kh, std::size_t kw,
                               std::size_t stride, std::size_t pad) {
    const std::size_t oh = (h + 2 * pad - kh) / stride + 1;
    const std::size_t ow = (wd + 2 * pad - kw) / stride + 1;
    for (std::size_t o = 0; o < oc; ++o)
        for (std::size_t ic = 0; ic < c; ++ic)
            conv_weight_grad_tile(x, gout, gw + (o * c + ic) * kh * kw, n, c, h, wd, oc, oh, ow,
                                  kh, kw, stride, pad, o, ic);
}

void conv2d_grad_weight(const double* x, const double* gout, double* gw,
                        std::size_t n, std::size_t c, std::size_t h, std::size_t wd,
                        std::size_t oc, std::size_t kh, std::size_t kw,
                        std::size_t stride, std::size_t pad) {
    const std::size_t oh = (h + 2 * pad - kh) / stride + 1;
    const std::size_t ow = (wd + 2 * pad - kw) / stride + 1;
    const std::int64_t tiles = static_cast<std::int64_t>(oc * c);
#pragma omp parallel for schedule(static)
    for (std::int64_t t = 0; t < tiles; ++t) {
        const std::size_t ic = static_cast<std::size_t>(t) % c;
        const std::size_t o = static_cast<std::size_t>(t) / c;
        conv_weight_grad_tile(x, gout, gw + static_cast<std::size_t>(t) * kh * kw, n, c, h, wd,
                              oc, oh, ow, kh, kw, stride, pad, o, ic);
    }
}

namespace {

__attribute__((noinline)) double row_euclidean(const double* a, const double* b, std::size_t d) {
    double acc = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
        const double diff = a[i] - b[i];
        acc += diff * diff;
    }
    return std::sqrt(acc);
}

}  // namespace

void pairwise_euclidean_serial(const double* a, std::size_t na,
                               const double* b, std::size_t nb,
                               std::size_t d, double* out) {
    for (std::size_t i = 0; i < na; ++i)
        for (std::size_t j = 0; j < nb; ++j)
            out[i * nb + j] = row_euclidean(a + i * d, b + j * d, d);
}

void pairwise_euclidean(const double* a, std::size_t na,
                        const double* b, std::size_t nb,
                        std::size_t d, double* out) {
#pragma omp parallel for schedule(static)
    for (std::int64_t i = 0; i < static_cast<std::int64_t>(na); ++i)
        for (std::size_t j = 0; j < nb; ++j)
            out[i * nb + j] = row_euclidean(a + i * d, b + j * d, d);
}

namespace {

__attribute__((noinline)) double row_cosine(const double* a, const double* b, std::size_t d) {
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    return 1.0 - dot / (std::sqrt(na) * std::sqrt(nb));
}

}  // namespace

void pairwise_cosine_serial(const double* a, std::size_t na,
                            const double* b, std::size_t nb,
                            std::size_t d, double* out) {
    for (std::size_t i = 0; i < na; ++i)
        for (std::size_t j = 0; j < nb; ++j)
            out[i * nb + j] = row_cosine(a + i * d, b + j * d, d);
}

void pairwise_cosine(const double* a, std::size_t na,
                     const double* b, std::size_t nb,
                     std::size_t d, double* out) {
#pragma omp parallel for schedule(static)
    for (std::int64_t i = 0; i < static_cast<std::int64_t>(na); ++i)
        for (std::size_t j = 0; j < nb; ++j)
            out[i * nb + j] = row_cosine(a + i * d, b + j * d, d);
}

}  // namespace reidkit::kernels
