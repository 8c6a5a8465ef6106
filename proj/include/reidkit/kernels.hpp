#pragma once

#include <cstddef>

// Hot inner loops, each in two variants: a serial reference and an
// OpenMP-parallel version. The parallel kernels split work across
// independent output elements only; every output element is reduced in
// the same fixed order as the serial kernel, so the two variants produce
// bit-identical results and runs stay deterministic under any thread count.
namespace reidkit::kernels {

// C[m,n] = A[m,k] * B[k,n], row-major.
void matmul_serial(const double* a, const double* b, double* c,
                   std::size_t m, std::size_t k, std::size_t n);
void matmul(const double* a, const double* b, double* c,
            std::size_t m, std::size_t k, std::size_t n);

// 2-D convolution, NCHW input, OIHW weight, zero padding.
// out has shape (n, oc, oh, ow) with oh = (h + 2*pad - kh) / stride + 1.
void conv2d_serial(const double* x, const double* w, double* out,
                   std::size_t n, std::size_t c, std::size_t h, std::size_t wd,
                   std::size_t oc, std::size_t kh, std::size_t kw,
                   std::size_t stride, std::size_t pad);
void conv2d(const double* x, const double* w, double* out,
            std::size_t n, std::size_t c, std::size_t h, std::size_t wd,
            std::size_t oc, std::size_t kh, std::size_t kw,
            std::size_t stride, std::size_t pad);

// Gradient of conv2d w.r.t. its input; accumulates into gx.
void conv2d_grad_input_serial(const double* gout, const double* w, double* gx,
                              std::size_t n, std::size_t c, std::size_t h, std::size_t wd,
                              std::size_t oc, std::size_t kh, std::size_t kw,
                              std::size_t stride, std::size_t pad);
void conv2d_grad_input(const double* gout, const double* w, double* gx,
                       std::size_t n, std::size_t c, std::size_t h, std::size_t wd,
                       std::size_t oc, std::size_t kh, std::size_t kw,
                       std::size_t stride, std::size_t pad);

// Gradient of conv2d w.r.t. its weight; accumulates into gw.
void conv2d_grad_weight_serial(const double* x, const double* gout, double* gw,
                               std::size_t n, std::size_t c, std::size_t h, std::size_t wd,
                               std::size_t oc, std::size_t kh, std::size_t kw,
                               std::size_t stride, std::size_t pad);
void conv2d_grad_weight(const double* x, const double* gout, double* gw,
                        std::size_t n, std::size_t c, std::size_t h, std::size_t wd,
                        std::size_t oc, std::size_t kh, std::size_t kw,
                        std::size_t stride, std::size_t pad);

// Pairwise non-squared Euclidean distances between rows of a (na x d)
// and rows of b (nb x d); out is na x nb.
void pairwise_euclidean_serial(const double* a, std::size_t na,
                               const double* b, std::size_t nb,
                               std::size_t d, double* out);
void pairwise_euclidean(const double* a, std::size_t na,
                        const double* b, std::size_t nb,
                        std::size_t d, double* out);

// Pairwise cosine distances 1 - a.b/(|a||b|). Rows must have nonzero norm;
// the caller validates.
void pairwise_cosine_serial(const double* a, std::size_t na,
                            const double* b, std::size_t nb,
                            std::size_t d, double* out);
void pairwise_cosine(const double* a, std::size_t na,
                     const double* b, std::size_t nb,
                     std::size_t d, double* out);

}  // namespace reidkit::kernels
