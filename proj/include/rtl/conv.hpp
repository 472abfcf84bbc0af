#pragma once

#include <cstddef>
#include <string>

#include "rtl/tape.hpp"

// 2-d convolution and transposed convolution on NHWC tensors, implemented
// as im2col + GEMM. Kernels are stored [kh, kw, Cin, Cout] (conv) and
// [kh, kw, Cout, Cin] (deconv), so a kernel reshapes to a [kh*kw*C, C']
// matrix with no copying and the transposed convolution is the exact
// adjoint of the convolution with the same kernel memory.
namespace rtl {

struct ConvGeom {
    std::size_t n, h, w, cin;      // input
    std::size_t kh, kw, cout;      // kernel
    std::size_t stride, pad;
    std::size_t oh, ow;            // output
};

namespace detail {

inline ConvGeom conv_geom(const Dims& x, const Dims& k, std::size_t stride, std::size_t pad) {
    require(x.size() == 4, ErrorKind::shape, "conv2d: input must be [N,H,W,C]");
    require(k.size() == 4, ErrorKind::shape, "conv2d: kernel must be [kh,kw,Cin,Cout]");
    require(stride >= 1, ErrorKind::shape, "conv2d: stride must be >= 1");
    ConvGeom g{x[0], x[1], x[2], x[3], k[0], k[1], k[3], stride, pad, 0, 0};
    require(k[2] == g.cin, ErrorKind::shape,
            "conv2d: kernel expects " + std::to_string(k[2]) + " input channels, got " + std::to_string(g.cin));
    const std::size_t hp = g.h + 2 * pad, wp = g.w + 2 * pad;
    require(hp >= g.kh && wp >= g.kw, ErrorKind::shape, "conv2d: kernel larger than padded input");
    g.oh = (hp - g.kh) / stride + 1;
    g.ow = (wp - g.kw) / stride + 1;
    return g;
}

// Gather input patches into a [oh*ow, kh*kw*cin] matrix for one image.
template <typename T>
void im2col(const T* x, const ConvGeom& g, T* col) {
    const std::size_t patch = g.kh * g.kw * g.cin;
    for (std::size_t oy = 0; oy < g.oh; ++oy)
        for (std::size_t ox = 0; ox < g.ow; ++ox) {
            T* row = col + (oy * g.ow + ox) * patch;
            for (std::size_t ky = 0; ky < g.kh; ++ky) {
                const long iy = static_cast<long>(oy * g.stride + ky) - static_cast<long>(g.pad);
                for (std::size_t kx = 0; kx < g.kw; ++kx) {
                    const long ix = static_cast<long>(ox * g.stride + kx) - static_cast<long>(g.pad);
                    T* dst = row + (ky * g.kw + kx) * g.cin;
                    if (iy < 0 || iy >= static_cast<long>(g.h) || ix < 0 || ix >= static_cast<long>(g.w)) {
                        for (std::size_t c = 0; c < g.cin; ++c) dst[c] = T(0);
                    } else {
                        const T* src = x + (static_cast<std::size_t>(iy) * g.w + static_cast<std::size_t>(ix)) * g.cin;
                        for (std::size_t c = 0; c < g.cin; ++c) dst[c] = src[c];
                    }
                }
            }
        }
}

// Scatter-add of a patch matrix back into image gradients; exact adjoint
// of im2col (padding regions are dropped).
template <typename T>
void col2im_acc(const T* col, const ConvGeom& g, T* x) {
    const std::size_t patch = g.kh * g.kw * g.cin;
    for (std::size_t oy = 0; oy < g.oh; ++oy)
        for (std::size_t ox = 0; ox < g.ow; ++ox) {
            const T* row = col + (oy * g.ow + ox) * patch;
            for (std::size_t ky = 0; ky < g.kh; ++ky) {
                const long iy = static_cast<long>(oy * g.stride + ky) - static_cast<long>(g.pad);
                if (iy < 0 || iy >= static_cast<long>(g.h)) continue;
                for (std::size_t kx = 0; kx < g.kw; ++kx) {
                    const long ix = static_cast<long>(ox * g.stride + kx) - static_cast<long>(g.pad);
                    if (ix < 0 || ix >= static_cast<long>(g.w)) continue;
                    const T* src = row + (ky * g.kw + kx) * g.cin;
                    T* dst = x + (static_cast<std::size_t>(iy) * g.w + static_cast<std::size_t>(ix)) * g.cin;
                    for (std::size_t c = 0; c < g.cin; ++c) dst[c] += src[c];
                }
            }
        }
}

// C[m,n] += A[m,k] * B[k,n]
template <typename T>
void gemm_acc(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) {
        const T* ai = a + i * k;
        T* ci = c + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            const T av = ai[p];
            if (av == T(0)) continue;
            const T* bp = b + p * n;
            for (std::size_t j = 0; j < n; ++j) ci[j] += av * bp[j];
        }
    }
}

// C[k,n] += A^T[k,m] * B[m,n]  (A is [m,k])
template <typename T>
void gemm_at_b_acc(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) {
        const T* ai = a + i * k;
        const T* bi = b + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            const T av = ai[p];
            if (av == T(0)) continue;
            T* cp = c + p * n;
            for (std::size_t j = 0; j < n; ++j) cp[j] += av * bi[j];
        }
    }
}

// C[m,k] += A[m,n] * B^T[n,k]  (B is [k,n])
template <typename T>
void gemm_a_bt_acc(const T* a, const T* b, T* c, std::size_t m, std::size_t n, std::size_t k) {
    for (std::size_t i = 0; i < m; ++i) {
        const T* ai = a + i * n;
        T* ci = c + i * k;
        for (std::size_t p = 0; p < k; ++p) {
            const T* bp = b + p * n;
            T s = 0;
            for (std::size_t j = 0; j < n; ++j) s += ai[j] * bp[j];
            ci[p] += s;
        }
    }
}

}  // namespace detail

// x: [N,H,W,Cin], kernel: [kh,kw,Cin,Cout] -> [N,OH,OW,Cout]
// OH = floor((H + 2*pad - kh) / stride) + 1, likewise for OW.
template <typename T>
VarPtr<T> conv2d(Tape<T>* tape, const VarPtr<T>& x, const VarPtr<T>& kernel, std::size_t stride,
                 std::size_t pad) {
    const ConvGeom g = detail::conv_geom(x->value.shape(), kernel->value.shape(), stride, pad);
    const std::size_t patch = g.kh * g.kw * g.cin;
    const std::size_t opix = g.oh * g.ow;

    Tensor<T> out({g.n, g.oh, g.ow, g.cout});
    std::vector<T> col(opix * patch);
    for (std::size_t i = 0; i < g.n; ++i) {
        detail::im2col(x->value.data() + i * g.h * g.w * g.cin, g, col.data());
        detail::gemm_acc(col.data(), kernel->value.data(), out.data() + i * opix * g.cout, opix, patch, g.cout);
    }
    auto y = make_var(std::move(out));
    if (detail::track(tape, {&x, &kernel})) {
        detail::mark_output(y);
        if (x->requires_grad) x->ensure_grad();
        if (kernel->requires_grad) kernel->ensure_grad();
        tape->record([x, kernel, y, g, patch, opix] {
            std::vector<T> col(opix * patch);
            for (std::size_t i = 0; i < g.n; ++i) {
                const T* gy = y->grad.data() + i * opix * g.cout;
                if (kernel->requires_grad) {
                    detail::im2col(x->value.data() + i * g.h * g.w * g.cin, g, col.data());
                    detail::gemm_at_b_acc(col.data(), gy, kernel->grad.data(), opix, patch, g.cout);
                }
                if (x->requires_grad) {
                    std::fill(col.begin(), col.end(), T(0));
                    detail::gemm_a_bt_acc(gy, kernel->value.data(), col.data(), opix, g.cout, patch);
                    detail::col2im_acc(col.data(), g, x->grad.data() + i * g.h * g.w * g.cin);
                }
            }
        });
    }
    return y;
}

// Transposed convolution: x: [N,H,W,Cout_in], kernel: [kh,kw,Cout,Cin]
// -> [N,OH,OW,Cout] with OH = (H-1)*stride - 2*pad + kh. Computed as the
// adjoint of conv2d: scatter x * K^T patches into the output canvas.
template <typename T>
VarPtr<T> deconv2d(Tape<T>* tape, const VarPtr<T>& x, const VarPtr<T>& kernel, std::size_t stride,
                   std::size_t pad) {
    const Dims& xs = x->value.shape();
    const Dims& ks = kernel->value.shape();
    require(xs.size() == 4, ErrorKind::shape, "deconv2d: input must be [N,H,W,C]");
    require(ks.size() == 4, ErrorKind::shape, "deconv2d: kernel must be [kh,kw,Cout,Cin]");
    require(ks[3] == xs[3], ErrorKind::shape,
            "deconv2d: kernel expects " + std::to_string(ks[3]) + " input channels, got " + std::to_string(xs[3]));
    require(stride >= 1, ErrorKind::shape, "deconv2d: stride must be >= 1");
    const std::size_t oh_raw = (xs[1] - 1) * stride + ks[0];
    const std::size_t ow_raw = (xs[2] - 1) * stride + ks[1];
    require(oh_raw > 2 * pad && ow_raw > 2 * pad, ErrorKind::shape, "deconv2d: padding exceeds output");

    // Geometry of the *equivalent forward convolution* whose adjoint we take:
    // conv over the deconv output with this kernel reproduces the input shape.
    ConvGeom g{xs[0], oh_raw - 2 * pad, ow_raw - 2 * pad, ks[2], ks[0], ks[1], xs[3], stride, pad, xs[1], xs[2]};
    const std::size_t patch = g.kh * g.kw * g.cin;  // cin here = deconv output channels
    const std::size_t ipix = xs[1] * xs[2];

    Tensor<T> out({g.n, g.h, g.w, g.cin});
    std::vector<T> col(ipix * patch);
    for (std::size_t i = 0; i < g.n; ++i) {
        std::fill(col.begin(), col.end(), T(0));
        detail::gemm_a_bt_acc(x->value.data() + i * ipix * g.cout, kernel->value.data(), col.data(), ipix, g.cout,
                              patch);
        detail::col2im_acc(col.data(), g, out.data() + i * g.h * g.w * g.cin);
    }
    auto y = make_var(std::move(out));
    if (detail::track(tape, {&x, &kernel})) {
        detail::mark_output(y);
        if (x->requires_grad) x->ensure_grad();
        if (kernel->requires_grad) kernel->ensure_grad();
        tape->record([x, kernel, y, g, patch, ipix] {
            std::vector<T> col(ipix * patch);
            for (std::size_t i = 0; i < g.n; ++i) {
                detail::im2col(y->grad.data() + i * g.h * g.w * g.cin, g, col.data());
                if (x->requires_grad)
                    detail::gemm_acc(col.data(), kernel->value.data(), x->grad.data() + i * ipix * g.cout, ipix,
                                     patch, g.cout);
                if (kernel->requires_grad)
                    detail::gemm_at_b_acc(col.data(), x->value.data() + i * ipix * g.cout, kernel->grad.data(), ipix,
                                          patch, g.cout);
            }
        });
    }
    return y;
}

}  // namespace rtl
