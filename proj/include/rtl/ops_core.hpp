#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <vector>

#include "rtl/tape.hpp"

// Elementwise, reduction and dense-algebra primitives with recorded
// backward passes. Every op here is finite-difference certified by the
// gradcheck suite.
namespace rtl {

template <typename T>
VarPtr<T> add(Tape<T>* tape, const VarPtr<T>& a, const VarPtr<T>& b) {
    require(a->value.same_shape(b->value), ErrorKind::shape,
            "add: shape mismatch " + dims_str(a->value.shape()) + " vs " + dims_str(b->value.shape()));
    Tensor<T> out(a->value.shape());
    const std::size_t n = out.numel();
    for (std::size_t i = 0; i < n; ++i) out[i] = a->value[i] + b->value[i];
    auto y = make_var(std::move(out));
    if (detail::track(tape, {&a, &b})) {
        detail::mark_output(y);
        if (a->requires_grad) a->ensure_grad();
        if (b->requires_grad) b->ensure_grad();
        tape->record([a, b, y] {
            const std::size_t n = y->value.numel();
            if (a->requires_grad)
                for (std::size_t i = 0; i < n; ++i) a->grad[i] += y->grad[i];
            if (b->requires_grad)
                for (std::size_t i = 0; i < n; ++i) b->grad[i] += y->grad[i];
        });
    }
    return y;
}

template <typename T>
VarPtr<T> sub(Tape<T>* tape, const VarPtr<T>& a, const VarPtr<T>& b) {
    require(a->value.same_shape(b->value), ErrorKind::shape,
            "sub: shape mismatch " + dims_str(a->value.shape()) + " vs " + dims_str(b->value.shape()));
    Tensor<T> out(a->value.shape());
    const std::size_t n = out.numel();
    for (std::size_t i = 0; i < n; ++i) out[i] = a->value[i] - b->value[i];
    auto y = make_var(std::move(out));
    if (detail::track(tape, {&a, &b})) {
        detail::mark_output(y);
        if (a->requires_grad) a->ensure_grad();
        if (b->requires_grad) b->ensure_grad();
        tape->record([a, b, y] {
            const std::size_t n = y->value.numel();
            if (a->requires_grad)
                for (std::size_t i = 0; i < n; ++i) a->grad[i] += y->grad[i];
            if (b->requires_grad)
                for (std::size_t i = 0; i < n; ++i) b->grad[i] -= y->grad[i];
        });
    }
    return y;
}

template <typename T>
VarPtr<T> scale(Tape<T>* tape, const VarPtr<T>& x, T c) {
    Tensor<T> out(x->value.shape());
    const std::size_t n = out.numel();
    for (std::size_t i = 0; i < n; ++i) out[i] = x->value[i] * c;
    auto y = make_var(std::move(out));
    if (detail::track(tape, {&x})) {
        detail::mark_output(y);
        x->ensure_grad();
        tape->record([x, y, c] {
            const std::size_t n = y->value.numel();
            for (std::size_t i = 0; i < n; ++i) x->grad[i] += c * y->grad[i];
        });
    }
    return y;
}

template <typename T>
VarPtr<T> square(Tape<T>* tape, const VarPtr<T>& x) {
    Tensor<T> out(x->value.shape());
    const std::size_t n = out.numel();
    for (std::size_t i = 0; i < n; ++i) out[i] = x->value[i] * x->value[i];
    auto y = make_var(std::move(out));
    if (detail::track(tape, {&x})) {
        detail::mark_output(y);
        x->ensure_grad();
        tape->record([x, y] {
            const std::size_t n = y->value.numel();
            for (std::size_t i = 0; i < n; ++i) x->grad[i] += T(2) * x->value[i] * y->grad[i];
        });
    }
    return y;
}

// Subgradient 0 at the origin, same convention as relu.
template <typename T>
VarPtr<T> abs_elem(Tape<T>* tape, const VarPtr<T>& x) {
    Tensor<T> out(x->value.shape());
    const std::size_t n = out.numel();
    for (std::size_t i = 0; i < n; ++i) out[i] = std::abs(x->value[i]);
    auto y = make_var(std::move(out));
    if (detail::track(tape, {&x})) {
        detail::mark_output(y);
        x->ensure_grad();
        tape->record([x, y] {
            const std::size_t n = y->value.numel();
            for (std::size_t i = 0; i < n; ++i) {
                const T v = x->value[i];
                if (v > T(0))
                    x->grad[i] += y->grad[i];
                else if (v < T(0))
                    x->grad[i] -= y->grad[i];
            }
        });
    }
    return y;
}

template <typename T>
VarPtr<T> relu(Tape<T>* tape, const VarPtr<T>& x) {
    Tensor<T> out(x->value.shape());
    const std::size_t n = out.numel();
    for (std::size_t i = 0; i < n; ++i) out[i] = x->value[i] > T(0) ? x->value[i] : T(0);
    auto y = make_var(std::move(out));
    if (detail::track(tape, {&x})) {
        detail::mark_output(y);
        x->ensure_grad();
        tape->record([x, y] {
            const std::size_t n = y->value.numel();
            for (std::size_t i = 0; i < n; ++i)
                if (x->value[i] > T(0)) x->grad[i] += y->grad[i];
        });
    }
    return y;
}

template <typename T>
VarPtr<T> sum_all(Tape<T>* tape, const VarPtr<T>& x) {
    T s = 0;
    const std::size_t n = x->value.numel();
    for (std::size_t i = 0; i < n; ++i) s += x->value[i];
    auto y = make_var(Tensor<T>::scalar(s));
    if (detail::track(tape, {&x})) {
        detail::mark_output(y);
        x->ensure_grad();
        tape->record([x, y] {
            const T g = y->grad[0];
            const std::size_t n = x->value.numel();
            for (std::size_t i = 0; i < n; ++i) x->grad[i] += g;
        });
    }
    return y;
}

// Removes one axis by summation.
template <typename T>
VarPtr<T> sum_axis(Tape<T>* tape, const VarPtr<T>& x, std::size_t axis) {
    const Dims& s = x->value.shape();
    require(axis < s.size(), ErrorKind::shape, "sum_axis: axis out of range");
    Dims out_shape;
    for (std::size_t i = 0; i < s.size(); ++i)
        if (i != axis) out_shape.push_back(s[i]);
    if (out_shape.empty()) out_shape.push_back(1);

    std::size_t outer = 1, inner = 1;
    for (std::size_t i = 0; i < axis; ++i) outer *= s[i];
    for (std::size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
    const std::size_t extent = s[axis];

    Tensor<T> out(out_shape);
    for (std::size_t o = 0; o < outer; ++o)
        for (std::size_t k = 0; k < extent; ++k) {
            const T* src = x->value.data() + (o * extent + k) * inner;
            T* dst = out.data() + o * inner;
            for (std::size_t i = 0; i < inner; ++i) dst[i] += src[i];
        }
    auto y = make_var(std::move(out));
    if (detail::track(tape, {&x})) {
        detail::mark_output(y);
        x->ensure_grad();
        tape->record([x, y, outer, extent, inner] {
            for (std::size_t o = 0; o < outer; ++o)
                for (std::size_t k = 0; k < extent; ++k) {
                    T* dst = x->grad.data() + (o * extent + k) * inner;
                    const T* src = y->grad.data() + o * inner;
                    for (std::size_t i = 0; i < inner; ++i) dst[i] += src[i];
                }
        });
    }
    return y;
}

// Same data, new shape; numel must match. Gradients pass through 1:1.
template <typename T>
VarPtr<T> reshape(Tape<T>* tape, const VarPtr<T>& x, const Dims& shape) {
    require(dims_numel(shape) == x->value.numel(), ErrorKind::shape,
            "reshape: element count mismatch " + dims_str(x->value.shape()) + " -> " + dims_str(shape));
    Tensor<T> out(shape, x->value.vec());
    auto y = make_var(std::move(out));
    if (detail::track(tape, {&x})) {
        detail::mark_output(y);
        x->ensure_grad();
        tape->record([x, y] {
            const std::size_t n = y->value.numel();
            for (std::size_t i = 0; i < n; ++i) x->grad[i] += y->grad[i];
        });
    }
    return y;
}

// x: [N, m] (or [m]), weight: [m, C], bias: [C]
template <typename T>
VarPtr<T> linear(Tape<T>* tape, const VarPtr<T>& x, const VarPtr<T>& weight, const VarPtr<T>& bias) {
    const Dims& xs = x->value.shape();
    const Dims& ws = weight->value.shape();
    require(ws.size() == 2, ErrorKind::shape, "linear: weight must be 2-d");
    const std::size_t m = ws[0], c = ws[1];
    const std::size_t n = xs.size() == 1 ? 1 : dims_numel(xs) / xs.back();
    require(xs.back() == m, ErrorKind::shape,
            "linear: input features " + std::to_string(xs.back()) + " != weight rows " + std::to_string(m));
    require(bias->value.numel() == c, ErrorKind::shape, "linear: bias length mismatch");

    Dims out_shape = xs;
    out_shape.back() = c;
    Tensor<T> out(out_shape);
    for (std::size_t i = 0; i < n; ++i) {
        const T* xi = x->value.data() + i * m;
        T* yi = out.data() + i * c;
        for (std::size_t j = 0; j < c; ++j) yi[j] = bias->value[j];
        for (std::size_t k = 0; k < m; ++k) {
            const T xv = xi[k];
            const T* wr = weight->value.data() + k * c;
            for (std::size_t j = 0; j < c; ++j) yi[j] += xv * wr[j];
        }
    }
    auto y = make_var(std::move(out));
    if (detail::track(tape, {&x, &weight, &bias})) {
        detail::mark_output(y);
        if (x->requires_grad) x->ensure_grad();
        if (weight->requires_grad) weight->ensure_grad();
        if (bias->requires_grad) bias->ensure_grad();
        tape->record([x, weight, bias, y, n, m, c] {
            for (std::size_t i = 0; i < n; ++i) {
                const T* gy = y->grad.data() + i * c;
                const T* xi = x->value.data() + i * m;
                if (bias->requires_grad)
                    for (std::size_t j = 0; j < c; ++j) bias->grad[j] += gy[j];
                if (weight->requires_grad)
                    for (std::size_t k = 0; k < m; ++k) {
                        T* gw = weight->grad.data() + k * c;
                        const T xv = xi[k];
                        for (std::size_t j = 0; j < c; ++j) gw[j] += xv * gy[j];
                    }
                if (x->requires_grad) {
                    T* gx = x->grad.data() + i * m;
                    for (std::size_t k = 0; k < m; ++k) {
                        const T* wr = weight->value.data() + k * c;
                        T s = 0;
                        for (std::size_t j = 0; j < c; ++j) s += wr[j] * gy[j];
                        gx[k] += s;
                    }
                }
            }
        });
    }
    return y;
}

// Max-subtracted softmax over the last axis.
template <typename T>
VarPtr<T> softmax(Tape<T>* tape, const VarPtr<T>& x) {
    const Dims& s = x->value.shape();
    require(!s.empty(), ErrorKind::shape, "softmax: empty tensor");
    const std::size_t c = s.back();
    const std::size_t rows = x->value.numel() / c;
    Tensor<T> out(s);
    for (std::size_t r = 0; r < rows; ++r) {
        const T* xi = x->value.data() + r * c;
        T* yi = out.data() + r * c;
        T mx = xi[0];
        for (std::size_t j = 1; j < c; ++j) mx = std::max(mx, xi[j]);
        T denom = 0;
        for (std::size_t j = 0; j < c; ++j) {
            yi[j] = std::exp(xi[j] - mx);
            denom += yi[j];
        }
        for (std::size_t j = 0; j < c; ++j) yi[j] /= denom;
    }
    auto y = make_var(std::move(out));
    if (detail::track(tape, {&x})) {
        detail::mark_output(y);
        x->ensure_grad();
        tape->record([x, y, rows, c] {
            for (std::size_t r = 0; r < rows; ++r) {
                const T* yi = y->value.data() + r * c;
                const T* gy = y->grad.data() + r * c;
                T dot = 0;
                for (std::size_t j = 0; j < c; ++j) dot += yi[j] * gy[j];
                T* gx = x->grad.data() + r * c;
                for (std::size_t j = 0; j < c; ++j) gx[j] += yi[j] * (gy[j] - dot);
            }
        });
    }
    return y;
}

// [N, H, W, C] -> [N, C]
template <typename T>
VarPtr<T> global_avgpool(Tape<T>* tape, const VarPtr<T>& x) {
    const Dims& s = x->value.shape();
    require(s.size() == 4, ErrorKind::shape, "global_avgpool expects [N,H,W,C]");
    const std::size_t n = s[0], hw = s[1] * s[2], c = s[3];
    Tensor<T> out({n, c});
    for (std::size_t i = 0; i < n; ++i) {
        T* yi = out.data() + i * c;
        const T* base = x->value.data() + i * hw * c;
        for (std::size_t p = 0; p < hw; ++p)
            for (std::size_t j = 0; j < c; ++j) yi[j] += base[p * c + j];
        const T inv = T(1) / static_cast<T>(hw);
        for (std::size_t j = 0; j < c; ++j) yi[j] *= inv;
    }
    auto y = make_var(std::move(out));
    if (detail::track(tape, {&x})) {
        detail::mark_output(y);
        x->ensure_grad();
        tape->record([x, y, n, hw, c] {
            const T inv = T(1) / static_cast<T>(hw);
            for (std::size_t i = 0; i < n; ++i) {
                const T* gy = y->grad.data() + i * c;
                T* gx = x->grad.data() + i * hw * c;
                for (std::size_t p = 0; p < hw; ++p)
                    for (std::size_t j = 0; j < c; ++j) gx[p * c + j] += gy[j] * inv;
            }
        });
    }
    return y;
}

// x: [..., C] plus per-channel bias [C].
template <typename T>
VarPtr<T> bias_add(Tape<T>* tape, const VarPtr<T>& x, const VarPtr<T>& bias) {
    const Dims& s = x->value.shape();
    const std::size_t c = s.back();
    require(bias->value.numel() == c, ErrorKind::shape, "bias_add: channel mismatch");
    Tensor<T> out(s);
    const std::size_t rows = x->value.numel() / c;
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t j = 0; j < c; ++j) out[r * c + j] = x->value[r * c + j] + bias->value[j];
    auto y = make_var(std::move(out));
    if (detail::track(tape, {&x, &bias})) {
        detail::mark_output(y);
        if (x->requires_grad) x->ensure_grad();
        if (bias->requires_grad) bias->ensure_grad();
        tape->record([x, bias, y, rows, c] {
            if (x->requires_grad)
                for (std::size_t i = 0; i < rows * c; ++i) x->grad[i] += y->grad[i];
            if (bias->requires_grad)
                for (std::size_t r = 0; r < rows; ++r)
                    for (std::size_t j = 0; j < c; ++j) bias->grad[j] += y->grad[r * c + j];
        });
    }
    return y;
}

// Concatenate along the last (channel) axis; leading dims must match.
template <typename T>
VarPtr<T> concat_channels(Tape<T>* tape, const VarPtr<T>& a, const VarPtr<T>& b) {
    const Dims& sa = a->value.shape();
    const Dims& sb = b->value.shape();
    require(sa.size() == sb.size() && !sa.empty(), ErrorKind::shape, "concat: rank mismatch");
    for (std::size_t i = 0; i + 1 < sa.size(); ++i)
        require(sa[i] == sb[i], ErrorKind::shape, "concat: leading dims differ");
    const std::size_t ca = sa.back(), cb = sb.back();
    Dims out_shape = sa;
    out_shape.back() = ca + cb;
    Tensor<T> out(out_shape);
    const std::size_t rows = a->value.numel() / ca;
    for (std::size_t r = 0; r < rows; ++r) {
        T* dst = out.data() + r * (ca + cb);
        const T* pa = a->value.data() + r * ca;
        const T* pb = b->value.data() + r * cb;
        std::copy(pa, pa + ca, dst);
        std::copy(pb, pb + cb, dst + ca);
    }
    auto y = make_var(std::move(out));
    if (detail::track(tape, {&a, &b})) {
        detail::mark_output(y);
        if (a->requires_grad) a->ensure_grad();
        if (b->requires_grad) b->ensure_grad();
        tape->record([a, b, y, rows, ca, cb] {
            for (std::size_t r = 0; r < rows; ++r) {
                const T* gy = y->grad.data() + r * (ca + cb);
                if (a->requires_grad) {
                    T* ga = a->grad.data() + r * ca;
                    for (std::size_t j = 0; j < ca; ++j) ga[j] += gy[j];
                }
                if (b->requires_grad) {
                    T* gb = b->grad.data() + r * cb;
                    for (std::size_t j = 0; j < cb; ++j) gb[j] += gy[ca + j];
                }
            }
        });
    }
    return y;
}

// Rows (last axis) scaled to unit L2 norm. A zero row is a degenerate
// input: it signals a dead activation, so it is an error, not a fallback.
template <typename T>
VarPtr<T> l2_normalize(Tape<T>* tape, const VarPtr<T>& x) {
    const Dims& s = x->value.shape();
    const std::size_t m = s.back();
    const std::size_t rows = x->value.numel() / m;
    Tensor<T> out(s);
    std::vector<T> norms(rows);
    for (std::size_t r = 0; r < rows; ++r) {
        const T* xi = x->value.data() + r * m;
        T ss = 0;
        for (std::size_t j = 0; j < m; ++j) ss += xi[j] * xi[j];
        const T norm = std::sqrt(ss);
        require(norm > T(0), ErrorKind::degenerate, "l2_normalize: zero-norm input");
        norms[r] = norm;
        T* yi = out.data() + r * m;
        for (std::size_t j = 0; j < m; ++j) yi[j] = xi[j] / norm;
    }
    auto y = make_var(std::move(out));
    if (detail::track(tape, {&x})) {
        detail::mark_output(y);
        x->ensure_grad();
        tape->record([x, y, rows, m, norms = std::move(norms)] {
            for (std::size_t r = 0; r < rows; ++r) {
                const T* yi = y->value.data() + r * m;
                const T* gy = y->grad.data() + r * m;
                T dot = 0;
                for (std::size_t j = 0; j < m; ++j) dot += yi[j] * gy[j];
                T* gx = x->grad.data() + r * m;
                for (std::size_t j = 0; j < m; ++j) gx[j] += (gy[j] - yi[j] * dot) / norms[r];
            }
        });
    }
    return y;
}

// Per-row cosine similarity of two equally shaped [..., m] tensors -> [rows].
// 1-d inputs produce a scalar.
template <typename T>
VarPtr<T> cosine_similarity(Tape<T>* tape, const VarPtr<T>& u, const VarPtr<T>& v) {
    require(u->value.same_shape(v->value), ErrorKind::shape, "cosine_similarity: shape mismatch");
    const Dims& s = u->value.shape();
    const std::size_t m = s.back();
    const std::size_t rows = u->value.numel() / m;
    Dims out_shape(s.begin(), s.end() - 1);
    if (out_shape.empty()) out_shape.push_back(1);
    Tensor<T> out(out_shape);
    std::vector<T> nu(rows), nv(rows);
    for (std::size_t r = 0; r < rows; ++r) {
        const T* ui = u->value.data() + r * m;
        const T* vi = v->value.data() + r * m;
        T uu = 0, vv = 0, uv = 0;
        for (std::size_t j = 0; j < m; ++j) {
            uu += ui[j] * ui[j];
            vv += vi[j] * vi[j];
            uv += ui[j] * vi[j];
        }
        nu[r] = std::sqrt(uu);
        nv[r] = std::sqrt(vv);
        require(nu[r] > T(0) && nv[r] > T(0), ErrorKind::degenerate, "cosine_similarity: zero vector");
        out[r] = uv / (nu[r] * nv[r]);
    }
    auto y = make_var(std::move(out));
    if (detail::track(tape, {&u, &v})) {
        detail::mark_output(y);
        if (u->requires_grad) u->ensure_grad();
        if (v->requires_grad) v->ensure_grad();
        tape->record([u, v, y, rows, m, nu = std::move(nu), nv = std::move(nv)] {
            for (std::size_t r = 0; r < rows; ++r) {
                const T g = y->grad[r];
                const T cosv = y->value[r];
                const T* ui = u->value.data() + r * m;
                const T* vi = v->value.data() + r * m;
                if (u->requires_grad) {
                    T* gu = u->grad.data() + r * m;
                    for (std::size_t j = 0; j < m; ++j)
                        gu[j] += g * (vi[j] / (nu[r] * nv[r]) - cosv * ui[j] / (nu[r] * nu[r]));
                }
                if (v->requires_grad) {
                    T* gv = v->grad.data() + r * m;
                    for (std::size_t j = 0; j < m; ++j)
                        gv[j] += g * (ui[j] / (nu[r] * nv[r]) - cosv * vi[j] / (nv[r] * nv[r]));
                }
            }
        });
    }
    return y;
}

// Squared Frobenius norm of (a - b), summed over all entries.
template <typename T>
VarPtr<T> mse_frobenius(Tape<T>* tape, const VarPtr<T>& a, const VarPtr<T>& b) {
    return sum_all(tape, square(tape, sub(tape, a, b)));
}

// Mean softmax cross-entropy against integer labels; fused for stability.
template <typename T>
VarPtr<T> cross_entropy_mean(Tape<T>* tape, const VarPtr<T>& logits, const std::vector<int>& labels) {
    const Dims& s = logits->value.shape();
    require(s.size() == 2, ErrorKind::shape, "cross_entropy: logits must be [N,C]");
    const std::size_t n = s[0], c = s[1];
    require(labels.size() == n, ErrorKind::shape, "cross_entropy: label count mismatch");
    Tensor<T> probs({n, c});
    T loss = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const int lab = labels[i];
        require(lab >= 0 && static_cast<std::size_t>(lab) < c, ErrorKind::data, "cross_entropy: label out of range");
        const T* xi = logits->value.data() + i * c;
        T* pi = probs.data() + i * c;
        T mx = xi[0];
        for (std::size_t j = 1; j < c; ++j) mx = std::max(mx, xi[j]);
        T denom = 0;
        for (std::size_t j = 0; j < c; ++j) {
            pi[j] = std::exp(xi[j] - mx);
            denom += pi[j];
        }
        for (std::size_t j = 0; j < c; ++j) pi[j] /= denom;
        loss -= std::log(std::max(pi[static_cast<std::size_t>(lab)], std::numeric_limits<T>::min()));
    }
    loss /= static_cast<T>(n);
    auto y = make_var(Tensor<T>::scalar(loss));
    if (detail::track(tape, {&logits})) {
        detail::mark_output(y);
        logits->ensure_grad();
        tape->record([logits, y, labels, probs = std::move(probs), n, c] {
            const T g = y->grad[0] / static_cast<T>(n);
            for (std::size_t i = 0; i < n; ++i) {
                T* gx = logits->grad.data() + i * c;
                const T* pi = probs.data() + i * c;
                for (std::size_t j = 0; j < c; ++j) gx[j] += g * pi[j];
                gx[static_cast<std::size_t>(labels[i])] -= g;
            }
        });
    }
    return y;
}

}  // namespace rtl
