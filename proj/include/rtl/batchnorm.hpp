#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "rtl/tape.hpp"

namespace rtl {

// Per-channel batch normalization over [N,H,W,C] with learned scale/shift
// and running statistics for inference. Variance is biased (divide by the
// element count) both for the batch statistic and the running estimate.
template <typename T>
struct BatchNorm {
    static constexpr T eps = T(1e-5);
    static constexpr T momentum = T(0.9);  // running = momentum*running + (1-momentum)*batch

    VarPtr<T> gamma;
    VarPtr<T> beta;
    Tensor<T> running_mean;
    Tensor<T> running_var;

    explicit BatchNorm(std::size_t channels)
        : gamma(make_var(Tensor<T>::full({channels}, T(1)), true)),
          beta(make_var(Tensor<T>({channels}), true)),
          running_mean({channels}),
          running_var(Tensor<T>::full({channels}, T(1))) {}

    VarPtr<T> forward(Tape<T>* tape, const VarPtr<T>& x, bool training) {
        const Dims& s = x->value.shape();
        require(s.size() == 4, ErrorKind::shape, "batchnorm expects [N,H,W,C]");
        const std::size_t c = s[3];
        require(gamma->value.numel() == c, ErrorKind::shape, "batchnorm: channel count mismatch");
        const std::size_t m = s[0] * s[1] * s[2];  // elements per channel

        std::vector<T> mean(c), var(c);
        if (training) {
            for (std::size_t i = 0; i < m; ++i) {
                const T* xi = x->value.data() + i * c;
                for (std::size_t j = 0; j < c; ++j) mean[j] += xi[j];
            }
            const T inv_m = T(1) / static_cast<T>(m);
            for (std::size_t j = 0; j < c; ++j) mean[j] *= inv_m;
            for (std::size_t i = 0; i < m; ++i) {
                const T* xi = x->value.data() + i * c;
                for (std::size_t j = 0; j < c; ++j) {
                    const T d = xi[j] - mean[j];
                    var[j] += d * d;
                }
            }
            for (std::size_t j = 0; j < c; ++j) var[j] *= inv_m;
            for (std::size_t j = 0; j < c; ++j) {
                running_mean[j] = momentum * running_mean[j] + (T(1) - momentum) * mean[j];
                running_var[j] = momentum * running_var[j] + (T(1) - momentum) * var[j];
            }
        } else {
            for (std::size_t j = 0; j < c; ++j) {
                mean[j] = running_mean[j];
                var[j] = running_var[j];
            }
        }

        std::vector<T> inv_std(c);
        for (std::size_t j = 0; j < c; ++j) inv_std[j] = T(1) / std::sqrt(var[j] + eps);

        Tensor<T> out(s);
        Tensor<T> xhat(s);
        for (std::size_t i = 0; i < m; ++i) {
            const T* xi = x->value.data() + i * c;
            T* hi = xhat.data() + i * c;
            T* yi = out.data() + i * c;
            for (std::size_t j = 0; j < c; ++j) {
                hi[j] = (xi[j] - mean[j]) * inv_std[j];
                yi[j] = gamma->value[j] * hi[j] + beta->value[j];
            }
        }
        auto y = make_var(std::move(out));
        auto g = gamma;
        auto b = beta;
        if (detail::track(tape, {&x, &g, &b})) {
            detail::mark_output(y);
            if (x->requires_grad) x->ensure_grad();
            if (g->requires_grad) g->ensure_grad();
            if (b->requires_grad) b->ensure_grad();
            tape->record([x, g, b, y, m, c, training, xhat = std::move(xhat), inv_std = std::move(inv_std)] {
                // dgamma = sum(dy * xhat), dbeta = sum(dy)
                std::vector<T> sum_dy(c), sum_dy_xhat(c);
                for (std::size_t i = 0; i < m; ++i) {
                    const T* gy = y->grad.data() + i * c;
                    const T* hi = xhat.data() + i * c;
                    for (std::size_t j = 0; j < c; ++j) {
                        sum_dy[j] += gy[j];
                        sum_dy_xhat[j] += gy[j] * hi[j];
                    }
                }
                if (g->requires_grad)
                    for (std::size_t j = 0; j < c; ++j) g->grad[j] += sum_dy_xhat[j];
                if (b->requires_grad)
                    for (std::size_t j = 0; j < c; ++j) b->grad[j] += sum_dy[j];
                if (!x->requires_grad) return;
                if (training) {
                    // Batch statistics depend on x:
                    // dx = gamma*inv_std/m * (m*dy - sum(dy) - xhat*sum(dy*xhat))
                    const T inv_m = T(1) / static_cast<T>(m);
                    for (std::size_t i = 0; i < m; ++i) {
                        const T* gy = y->grad.data() + i * c;
                        const T* hi = xhat.data() + i * c;
                        T* gx = x->grad.data() + i * c;
                        for (std::size_t j = 0; j < c; ++j)
                            gx[j] += g->value[j] * inv_std[j] * inv_m *
                                     (static_cast<T>(m) * gy[j] - sum_dy[j] - hi[j] * sum_dy_xhat[j]);
                    }
                } else {
                    // Running statistics are constants.
                    for (std::size_t i = 0; i < m; ++i) {
                        const T* gy = y->grad.data() + i * c;
                        T* gx = x->grad.data() + i * c;
                        for (std::size_t j = 0; j < c; ++j) gx[j] += g->value[j] * inv_std[j] * gy[j];
                    }
                }
            });
        }
        return y;
    }
};

}  // namespace rtl
