#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "rtl/rng.hpp"
#include "rtl/tape.hpp"

namespace rtl {

struct GradCheckResult {
    double max_rel_err = 0.0;
    std::size_t checked = 0;
    std::size_t worst_input = 0;
    std::size_t worst_entry = 0;
    double worst_analytic = 0.0;
    double worst_numeric = 0.0;

    bool ok(double tol = 1e-4) const { return max_rel_err < tol; }
};

// Certifies recorded gradients against central finite differences in
// double precision. `loss_fn` must rebuild the scalar loss from the given
// variables each call (it is invoked with a recording tape once, then
// repeatedly without one while entries are perturbed). If
// `max_entries_per_input` is nonzero, that many entries of each input are
// sampled with `rng` instead of sweeping all of them.
inline GradCheckResult grad_check(const std::function<VarPtr<double>(Tape<double>*)>& loss_fn,
                                  const std::vector<VarPtr<double>>& inputs, double eps = 1e-5,
                                  std::size_t max_entries_per_input = 0, Rng* rng = nullptr) {
    for (const auto& v : inputs) {
        require(v != nullptr, ErrorKind::numeric, "grad_check: null input");
        v->requires_grad = true;
        v->ensure_grad();
        v->zero_grad();
    }
    Tape<double> tape;
    auto loss = loss_fn(&tape);
    require(loss->value.numel() == 1, ErrorKind::shape, "grad_check: loss must be scalar");
    tape.backward(loss);

    auto eval = [&loss_fn]() {
        auto l = loss_fn(nullptr);
        return l->value[0];
    };

    GradCheckResult res;
    for (std::size_t vi = 0; vi < inputs.size(); ++vi) {
        auto& v = *inputs[vi];
        const std::size_t n = v.value.numel();
        std::vector<std::size_t> entries;
        if (max_entries_per_input != 0 && max_entries_per_input < n) {
            require(rng != nullptr, ErrorKind::numeric, "grad_check: sampling requires an rng");
            entries.reserve(max_entries_per_input);
            for (std::size_t k = 0; k < max_entries_per_input; ++k) entries.push_back(rng->below(n));
        } else {
            entries.resize(n);
            for (std::size_t k = 0; k < n; ++k) entries[k] = k;
        }
        for (std::size_t idx : entries) {
            const double saved = v.value[idx];
            v.value[idx] = saved + eps;
            const double lp = eval();
            v.value[idx] = saved - eps;
            const double lm = eval();
            v.value[idx] = saved;
            const double numeric = (lp - lm) / (2.0 * eps);
            const double analytic = v.grad[idx];
            const double rel = std::abs(analytic - numeric) / std::max(1e-8, std::abs(analytic) + std::abs(numeric));
            ++res.checked;
            if (rel > res.max_rel_err) {
                res.max_rel_err = rel;
                res.worst_input = vi;
                res.worst_entry = idx;
                res.worst_analytic = analytic;
                res.worst_numeric = numeric;
            }
        }
    }
    return res;
}

}  // namespace rtl
