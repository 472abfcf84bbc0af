#pragma once

#include <functional>
#include <memory>
#include <utility>
#include <vector>

#include "rtl/error.hpp"
#include "rtl/tensor.hpp"

namespace rtl {

// A tensor participating in differentiation. grad is allocated (zeroed)
// the moment the variable becomes an input or output of a recorded op,
// so gradient accumulation is always a plain +=.
template <typename T>
struct Variable {
    Tensor<T> value;
    Tensor<T> grad;
    bool requires_grad = false;

    Variable() = default;
    explicit Variable(Tensor<T> v, bool rg = false) : value(std::move(v)), requires_grad(rg) {
        if (requires_grad) ensure_grad();
    }

    void ensure_grad() {
        if (grad.numel() != value.numel()) grad = Tensor<T>(value.shape());
    }

    void zero_grad() {
        if (requires_grad) {
            ensure_grad();
            grad.fill(T(0));
        }
    }
};

template <typename T>
using VarPtr = std::shared_ptr<Variable<T>>;

template <typename T>
VarPtr<T> make_var(Tensor<T> value, bool requires_grad = false) {
    return std::make_shared<Variable<T>>(std::move(value), requires_grad);
}

template <typename T>
VarPtr<T> make_const(Tensor<T> value) {
    return make_var<T>(std::move(value), false);
}

// Records the forward pass as a sequence of backward closures and replays
// them in exact reverse order. One tape is confined to one thread; distinct
// tapes may run concurrently.
template <typename T>
class Tape {
public:
    void record(std::function<void()> backward_fn) { ops_.push_back(std::move(backward_fn)); }

    std::size_t size() const { return ops_.size(); }

    void clear() { ops_.clear(); }

    // Seeds d(loss)/d(loss) = 1 and visits recorded ops newest-first.
    void backward(const VarPtr<T>& loss) {
        require(loss != nullptr, ErrorKind::shape, "backward: null loss");
        require(loss->value.numel() == 1, ErrorKind::shape,
                "backward requires a scalar loss, got shape " + dims_str(loss->value.shape()));
        require(loss->requires_grad, ErrorKind::shape, "backward: loss does not require grad");
        loss->ensure_grad();
        loss->grad[0] += T(1);
        for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) (*it)();
    }

private:
    std::vector<std::function<void()>> ops_;
};

namespace detail {

// An op's output tracks gradients iff a tape is recording and any input does.
template <typename T>
bool track(Tape<T>* tape, std::initializer_list<const VarPtr<T>*> inputs) {
    if (!tape) return false;
    for (auto* in : inputs)
        if ((*in)->requires_grad) return true;
    return false;
}

template <typename T>
void mark_output(const VarPtr<T>& out) {
    out->requires_grad = true;
    out->ensure_grad();
}

}  // namespace detail

}  // namespace rtl
