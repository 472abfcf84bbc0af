#pragma once

#include <cmath>
#include <cstddef>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "rtl/error.hpp"

namespace rtl {

using Dims = std::vector<std::size_t>;

inline std::size_t dims_numel(const Dims& d) {
    std::size_t n = 1;
    for (std::size_t e : d) n *= e;
    return n;
}

inline std::string dims_str(const Dims& d) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < d.size(); ++i) os << (i ? "," : "") << d[i];
    os << ']';
    return os.str();
}

// Dense row-major n-d array. Gradient bookkeeping lives in Variable (tape.hpp);
// this is plain storage.
template <typename T>
class Tensor {
public:
    Tensor() = default;

    explicit Tensor(Dims shape) : shape_(std::move(shape)), data_(dims_numel(shape_), T(0)) {
        check_shape();
    }

    Tensor(Dims shape, std::vector<T> data) : shape_(std::move(shape)), data_(std::move(data)) {
        check_shape();
        require(data_.size() == dims_numel(shape_), ErrorKind::shape,
                "tensor data length " + std::to_string(data_.size()) + " does not match shape " + dims_str(shape_));
    }

    static Tensor full(Dims shape, T value) {
        Tensor t(std::move(shape));
        for (auto& v : t.data_) v = value;
        return t;
    }

    static Tensor scalar(T value) { return Tensor({1}, {value}); }

    const Dims& shape() const { return shape_; }
    std::size_t ndim() const { return shape_.size(); }
    std::size_t dim(std::size_t i) const { return shape_.at(i); }
    std::size_t numel() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    T* data() { return data_.data(); }
    const T* data() const { return data_.data(); }
    std::vector<T>& vec() { return data_; }
    const std::vector<T>& vec() const { return data_; }

    T& operator[](std::size_t i) { return data_[i]; }
    const T& operator[](std::size_t i) const { return data_[i]; }

    T item() const {
        require(numel() == 1, ErrorKind::shape, "item() on non-scalar tensor " + dims_str(shape_));
        return data_[0];
    }

    void fill(T v) {
        for (auto& x : data_) x = v;
    }

    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

    bool all_finite() const {
        for (const T& v : data_)
            if (!std::isfinite(static_cast<double>(v))) return false;
        return true;
    }

    template <typename U>
    Tensor<U> cast() const {
        std::vector<U> out(data_.size());
        for (std::size_t i = 0; i < data_.size(); ++i) out[i] = static_cast<U>(data_[i]);
        return Tensor<U>(shape_, std::move(out));
    }

private:
    void check_shape() const {
        for (std::size_t e : shape_)
            require(e > 0, ErrorKind::shape, "tensor extents must be positive, got " + dims_str(shape_));
    }

    Dims shape_;
    std::vector<T> data_;
};

}  // namespace rtl
