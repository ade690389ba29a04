#pragma once

#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "rulkit/errors.hpp"

namespace rulkit {

/// Element precision of a tensor or checkpoint.
enum class Dtype { f32, f64 };

inline int dtype_bits(Dtype d) { return d == Dtype::f32 ? 32 : 64; }

inline Dtype dtype_from_bits(int bits) {
    if (bits == 32) return Dtype::f32;
    if (bits == 64) return Dtype::f64;
    throw ConfigError("unsupported dtype width: " + std::to_string(bits));
}

template <typename T>
constexpr Dtype dtype_of() {
    return sizeof(T) == 4 ? Dtype::f32 : Dtype::f64;
}

/// Dense row-major tensor of rank 0..2 (rank as used by the model; the
/// container itself is rank-agnostic).  Plain value type: copy is deep.
template <typename T>
class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(std::vector<std::size_t> shape) {
        Tensor t;
        t.shape_ = std::move(shape);
        t.data_.assign(count(t.shape_), T(0));
        return t;
    }

    static Tensor full(std::vector<std::size_t> shape, T v) {
        Tensor t = zeros(std::move(shape));
        for (auto& x : t.data_) x = v;
        return t;
    }

    static Tensor scalar(T v) { return from({1}, {v}); }

    static Tensor from(std::vector<std::size_t> shape, std::vector<T> data) {
        if (count(shape) != data.size())
            throw ShapeError("tensor data length does not match shape");
        Tensor t;
        t.shape_ = std::move(shape);
        t.data_ = std::move(data);
        return t;
    }

    /// 2-D convenience: rows given as nested initializer lists.
    static Tensor matrix(std::initializer_list<std::initializer_list<T>> rows) {
        const std::size_t m = rows.size();
        const std::size_t n = m ? rows.begin()->size() : 0;
        Tensor t = zeros({m, n});
        std::size_t i = 0;
        for (const auto& row : rows) {
            if (row.size() != n) throw ShapeError("ragged matrix literal");
            std::size_t j = 0;
            for (T v : row) t(i, j++) = v;
            ++i;
        }
        return t;
    }

    static Tensor vector(std::initializer_list<T> vals) {
        return from({vals.size()}, std::vector<T>(vals));
    }

    std::size_t rank() const { return shape_.size(); }
    std::size_t dim(std::size_t i) const { return shape_.at(i); }
    std::size_t size() const { return data_.size(); }
    const std::vector<std::size_t>& shape() const { return shape_; }

    std::size_t rows() const { return rank() == 2 ? shape_[0] : 1; }
    std::size_t cols() const { return rank() == 2 ? shape_[1] : size(); }

    T& operator()(std::size_t i) { return data_[i]; }
    T operator()(std::size_t i) const { return data_[i]; }
    T& operator()(std::size_t i, std::size_t j) { return data_[i * shape_[1] + j]; }
    T operator()(std::size_t i, std::size_t j) const { return data_[i * shape_[1] + j]; }

    std::span<T> data() { return data_; }
    std::span<const T> data() const { return data_; }
    T* ptr() { return data_.data(); }
    const T* ptr() const { return data_.data(); }

    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

    bool all_finite() const {
        for (T v : data_)
            if (!std::isfinite(static_cast<double>(v))) return false;
        return true;
    }

    template <typename U>
    Tensor<U> cast() const {
        std::vector<U> out(data_.size());
        for (std::size_t i = 0; i < data_.size(); ++i)
            out[i] = static_cast<U>(data_[i]);
        return Tensor<U>::from(shape_, std::move(out));
    }

    std::string shape_str() const {
        std::ostringstream os;
        os << '{';
        for (std::size_t i = 0; i < shape_.size(); ++i)
            os << (i ? "," : "") << shape_[i];
        os << '}';
        return os.str();
    }

    bool operator==(const Tensor& o) const {
        return shape_ == o.shape_ && data_ == o.data_;
    }

private:
    static std::size_t count(const std::vector<std::size_t>& shape) {
        return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                               std::multiplies<>());
    }

    std::vector<std::size_t> shape_;
    std::vector<T> data_;
};

using TensorF = Tensor<float>;
using TensorD = Tensor<double>;

} // namespace rulkit
