#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <memory>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "esrt/errors.hpp"

namespace esrt {

using Shape = std::vector<int64_t>;

inline int64_t shape_numel(const Shape& s) {
    int64_t n = 1;
    for (int64_t d : s) n *= d;
    return n;
}

inline std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << "[";
    for (size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
    os << "]";
    return os.str();
}

// Dense row-major tensor of float or double. Data is held behind a
// shared_ptr: copies are shallow and cheap, and a tensor is treated as
// immutable once it has been fed to an op (the tape captures copies of its
// inputs, so mutating after the fact would corrupt backward).
template <typename T>
class Tensor {
public:
    Tensor() = default;

    explicit Tensor(Shape shape)
        : shape_(std::move(shape)),
          store_(std::make_shared<std::vector<T>>(size_t(shape_numel(shape_)), T(0))) {}

    Tensor(Shape shape, std::vector<T> values) : shape_(std::move(shape)) {
        if (int64_t(values.size()) != shape_numel(shape_))
            throw ShapeError("tensor data length " + std::to_string(values.size()) +
                             " does not match shape " + shape_str(shape_));
        store_ = std::make_shared<std::vector<T>>(std::move(values));
    }

    static Tensor full(Shape shape, T value) {
        Tensor t(std::move(shape));
        for (T& v : *t.store_) v = value;
        return t;
    }

    static Tensor scalar(T value) { return Tensor(Shape{1}, std::vector<T>{value}); }

    bool valid() const { return store_ != nullptr; }
    const Shape& shape() const { return shape_; }
    int rank() const { return int(shape_.size()); }
    int64_t dim(int i) const { return shape_[size_t(i)]; }
    int64_t size() const { return store_ ? int64_t(store_->size()) : 0; }

    const T* data() const { return store_->data(); }
    T* data() { return store_->data(); }

    T item() const {
        if (size() != 1) throw ShapeError("item() on tensor of size " + std::to_string(size()));
        return (*store_)[0];
    }

    // Flat and up-to-4d element access; used heavily by tests and kernels.
    T& operator[](int64_t i) { return (*store_)[size_t(i)]; }
    const T& operator[](int64_t i) const { return (*store_)[size_t(i)]; }

    T& at(int64_t i, int64_t j) { return (*store_)[size_t(i * shape_[1] + j)]; }
    const T& at(int64_t i, int64_t j) const { return (*store_)[size_t(i * shape_[1] + j)]; }
    T& at(int64_t i, int64_t j, int64_t k) {
        return (*store_)[size_t((i * shape_[1] + j) * shape_[2] + k)];
    }
    const T& at(int64_t i, int64_t j, int64_t k) const {
        return (*store_)[size_t((i * shape_[1] + j) * shape_[2] + k)];
    }
    T& at(int64_t i, int64_t j, int64_t k, int64_t l) {
        return (*store_)[size_t(((i * shape_[1] + j) * shape_[2] + k) * shape_[3] + l)];
    }
    const T& at(int64_t i, int64_t j, int64_t k, int64_t l) const {
        return (*store_)[size_t(((i * shape_[1] + j) * shape_[2] + k) * shape_[3] + l)];
    }

    Tensor clone() const {
        Tensor t;
        t.shape_ = shape_;
        t.store_ = std::make_shared<std::vector<T>>(*store_);
        return t;
    }

    // Same data, new shape (element count must match). Tape metadata is not
    // carried over; ops::reshape handles recording.
    Tensor reshaped(Shape s) const {
        if (shape_numel(s) != size())
            throw ShapeError("reshape " + shape_str(shape_) + " -> " + shape_str(s));
        Tensor t;
        t.shape_ = std::move(s);
        t.store_ = store_;
        return t;
    }

    template <typename U>
    Tensor<U> cast() const {
        std::vector<U> out(store_->size());
        for (size_t i = 0; i < store_->size(); ++i) out[i] = U((*store_)[i]);
        return Tensor<U>(shape_, std::move(out));
    }

    bool all_finite() const {
        for (T v : *store_)
            if (!std::isfinite(double(v))) return false;
        return true;
    }

    // Autodiff bookkeeping: which tape node produced this value. Only
    // meaningful for the tape whose id matches; a tensor left over from an
    // earlier step is treated as a constant by a new tape.
    int node = -1;
    uint64_t tape_id = 0;
    bool requires_grad = false;

private:
    Shape shape_;
    std::shared_ptr<std::vector<T>> store_;
};

template <typename T>
bool same_shape(const Tensor<T>& a, const Tensor<T>& b) {
    return a.shape() == b.shape();
}

template <typename T>
void require_shape(const Tensor<T>& t, const Shape& want, const char* what) {
    if (t.shape() != want)
        throw ShapeError(std::string(what) + ": expected " + shape_str(want) + ", got " +
                         shape_str(t.shape()));
}

template <typename T>
void require_rank(const Tensor<T>& t, int rank, const char* what) {
    if (t.rank() != rank)
        throw ShapeError(std::string(what) + ": expected rank " + std::to_string(rank) +
                         ", got " + shape_str(t.shape()));
}

}  // namespace esrt
