#pragma once

#include <cstddef>
#include <new>
#include <span>
#include <string>
#include <vector>

namespace slicevol::nn {

/// 64-byte aligned storage. Vectorized reductions peel a data-dependent number
/// of leading elements, so with plain malloc alignment the summation order (and
/// hence the low bits of a training run) would depend on heap addresses.
template <class T>
struct AlignedAllocator {
    using value_type = T;
    static constexpr std::align_val_t kAlign{64};
    AlignedAllocator() = default;
    template <class U>
    AlignedAllocator(const AlignedAllocator<U>&) {}
    T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), kAlign)); }
    void deallocate(T* p, std::size_t) { ::operator delete(p, kAlign); }
    template <class U>
    bool operator==(const AlignedAllocator<U>&) const { return true; }
};

using FloatBuffer = std::vector<float, AlignedAllocator<float>>;

/// Dense float tensor in NCHW layout. 2D activations use shape [N, C, 1, 1].
class Tensor {
public:
    Tensor() = default;
    Tensor(int n, int c, int h, int w, float fill = 0.0f)
        : n_(n), c_(c), h_(h), w_(w), data_(static_cast<std::size_t>(n) * c * h * w, fill) {}

    int n() const { return n_; }
    int c() const { return c_; }
    int h() const { return h_; }
    int w() const { return w_; }
    std::size_t size() const { return data_.size(); }
    std::size_t plane() const { return static_cast<std::size_t>(h_) * w_; }
    std::size_t sample_size() const { return static_cast<std::size_t>(c_) * h_ * w_; }

    float* data() { return data_.data(); }
    const float* data() const { return data_.data(); }
    std::span<float> span() { return data_; }
    std::span<const float> span() const { return data_; }
    FloatBuffer& vec() { return data_; }
    const FloatBuffer& vec() const { return data_; }

    float& operator[](std::size_t i) { return data_[i]; }
    float operator[](std::size_t i) const { return data_[i]; }
    float& at(int n, int c, int h, int w) { return data_[((static_cast<std::size_t>(n) * c_ + c) * h_ + h) * w_ + w]; }
    float at(int n, int c, int h, int w) const { return data_[((static_cast<std::size_t>(n) * c_ + c) * h_ + h) * w_ + w]; }

    bool same_shape(const Tensor& o) const { return n_ == o.n_ && c_ == o.c_ && h_ == o.h_ && w_ == o.w_; }
    void reshape(int n, int c, int h, int w);
    void zero();
    std::string shape_string() const;

private:
    int n_ = 0, c_ = 0, h_ = 0, w_ = 0;
    FloatBuffer data_;
};

/// A trainable tensor with its gradient accumulator.
struct Param {
    std::string name;
    Tensor value;
    Tensor grad;

    Param() = default;
    Param(std::string nm, int n, int c, int h, int w) : name(std::move(nm)), value(n, c, h, w), grad(n, c, h, w) {}
};

/// Non-trainable state that is still saved (batch-norm running statistics).
struct Buffer {
    std::string name;
    Tensor* value;
};

} // namespace slicevol::nn
