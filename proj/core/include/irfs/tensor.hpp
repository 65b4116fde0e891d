#pragma once

#include <cstdint>
#include <cstdlib>
#include <initializer_list>
#include <new>
#include <string>
#include <vector>

#include "irfs/errors.hpp"

namespace irfs {

/// 64-byte-aligned storage. Keeping every buffer identically aligned pins
/// the SIMD code paths, which keeps repeated runs bitwise reproducible.
template <typename T, size_t Align>
struct AlignedAllocator {
    using value_type = T;
    AlignedAllocator() = default;
    template <class U>
    AlignedAllocator(const AlignedAllocator<U, Align>&) {}
    T* allocate(size_t n) {
        if (n == 0) return nullptr;
        const size_t bytes = ((n * sizeof(T) + Align - 1) / Align) * Align;
        void* p = std::aligned_alloc(Align, bytes);
        if (!p) throw std::bad_alloc();
        return static_cast<T*>(p);
    }
    void deallocate(T* p, size_t) noexcept { std::free(p); }
    template <class U>
    struct rebind {
        using other = AlignedAllocator<U, Align>;
    };
    bool operator==(const AlignedAllocator&) const { return true; }
    bool operator!=(const AlignedAllocator&) const { return false; }
};

using AlignedVec = std::vector<double, AlignedAllocator<double, 64>>;

/// Dense row-major double tensor, rank 0..4. Value semantics.
///
/// Shapes follow two conventions: images at the I/O boundary are
/// channel-last (H, W, C); everything internal is channel-first (C, H, W).
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::vector<int64_t> shape);
    Tensor(std::vector<int64_t> shape, double fill);
    Tensor(std::vector<int64_t> shape, std::vector<double> data);

    static Tensor zeros(std::vector<int64_t> shape) { return Tensor(std::move(shape)); }
    static Tensor full(std::vector<int64_t> shape, double v) { return Tensor(std::move(shape), v); }
    static Tensor scalar(double v) { return Tensor({1}, v); }

    bool defined() const { return !shape_.empty(); }
    int64_t numel() const { return int64_t(data_.size()); }
    int ndim() const { return int(shape_.size()); }
    int64_t shape(int d) const { return shape_[size_t(d)]; }
    const std::vector<int64_t>& shape() const { return shape_; }
    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }
    std::string shape_str() const;

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    AlignedVec& vec() { return data_; }
    const AlignedVec& vec() const { return data_; }

    double& operator[](int64_t i) { return data_[size_t(i)]; }
    double operator[](int64_t i) const { return data_[size_t(i)]; }

    // indexed access (no bounds checks beyond debug asserts)
    double& at(int64_t a, int64_t b) { return data_[size_t(a * shape_[1] + b)]; }
    double at(int64_t a, int64_t b) const { return data_[size_t(a * shape_[1] + b)]; }
    double& at(int64_t a, int64_t b, int64_t c) {
        return data_[size_t((a * shape_[1] + b) * shape_[2] + c)];
    }
    double at(int64_t a, int64_t b, int64_t c) const {
        return data_[size_t((a * shape_[1] + b) * shape_[2] + c)];
    }

    /// Reinterpret with a new shape of equal element count.
    Tensor reshaped(std::vector<int64_t> shape) const;

    // elementwise helpers used by the non-autograd numeric code
    Tensor& operator+=(const Tensor& o);
    Tensor& operator-=(const Tensor& o);
    Tensor& operator*=(double s);
    Tensor& operator+=(double s);

    double min() const;
    double max() const;
    double sum() const;
    double mean() const;
    bool all_finite() const;

private:
    std::vector<int64_t> shape_;
    AlignedVec data_;
};

Tensor operator+(Tensor a, const Tensor& b);
Tensor operator-(Tensor a, const Tensor& b);
Tensor operator*(Tensor a, double s);
Tensor hadamard(const Tensor& a, const Tensor& b);

/// Throws ShapeError mentioning `what` unless shapes match.
void check_same_shape(const Tensor& a, const Tensor& b, const std::string& what);

} // namespace irfs
