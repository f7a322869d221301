#pragma once

#include "insertnet/rng.hpp"

#include <cassert>
#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <stdexcept>
#include <vector>

namespace insertnet {

// Dense row-major double tensor, rank <= 4. Batch size is always 1 in this
// project, so shapes are plain (C,H,W) / (N,) etc. without a batch axis.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::vector<int> shape) : shape_(std::move(shape)) {
        data_.assign(static_cast<std::size_t>(count(shape_)), 0.0);
    }
    Tensor(std::vector<int> shape, std::vector<double> data)
        : shape_(std::move(shape)), data_(std::move(data)) {
        if (static_cast<std::int64_t>(data_.size()) != count(shape_))
            throw std::invalid_argument("tensor data does not match shape");
    }

    static Tensor zeros(std::vector<int> shape) { return Tensor(std::move(shape)); }

    static Tensor full(std::vector<int> shape, double v) {
        Tensor t(std::move(shape));
        for (double& x : t.data_) x = v;
        return t;
    }

    static Tensor scalar(double v) { return Tensor({1}, {v}); }

    static Tensor randn(std::vector<int> shape, Rng& rng, double stddev = 1.0, double mean = 0.0) {
        Tensor t(std::move(shape));
        for (double& x : t.data_) x = mean + stddev * rng.normal();
        return t;
    }

    const std::vector<int>& shape() const { return shape_; }
    int dim(int i) const { return shape_[static_cast<std::size_t>(i)]; }
    int rank() const { return static_cast<int>(shape_.size()); }
    std::int64_t numel() const { return static_cast<std::int64_t>(data_.size()); }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }

    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    // (c,h,w) addressing for rank-3, (h,w) for rank-2
    double& at(int c, int h, int w) {
        return data_[(static_cast<std::size_t>(c) * shape_[1] + h) * shape_[2] + w];
    }
    double at(int c, int h, int w) const {
        return data_[(static_cast<std::size_t>(c) * shape_[1] + h) * shape_[2] + w];
    }
    double& at(int h, int w) { return data_[static_cast<std::size_t>(h) * shape_[1] + w]; }
    double at(int h, int w) const { return data_[static_cast<std::size_t>(h) * shape_[1] + w]; }

    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

    Tensor reshaped(std::vector<int> shape) const {
        if (count(shape) != numel()) throw std::invalid_argument("reshape numel mismatch");
        return Tensor(std::move(shape), data_);
    }

    bool all_finite() const;
    double abs_max() const;

    static std::int64_t count(const std::vector<int>& shape) {
        std::int64_t n = 1;
        for (int d : shape) {
            if (d <= 0) throw std::invalid_argument("non-positive tensor dim");
            n *= d;
        }
        return n;
    }

private:
    std::vector<int> shape_{0};
    std::vector<double> data_;
};

} // namespace insertnet
