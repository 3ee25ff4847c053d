#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace partfield::ad {

/// Dense row-major tensor of doubles. Rank 0..2 is what the ops support;
/// rank-1 tensors behave as 1xN row vectors.
class Tensor {
public:
    Tensor() = default;

    explicit Tensor(std::vector<int> shape)
        : shape_(std::move(shape)), data_(checked_numel(shape_), 0.0) {}

    Tensor(std::vector<int> shape, std::vector<double> data)
        : shape_(std::move(shape)), data_(std::move(data)) {
        if (checked_numel(shape_) != data_.size())
            throw std::invalid_argument("Tensor: shape does not match data length");
    }

    static Tensor zeros(int rows, int cols) { return Tensor({rows, cols}); }
    static Tensor full(int rows, int cols, double v) {
        Tensor t({rows, cols});
        for (auto& x : t.data_) x = v;
        return t;
    }
    static Tensor scalar(double v) { return Tensor({1, 1}, {v}); }

    const std::vector<int>& shape() const { return shape_; }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    int rows() const { return shape_.empty() ? 0 : (shape_.size() == 1 ? 1 : shape_[0]); }
    int cols() const {
        if (shape_.empty()) return 0;
        return shape_.size() == 1 ? shape_[0] : shape_[1];
    }
    bool is_scalar() const { return size() == 1; }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    std::vector<double>& vec() { return data_; }
    const std::vector<double>& vec() const { return data_; }

    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }
    double& at(int r, int c) { return data_[static_cast<std::size_t>(r) * cols() + c]; }
    double at(int r, int c) const { return data_[static_cast<std::size_t>(r) * cols() + c]; }

    bool same_shape(const Tensor& o) const { return rows() == o.rows() && cols() == o.cols(); }

    bool all_finite() const;

    /// Throws if any entry is NaN or Inf; `what` names the producing op.
    void require_finite(const char* what) const;

    std::string shape_str() const;

private:
    static std::size_t checked_numel(const std::vector<int>& shape) {
        std::size_t n = 1;
        for (int e : shape) {
            if (e < 0) throw std::invalid_argument("Tensor: negative extent");
            n *= static_cast<std::size_t>(e);
        }
        return shape.empty() ? 0 : n;
    }

    std::vector<int> shape_;
    std::vector<double> data_;
};

}  // namespace partfield::ad
