#include "slicevol/nn/tensor.hpp"

#include <algorithm>

#include "slicevol/error.hpp"

namespace slicevol::nn {

void Tensor::reshape(int n, int c, int h, int w) {
    if (static_cast<std::size_t>(n) * c * h * w != data_.size()) throw TrainingError("reshape size mismatch");
    n_ = n;
    c_ = c;
    h_ = h;
    w_ = w;
}

void Tensor::zero() { std::fill(data_.begin(), data_.end(), 0.0f); }

std::string Tensor::shape_string() const {
    return "[" + std::to_string(n_) + "," + std::to_string(c_) + "," + std::to_string(h_) + "," + std::to_string(w_) + "]";
}

} // namespace slicevol::nn
