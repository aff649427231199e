#pragma once

#include <optional>
#include <random>
#include <string>
#include <vector>

#include "slicevol/nn/tensor.hpp"

namespace slicevol::nn {

/// Each layer offers a const `infer` (no state touched, safe for concurrent
/// use) and a `forward`/`backward` pair for training. `forward` caches what
/// `backward` needs; `backward` accumulates parameter gradients and returns the
/// gradient with respect to the layer input.

class Conv2d {
public:
    Conv2d() = default;
    Conv2d(std::string name, int in_ch, int out_ch, int kernel, int stride, bool bias);

    void init(std::mt19937_64& rng);
    Tensor infer(const Tensor& x) const;
    Tensor forward(const Tensor& x);
    Tensor backward(const Tensor& dy);
    void collect(std::vector<Param*>& out);

    int in_channels() const { return in_; }
    int out_channels() const { return out_; }

private:
    int out_size(int n) const { return (n + 2 * pad_ - k_) / stride_ + 1; }
    int chunk_samples(int h, int w) const;
    bool use_direct(int w) const;
    void im2col(const Tensor& x, int n0, int n1, FloatBuffer& col) const;
    void col2im(const FloatBuffer& col, int n0, int n1, Tensor& dx) const;

    int in_ = 0, out_ = 0, k_ = 1, stride_ = 1, pad_ = 0;
    bool has_bias_ = false;
    Param weight_, bias_;
    Tensor x_;
};

class BatchNorm2d {
public:
    BatchNorm2d() = default;
    BatchNorm2d(std::string name, int channels);

    Tensor infer(const Tensor& x) const;
    Tensor forward(const Tensor& x);
    Tensor backward(const Tensor& dy);
    void collect(std::vector<Param*>& out);
    void collect_buffers(std::vector<Buffer>& out);

private:
    std::string name_;
    int ch_ = 0;
    float eps_ = 1e-5f, momentum_ = 0.1f;
    Param gamma_, beta_;
    Tensor running_mean_, running_var_;
    Tensor xhat_;
    std::vector<float> inv_std_;
};

class Linear {
public:
    Linear() = default;
    Linear(std::string name, int in_features, int out_features);

    void init(std::mt19937_64& rng, float scale = 1.0f);
    Tensor infer(const Tensor& x) const;
    Tensor forward(const Tensor& x);
    Tensor backward(const Tensor& dy);
    void collect(std::vector<Param*>& out);

    int in_features() const { return in_; }
    int out_features() const { return out_; }
    const Param& weight() const { return weight_; }
    const Param& bias() const { return bias_; }
    Param& bias() { return bias_; }

private:
    int in_ = 0, out_ = 0;
    Param weight_, bias_;
    Tensor x_;
};

Tensor relu(const Tensor& x);
/// dy masked by (y > 0), where y is the ReLU output.
Tensor relu_backward(const Tensor& dy, const Tensor& y);
Tensor upsample2x(const Tensor& x);
/// Adjoint of nearest 2x upsampling: sums each 2x2 block.
Tensor upsample2x_backward(const Tensor& dy);

/// Basic residual block: two conv-BN(-ReLU) cascades plus a shortcut.
/// `Down` halves the spatial size with a strided first conv; `Up` doubles it
/// with nearest upsampling in front of both branches.
class ResBlock {
public:
    enum class Mode { Same, Down, Up };

    ResBlock() = default;
    ResBlock(const std::string& name, int in_ch, int out_ch, Mode mode);

    void init(std::mt19937_64& rng);
    Tensor infer(const Tensor& x) const;
    Tensor forward(const Tensor& x);
    Tensor backward(const Tensor& dy);
    void collect(std::vector<Param*>& out);
    void collect_buffers(std::vector<Buffer>& out);

private:
    Mode mode_ = Mode::Same;
    Conv2d conv1_, conv2_;
    BatchNorm2d bn1_, bn2_;
    std::optional<Conv2d> short_conv_;
    std::optional<BatchNorm2d> short_bn_;
    Tensor a_, y_;
};

/// Adam with bias correction.
class Adam {
public:
    explicit Adam(std::vector<Param*> params, double lr = 1e-3, double beta1 = 0.9, double beta2 = 0.999,
                  double eps = 1e-8);

    void zero_grad();
    void step();

    long long steps() const { return t_; }
    std::vector<Tensor>& first_moments() { return m_; }
    std::vector<Tensor>& second_moments() { return v_; }
    void set_steps(long long t) { t_ = t; }

private:
    std::vector<Param*> params_;
    std::vector<Tensor> m_, v_;
    double lr_, b1_, b2_, eps_;
    long long t_ = 0;
};

} // namespace slicevol::nn
