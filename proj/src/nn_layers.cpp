#include "slicevol/nn/layers.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include <Eigen/Dense>

#include "slicevol/error.hpp"

namespace slicevol::nn {

namespace {

using RowMat = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using CMapMat = Eigen::Map<const RowMat>;

void check_channels(const Tensor& x, int c, const char* what) {
    if (x.c() != c) throw TrainingError(std::string(what) + ": channel mismatch, got " + x.shape_string());
}

// Direct 3x3 stride-1 convolution on rows that are a multiple of 16 wide.
// im2col + GEMM does poorly with only a handful of output channels.
typedef float v16 __attribute__((vector_size(64)));

inline v16 load16(const float* p) {
    v16 v;
    std::memcpy(&v, p, sizeof v);
    return v;
}

inline void store16(float* p, v16 v) { std::memcpy(p, &v, sizeof v); }

inline float hsum(v16 v) {
    float s = 0.0f;
    for (int i = 0; i < 16; ++i) s += v[i];
    return s;
}

// Lane-parallel plane reductions; each plane partial is folded into double.
double plane_sum(const float* a, std::size_t n) {
    std::size_t i = 0;
    v16 acc{};
    for (; i + 16 <= n; i += 16) acc += load16(a + i);
    double s = hsum(acc);
    for (; i < n; ++i) s += a[i];
    return s;
}

double plane_sq_dev(const float* a, std::size_t n, float mean) {
    std::size_t i = 0;
    v16 acc{};
    for (; i + 16 <= n; i += 16) {
        const v16 d = load16(a + i) - mean;
        acc += d * d;
    }
    double s = hsum(acc);
    for (; i < n; ++i) s += static_cast<double>(a[i] - mean) * (a[i] - mean);
    return s;
}

double plane_dot(const float* a, const float* b, std::size_t n) {
    std::size_t i = 0;
    v16 acc{};
    for (; i + 16 <= n; i += 16) acc += load16(a + i) * load16(b + i);
    double s = hsum(acc);
    for (; i < n; ++i) s += static_cast<double>(a[i]) * b[i];
    return s;
}

void pad1(const float* src, int C, int H, int W, FloatBuffer& dst) {
    const int Hp = H + 2, Wp = W + 2;
    dst.assign(static_cast<std::size_t>(C) * Hp * Wp, 0.0f);
    for (int c = 0; c < C; ++c)
        for (int y = 0; y < H; ++y)
            std::memcpy(dst.data() + (static_cast<std::size_t>(c) * Hp + y + 1) * Wp + 1,
                        src + (static_cast<std::size_t>(c) * H + y) * W, sizeof(float) * W);
}

template <int CB>
void direct3x3_block(const float* xp, int cin, int H, int W, const float* wt, float* y) {
    const int Hp = H + 2, Wp = W + 2;
    const std::size_t wstride = static_cast<std::size_t>(cin) * 9;
    for (int oy = 0; oy < H; ++oy)
        for (int ox = 0; ox < W; ox += 16) {
            v16 acc[CB];
            for (int c = 0; c < CB; ++c) acc[c] = v16{};
            for (int ci = 0; ci < cin; ++ci) {
                const float* base = xp + (static_cast<std::size_t>(ci) * Hp + oy) * Wp + ox;
                const float* wc = wt + static_cast<std::size_t>(ci) * 9;
                for (int ky = 0; ky < 3; ++ky)
                    for (int kx = 0; kx < 3; ++kx) {
                        const v16 v = load16(base + ky * Wp + kx);
                        for (int c = 0; c < CB; ++c) acc[c] += v * wc[c * wstride + ky * 3 + kx];
                    }
            }
            for (int c = 0; c < CB; ++c)
                store16(y + (static_cast<std::size_t>(c) * H + oy) * W + ox, acc[c]);
        }
}

// y (cout x H x W) = conv(xp, wt), wt laid out [cout][cin][3][3], xp padded by one
void direct3x3(const float* xp, int cin, int H, int W, const float* wt, int cout, float* y) {
    const std::size_t HW = static_cast<std::size_t>(H) * W;
    for (int co = 0; co < cout; co += 8) {
        const float* w = wt + static_cast<std::size_t>(co) * cin * 9;
        float* out = y + co * HW;
        switch (std::min(8, cout - co)) {
        case 1: direct3x3_block<1>(xp, cin, H, W, w, out); break;
        case 2: direct3x3_block<2>(xp, cin, H, W, w, out); break;
        case 3: direct3x3_block<3>(xp, cin, H, W, w, out); break;
        case 4: direct3x3_block<4>(xp, cin, H, W, w, out); break;
        case 5: direct3x3_block<5>(xp, cin, H, W, w, out); break;
        case 6: direct3x3_block<6>(xp, cin, H, W, w, out); break;
        case 7: direct3x3_block<7>(xp, cin, H, W, w, out); break;
        default: direct3x3_block<8>(xp, cin, H, W, w, out); break;
        }
    }
}

template <int CB>
void direct3x3_wgrad_block(const float* xp, int cin, int H, int W, const float* dy, float* dw) {
    const int Hp = H + 2, Wp = W + 2;
    const std::size_t HW = static_cast<std::size_t>(H) * W;
    for (int ci = 0; ci < cin; ++ci)
        for (int ky = 0; ky < 3; ++ky) {
            v16 acc[CB][3];
            for (auto& a : acc)
                for (auto& b : a) b = v16{};
            for (int oy = 0; oy < H; ++oy) {
                const float* base = xp + (static_cast<std::size_t>(ci) * Hp + oy + ky) * Wp;
                const float* drow = dy + static_cast<std::size_t>(oy) * W;
                for (int ox = 0; ox < W; ox += 16) {
                    const v16 x0 = load16(base + ox), x1 = load16(base + ox + 1), x2 = load16(base + ox + 2);
                    for (int c = 0; c < CB; ++c) {
                        const v16 d = load16(drow + c * HW + ox);
                        acc[c][0] += d * x0;
                        acc[c][1] += d * x1;
                        acc[c][2] += d * x2;
                    }
                }
            }
            for (int c = 0; c < CB; ++c)
                for (int kx = 0; kx < 3; ++kx)
                    dw[(static_cast<std::size_t>(c) * cin + ci) * 9 + ky * 3 + kx] += hsum(acc[c][kx]);
        }
}

// dw[co][ci][k] += sum over pixels of dy[co] * shifted xp[ci]
void direct3x3_wgrad(const float* xp, int cin, int H, int W, const float* dy, int cout, float* dw) {
    const std::size_t HW = static_cast<std::size_t>(H) * W;
    for (int co = 0; co < cout; co += 4) {
        const float* d = dy + co * HW;
        float* out = dw + static_cast<std::size_t>(co) * cin * 9;
        switch (std::min(4, cout - co)) {
        case 1: direct3x3_wgrad_block<1>(xp, cin, H, W, d, out); break;
        case 2: direct3x3_wgrad_block<2>(xp, cin, H, W, d, out); break;
        case 3: direct3x3_wgrad_block<3>(xp, cin, H, W, d, out); break;
        default: direct3x3_wgrad_block<4>(xp, cin, H, W, d, out); break;
        }
    }
}

} // namespace

// ---------------------------------------------------------------- Conv2d

Conv2d::Conv2d(std::string name, int in_ch, int out_ch, int kernel, int stride, bool bias)
    : in_(in_ch), out_(out_ch), k_(kernel), stride_(stride), pad_(kernel / 2), has_bias_(bias),
      weight_(name + ".weight", out_ch, in_ch, kernel, kernel) {
    if (bias) bias_ = Param(name + ".bias", 1, out_ch, 1, 1);
}

void Conv2d::init(std::mt19937_64& rng) {
    const float std_dev = std::sqrt(2.0f / static_cast<float>(in_ * k_ * k_));
    std::normal_distribution<float> g(0.0f, std_dev);
    for (float& w : weight_.value.vec()) w = g(rng);
    if (has_bias_) bias_.value.zero();
}

void Conv2d::im2col(const Tensor& x, int n0, int n1, FloatBuffer& col) const {
    const int H = x.h(), W = x.w();
    const int Ho = out_size(H), Wo = out_size(W);
    const std::size_t HWo = static_cast<std::size_t>(Ho) * Wo;
    const std::size_t P = static_cast<std::size_t>(n1 - n0) * HWo;
    col.assign(static_cast<std::size_t>(in_) * k_ * k_ * P, 0.0f);
    for (int ci = 0; ci < in_; ++ci)
        for (int ky = 0; ky < k_; ++ky)
            for (int kx = 0; kx < k_; ++kx) {
                float* row = col.data() + ((static_cast<std::size_t>(ci) * k_ + ky) * k_ + kx) * P;
                for (int n = n0; n < n1; ++n) {
                    const float* src = x.data() + (static_cast<std::size_t>(n) * in_ + ci) * H * W;
                    float* dst = row + static_cast<std::size_t>(n - n0) * HWo;
                    for (int oy = 0; oy < Ho; ++oy) {
                        const int iy = oy * stride_ - pad_ + ky;
                        if (iy < 0 || iy >= H) continue;
                        const float* srow = src + static_cast<std::size_t>(iy) * W;
                        float* drow = dst + static_cast<std::size_t>(oy) * Wo;
                        if (stride_ == 1) {
                            const int ox0 = std::max(0, pad_ - kx), ox1 = std::min(Wo, W + pad_ - kx);
                            for (int ox = ox0; ox < ox1; ++ox) drow[ox] = srow[ox - pad_ + kx];
                        } else {
                            for (int ox = 0; ox < Wo; ++ox) {
                                const int ix = ox * stride_ - pad_ + kx;
                                if (ix >= 0 && ix < W) drow[ox] = srow[ix];
                            }
                        }
                    }
                }
            }
}

void Conv2d::col2im(const FloatBuffer& col, int n0, int n1, Tensor& dx) const {
    const int H = dx.h(), W = dx.w();
    const int Ho = out_size(H), Wo = out_size(W);
    const std::size_t HWo = static_cast<std::size_t>(Ho) * Wo;
    const std::size_t P = static_cast<std::size_t>(n1 - n0) * HWo;
    for (int ci = 0; ci < in_; ++ci)
        for (int ky = 0; ky < k_; ++ky)
            for (int kx = 0; kx < k_; ++kx) {
                const float* row = col.data() + ((static_cast<std::size_t>(ci) * k_ + ky) * k_ + kx) * P;
                for (int n = n0; n < n1; ++n) {
                    float* dst = dx.data() + (static_cast<std::size_t>(n) * in_ + ci) * H * W;
                    const float* src = row + static_cast<std::size_t>(n - n0) * HWo;
                    for (int oy = 0; oy < Ho; ++oy) {
                        const int iy = oy * stride_ - pad_ + ky;
                        if (iy < 0 || iy >= H) continue;
                        float* drow = dst + static_cast<std::size_t>(iy) * W;
                        const float* srow = src + static_cast<std::size_t>(oy) * Wo;
                        if (stride_ == 1) {
                            const int ox0 = std::max(0, pad_ - kx), ox1 = std::min(Wo, W + pad_ - kx);
                            for (int ox = ox0; ox < ox1; ++ox) drow[ox - pad_ + kx] += srow[ox];
                        } else {
                            for (int ox = 0; ox < Wo; ++ox) {
                                const int ix = ox * stride_ - pad_ + kx;
                                if (ix >= 0 && ix < W) drow[ix] += srow[ox];
                            }
                        }
                    }
                }
            }
}

int Conv2d::chunk_samples(int h, int w) const {
    // keep each im2col buffer around a few thousand columns so it stays in cache
    const int hwo = out_size(h) * out_size(w);
    return std::max(1, 4096 / std::max(1, hwo));
}

bool Conv2d::use_direct(int w) const { return k_ == 3 && stride_ == 1 && w % 16 == 0; }

Tensor Conv2d::infer(const Tensor& x) const {
    check_channels(x, in_, "conv");
    if (use_direct(x.w())) {
        const int N = x.n(), H = x.h(), W = x.w();
        const std::size_t HW = static_cast<std::size_t>(H) * W;
        Tensor y(N, out_, H, W);
        FloatBuffer xp;
        for (int n = 0; n < N; ++n) {
            pad1(x.data() + static_cast<std::size_t>(n) * in_ * HW, in_, H, W, xp);
            float* yn = y.data() + static_cast<std::size_t>(n) * out_ * HW;
            direct3x3(xp.data(), in_, H, W, weight_.value.data(), out_, yn);
            if (has_bias_)
                for (int co = 0; co < out_; ++co) {
                    const float b = bias_.value[static_cast<std::size_t>(co)];
                    for (std::size_t i = 0; i < HW; ++i) yn[co * HW + i] += b;
                }
        }
        return y;
    }
    const int N = x.n(), Ho = out_size(x.h()), Wo = out_size(x.w());
    const std::size_t HWo = static_cast<std::size_t>(Ho) * Wo;
    const auto K = static_cast<Eigen::Index>(in_ * k_ * k_);
    const int chunk = chunk_samples(x.h(), x.w());
    Tensor y(N, out_, Ho, Wo);
    FloatBuffer col;
    RowMat Y;
    CMapMat Wm(weight_.value.data(), out_, K);
    for (int n0 = 0; n0 < N; n0 += chunk) {
        const int n1 = std::min(N, n0 + chunk);
        const auto P = static_cast<Eigen::Index>((n1 - n0) * HWo);
        im2col(x, n0, n1, col);
        Y.noalias() = Wm * CMapMat(col.data(), K, P);
        for (int n = n0; n < n1; ++n)
            for (int co = 0; co < out_; ++co) {
                const float b = has_bias_ ? bias_.value[static_cast<std::size_t>(co)] : 0.0f;
                const float* src = Y.data() + static_cast<std::size_t>(co) * P + (n - n0) * HWo;
                float* dst = y.data() + (static_cast<std::size_t>(n) * out_ + co) * HWo;
                for (std::size_t i = 0; i < HWo; ++i) dst[i] = src[i] + b;
            }
    }
    return y;
}

Tensor Conv2d::forward(const Tensor& x) {
    x_ = x;
    return infer(x);
}

Tensor Conv2d::backward(const Tensor& dy) {
    const int N = x_.n(), Ho = out_size(x_.h()), Wo = out_size(x_.w());
    if (dy.n() != N || dy.c() != out_ || dy.h() != Ho || dy.w() != Wo) throw TrainingError("conv backward shape mismatch");
    if (use_direct(x_.w())) {
        const int H = x_.h(), W = x_.w();
        const std::size_t HW = static_cast<std::size_t>(H) * W;
        Tensor dx(N, in_, H, W);
        // flipped, transposed weights turn the input gradient into another forward conv
        FloatBuffer wt(weight_.value.size());
        for (int co = 0; co < out_; ++co)
            for (int ci = 0; ci < in_; ++ci)
                for (int k = 0; k < 9; ++k)
                    wt[(static_cast<std::size_t>(ci) * out_ + co) * 9 + 8 - k] =
                        weight_.value[(static_cast<std::size_t>(co) * in_ + ci) * 9 + k];
        FloatBuffer xp, dyp;
        for (int n = 0; n < N; ++n) {
            const float* dyn = dy.data() + static_cast<std::size_t>(n) * out_ * HW;
            if (has_bias_)
                for (int co = 0; co < out_; ++co) {
                    double acc = 0.0;
                    for (std::size_t i = 0; i < HW; ++i) acc += dyn[co * HW + i];
                    bias_.grad[static_cast<std::size_t>(co)] += static_cast<float>(acc);
                }
            pad1(x_.data() + static_cast<std::size_t>(n) * in_ * HW, in_, H, W, xp);
            direct3x3_wgrad(xp.data(), in_, H, W, dyn, out_, weight_.grad.data());
            pad1(dyn, out_, H, W, dyp);
            direct3x3(dyp.data(), out_, H, W, wt.data(), in_, dx.data() + static_cast<std::size_t>(n) * in_ * HW);
        }
        return dx;
    }
    const std::size_t HWo = static_cast<std::size_t>(Ho) * Wo;
    const auto K = static_cast<Eigen::Index>(in_ * k_ * k_);
    const int chunk = chunk_samples(x_.h(), x_.w());
    Tensor dx(N, in_, x_.h(), x_.w());
    MapMat dW(weight_.grad.data(), out_, K);
    CMapMat Wm(weight_.value.data(), out_, K);
    FloatBuffer col, dcol;
    RowMat dY;
    for (int n0 = 0; n0 < N; n0 += chunk) {
        const int n1 = std::min(N, n0 + chunk);
        const auto P = static_cast<Eigen::Index>((n1 - n0) * HWo);
        dY.resize(out_, P);
        for (int n = n0; n < n1; ++n)
            for (int co = 0; co < out_; ++co) {
                const float* src = dy.data() + (static_cast<std::size_t>(n) * out_ + co) * HWo;
                std::copy_n(src, HWo, dY.data() + static_cast<std::size_t>(co) * P + (n - n0) * HWo);
            }
        if (has_bias_)
            for (int co = 0; co < out_; ++co) bias_.grad[static_cast<std::size_t>(co)] += dY.row(co).sum();
        im2col(x_, n0, n1, col);
        dW.noalias() += dY * CMapMat(col.data(), K, P).transpose();
        dcol.resize(col.size());
        MapMat(dcol.data(), K, P).noalias() = Wm.transpose() * dY;
        col2im(dcol, n0, n1, dx);
    }
    return dx;
}

void Conv2d::collect(std::vector<Param*>& out) {
    out.push_back(&weight_);
    if (has_bias_) out.push_back(&bias_);
}

// ---------------------------------------------------------------- BatchNorm2d

BatchNorm2d::BatchNorm2d(std::string name, int channels)
    : name_(std::move(name)), ch_(channels), gamma_(name_ + ".weight", 1, channels, 1, 1),
      beta_(name_ + ".bias", 1, channels, 1, 1), running_mean_(1, channels, 1, 1, 0.0f),
      running_var_(1, channels, 1, 1, 1.0f) {
    std::fill(gamma_.value.vec().begin(), gamma_.value.vec().end(), 1.0f);
}

Tensor BatchNorm2d::infer(const Tensor& x) const {
    check_channels(x, ch_, "batchnorm");
    Tensor y(x.n(), x.c(), x.h(), x.w());
    const std::size_t hw = x.plane();
    for (int c = 0; c < ch_; ++c) {
        const auto ci = static_cast<std::size_t>(c);
        const float scale = gamma_.value[ci] / std::sqrt(running_var_[ci] + eps_);
        const float shift = beta_.value[ci] - running_mean_[ci] * scale;
        for (int n = 0; n < x.n(); ++n) {
            const float* src = x.data() + (static_cast<std::size_t>(n) * ch_ + ci) * hw;
            float* dst = y.data() + (static_cast<std::size_t>(n) * ch_ + ci) * hw;
            for (std::size_t i = 0; i < hw; ++i) dst[i] = src[i] * scale + shift;
        }
    }
    return y;
}

Tensor BatchNorm2d::forward(const Tensor& x) {
    check_channels(x, ch_, "batchnorm");
    const std::size_t hw = x.plane();
    const double count = static_cast<double>(x.n()) * static_cast<double>(hw);
    xhat_ = Tensor(x.n(), x.c(), x.h(), x.w());
    inv_std_.assign(static_cast<std::size_t>(ch_), 0.0f);
    Tensor y(x.n(), x.c(), x.h(), x.w());
    for (int c = 0; c < ch_; ++c) {
        const auto ci = static_cast<std::size_t>(c);
        double sum = 0.0, sq = 0.0;
        for (int n = 0; n < x.n(); ++n)
            sum += plane_sum(x.data() + (static_cast<std::size_t>(n) * ch_ + ci) * hw, hw);
        const double mean = sum / count;
        for (int n = 0; n < x.n(); ++n)
            sq += plane_sq_dev(x.data() + (static_cast<std::size_t>(n) * ch_ + ci) * hw, hw, static_cast<float>(mean));
        const double var = sq / count;
        const auto inv = static_cast<float>(1.0 / std::sqrt(var + eps_));
        inv_std_[ci] = inv;
        const float g = gamma_.value[ci], b = beta_.value[ci];
        for (int n = 0; n < x.n(); ++n) {
            const std::size_t off = (static_cast<std::size_t>(n) * ch_ + ci) * hw;
            for (std::size_t i = 0; i < hw; ++i) {
                const float xh = (x.data()[off + i] - static_cast<float>(mean)) * inv;
                xhat_.data()[off + i] = xh;
                y.data()[off + i] = g * xh + b;
            }
        }
        const double unbiased = count > 1.0 ? var * count / (count - 1.0) : var;
        running_mean_[ci] = (1.0f - momentum_) * running_mean_[ci] + momentum_ * static_cast<float>(mean);
        running_var_[ci] = (1.0f - momentum_) * running_var_[ci] + momentum_ * static_cast<float>(unbiased);
    }
    return y;
}

Tensor BatchNorm2d::backward(const Tensor& dy) {
    if (!dy.same_shape(xhat_)) throw TrainingError("batchnorm backward shape mismatch");
    const std::size_t hw = dy.plane();
    const double count = static_cast<double>(dy.n()) * static_cast<double>(hw);
    Tensor dx(dy.n(), dy.c(), dy.h(), dy.w());
    for (int c = 0; c < ch_; ++c) {
        const auto ci = static_cast<std::size_t>(c);
        double sum_dy = 0.0, sum_dy_xh = 0.0;
        for (int n = 0; n < dy.n(); ++n) {
            const std::size_t off = (static_cast<std::size_t>(n) * ch_ + ci) * hw;
            sum_dy += plane_sum(dy.data() + off, hw);
            sum_dy_xh += plane_dot(dy.data() + off, xhat_.data() + off, hw);
        }
        gamma_.grad[ci] += static_cast<float>(sum_dy_xh);
        beta_.grad[ci] += static_cast<float>(sum_dy);
        const float g = gamma_.value[ci];
        const auto k = static_cast<float>(g * inv_std_[ci] / count);
        const auto mdy = static_cast<float>(sum_dy), mdyx = static_cast<float>(sum_dy_xh);
        const auto cnt = static_cast<float>(count);
        for (int n = 0; n < dy.n(); ++n) {
            const std::size_t off = (static_cast<std::size_t>(n) * ch_ + ci) * hw;
            for (std::size_t i = 0; i < hw; ++i)
                dx.data()[off + i] = k * (cnt * dy.data()[off + i] - mdy - xhat_.data()[off + i] * mdyx);
        }
    }
    return dx;
}

void BatchNorm2d::collect(std::vector<Param*>& out) {
    out.push_back(&gamma_);
    out.push_back(&beta_);
}

void BatchNorm2d::collect_buffers(std::vector<Buffer>& out) {
    out.push_back({name_ + ".running_mean", &running_mean_});
    out.push_back({name_ + ".running_var", &running_var_});
}

// ---------------------------------------------------------------- Linear

Linear::Linear(std::string name, int in_features, int out_features)
    : in_(in_features), out_(out_features), weight_(name + ".weight", out_features, in_features, 1, 1),
      bias_(name + ".bias", 1, out_features, 1, 1) {}

void Linear::init(std::mt19937_64& rng, float scale) {
    const float bound = scale / std::sqrt(static_cast<float>(in_));
    std::uniform_real_distribution<float> u(-bound, bound);
    for (float& w : weight_.value.vec()) w = u(rng);
    for (float& b : bias_.value.vec()) b = u(rng);
}

Tensor Linear::infer(const Tensor& x) const {
    if (x.sample_size() != static_cast<std::size_t>(in_)) throw TrainingError("linear: input size mismatch " + x.shape_string());
    Tensor y(x.n(), out_, 1, 1);
    MapMat Y(y.data(), x.n(), out_);
    Y.noalias() = CMapMat(x.data(), x.n(), in_) * CMapMat(weight_.value.data(), out_, in_).transpose();
    Y.rowwise() += Eigen::Map<const Eigen::RowVectorXf>(bias_.value.data(), out_);
    return y;
}

Tensor Linear::forward(const Tensor& x) {
    x_ = x;
    return infer(x);
}

Tensor Linear::backward(const Tensor& dy) {
    const int N = x_.n();
    if (dy.n() != N || dy.sample_size() != static_cast<std::size_t>(out_)) throw TrainingError("linear backward shape mismatch");
    CMapMat dY(dy.data(), N, out_);
    MapMat(weight_.grad.data(), out_, in_).noalias() += dY.transpose() * CMapMat(x_.data(), N, in_);
    Eigen::Map<Eigen::RowVectorXf>(bias_.grad.data(), out_) += dY.colwise().sum();
    Tensor dx(x_.n(), x_.c(), x_.h(), x_.w());
    MapMat(dx.data(), N, in_).noalias() = dY * CMapMat(weight_.value.data(), out_, in_);
    return dx;
}

void Linear::collect(std::vector<Param*>& out) {
    out.push_back(&weight_);
    out.push_back(&bias_);
}

// ---------------------------------------------------------------- elementwise

Tensor relu(const Tensor& x) {
    Tensor y = x;
    for (float& v : y.vec()) v = v > 0.0f ? v : 0.0f;
    return y;
}

Tensor relu_backward(const Tensor& dy, const Tensor& y) {
    Tensor dx = dy;
    for (std::size_t i = 0; i < dx.size(); ++i)
        if (!(y[i] > 0.0f)) dx[i] = 0.0f;
    return dx;
}

Tensor upsample2x(const Tensor& x) {
    Tensor y(x.n(), x.c(), 2 * x.h(), 2 * x.w());
    const int H = x.h(), W = x.w();
    for (int nc = 0; nc < x.n() * x.c(); ++nc) {
        const float* src = x.data() + static_cast<std::size_t>(nc) * H * W;
        float* dst = y.data() + static_cast<std::size_t>(nc) * 4 * H * W;
        for (int i = 0; i < 2 * H; ++i)
            for (int j = 0; j < 2 * W; ++j) dst[static_cast<std::size_t>(i) * 2 * W + j] = src[(i / 2) * W + j / 2];
    }
    return y;
}

Tensor upsample2x_backward(const Tensor& dy) {
    Tensor dx(dy.n(), dy.c(), dy.h() / 2, dy.w() / 2);
    const int H = dx.h(), W = dx.w();
    for (int nc = 0; nc < dy.n() * dy.c(); ++nc) {
        const float* src = dy.data() + static_cast<std::size_t>(nc) * 4 * H * W;
        float* dst = dx.data() + static_cast<std::size_t>(nc) * H * W;
        for (int i = 0; i < 2 * H; ++i)
            for (int j = 0; j < 2 * W; ++j) dst[(i / 2) * W + j / 2] += src[static_cast<std::size_t>(i) * 2 * W + j];
    }
    return dx;
}

// ---------------------------------------------------------------- ResBlock

ResBlock::ResBlock(const std::string& name, int in_ch, int out_ch, Mode mode)
    : mode_(mode), conv1_(name + ".conv1", in_ch, out_ch, 3, mode == Mode::Down ? 2 : 1, false),
      conv2_(name + ".conv2", out_ch, out_ch, 3, 1, false), bn1_(name + ".bn1", out_ch), bn2_(name + ".bn2", out_ch) {
    if (mode == Mode::Down || in_ch != out_ch) {
        short_conv_.emplace(name + ".shortcut.conv", in_ch, out_ch, 1, mode == Mode::Down ? 2 : 1, false);
        short_bn_.emplace(name + ".shortcut.bn", out_ch);
    }
}

void ResBlock::init(std::mt19937_64& rng) {
    conv1_.init(rng);
    conv2_.init(rng);
    if (short_conv_) short_conv_->init(rng);
}

Tensor ResBlock::infer(const Tensor& x) const {
    const Tensor u = mode_ == Mode::Up ? upsample2x(x) : x;
    Tensor a = relu(bn1_.infer(conv1_.infer(u)));
    Tensor b = bn2_.infer(conv2_.infer(a));
    const Tensor s = short_conv_ ? short_bn_->infer(short_conv_->infer(u)) : u;
    for (std::size_t i = 0; i < b.size(); ++i) b[i] += s[i];
    return relu(b);
}

Tensor ResBlock::forward(const Tensor& x) {
    const Tensor u = mode_ == Mode::Up ? upsample2x(x) : x;
    a_ = relu(bn1_.forward(conv1_.forward(u)));
    Tensor b = bn2_.forward(conv2_.forward(a_));
    const Tensor s = short_conv_ ? short_bn_->forward(short_conv_->forward(u)) : u;
    for (std::size_t i = 0; i < b.size(); ++i) b[i] += s[i];
    y_ = relu(b);
    return y_;
}

Tensor ResBlock::backward(const Tensor& dy) {
    const Tensor dsum = relu_backward(dy, y_);
    Tensor du = conv1_.backward(bn1_.backward(relu_backward(conv2_.backward(bn2_.backward(dsum)), a_)));
    const Tensor ds = short_conv_ ? short_conv_->backward(short_bn_->backward(dsum)) : dsum;
    for (std::size_t i = 0; i < du.size(); ++i) du[i] += ds[i];
    return mode_ == Mode::Up ? upsample2x_backward(du) : du;
}

void ResBlock::collect(std::vector<Param*>& out) {
    conv1_.collect(out);
    bn1_.collect(out);
    conv2_.collect(out);
    bn2_.collect(out);
    if (short_conv_) {
        short_conv_->collect(out);
        short_bn_->collect(out);
    }
}

void ResBlock::collect_buffers(std::vector<Buffer>& out) {
    bn1_.collect_buffers(out);
    bn2_.collect_buffers(out);
    if (short_bn_) short_bn_->collect_buffers(out);
}

// ---------------------------------------------------------------- Adam

Adam::Adam(std::vector<Param*> params, double lr, double beta1, double beta2, double eps)
    : params_(std::move(params)), lr_(lr), b1_(beta1), b2_(beta2), eps_(eps) {
    for (const Param* p : params_) {
        m_.emplace_back(p->value.n(), p->value.c(), p->value.h(), p->value.w());
        v_.emplace_back(p->value.n(), p->value.c(), p->value.h(), p->value.w());
    }
}

void Adam::zero_grad() {
    for (Param* p : params_) p->grad.zero();
}

void Adam::step() {
    ++t_;
    const double c1 = 1.0 - std::pow(b1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(b2_, static_cast<double>(t_));
    const auto step_size = static_cast<float>(lr_ / c1);
    const auto inv_c2 = static_cast<float>(1.0 / c2);
    const auto b1 = static_cast<float>(b1_), b2 = static_cast<float>(b2_), eps = static_cast<float>(eps_);
    for (std::size_t k = 0; k < params_.size(); ++k) {
        float* w = params_[k]->value.data();
        const float* g = params_[k]->grad.data();
        float* m = m_[k].data();
        float* v = v_[k].data();
        const std::size_t n = params_[k]->value.size();
        for (std::size_t i = 0; i < n; ++i) {
            m[i] = b1 * m[i] + (1.0f - b1) * g[i];
            v[i] = b2 * v[i] + (1.0f - b2) * g[i] * g[i];
            w[i] -= step_size * m[i] / (std::sqrt(v[i] * inv_c2) + eps);
        }
    }
}

} // namespace slicevol::nn
