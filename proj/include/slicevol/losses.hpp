#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "slicevol/error.hpp"

// Reconstruction and regularization losses for the VAE and its regression
// variants. Reductions: BCE is a mean over every pixel of every view and
// sample; KLD is summed over latent dimensions and averaged over the batch;
// MSE is a mean over the batch. All accumulation is in double.
namespace slicevol::loss {

inline constexpr double kBceEps = 1e-7;

template <class T>
double bce(std::span<const T> target, std::span<const T> pred) {
    if (target.size() != pred.size() || target.empty()) throw Error("shape mismatch");
    double sum = 0.0;
    for (std::size_t i = 0; i < target.size(); ++i) {
        const double a = target[i];
        const double b = std::clamp(static_cast<double>(pred[i]), kBceEps, 1.0 - kBceEps);
        sum -= a * std::log(b) + (1.0 - a) * std::log(1.0 - b);
    }
    return sum / static_cast<double>(target.size());
}

/// dBCE/dpred; zero where the clamp is active.
template <class T>
std::vector<double> bce_grad(std::span<const T> target, std::span<const T> pred) {
    if (target.size() != pred.size() || target.empty()) throw Error("shape mismatch");
    std::vector<double> g(target.size(), 0.0);
    const double n = static_cast<double>(target.size());
    for (std::size_t i = 0; i < target.size(); ++i) {
        const double a = target[i], b = pred[i];
        if (b < kBceEps || b > 1.0 - kBceEps) continue;
        g[i] = (-a / b + (1.0 - a) / (1.0 - b)) / n;
    }
    return g;
}

/// KL divergence of N(mu, sigma^2) from N(0, I). mu and sigma hold `batch`
/// rows of equal length.
template <class T>
double kld(std::span<const T> mu, std::span<const T> sigma, std::size_t batch = 1) {
    if (mu.size() != sigma.size() || batch == 0 || mu.size() % batch != 0) throw Error("dim mismatch");
    double sum = 0.0;
    for (std::size_t i = 0; i < mu.size(); ++i) {
        const double m = mu[i], s = sigma[i];
        if (!(s > 0.0)) throw Error("nonpositive sigma");
        sum += 1.0 + std::log(s * s) - m * m - s * s;
    }
    return -0.5 * sum / static_cast<double>(batch);
}

template <class T>
double mse(std::span<const T> vol, std::span<const T> vol_pred) {
    if (vol.size() != vol_pred.size() || vol.empty()) throw Error("dim mismatch");
    double sum = 0.0;
    for (std::size_t i = 0; i < vol.size(); ++i) {
        const double d = static_cast<double>(vol_pred[i]) - static_cast<double>(vol[i]);
        sum += d * d;
    }
    return sum / static_cast<double>(vol.size());
}

template <class T>
double vae_loss(std::span<const T> target, std::span<const T> pred, std::span<const T> mu, std::span<const T> sigma,
                double w1, std::size_t batch = 1) {
    return bce(target, pred) + w1 * kld(mu, sigma, batch);
}

/// vol and vol_pred are in scaled units (mL / volume_scale).
template <class T>
double rvae_loss(std::span<const T> target, std::span<const T> pred, std::span<const T> mu, std::span<const T> sigma,
                 std::span<const T> vol, std::span<const T> vol_pred, double w1, double w2, std::size_t batch = 1) {
    return vae_loss(target, pred, mu, sigma, w1, batch) + w2 * mse(vol, vol_pred);
}

struct LossGradients {
    std::vector<double> d_pred;
    std::vector<double> d_mu;
    std::vector<double> d_sigma;
    std::vector<double> d_vol_pred;
};

/// Analytic gradient of rvae_loss (vae_loss when vol is empty or w2 = 0).
template <class T>
LossGradients rvae_loss_grad(std::span<const T> target, std::span<const T> pred, std::span<const T> mu,
                             std::span<const T> sigma, std::span<const T> vol, std::span<const T> vol_pred, double w1,
                             double w2, std::size_t batch = 1) {
    if (mu.size() != sigma.size() || batch == 0) throw Error("dim mismatch");
    LossGradients g;
    g.d_pred = bce_grad(target, pred);
    g.d_mu.resize(mu.size());
    g.d_sigma.resize(sigma.size());
    const double inv_b = 1.0 / static_cast<double>(batch);
    for (std::size_t i = 0; i < mu.size(); ++i) {
        const double s = sigma[i];
        if (!(s > 0.0)) throw Error("nonpositive sigma");
        g.d_mu[i] = w1 * static_cast<double>(mu[i]) * inv_b;
        g.d_sigma[i] = w1 * (s - 1.0 / s) * inv_b;
    }
    if (vol.size() != vol_pred.size()) throw Error("dim mismatch");
    g.d_vol_pred.resize(vol.size());
    for (std::size_t i = 0; i < vol.size(); ++i)
        g.d_vol_pred[i] = w2 * 2.0 * (static_cast<double>(vol_pred[i]) - static_cast<double>(vol[i])) /
                          static_cast<double>(vol.size());
    return g;
}

} // namespace slicevol::loss
