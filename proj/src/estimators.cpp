#include "slicevol/estimators.hpp"

#include <cmath>
#include <limits>
#include <random>

#include <Eigen/Dense>

#include "slicevol/error.hpp"

namespace slicevol {

std::string to_string(EstimateMethod m) {
    switch (m) {
    case EstimateMethod::NN: return "nn";
    case EstimateMethod::PLR: return "plr";
    case EstimateMethod::RvaeLr: return "rvae_lr";
    case EstimateMethod::RvaeFcnr: return "rvae_fcnr";
    }
    return "?";
}

EstimateMethod estimate_method_from_string(const std::string& s) {
    if (s == "nn") return EstimateMethod::NN;
    if (s == "plr") return EstimateMethod::PLR;
    if (s == "rvae_lr") return EstimateMethod::RvaeLr;
    if (s == "rvae_fcnr" || s == "rvae_fcn") return EstimateMethod::RvaeFcnr;
    throw ConfigError("unknown method: " + s);
}

TrainMethod trained_by(EstimateMethod m) {
    switch (m) {
    case EstimateMethod::NN:
    case EstimateMethod::PLR: return TrainMethod::Vae;
    case EstimateMethod::RvaeLr: return TrainMethod::RvaeLr;
    case EstimateMethod::RvaeFcnr: return TrainMethod::RvaeFcn;
    }
    return TrainMethod::Vae;
}

VolumeEstimate nn_estimate(std::span<const MuCacheEntry> cache, std::span<const double> mu) {
    if (cache.empty()) throw Error("empty cache");
    std::size_t best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < cache.size(); ++i) {
        if (cache[i].mu.size() != mu.size()) throw Error("dim mismatch");
        double d = 0.0;
        for (std::size_t k = 0; k < mu.size(); ++k) {
            const double t = cache[i].mu[k] - mu[k];
            d += t * t;
        }
        if (d < best_d) {
            best_d = d;
            best = i;
        }
    }
    return {cache[best].volume_mL, EstimateMethod::NN, false};
}

VolumeEstimate nn_estimate(const TrainedModel& model, const SlicePair& query) {
    return nn_estimate(model.training_mu_cache, encode(model, query).mu);
}

LinearHead plr_fit(const std::vector<std::vector<double>>& mus, std::span<const double> volumes_mL, double volume_scale,
                   double lambda) {
    if (mus.size() < 2 || volumes_mL.size() != mus.size()) throw Error("fewer than 2 cases");
    const auto n = static_cast<Eigen::Index>(mus.size());
    const auto d = static_cast<Eigen::Index>(mus.front().size());
    Eigen::MatrixXd X(n, d);
    Eigen::VectorXd y(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        if (static_cast<Eigen::Index>(mus[static_cast<std::size_t>(i)].size()) != d) throw Error("dim mismatch");
        for (Eigen::Index k = 0; k < d; ++k) X(i, k) = mus[static_cast<std::size_t>(i)][static_cast<std::size_t>(k)];
        y(i) = volumes_mL[static_cast<std::size_t>(i)] / volume_scale;
    }
    const Eigen::RowVectorXd xm = X.colwise().mean();
    const double ym = y.mean();
    X.rowwise() -= xm;
    y.array() -= ym;
    Eigen::MatrixXd A = X.transpose() * X;
    A.diagonal().array() += lambda;
    const Eigen::VectorXd w = A.ldlt().solve(X.transpose() * y);
    LinearHead h;
    h.W.assign(w.data(), w.data() + w.size());
    h.b = ym - xm.dot(w);
    if (!std::isfinite(h.b)) throw Error("singular fit");
    return h;
}

double head_forward(const LinearHead& head, std::span<const double> latent) {
    if (latent.size() != head.W.size()) throw Error("dim mismatch");
    double s = head.b;
    for (std::size_t i = 0; i < latent.size(); ++i) s += head.W[i] * latent[i];
    return s;
}

double head_forward(const FCNHead& head, std::span<const double> latent) {
    if (latent.size() != static_cast<std::size_t>(head.latent_dim)) throw Error("dim mismatch");
    double out = head.out_b;
    for (int j = 0; j < head.hidden; ++j) {
        const double* row = head.hidden_W.data() + static_cast<std::size_t>(j) * latent.size();
        double a = head.hidden_b[static_cast<std::size_t>(j)];
        for (std::size_t i = 0; i < latent.size(); ++i) a += row[i] * latent[i];
        if (a > 0.0) out += head.out_W[static_cast<std::size_t>(j)] * a;
    }
    return out;
}

VolumeEstimate to_estimate(double scaled, double volume_scale, EstimateMethod method) {
    const double v = scaled * volume_scale;
    if (v < 0.0) return {0.0, method, true};
    return {v, method, false};
}

VolumeEstimate plr_estimate(const LinearHead& head, std::span<const double> mu, double volume_scale) {
    return to_estimate(head_forward(head, mu), volume_scale, EstimateMethod::PLR);
}

VolumeEstimate estimate_from_mu(const TrainedModel& model, std::span<const double> mu, EstimateMethod method) {
    const double scale = model.train_config.volume_scale;
    switch (method) {
    case EstimateMethod::NN:
        if (model.training_mu_cache.empty()) throw Error("method/model mismatch");
        return nn_estimate(model.training_mu_cache, mu);
    case EstimateMethod::PLR:
        if (!model.plr_head) throw Error("method/model mismatch");
        return plr_estimate(*model.plr_head, mu, scale);
    case EstimateMethod::RvaeLr:
        return to_estimate(head_forward(linear_head_of(model), mu), scale, method);
    case EstimateMethod::RvaeFcnr:
        return to_estimate(head_forward(fcn_head_of(model), mu), scale, method);
    }
    throw Error("method/model mismatch");
}

VolumeEstimate estimate_volume(const TrainedModel& model, const SlicePair& slices, EstimateMethod method) {
    return estimate_from_mu(model, encode(model, slices).mu, method);
}

ConfidenceInterval sample_interval(const HeadFn& head, std::span<const double> mu, std::span<const double> sigma,
                                   double volume_scale, int n, std::uint64_t seed) {
    if (n < 2) throw Error("n < 2");
    if (mu.size() != sigma.size()) throw Error("dim mismatch");
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> g(0.0, 1.0);
    std::vector<double> z(mu.size()), draws(static_cast<std::size_t>(n));
    for (auto& v : draws) {
        for (std::size_t i = 0; i < z.size(); ++i) z[i] = mu[i] + g(rng) * sigma[i];
        v = head(z) * volume_scale;
    }
    double mean = 0.0;
    for (double v : draws) mean += v;
    mean /= n;
    double ss = 0.0;
    for (double v : draws) ss += (v - mean) * (v - mean);
    ConfidenceInterval ci;
    ci.eta = mean;
    ci.theta = std::sqrt(ss / (n - 1));
    ci.lower = ci.eta - 1.96 * ci.theta;
    ci.upper = ci.eta + 1.96 * ci.theta;
    ci.n_samples = n;
    return ci;
}

std::pair<VolumeEstimate, ConfidenceInterval> ci_from_latent(const TrainedModel& model, const LatentDistribution& latent,
                                                             int n, std::uint64_t seed) {
    const double scale = model.train_config.volume_scale;
    HeadFn fn;
    EstimateMethod method = EstimateMethod::RvaeFcnr;
    if (model.config.head == HeadKind::Fcn) {
        fn = [h = fcn_head_of(model)](std::span<const double> z) { return head_forward(h, z); };
    } else if (model.config.head == HeadKind::Linear) {
        fn = [h = linear_head_of(model)](std::span<const double> z) { return head_forward(h, z); };
        method = EstimateMethod::RvaeLr;
    } else {
        throw Error("method/model mismatch");
    }
    const VolumeEstimate point = to_estimate(fn(latent.mu), scale, method);
    return {point, sample_interval(fn, latent.mu, latent.sigma, scale, n, seed)};
}

std::pair<VolumeEstimate, ConfidenceInterval> ci_estimate(const TrainedModel& model, const SlicePair& slices, int n,
                                                          std::uint64_t seed) {
    return ci_from_latent(model, encode(model, slices), n, seed);
}

} // namespace slicevol
