#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "slicevol/vae.hpp"

namespace slicevol {

enum class EstimateMethod { NN, PLR, RvaeLr, RvaeFcnr };

std::string to_string(EstimateMethod m);
EstimateMethod estimate_method_from_string(const std::string& s);
/// The training method whose model serves this estimator.
TrainMethod trained_by(EstimateMethod m);

struct VolumeEstimate {
    double volume_mL = 0.0;
    EstimateMethod method = EstimateMethod::NN;
    bool clamped = false;
};

struct ConfidenceInterval {
    double eta = 0.0;
    double theta = 0.0;
    double lower = 0.0;
    double upper = 0.0;
    int n_samples = 0;
};

/// Volume of the cached training case nearest to `mu` (Euclidean); ties go to
/// the lower cache index. Throws "empty cache".
VolumeEstimate nn_estimate(std::span<const MuCacheEntry> cache, std::span<const double> mu);
VolumeEstimate nn_estimate(const TrainedModel& model, const SlicePair& query);

/// Ridge regression of volume / volume_scale on mu. The intercept is not
/// penalized. Throws "fewer than 2 cases".
LinearHead plr_fit(const std::vector<std::vector<double>>& mus, std::span<const double> volumes_mL,
                   double volume_scale = 10.0, double lambda = 1e-3);

/// W.mu + b rescaled to mL; negative values clamp to 0 and set `clamped`.
VolumeEstimate plr_estimate(const LinearHead& head, std::span<const double> mu, double volume_scale = 10.0);

/// Raw scaled-volume output of a head.
double head_forward(const LinearHead& head, std::span<const double> latent);
double head_forward(const FCNHead& head, std::span<const double> latent);

/// Scaled prediction -> mL, clamped at zero.
VolumeEstimate to_estimate(double scaled, double volume_scale, EstimateMethod method);

/// Dispatch over the four estimators. Throws "method/model mismatch" when the
/// model was not trained for `method`.
VolumeEstimate estimate_volume(const TrainedModel& model, const SlicePair& slices, EstimateMethod method);
/// Same, from an already computed latent mean.
VolumeEstimate estimate_from_mu(const TrainedModel& model, std::span<const double> mu, EstimateMethod method);

using HeadFn = std::function<double(std::span<const double>)>;

/// Monte-Carlo interval: n draws z = mu + zeta * sigma through `head`, scaled
/// to mL. eta = mean, theta = sample standard deviation, bounds eta +- 1.96
/// theta. Throws "n < 2".
ConfidenceInterval sample_interval(const HeadFn& head, std::span<const double> mu, std::span<const double> sigma,
                                   double volume_scale, int n, std::uint64_t seed);

/// Point estimate at zeta = 0 plus the sampled interval, for a model with a
/// regression head (normally the sample-trained FCN variant).
std::pair<VolumeEstimate, ConfidenceInterval> ci_estimate(const TrainedModel& model, const SlicePair& slices, int n = 100,
                                                          std::uint64_t seed = 0);
std::pair<VolumeEstimate, ConfidenceInterval> ci_from_latent(const TrainedModel& model, const LatentDistribution& latent,
                                                             int n, std::uint64_t seed);

} // namespace slicevol
