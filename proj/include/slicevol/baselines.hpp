#pragma once

#include <string>
#include <vector>

#include "slicevol/phantom.hpp"

namespace slicevol {

/// Volume regressed on manual measurements. single: [L]; triple:
/// [L, W, Th, L*W*Th]. Features are standardized before the fit; the stored
/// coefficients act on raw features.
struct MeasurementRegression {
    enum class Mode { Single, Triple };
    Mode mode = Mode::Single;
    std::vector<double> coefficients;
    double intercept = 0.0;
    bool fitted = false;

    static std::vector<double> features(Mode mode, const ManualMeasurements& m);
};

std::string to_string(MeasurementRegression::Mode m);

struct BaselinePrediction {
    double volume_mL = 0.0;
    bool clamped = false;
};

/// Ordinary least squares against volume_mL. Throws "insufficient data" and
/// "singular fit".
MeasurementRegression fit_measurement_regression(const std::vector<CaseRecord>& train, MeasurementRegression::Mode mode);

/// Affine prediction clamped at 0. Throws "unfitted model".
BaselinePrediction predict_measurement_regression(const MeasurementRegression& model, const ManualMeasurements& m);

} // namespace slicevol
