#include "slicevol/baselines.hpp"

#include <cmath>

#include <Eigen/Dense>

#include "slicevol/error.hpp"

namespace slicevol {

std::string to_string(MeasurementRegression::Mode m) {
    return m == MeasurementRegression::Mode::Single ? "single" : "triple";
}

std::vector<double> MeasurementRegression::features(Mode mode, const ManualMeasurements& m) {
    if (mode == Mode::Single) return {m.length_mm};
    return {m.length_mm, m.max_width_mm, m.thickness_at_hilum_mm, m.length_mm * m.max_width_mm * m.thickness_at_hilum_mm};
}

MeasurementRegression fit_measurement_regression(const std::vector<CaseRecord>& train, MeasurementRegression::Mode mode) {
    if (train.size() < 2) throw Error("insufficient data");
    const auto n = static_cast<Eigen::Index>(train.size());
    const auto p = static_cast<Eigen::Index>(MeasurementRegression::features(mode, {}).size());
    if (n < p + 1) throw Error("insufficient data");
    Eigen::MatrixXd X(n, p);
    Eigen::VectorXd y(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto f = MeasurementRegression::features(mode, train[static_cast<std::size_t>(i)].measurements);
        for (Eigen::Index k = 0; k < p; ++k) X(i, k) = f[static_cast<std::size_t>(k)];
        y(i) = train[static_cast<std::size_t>(i)].volume_mL;
    }
    const Eigen::RowVectorXd mean = X.colwise().mean();
    Eigen::MatrixXd Z = X.rowwise() - mean;
    Eigen::RowVectorXd sd(p);
    for (Eigen::Index k = 0; k < p; ++k) {
        sd(k) = std::sqrt(Z.col(k).squaredNorm() / static_cast<double>(n));
        if (!(sd(k) > 1e-12 * std::max(1.0, std::abs(mean(k))))) throw Error("singular fit");
        Z.col(k) /= sd(k);
    }
    const double ym = y.mean();
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(Z);
    qr.setThreshold(1e-10);
    if (qr.rank() < p) throw Error("singular fit");
    const Eigen::VectorXd b = qr.solve((y.array() - ym).matrix());
    MeasurementRegression m;
    m.mode = mode;
    m.coefficients.resize(static_cast<std::size_t>(p));
    m.intercept = ym;
    for (Eigen::Index k = 0; k < p; ++k) {
        m.coefficients[static_cast<std::size_t>(k)] = b(k) / sd(k);
        m.intercept -= b(k) / sd(k) * mean(k);
    }
    m.fitted = true;
    return m;
}

BaselinePrediction predict_measurement_regression(const MeasurementRegression& model, const ManualMeasurements& m) {
    if (!model.fitted) throw Error("unfitted model");
    const auto f = MeasurementRegression::features(model.mode, m);
    double v = model.intercept;
    for (std::size_t k = 0; k < f.size(); ++k) v += model.coefficients[k] * f[k];
    if (v < 0.0) return {0.0, true};
    return {v, false};
}

} // namespace slicevol
