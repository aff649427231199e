#include <cmath>
#include <numbers>
#include <random>

#include "doctest.h"
#include "slicevol/baselines.hpp"
#include "slicevol/error.hpp"

using namespace slicevol;

namespace {

CaseRecord rec(double L, double W, double Th, double v) {
    CaseRecord r;
    r.measurements = {L, W, Th};
    r.volume_mL = v;
    return r;
}

} // namespace

TEST_CASE("triple regression reproduces an exact ellipsoid family") {
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> u(40, 140);
    std::vector<CaseRecord> train;
    for (int i = 0; i < 30; ++i) {
        const double L = u(rng), W = u(rng), Th = u(rng) * 0.5;
        train.push_back(rec(L, W, Th, std::numbers::pi / 6 * L * W * Th / 1000.0));
    }
    auto m = fit_measurement_regression(train, MeasurementRegression::Mode::Triple);
    CHECK(m.coefficients.size() == 4);
    for (const auto& r : train)
        CHECK(predict_measurement_regression(m, r.measurements).volume_mL == doctest::Approx(r.volume_mL).epsilon(1e-6));
}

TEST_CASE("single regression uses length only") {
    std::vector<CaseRecord> train{rec(50, 1, 2, 100), rec(60, 9, 3, 130), rec(70, 4, 8, 160), rec(80, 2, 1, 190)};
    auto m = fit_measurement_regression(train, MeasurementRegression::Mode::Single);
    REQUIRE(m.coefficients.size() == 1);
    CHECK(m.coefficients[0] == doctest::Approx(3.0));
    CHECK(m.intercept == doctest::Approx(-50.0));
    CHECK(predict_measurement_regression(m, {65, 1000, 1000}).volume_mL == doctest::Approx(145.0));
    auto zero = predict_measurement_regression(m, {0, 0, 0});
    CHECK(zero.volume_mL == 0.0);
    CHECK(zero.clamped);
}

TEST_CASE("baseline errors") {
    std::vector<CaseRecord> same(6, rec(50, 40, 30, 100));
    same[3].volume_mL = 120;
    CHECK_THROWS_WITH(fit_measurement_regression(same, MeasurementRegression::Mode::Triple), "singular fit");
    std::vector<CaseRecord> one{rec(50, 40, 30, 100)};
    CHECK_THROWS_WITH(fit_measurement_regression(one, MeasurementRegression::Mode::Single), "insufficient data");
    CHECK_THROWS_WITH(predict_measurement_regression(MeasurementRegression{}, {1, 2, 3}), "unfitted model");
}
