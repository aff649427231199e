#include <cmath>
#include <numbers>

#include "doctest.h"
#include "slicevol/error.hpp"
#include "slicevol/phantom.hpp"

using namespace slicevol;

namespace {

PhantomParams ellipsoid(double rx, double ry, double rz, Dims3 grid) {
    PhantomParams p;
    p.base_semi_axes_mm = {rx, ry, rz};
    p.grid_dims = grid;
    return p;
}

} // namespace

TEST_CASE("voxel_volume arithmetic") {
    LabelVolume cube({10, 10, 10}, {1, 1, 1});
    std::fill(cube.data().begin(), cube.data().end(), 1);
    CHECK(voxel_volume(cube) == doctest::Approx(1.0));
    LabelVolume empty({5, 5, 5}, {1, 1, 1});
    CHECK(voxel_volume(empty) == 0.0);
    LabelVolume coarse({10, 10, 10}, {2, 2, 2});
    std::fill(coarse.data().begin(), coarse.data().end(), 1);
    CHECK(voxel_volume(coarse) == doctest::Approx(8.0));
}

TEST_CASE("sphere volume and diameters") {
    auto vol = generate_phantom(ellipsoid(20, 20, 20, {64, 64, 64}), 0);
    const double analytic = 4.0 / 3.0 * std::numbers::pi * 20 * 20 * 20 / 1000.0;
    CHECK(std::abs(voxel_volume(vol) - analytic) / analytic < 0.02);
    auto m = manual_measurements(vol);
    CHECK(std::abs(m.length_mm - 40) <= 2);
    CHECK(std::abs(m.max_width_mm - 40) <= 2);
    CHECK(std::abs(m.thickness_at_hilum_mm - 40) <= 2);
}

TEST_CASE("ellipsoid measurements") {
    auto vol = generate_phantom(ellipsoid(30, 20, 40, {96, 64, 80}), 0);
    auto m = manual_measurements(vol);
    CHECK(std::abs(m.length_mm - 80) <= 2);
    CHECK(std::abs(m.max_width_mm - 60) <= 2);
    CHECK(std::abs(m.thickness_at_hilum_mm - 40) <= 2);
}

TEST_CASE("single voxel and empty mask measurements") {
    LabelVolume v({5, 5, 5}, {2.5, 1, 1});
    v.set(2, 2, 2, 1);
    auto m = manual_measurements(v);
    CHECK(m.length_mm == doctest::Approx(2.5));
    CHECK(m.max_width_mm == 0.0);
    CHECK(m.thickness_at_hilum_mm == 0.0);
    LabelVolume e({5, 5, 5}, {1, 1, 1});
    CHECK_THROWS_WITH_AS(manual_measurements(e), "empty segmentation", DataError);
}

TEST_CASE("target volume and determinism") {
    auto p = ellipsoid(30, 20, 40, {140, 100, 110});
    p.exponent = 2.3;
    p.bend_strength = 0.4;
    p.taper_strength = 0.3;
    p.lobulation = 0.05;
    p.rotation_deg = {5, -4, 3};
    p.target_volume_mL = 400.0;
    auto a = generate_phantom(p, 11);
    CHECK(voxel_volume(a) >= 380.0);
    CHECK(voxel_volume(a) <= 420.0);
    auto b = generate_phantom(p, 11);
    CHECK(a == b);
}

TEST_CASE("phantom errors") {
    CHECK_THROWS_WITH_AS(generate_phantom(ellipsoid(40, 40, 40, {64, 64, 64}), 0), "grid overflow", DataError);
    auto p = ellipsoid(10, 10, 10, {40, 40, 40});
    p.target_volume_mL = 5000.0;
    CHECK_THROWS_WITH(generate_phantom(p, 0), "target infeasible");
}

TEST_CASE("small cohorts") {
    DatasetConfig c;
    c.n = 10;
    c.splenomegaly_fraction = 0.0;
    auto cases = make_dataset_cases(c);
    REQUIRE(cases.size() == 10);
    for (const auto& k : cases) {
        CHECK(k.record.volume_mL <= kSplenomegalyThresholdMl);
        CHECK_FALSE(k.record.splenomegaly);
        CHECK(k.record.volume_mL == doctest::Approx(voxel_volume(k.volume)));
    }
    c.n = 8;
    c.splenomegaly_fraction = 0.25;
    c.seed = 4;
    auto a = make_dataset_cases(c);
    int pos = 0;
    for (const auto& k : a) pos += k.record.volume_mL > kSplenomegalyThresholdMl;
    CHECK(pos == 2);
    auto b = make_dataset_cases(c);
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].record.case_id == b[i].record.case_id);
        CHECK(a[i].volume == b[i].volume);
    }
    c.n = 0;
    CHECK_THROWS_WITH(make_dataset_cases(c), "invalid size");
}
