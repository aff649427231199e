#include <cmath>
#include <random>

#include "doctest.h"
#include "slicevol/error.hpp"
#include "slicevol/phantom.hpp"
#include "slicevol/preprocess.hpp"

using namespace slicevol;

namespace {

LabelVolume blob(std::uint64_t seed, Dims3 grid = {72, 72, 72}) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0, 1);
    PhantomParams p;
    p.base_semi_axes_mm = {12 + 10 * u(rng), 10 + 8 * u(rng), 14 + 10 * u(rng)};
    p.exponent = 1.8 + 0.8 * u(rng);
    p.bend_strength = 0.5 * u(rng);
    p.taper_strength = 0.4 * u(rng);
    p.lobulation = 0.05 * u(rng);
    p.rotation_deg = {20 * u(rng) - 10, 20 * u(rng) - 10, 20 * u(rng) - 10};
    p.grid_dims = grid;
    return generate_phantom(p, seed);
}

// brute-force majority with zero padding over each fixed-y plane
LabelVolume naive_mode(const LabelVolume& v, int k) {
    LabelVolume out(v.dims(), v.voxel_size_mm());
    const auto d = v.dims();
    const int r = k / 2;
    for (int y = 0; y < d[1]; ++y)
        for (int z = 0; z < d[0]; ++z)
            for (int x = 0; x < d[2]; ++x) {
                int ones = 0;
                for (int dz = -r; dz <= r; ++dz)
                    for (int dx = -r; dx <= r; ++dx)
                        if (v.in_bounds(z + dz, y, x + dx)) ones += v.at(z + dz, y, x + dx);
                out.set(z, y, x, 2 * ones > k * k);
            }
    return out;
}

int naive_select(const LabelVolume& v, int axis) {
    const auto d = v.dims();
    std::vector<long> area(d[axis], 0);
    double sum = 0, cnt = 0;
    for (int z = 0; z < d[0]; ++z)
        for (int y = 0; y < d[1]; ++y)
            for (int x = 0; x < d[2]; ++x)
                if (v.at(z, y, x)) {
                    ++area[axis == 0 ? z : y];
                    sum += axis == 0 ? z : y;
                    ++cnt;
                }
    const double c = sum / cnt;
    long best_area = -1;
    for (long a : area) best_area = std::max(best_area, a);
    int best = -1;
    for (int i = 0; i < d[axis]; ++i)
        if (area[i] == best_area && (best < 0 || std::abs(i - c) < std::abs(best - c))) best = i;
    return best;
}

} // namespace

TEST_CASE("resampling halves spacing and keeps volume") {
    LabelVolume v = blob(1, {40, 40, 40});
    LabelVolume coarse(v.dims(), {2, 2, 2});
    coarse.data() = v.data();
    auto fine = resample_isotropic(coarse, {1, 1, 1});
    for (int a = 0; a < 3; ++a) CHECK(std::abs(fine.dims()[a] - 2 * coarse.dims()[a]) <= 1);
    CHECK(std::abs(voxel_volume(fine) - voxel_volume(coarse)) / voxel_volume(coarse) < 0.05);
    CHECK(resample_isotropic(v, {1, 1, 1}) == v);
    LabelVolume empty({10, 10, 10}, {2, 1, 1});
    auto e = resample_isotropic(empty, {1, 1, 1});
    CHECK(e.dims() == Dims3{20, 10, 10});
    CHECK(e.foreground_count() == 0);
}

TEST_CASE("canonicalize pads to the grid and centres") {
    LabelVolume v = blob(2, {60, 60, 60});
    auto c = canonicalize(v, CanonicalGrid{});
    CHECK(c.dims() == Dims3{164, 186, 176});
    CHECK(c.foreground_count() == v.foreground_count());
    auto cen = *foreground_centroid(c);
    CHECK(std::abs(cen[0] - 81.5) <= 0.5);
    CHECK(std::abs(cen[1] - 92.5) <= 0.5);
    CHECK(std::abs(cen[2] - 87.5) <= 0.5);
    CanonicalGrid tiny;
    tiny.dims = {20, 20, 20};
    CHECK_THROWS_WITH_AS(canonicalize(v, tiny), "grid overflow", DataError);
}

TEST_CASE("mode filter matches a brute-force majority") {
    std::mt19937_64 rng(5);
    std::bernoulli_distribution b(0.5);
    LabelVolume v({17, 3, 21}, {1, 1, 1});
    for (auto& x : v.data()) x = b(rng);
    for (int k : {1, 3, 7}) CHECK(mode_filter_coronal(v, k) == naive_mode(v, k));

    LabelVolume dot({15, 1, 15}, {1, 1, 1});
    dot.set(7, 0, 7, 1);
    CHECK(mode_filter_coronal(dot, 7).foreground_count() == 0);

    LabelVolume full({15, 1, 15}, {1, 1, 1});
    std::fill(full.data().begin(), full.data().end(), 1);
    auto f = mode_filter_coronal(full, 7);
    CHECK(f.at(7, 0, 7) == 1);
    CHECK(f.at(0, 0, 0) == 0);  // 16 of 49 in the corner window
    CHECK(f.at(0, 0, 7) == 1);  // 28 of 49 along an edge
    CHECK(f == naive_mode(full, 7));
    CHECK_THROWS_WITH(mode_filter_coronal(v, 4), "invalid kernel");
}

TEST_CASE("slice selection equals an exhaustive scan") {
    for (std::uint64_t s = 0; s < 6; ++s) {
        auto v = blob(100 + s);
        CHECK(select_slice(v, 0) == naive_select(v, 0));
        CHECK(select_slice(v, 1) == naive_select(v, 1));
    }
    PhantomParams p;
    p.base_semi_axes_mm = {20, 15, 25};
    p.grid_dims = {64, 64, 64};
    auto e = generate_phantom(p, 0);
    CHECK(std::abs(select_slice(e, 1) - (*foreground_centroid(e))[1]) <= 1.0);

    auto pair = extract_slices(e, 32, true);
    CHECK(pair.coronal.rows == 32);
    CHECK(pair.coronal.cols == 32);
    REQUIRE(pair.transverse);
    CHECK(pair.transverse->rows == 32);
    for (auto px : pair.coronal.data) CHECK(px <= 1);
    CHECK_FALSE(extract_slices(e, 32, false).transverse);
    LabelVolume empty({4, 4, 4}, {1, 1, 1});
    CHECK_THROWS_WITH(extract_slices(empty, 8), "empty segmentation");
}

TEST_CASE("rotation augmentation") {
    auto v = blob(9);
    CHECK(augment_rotate(v, 0.0, 3) == v);
    CHECK(augment_rotate(v, 15.0, 3) == augment_rotate(v, 15.0, 3));
    for (std::uint64_t s = 0; s < 10; ++s) {
        auto r = augment_rotate(v, 15.0, s);
        const double ratio = double(r.foreground_count()) / double(v.foreground_count());
        CHECK(std::abs(ratio - 1.0) < 0.03);
    }
}
