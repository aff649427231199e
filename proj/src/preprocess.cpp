#include "slicevol/preprocess.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <vector>

#include "slicevol/error.hpp"

namespace slicevol {

void CanonicalGrid::validate() const {
    for (int d : dims)
        if (d <= 0) throw ConfigError("grid dims must be positive");
    for (double s : voxel_size_mm)
        if (!(s > 0.0)) throw ConfigError("grid spacing must be positive");
}

LabelVolume resample_isotropic(const LabelVolume& vol, const Spacing3& target_mm) {
    for (double t : target_mm)
        if (!(t > 0.0)) throw ConfigError("target spacing must be positive");
    if (vol.voxel_size_mm() == target_mm) return vol;

    const auto& d = vol.dims();
    const auto& sp = vol.voxel_size_mm();
    Dims3 out_dims{};
    std::array<std::vector<int>, 3> src;
    for (int a = 0; a < 3; ++a) {
        out_dims[a] = std::max(1, static_cast<int>(std::lround(d[a] * sp[a] / target_mm[a])));
        src[a].resize(static_cast<std::size_t>(out_dims[a]));
        for (int j = 0; j < out_dims[a]; ++j) {
            const int i = static_cast<int>(std::floor((j + 0.5) * target_mm[a] / sp[a]));
            src[a][static_cast<std::size_t>(j)] = std::clamp(i, 0, std::max(0, d[a] - 1));
        }
    }
    LabelVolume out(out_dims, target_mm, vol.case_id());
    if (vol.size() == 0) return out;
    for (int z = 0; z < out_dims[0]; ++z)
        for (int y = 0; y < out_dims[1]; ++y) {
            const std::uint8_t* in_row = vol.data().data() + vol.index(src[0][z], src[1][y], 0);
            std::uint8_t* out_row = out.data().data() + out.index(z, y, 0);
            for (int x = 0; x < out_dims[2]; ++x) out_row[x] = in_row[src[2][x]];
        }
    return out;
}

LabelVolume canonicalize(const LabelVolume& vol, const CanonicalGrid& grid) {
    grid.validate();
    for (int a = 0; a < 3; ++a)
        if (std::abs(vol.voxel_size_mm()[a] - grid.voxel_size_mm[a]) > 1e-6)
            throw DataError("spacing mismatch: resample before canonicalizing");
    LabelVolume out(grid.dims, grid.voxel_size_mm, vol.case_id());
    const auto centroid = foreground_centroid(vol);
    if (!centroid) return out;
    const BoundingBox box = foreground_bbox(vol);
    std::array<int, 3> shift{};
    for (int a = 0; a < 3; ++a) {
        const double centre = 0.5 * (grid.dims[a] - 1);
        shift[a] = static_cast<int>(std::lround(centre - (*centroid)[a]));
        if (box.lo[a] + shift[a] < 0 || box.hi[a] + shift[a] >= grid.dims[a]) throw DataError("grid overflow");
    }
    for (int z = box.lo[0]; z <= box.hi[0]; ++z)
        for (int y = box.lo[1]; y <= box.hi[1]; ++y) {
            const std::uint8_t* in_row = vol.data().data() + vol.index(z, y, 0);
            std::uint8_t* out_row = out.data().data() + out.index(z + shift[0], y + shift[1], 0);
            for (int x = box.lo[2]; x <= box.hi[2]; ++x) out_row[x + shift[2]] = in_row[x];
        }
    return out;
}

LabelVolume mode_filter_coronal(const LabelVolume& vol, int k) {
    if (k < 1 || k % 2 == 0) throw ConfigError("invalid kernel");
    const auto& d = vol.dims();
    const int nz = d[0], ny = d[1], nx = d[2];
    const int h = k / 2;
    const int majority = k * k / 2;  // strictly more than half of k*k
    LabelVolume out(d, vol.voxel_size_mm(), vol.case_id());
    // summed-area table over the (z, x) plane of each coronal slice
    std::vector<int> sat(static_cast<std::size_t>(nz + 1) * (nx + 1));
    auto S = [&](int z, int x) -> int& { return sat[static_cast<std::size_t>(z) * (nx + 1) + x]; };
    for (int y = 0; y < ny; ++y) {
        for (int z = 0; z < nz; ++z) {
            int rowsum = 0;
            for (int x = 0; x < nx; ++x) {
                rowsum += vol.at(z, y, x) ? 1 : 0;
                S(z + 1, x + 1) = S(z, x + 1) + rowsum;
            }
        }
        for (int z = 0; z < nz; ++z) {
            const int z0 = std::max(0, z - h), z1 = std::min(nz, z + h + 1);
            for (int x = 0; x < nx; ++x) {
                const int x0 = std::max(0, x - h), x1 = std::min(nx, x + h + 1);
                const int ones = S(z1, x1) - S(z0, x1) - S(z1, x0) + S(z0, x0);
                if (ones > majority) out.set(z, y, x, 1);
            }
        }
    }
    return out;
}

int select_slice(const LabelVolume& vol, int axis) {
    if (axis != 0 && axis != 1) throw ConfigError("slice axis must be 0 (z) or 1 (y)");
    const auto centroid = foreground_centroid(vol);
    if (!centroid) throw DataError("empty segmentation");
    const auto& d = vol.dims();
    std::vector<std::size_t> area(static_cast<std::size_t>(d[axis]), 0);
    for (int z = 0; z < d[0]; ++z)
        for (int y = 0; y < d[1]; ++y) {
            const std::uint8_t* row = vol.data().data() + vol.index(z, y, 0);
            std::size_t n = 0;
            for (int x = 0; x < d[2]; ++x) n += row[x] ? 1 : 0;
            area[static_cast<std::size_t>(axis == 0 ? z : y)] += n;
        }
    const double c = (*centroid)[axis];
    int best = 0;
    for (int i = 1; i < d[axis]; ++i) {
        const auto ai = area[static_cast<std::size_t>(i)], ab = area[static_cast<std::size_t>(best)];
        if (ai > ab || (ai == ab && std::abs(i - c) < std::abs(best - c))) best = i;
    }
    return best;
}

Image2D resize_nearest(const Image2D& img, int rows, int cols) {
    if (rows <= 0 || cols <= 0) throw ConfigError("output size must be positive");
    Image2D out(rows, cols);
    for (int r = 0; r < rows; ++r) {
        const int sr = std::min(img.rows - 1, static_cast<int>(static_cast<long long>(2 * r + 1) * img.rows / (2 * rows)));
        for (int c = 0; c < cols; ++c) {
            const int sc = std::min(img.cols - 1, static_cast<int>(static_cast<long long>(2 * c + 1) * img.cols / (2 * cols)));
            out.at(r, c) = img.at(sr, sc);
        }
    }
    return out;
}

SlicePair extract_slices(const LabelVolume& vol, int out_size, bool dual) {
    if (out_size <= 0) throw ConfigError("output size must be positive");
    const auto& d = vol.dims();
    const int yc = select_slice(vol, 1);
    Image2D coronal(d[0], d[2]);
    for (int z = 0; z < d[0]; ++z)
        for (int x = 0; x < d[2]; ++x) coronal.at(z, x) = vol.at(z, yc, x);
    SlicePair pair;
    pair.case_id = vol.case_id();
    pair.coronal = resize_nearest(coronal, out_size, out_size);
    if (dual) {
        const int zc = select_slice(vol, 0);
        Image2D transverse(d[1], d[2]);
        for (int y = 0; y < d[1]; ++y)
            for (int x = 0; x < d[2]; ++x) transverse.at(y, x) = vol.at(zc, y, x);
        pair.transverse = resize_nearest(transverse, out_size, out_size);
    }
    return pair;
}

LabelVolume rotate_about_centroid(const LabelVolume& vol, const std::array<double, 3>& angles_deg) {
    if (angles_deg == std::array<double, 3>{0.0, 0.0, 0.0}) return vol;
    const auto centroid = foreground_centroid(vol);
    if (!centroid) return vol;
    const auto& d = vol.dims();
    const auto& sp = vol.voxel_size_mm();
    constexpr double deg = std::numbers::pi / 180.0;
    const double a = angles_deg[0] * deg, b = angles_deg[1] * deg, c = angles_deg[2] * deg;
    // R = Rz(a) Ry(b) Rx(c) acting on physical (x, y, z)
    const double ca = std::cos(a), sa = std::sin(a), cb = std::cos(b), sb = std::sin(b), cc = std::cos(c), sc = std::sin(c);
    const double R[3][3] = {{ca * cb, ca * sb * sc - sa * cc, ca * sb * cc + sa * sc},
                            {sa * cb, sa * sb * sc + ca * cc, sa * sb * cc - ca * sc},
                            {-sb, cb * sc, cb * cc}};
    const double cx = (*centroid)[2] * sp[2], cy = (*centroid)[1] * sp[1], cz = (*centroid)[0] * sp[0];

    // Only output voxels inside the rotated foreground box can be set.
    const BoundingBox box = foreground_bbox(vol);
    std::array<double, 3> lo{1e300, 1e300, 1e300}, hi{-1e300, -1e300, -1e300};  // x, y, z in mm
    for (int corner = 0; corner < 8; ++corner) {
        const double px = ((corner & 1) ? box.hi[2] + 0.5 : box.lo[2] - 0.5) * sp[2] - cx;
        const double py = ((corner & 2) ? box.hi[1] + 0.5 : box.lo[1] - 0.5) * sp[1] - cy;
        const double pz = ((corner & 4) ? box.hi[0] + 0.5 : box.lo[0] - 0.5) * sp[0] - cz;
        const double w[3] = {R[0][0] * px + R[0][1] * py + R[0][2] * pz, R[1][0] * px + R[1][1] * py + R[1][2] * pz,
                             R[2][0] * px + R[2][1] * py + R[2][2] * pz};
        for (int i = 0; i < 3; ++i) {
            lo[static_cast<std::size_t>(i)] = std::min(lo[static_cast<std::size_t>(i)], w[i]);
            hi[static_cast<std::size_t>(i)] = std::max(hi[static_cast<std::size_t>(i)], w[i]);
        }
    }
    auto index_range = [&](int axis_zyx, int xyz, double centre) {
        const int i0 = std::max(0, static_cast<int>(std::floor((lo[static_cast<std::size_t>(xyz)] + centre) / sp[axis_zyx])) - 1);
        const int i1 = std::min(d[axis_zyx] - 1, static_cast<int>(std::ceil((hi[static_cast<std::size_t>(xyz)] + centre) / sp[axis_zyx])) + 1);
        return std::pair{i0, i1};
    };
    const auto [z0, z1] = index_range(0, 2, cz);
    const auto [y0, y1] = index_range(1, 1, cy);
    const auto [x0, x1] = index_range(2, 0, cx);

    LabelVolume out(d, sp, vol.case_id());
    for (int z = z0; z <= z1; ++z) {
        const double wz = z * sp[0] - cz;
        for (int y = y0; y <= y1; ++y) {
            const double wy = y * sp[1] - cy;
            std::uint8_t* out_row = out.data().data() + out.index(z, y, 0);
            for (int x = x0; x <= x1; ++x) {
                const double wx = x * sp[2] - cx;
                // inverse map: source = R^T * (p - c) + c
                const double sx = R[0][0] * wx + R[1][0] * wy + R[2][0] * wz + cx;
                const double sy = R[0][1] * wx + R[1][1] * wy + R[2][1] * wz + cy;
                const double sz = R[0][2] * wx + R[1][2] * wy + R[2][2] * wz + cz;
                const int ix = static_cast<int>(std::lround(sx / sp[2]));
                const int iy = static_cast<int>(std::lround(sy / sp[1]));
                const int iz = static_cast<int>(std::lround(sz / sp[0]));
                if (vol.in_bounds(iz, iy, ix)) out_row[x] = vol.at(iz, iy, ix);
            }
        }
    }
    return out;
}

LabelVolume augment_rotate(const LabelVolume& vol, double max_deg, std::uint64_t seed) {
    if (max_deg < 0.0) throw ConfigError("max_deg must be nonnegative");
    if (max_deg == 0.0) return vol;
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-max_deg, max_deg);
    std::array<double, 3> angles{};
    for (double& a : angles) a = u(rng);
    return rotate_about_centroid(vol, angles);
}

LabelVolume preprocess_volume(const LabelVolume& raw, const PreprocessOptions& opts) {
    auto iso = resample_isotropic(raw, opts.grid.voxel_size_mm);
    auto canon = canonicalize(iso, opts.grid);
    return mode_filter_coronal(canon, opts.mode_filter_size);
}

} // namespace slicevol
