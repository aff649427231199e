#include "slicevol/volume.hpp"

#include <algorithm>
#include <numeric>

#include "slicevol/error.hpp"

namespace slicevol {

LabelVolume::LabelVolume(Dims3 dims, Spacing3 voxel_size_mm, std::string case_id)
    : dims_(dims), spacing_(voxel_size_mm), case_id_(std::move(case_id)) {
    for (int d : dims_)
        if (d < 0) throw DataError("invalid dims");
    for (double s : spacing_)
        if (!(s > 0.0)) throw DataError("nonpositive voxel spacing");
    data_.assign(static_cast<std::size_t>(dims_[0]) * dims_[1] * dims_[2], 0);
}

std::size_t LabelVolume::foreground_count() const {
    return static_cast<std::size_t>(std::count_if(data_.begin(), data_.end(), [](std::uint8_t v) { return v != 0; }));
}

std::size_t Image2D::foreground_count() const {
    return static_cast<std::size_t>(std::count_if(data.begin(), data.end(), [](std::uint8_t v) { return v != 0; }));
}

BoundingBox foreground_bbox(const LabelVolume& vol) {
    BoundingBox box;
    box.lo = vol.dims();
    box.hi = {-1, -1, -1};
    const auto& d = vol.dims();
    for (int z = 0; z < d[0]; ++z)
        for (int y = 0; y < d[1]; ++y) {
            const std::uint8_t* row = vol.data().data() + vol.index(z, y, 0);
            for (int x = 0; x < d[2]; ++x) {
                if (!row[x]) continue;
                box.lo = {std::min(box.lo[0], z), std::min(box.lo[1], y), std::min(box.lo[2], x)};
                box.hi = {std::max(box.hi[0], z), std::max(box.hi[1], y), std::max(box.hi[2], x)};
            }
        }
    if (box.hi[0] < 0) box = BoundingBox{};
    return box;
}

std::optional<std::array<double, 3>> foreground_centroid(const LabelVolume& vol) {
    std::array<double, 3> sum{0.0, 0.0, 0.0};
    std::size_t n = 0;
    const auto& d = vol.dims();
    for (int z = 0; z < d[0]; ++z)
        for (int y = 0; y < d[1]; ++y) {
            const std::uint8_t* row = vol.data().data() + vol.index(z, y, 0);
            for (int x = 0; x < d[2]; ++x) {
                if (!row[x]) continue;
                sum[0] += z;
                sum[1] += y;
                sum[2] += x;
                ++n;
            }
        }
    if (n == 0) return std::nullopt;
    for (double& s : sum) s /= static_cast<double>(n);
    return sum;
}

} // namespace slicevol
