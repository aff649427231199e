#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace slicevol {

/// Grid extents in [z, y, x] order. z is superior-inferior (transverse
/// slices are fixed-z), y is anterior-posterior (coronal slices are fixed-y),
/// x is left-right.
using Dims3 = std::array<int, 3>;

/// Physical voxel spacing in mm, [z, y, x].
using Spacing3 = std::array<double, 3>;

inline constexpr double kSplenomegalyThresholdMl = 314.5;

/// 3D binary voxel mask with physical spacing. Data is row-major [z][y][x].
class LabelVolume {
public:
    LabelVolume() = default;
    LabelVolume(Dims3 dims, Spacing3 voxel_size_mm, std::string case_id = {});

    const Dims3& dims() const { return dims_; }
    const Spacing3& voxel_size_mm() const { return spacing_; }
    const std::string& case_id() const { return case_id_; }
    void set_case_id(std::string id) { case_id_ = std::move(id); }

    std::size_t size() const { return data_.size(); }
    std::size_t index(int z, int y, int x) const {
        return (static_cast<std::size_t>(z) * dims_[1] + y) * dims_[2] + x;
    }
    bool in_bounds(int z, int y, int x) const {
        return z >= 0 && y >= 0 && x >= 0 && z < dims_[0] && y < dims_[1] && x < dims_[2];
    }

    std::uint8_t at(int z, int y, int x) const { return data_[index(z, y, x)]; }
    void set(int z, int y, int x, std::uint8_t v) { data_[index(z, y, x)] = v; }

    const std::vector<std::uint8_t>& data() const { return data_; }
    std::vector<std::uint8_t>& data() { return data_; }

    /// Voxel cell volume in mm^3.
    double cell_volume_mm3() const { return spacing_[0] * spacing_[1] * spacing_[2]; }

    std::size_t foreground_count() const;

    bool operator==(const LabelVolume& o) const {
        return dims_ == o.dims_ && spacing_ == o.spacing_ && data_ == o.data_;
    }

private:
    Dims3 dims_{0, 0, 0};
    Spacing3 spacing_{1.0, 1.0, 1.0};
    std::string case_id_;
    std::vector<std::uint8_t> data_;
};

/// Inclusive index bounding box of the foreground.
struct BoundingBox {
    Dims3 lo{0, 0, 0};
    Dims3 hi{-1, -1, -1};
    bool empty() const { return hi[0] < lo[0]; }
    int extent(int axis) const { return empty() ? 0 : hi[axis] - lo[axis] + 1; }
};

BoundingBox foreground_bbox(const LabelVolume& vol);

/// Mean foreground voxel index per axis; nullopt for an empty mask.
std::optional<std::array<double, 3>> foreground_centroid(const LabelVolume& vol);

/// 2D binary image, row-major [row][col].
struct Image2D {
    int rows = 0;
    int cols = 0;
    std::vector<std::uint8_t> data;

    Image2D() = default;
    Image2D(int r, int c) : rows(r), cols(c), data(static_cast<std::size_t>(r) * c, 0) {}

    std::uint8_t at(int r, int c) const { return data[static_cast<std::size_t>(r) * cols + c]; }
    std::uint8_t& at(int r, int c) { return data[static_cast<std::size_t>(r) * cols + c]; }
    std::size_t foreground_count() const;
    bool operator==(const Image2D&) const = default;
};

/// Model input: the coronal slice and optionally the transverse slice.
struct SlicePair {
    Image2D coronal;
    std::optional<Image2D> transverse;
    std::string case_id;

    int views() const { return transverse ? 2 : 1; }
    /// Same pair with the transverse view dropped.
    SlicePair single_view() const { return SlicePair{coronal, std::nullopt, case_id}; }
    bool operator==(const SlicePair&) const = default;
};

} // namespace slicevol
