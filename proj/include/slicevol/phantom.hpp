#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "slicevol/volume.hpp"

namespace slicevol {

/// Shape controls for one synthetic spleen-like phantom.
///
/// The body is a superellipsoid |x/rx|^e + |y/ry|^e + |z/rz|^e <= 1 in a local
/// frame centred on the grid. Cross-sections are shifted along a seeded
/// direction by a quadratic bend field and scaled by a linear taper along z,
/// then the whole body is rotated by `rotation_deg` (about z, then y, then x).
struct PhantomParams {
    std::array<double, 3> base_semi_axes_mm{30.0, 20.0, 40.0}; // (rx, ry, rz)
    double exponent = 2.0;
    double bend_strength = 0.0;  // [0, 1]
    double taper_strength = 0.0; // [0, 1]
    double lobulation = 0.0;     // [0, 0.2], seeded low-frequency surface ripple
    std::array<double, 3> rotation_deg{0.0, 0.0, 0.0};
    Dims3 grid_dims{64, 64, 64};
    Spacing3 voxel_size_mm{1.0, 1.0, 1.0};
    std::optional<double> target_volume_mL;

    void validate() const;
};

/// Clinical-style manual measurements in mm: length L (superior-inferior),
/// maximal transverse width W and thickness Th perpendicular to W.
struct ManualMeasurements {
    double length_mm = 0.0;
    double max_width_mm = 0.0;
    double thickness_at_hilum_mm = 0.0;
};

struct CaseRecord {
    std::string case_id;
    double volume_mL = 0.0;
    bool splenomegaly = false;
    ManualMeasurements measurements;
    std::optional<int> fold;
};

inline bool is_splenomegaly(double volume_mL) { return volume_mL > kSplenomegalyThresholdMl; }

/// Voxelizes a phantom. Deterministic in (params, seed). Throws DataError
/// "grid overflow" when the body touches the grid border and "target
/// infeasible" when a requested volume cannot be met within 5%.
LabelVolume generate_phantom(const PhantomParams& params, std::uint64_t seed);

/// Foreground voxel count times cell volume, in mL.
double voxel_volume(const LabelVolume& vol);

/// L from the number of occupied transverse slices, W as the largest
/// pixel-centre distance within any transverse slice, Th as the extent of that
/// slice perpendicular to the W chord. Throws "empty segmentation".
ManualMeasurements manual_measurements(const LabelVolume& vol);

/// Controls for a synthetic cohort.
struct DatasetConfig {
    int n = 149;
    double splenomegaly_fraction = 36.0 / 149.0;
    std::array<double, 2> normal_volume_range_mL{90.0, 300.0};
    std::array<double, 2> splenomegaly_volume_range_mL{320.0, 1650.0};
    double splenomegaly_mean_mL = 1004.75;
    double splenomegaly_sd_mL = 644.27;
    Dims3 grid_dims{82, 186, 176};
    Spacing3 voxel_size_mm{2.0, 1.0, 1.0};
    double max_bend = 0.5;
    double max_taper = 0.4;
    double max_rotation_deg = 10.0;
    double max_lobulation = 0.06;
    std::array<double, 2> exponent_range{1.8, 2.6};
    /// Plain axis-aligned ellipsoids (exponent 2, no deformation, no rotation).
    bool pure_ellipsoids = false;
    std::uint64_t seed = 0;

    void validate() const;
};

struct DatasetCase {
    LabelVolume volume;
    CaseRecord record;
};

/// Builds the cohort in memory. Exactly round(n * fraction) cases end up with
/// a voxelized volume above the splenomegaly threshold.
std::vector<DatasetCase> make_dataset_cases(const DatasetConfig& cfg);

/// Builds the cohort and writes `<dir>/volumes/<case_id>.seg3d` plus
/// `<dir>/manifest.csv`. Returns the records in manifest order.
std::vector<CaseRecord> make_dataset(const DatasetConfig& cfg, const std::filesystem::path& dir);

} // namespace slicevol
