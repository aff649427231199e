#pragma once

#include <cstdint>

#include "slicevol/volume.hpp"

namespace slicevol {

/// Fixed output grid for centroid-aligned masks.
struct CanonicalGrid {
    Dims3 dims{164, 186, 176};
    Spacing3 voxel_size_mm{1.0, 1.0, 1.0};
    void validate() const;
};

/// Nearest-neighbour resampling to `target_mm` spacing. Output dims are
/// round(extent / target) per axis (at least 1).
LabelVolume resample_isotropic(const LabelVolume& vol, const Spacing3& target_mm);

/// Translates the mask so its centroid lands on the grid centre and pads or
/// crops empty space to grid.dims. Throws "grid overflow" if the foreground
/// would not fit. The input spacing must equal the grid spacing.
LabelVolume canonicalize(const LabelVolume& vol, const CanonicalGrid& grid);

/// Per-coronal-slice (fixed y) k x k majority filter with zero padding.
/// Throws "invalid kernel" for even or nonpositive k.
LabelVolume mode_filter_coronal(const LabelVolume& vol, int k = 7);

/// Picks the coronal (fixed y) and, when `dual`, transverse (fixed z) slices of
/// largest foreground area; ties go to the index nearest the centroid, then the
/// lower index. Each is nearest-neighbour resampled to out_size x out_size.
SlicePair extract_slices(const LabelVolume& vol, int out_size = 224, bool dual = true);

/// Index of the largest-area slice along `axis` (0 = transverse/z,
/// 1 = coronal/y) using the tie rule of extract_slices.
int select_slice(const LabelVolume& vol, int axis);

/// Nearest-neighbour resize of a binary image.
Image2D resize_nearest(const Image2D& img, int rows, int cols);

/// Rotates the mask about its centroid by three angles drawn uniformly from
/// [-max_deg, max_deg] (about z, y, x), by inverse nearest-neighbour mapping.
LabelVolume augment_rotate(const LabelVolume& vol, double max_deg, std::uint64_t seed);

/// Same, with explicit angles in degrees (about z, y, x).
LabelVolume rotate_about_centroid(const LabelVolume& vol, const std::array<double, 3>& angles_deg);

/// Resample + canonicalize + mode filter; the 3D part of the pipeline.
struct PreprocessOptions {
    CanonicalGrid grid;
    int mode_filter_size = 7;
    int image_size = 224;
};
LabelVolume preprocess_volume(const LabelVolume& raw, const PreprocessOptions& opts);

} // namespace slicevol
