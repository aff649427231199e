#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "slicevol/phantom.hpp"
#include "slicevol/volume.hpp"

namespace slicevol::io {

namespace fs = std::filesystem;

/// `.seg3d`: gzip-compressed uint8 voxels, row-major [z,y,x], with a
/// `<file>.json` sidecar {case_id, dims:[z,y,x], voxel_size_mm:[z,y,x]}.
void write_seg3d(const LabelVolume& vol, const fs::path& path);
LabelVolume read_seg3d(const fs::path& path);

/// `.slice2d`: same raw+JSON scheme with dims [views,H,W]. View 0 is
/// coronal, view 1 (if present) transverse.
void write_slice2d(const SlicePair& pair, const fs::path& path);
SlicePair read_slice2d(const fs::path& path);

/// 8-bit greyscale PNG (0/255) of a binary image.
void write_png(const Image2D& img, const fs::path& path);

/// manifest.csv: case_id,volume_mL,splenomegaly,L_mm,W_mm,Th_mm,fold
void write_manifest(const std::vector<CaseRecord>& records, const fs::path& path);
std::vector<CaseRecord> read_manifest(const fs::path& path);

/// Fixed-point decimal text with `digits` fractional digits, locale independent.
std::string format_fixed(double v, int digits = 6);

void write_text(const fs::path& path, const std::string& text);
std::string read_text(const fs::path& path);

/// Hex FNV-1a digest of a file's bytes, used for reproducibility checks.
std::string file_digest(const fs::path& path);

/// Splits one CSV line on commas (no quoting; the formats here never need it).
std::vector<std::string> split_csv_line(const std::string& line);

} // namespace slicevol::io
