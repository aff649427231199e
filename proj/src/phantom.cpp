#include "slicevol/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "slicevol/error.hpp"
#include "slicevol/io.hpp"
#include "slicevol/parallel.hpp"

namespace slicevol {

namespace {

constexpr double kDeg = std::numbers::pi / 180.0;

struct Mat3 {
    std::array<std::array<double, 3>, 3> m{};
};

Mat3 mul(const Mat3& a, const Mat3& b) {
    Mat3 r;
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) {
            double s = 0.0;
            for (int k = 0; k < 3; ++k) s += a.m[i][k] * b.m[k][j];
            r.m[i][j] = s;
        }
    return r;
}

// Rotation in (x, y, z) vector space: Rz * Ry * Rx.
Mat3 rotation_xyz(const std::array<double, 3>& deg_zyx) {
    const double a = deg_zyx[0] * kDeg, b = deg_zyx[1] * kDeg, c = deg_zyx[2] * kDeg;
    Mat3 rz{{{{std::cos(a), -std::sin(a), 0}, {std::sin(a), std::cos(a), 0}, {0, 0, 1}}}};
    Mat3 ry{{{{std::cos(b), 0, std::sin(b)}, {0, 1, 0}, {-std::sin(b), 0, std::cos(b)}}}};
    Mat3 rx{{{{1, 0, 0}, {0, std::cos(c), -std::sin(c)}, {0, std::sin(c), std::cos(c)}}}};
    return mul(rz, mul(ry, rx));
}

struct ShapeField {
    std::array<double, 3> r;  // rx, ry, rz
    double e;
    double bend, taper, lob;
    double bend_dir_cos, bend_dir_sin;
    double phase1, phase2;
    Mat3 rot;  // local -> world

    bool inside(double wx, double wy, double wz) const {
        // world -> local is the transpose
        const double qx = rot.m[0][0] * wx + rot.m[1][0] * wy + rot.m[2][0] * wz;
        const double qy = rot.m[0][1] * wx + rot.m[1][1] * wy + rot.m[2][1] * wz;
        const double qz = rot.m[0][2] * wx + rot.m[1][2] * wy + rot.m[2][2] * wz;
        const double t = qz / r[2];
        if (t < -1.5 || t > 1.5) return false;
        double px = qx - bend * 0.6 * r[0] * t * t * bend_dir_cos;
        double py = qy - bend * 0.6 * r[1] * t * t * bend_dir_sin;
        const double s = std::max(0.2, 1.0 + 0.5 * taper * t);
        px /= s * r[0];
        py /= s * r[1];
        double f;
        if (e == 2.0)
            f = px * px + py * py + t * t;
        else
            f = std::pow(std::abs(px), e) + std::pow(std::abs(py), e) + std::pow(std::abs(t), e);
        double limit = 1.0;
        if (lob > 0.0) limit += lob * std::sin(3.0 * std::atan2(py, px) + phase1) * std::cos(std::numbers::pi * t + phase2);
        return f <= limit;
    }

    double bounding_radius() const {
        const double norm = std::sqrt(r[0] * r[0] + r[1] * r[1] + r[2] * r[2]);
        return norm * (1.0 + 0.6 * bend) * (1.0 + 0.5 * taper) * (1.0 + lob) + 1e-9;
    }
};

// Fills `vol` with the field; returns true when the body touches the border.
bool voxelize(const ShapeField& f, LabelVolume& vol) {
    std::fill(vol.data().begin(), vol.data().end(), std::uint8_t{0});
    const auto& d = vol.dims();
    const auto& sp = vol.voxel_size_mm();
    const double cz = 0.5 * (d[0] - 1) * sp[0], cy = 0.5 * (d[1] - 1) * sp[1], cx = 0.5 * (d[2] - 1) * sp[2];
    const double R = f.bounding_radius();
    auto range = [&](int axis, double c) {
        const int lo = std::max(0, static_cast<int>(std::floor((c - R) / sp[axis])));
        const int hi = std::min(d[axis] - 1, static_cast<int>(std::ceil((c + R) / sp[axis])));
        return std::pair{lo, hi};
    };
    const auto [z0, z1] = range(0, cz);
    const auto [y0, y1] = range(1, cy);
    const auto [x0, x1] = range(2, cx);
    bool touches = false;
    for (int z = z0; z <= z1; ++z) {
        const double wz = z * sp[0] - cz;
        for (int y = y0; y <= y1; ++y) {
            const double wy = y * sp[1] - cy;
            std::uint8_t* row = vol.data().data() + vol.index(z, y, 0);
            for (int x = x0; x <= x1; ++x) {
                if (!f.inside(x * sp[2] - cx, wy, wz)) continue;
                row[x] = 1;
                if (z == 0 || y == 0 || x == 0 || z == d[0] - 1 || y == d[1] - 1 || x == d[2] - 1) touches = true;
            }
        }
    }
    return touches;
}

} // namespace

void PhantomParams::validate() const {
    for (double r : base_semi_axes_mm)
        if (!(r > 0.0)) throw ConfigError("semi-axes must be positive");
    if (!(exponent > 0.0)) throw ConfigError("exponent must be positive");
    if (bend_strength < 0.0 || bend_strength > 1.0) throw ConfigError("bend_strength outside [0,1]");
    if (taper_strength < 0.0 || taper_strength > 1.0) throw ConfigError("taper_strength outside [0,1]");
    if (lobulation < 0.0 || lobulation > 0.2) throw ConfigError("lobulation outside [0,0.2]");
    for (int d : grid_dims)
        if (d <= 0) throw ConfigError("grid dims must be positive");
    for (double s : voxel_size_mm)
        if (!(s > 0.0)) throw ConfigError("voxel size must be positive");
    if (target_volume_mL && !(*target_volume_mL > 0.0)) throw ConfigError("target volume must be positive");
}

LabelVolume generate_phantom(const PhantomParams& params, std::uint64_t seed) {
    params.validate();
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> uni(0.0, 2.0 * std::numbers::pi);
    const double bend_dir = uni(rng);
    ShapeField f{params.base_semi_axes_mm,
                 params.exponent,
                 params.bend_strength,
                 params.taper_strength,
                 params.lobulation,
                 std::cos(bend_dir),
                 std::sin(bend_dir),
                 uni(rng),
                 uni(rng),
                 rotation_xyz(params.rotation_deg)};

    LabelVolume vol(params.grid_dims, params.voxel_size_mm);
    bool touches = voxelize(f, vol);

    if (params.target_volume_mL) {
        const double target = *params.target_volume_mL;
        const double grid_mL = static_cast<double>(vol.size()) * vol.cell_volume_mm3() / 1000.0;
        if (target >= grid_mL || target < 8.0 * vol.cell_volume_mm3() / 1000.0) throw DataError("target infeasible");
        double current = voxel_volume(vol);
        for (int iter = 0; iter < 16 && std::abs(current - target) > 0.005 * target; ++iter) {
            const double k = current > 0.0 ? std::cbrt(target / current) : 2.0;
            for (double& r : f.r) r *= k;
            touches = voxelize(f, vol);
            current = voxel_volume(vol);
        }
        if (std::abs(current - target) > 0.05 * target) {
            if (touches) throw DataError("grid overflow");
            throw DataError("target infeasible");
        }
    }
    if (touches) throw DataError("grid overflow");
    return vol;
}

double voxel_volume(const LabelVolume& vol) {
    return static_cast<double>(vol.foreground_count()) * vol.cell_volume_mm3() / 1000.0;
}

namespace {

struct Pt {
    double a, b;
};

double cross(const Pt& o, const Pt& p, const Pt& q) { return (p.a - o.a) * (q.b - o.b) - (p.b - o.b) * (q.a - o.a); }

// Andrew's monotone chain; input is consumed.
std::vector<Pt> convex_hull(std::vector<Pt> pts) {
    std::sort(pts.begin(), pts.end(), [](const Pt& l, const Pt& r) { return l.a < r.a || (l.a == r.a && l.b < r.b); });
    pts.erase(std::unique(pts.begin(), pts.end(), [](const Pt& l, const Pt& r) { return l.a == r.a && l.b == r.b; }),
              pts.end());
    if (pts.size() < 3) return pts;
    std::vector<Pt> hull(2 * pts.size());
    std::size_t k = 0;
    for (const auto& p : pts) {
        while (k >= 2 && cross(hull[k - 2], hull[k - 1], p) <= 0) --k;
        hull[k++] = p;
    }
    for (std::size_t i = pts.size() - 1, t = k + 1; i-- > 0;) {
        while (k >= t && cross(hull[k - 2], hull[k - 1], pts[i]) <= 0) --k;
        hull[k++] = pts[i];
    }
    hull.resize(k - 1);
    return hull;
}

} // namespace

ManualMeasurements manual_measurements(const LabelVolume& vol) {
    const auto& d = vol.dims();
    const auto& sp = vol.voxel_size_mm();
    int occupied = 0;
    double best_w = -1.0;
    double best_th = 0.0;
    std::vector<Pt> pts;
    for (int z = 0; z < d[0]; ++z) {
        pts.clear();
        for (int y = 0; y < d[1]; ++y) {
            const std::uint8_t* row = vol.data().data() + vol.index(z, y, 0);
            // only the row extremes can be hull vertices
            int first = -1, last = -1;
            for (int x = 0; x < d[2]; ++x)
                if (row[x]) {
                    if (first < 0) first = x;
                    last = x;
                }
            if (first < 0) continue;
            pts.push_back({y * sp[1], first * sp[2]});
            if (last != first) pts.push_back({y * sp[1], last * sp[2]});
        }
        if (pts.empty()) continue;
        ++occupied;
        const auto hull = convex_hull(pts);
        double w2 = 0.0;
        Pt pa = hull[0], pb = hull[0];
        for (std::size_t i = 0; i < hull.size(); ++i)
            for (std::size_t j = i + 1; j < hull.size(); ++j) {
                const double da = hull[i].a - hull[j].a, db = hull[i].b - hull[j].b;
                const double dd = da * da + db * db;
                if (dd > w2) {
                    w2 = dd;
                    pa = hull[i];
                    pb = hull[j];
                }
            }
        const double w = std::sqrt(w2);
        if (w <= best_w) continue;
        best_w = w;
        best_th = 0.0;
        if (w > 0.0) {
            const double na = -(pb.b - pa.b) / w, nb = (pb.a - pa.a) / w;
            double lo = 1e300, hi = -1e300;
            for (const auto& p : hull) {
                const double s = p.a * na + p.b * nb;
                lo = std::min(lo, s);
                hi = std::max(hi, s);
            }
            best_th = hi - lo;
        }
    }
    if (occupied == 0) throw DataError("empty segmentation");
    return {occupied * sp[0], best_w, best_th};
}

void DatasetConfig::validate() const {
    if (n <= 0) throw ConfigError("invalid size");
    if (splenomegaly_fraction < 0.0 || splenomegaly_fraction > 1.0)
        throw ConfigError("splenomegaly_fraction outside [0,1]");
    if (!(normal_volume_range_mL[0] > 0.0) || normal_volume_range_mL[1] < normal_volume_range_mL[0] ||
        normal_volume_range_mL[1] > kSplenomegalyThresholdMl)
        throw ConfigError("normal volume range must lie in (0, 314.5]");
    if (splenomegaly_volume_range_mL[0] <= kSplenomegalyThresholdMl ||
        splenomegaly_volume_range_mL[1] < splenomegaly_volume_range_mL[0])
        throw ConfigError("splenomegaly volume range must lie above 314.5");
    for (int d : grid_dims)
        if (d <= 0) throw ConfigError("grid dims must be positive");
    for (double s : voxel_size_mm)
        if (!(s > 0.0)) throw ConfigError("voxel size must be positive");
    if (exponent_range[0] <= 0.0 || exponent_range[1] < exponent_range[0]) throw ConfigError("bad exponent range");
}

namespace {

std::string case_name(int i) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "case_%04d", i);
    return buf;
}

double draw_volume(bool spleno, const DatasetConfig& cfg, std::mt19937_64& rng) {
    if (!spleno) {
        std::uniform_real_distribution<double> u(cfg.normal_volume_range_mL[0], cfg.normal_volume_range_mL[1]);
        return u(rng);
    }
    const auto [lo, hi] = cfg.splenomegaly_volume_range_mL;
    std::normal_distribution<double> g(cfg.splenomegaly_mean_mL, cfg.splenomegaly_sd_mL);
    for (int i = 0; i < 1000; ++i) {
        const double v = g(rng);
        if (v >= lo && v <= hi) return v;
    }
    return std::uniform_real_distribution<double>(lo, hi)(rng);
}

// The body must still fit, with `margin_mm` to spare, once its centroid is
// moved to the grid centre (as canonicalization does).
bool fits_centred(const LabelVolume& vol, double margin_mm) {
    const auto c = foreground_centroid(vol);
    if (!c) return false;
    const BoundingBox box = foreground_bbox(vol);
    for (int a = 0; a < 3; ++a) {
        const double h = vol.voxel_size_mm()[a];
        const double reach = std::max((*c)[a] - box.lo[a], box.hi[a] - (*c)[a]) * h;
        if (reach + margin_mm > 0.5 * (vol.dims()[a] - 1) * h) return false;
    }
    return true;
}

DatasetCase make_case(const DatasetConfig& cfg, int index, bool spleno) {
    std::seed_seq seq{static_cast<std::uint32_t>(cfg.seed), static_cast<std::uint32_t>(cfg.seed >> 32),
                      static_cast<std::uint32_t>(index), 0x5eedu};
    std::mt19937_64 rng(seq);
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    auto uni = [&](double lo, double hi) { return lo + (hi - lo) * u01(rng); };

    // Proportions relative to the grid's physical half extents so the largest
    // cohort members still fit once rescaled to their target volume.
    const double hz = 0.5 * cfg.grid_dims[0] * cfg.voxel_size_mm[0];
    const double hy = 0.5 * cfg.grid_dims[1] * cfg.voxel_size_mm[1];
    const double hx = 0.5 * cfg.grid_dims[2] * cfg.voxel_size_mm[2];

    for (int attempt = 0; attempt < 40; ++attempt) {
        const double target = draw_volume(spleno, cfg, rng);
        const double shrink = std::pow(0.85, attempt / 4);
        PhantomParams p;
        p.grid_dims = cfg.grid_dims;
        p.voxel_size_mm = cfg.voxel_size_mm;
        p.target_volume_mL = target;
        p.base_semi_axes_mm = {hx * uni(0.55, 0.9), hy * uni(0.4, 0.75), hz * uni(0.6, 0.9)};
        if (!cfg.pure_ellipsoids) {
            p.exponent = uni(cfg.exponent_range[0], cfg.exponent_range[1]);
            p.bend_strength = uni(0.0, cfg.max_bend) * shrink;
            p.taper_strength = uni(0.0, cfg.max_taper) * shrink;
            p.lobulation = uni(0.0, cfg.max_lobulation) * shrink;
            const double rot = cfg.max_rotation_deg * shrink;
            p.rotation_deg = {uni(-rot, rot), uni(-rot, rot), uni(-rot, rot)};
        }
        const std::uint64_t shape_seed = rng();
        try {
            DatasetCase c;
            c.volume = generate_phantom(p, shape_seed);
            const double v = voxel_volume(c.volume);
            if (is_splenomegaly(v) != spleno) continue;
            if (!fits_centred(c.volume, 6.0)) continue;
            c.volume.set_case_id(case_name(index));
            c.record.case_id = c.volume.case_id();
            c.record.volume_mL = v;
            c.record.splenomegaly = spleno;
            c.record.measurements = manual_measurements(c.volume);
            return c;
        } catch (const DataError&) {
            continue;
        }
    }
    throw DataError("could not place phantom " + case_name(index) + " inside the grid");
}

} // namespace

namespace {

std::vector<char> cohort_flags(const DatasetConfig& cfg) {
    const int n_spleno = static_cast<int>(std::lround(cfg.n * cfg.splenomegaly_fraction));
    std::vector<char> spleno(static_cast<std::size_t>(cfg.n), 0);
    std::fill_n(spleno.begin(), n_spleno, 1);
    std::mt19937_64 rng(cfg.seed);
    std::shuffle(spleno.begin(), spleno.end(), rng);
    return spleno;
}

} // namespace

std::vector<DatasetCase> make_dataset_cases(const DatasetConfig& cfg) {
    cfg.validate();
    const auto spleno = cohort_flags(cfg);
    std::vector<DatasetCase> cases(spleno.size());
    parallel_for(cases.size(), [&](std::size_t i) { cases[i] = make_case(cfg, static_cast<int>(i), spleno[i] != 0); });
    return cases;
}

std::vector<CaseRecord> make_dataset(const DatasetConfig& cfg, const std::filesystem::path& dir) {
    cfg.validate();
    const auto spleno = cohort_flags(cfg);
    std::vector<CaseRecord> records(spleno.size());
    parallel_for(records.size(), [&](std::size_t i) {
        auto c = make_case(cfg, static_cast<int>(i), spleno[i] != 0);
        io::write_seg3d(c.volume, dir / "volumes" / (c.record.case_id + ".seg3d"));
        records[i] = std::move(c.record);
    });
    io::write_manifest(records, dir / "manifest.csv");
    return records;
}

} // namespace slicevol
