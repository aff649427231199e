#include "slicevol/io.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <png.h>
#include <zlib.h>

#include <json.hpp>

#include "slicevol/error.hpp"

namespace slicevol::io {

using nlohmann::json;

namespace {

fs::path sidecar(const fs::path& p) { return fs::path(p.string() + ".json"); }

void write_gz(const fs::path& path, const std::vector<std::uint8_t>& bytes) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    gzFile f = gzopen(path.string().c_str(), "wb6");
    if (!f) throw DataError("cannot open for writing: " + path.string());
    std::size_t off = 0;
    while (off < bytes.size()) {
        const auto chunk = static_cast<unsigned>(std::min<std::size_t>(bytes.size() - off, 1u << 30));
        if (gzwrite(f, bytes.data() + off, chunk) != static_cast<int>(chunk)) {
            gzclose(f);
            throw DataError("write failed: " + path.string());
        }
        off += chunk;
    }
    if (gzclose(f) != Z_OK) throw DataError("write failed: " + path.string());
}

std::vector<std::uint8_t> read_gz(const fs::path& path, std::size_t expected) {
    gzFile f = gzopen(path.string().c_str(), "rb");
    if (!f) throw DataError("cannot open: " + path.string());
    std::vector<std::uint8_t> out(expected);
    std::size_t off = 0;
    while (off < expected) {
        const auto chunk = static_cast<unsigned>(std::min<std::size_t>(expected - off, 1u << 30));
        const int got = gzread(f, out.data() + off, chunk);
        if (got <= 0) break;
        off += static_cast<std::size_t>(got);
    }
    std::uint8_t extra;
    const bool trailing = gzread(f, &extra, 1) > 0;
    gzclose(f);
    if (off != expected || trailing) throw DataError("payload size mismatch: " + path.string());
    return out;
}

json read_json(const fs::path& path) {
    try {
        return json::parse(read_text(path));
    } catch (const json::exception& e) {
        throw DataError("malformed sidecar " + path.string() + ": " + e.what());
    }
}

void check_binary(const std::vector<std::uint8_t>& v, const fs::path& path) {
    for (auto b : v)
        if (b > 1) throw DataError("non-binary voxel value in " + path.string());
}

} // namespace

void write_seg3d(const LabelVolume& vol, const fs::path& path) {
    write_gz(path, vol.data());
    json meta = {{"case_id", vol.case_id()},
                 {"dims", {vol.dims()[0], vol.dims()[1], vol.dims()[2]}},
                 {"voxel_size_mm", {vol.voxel_size_mm()[0], vol.voxel_size_mm()[1], vol.voxel_size_mm()[2]}}};
    write_text(sidecar(path), meta.dump(2) + "\n");
}

LabelVolume read_seg3d(const fs::path& path) {
    const json meta = read_json(sidecar(path));
    try {
        const auto dims = meta.at("dims").get<std::array<int, 3>>();
        const auto sp = meta.at("voxel_size_mm").get<std::array<double, 3>>();
        LabelVolume vol(dims, sp, meta.at("case_id").get<std::string>());
        vol.data() = read_gz(path, vol.size());
        check_binary(vol.data(), path);
        return vol;
    } catch (const json::exception& e) {
        throw DataError("malformed sidecar " + path.string() + ": " + e.what());
    }
}

void write_slice2d(const SlicePair& pair, const fs::path& path) {
    const int views = pair.views();
    std::vector<std::uint8_t> bytes = pair.coronal.data;
    if (pair.transverse) {
        if (pair.transverse->rows != pair.coronal.rows || pair.transverse->cols != pair.coronal.cols)
            throw DataError("slice views differ in size");
        bytes.insert(bytes.end(), pair.transverse->data.begin(), pair.transverse->data.end());
    }
    write_gz(path, bytes);
    json meta = {{"case_id", pair.case_id},
                 {"dims", {views, pair.coronal.rows, pair.coronal.cols}},
                 {"views", views == 2 ? json{"coronal", "transverse"} : json{"coronal"}}};
    write_text(sidecar(path), meta.dump(2) + "\n");
}

SlicePair read_slice2d(const fs::path& path) {
    const json meta = read_json(sidecar(path));
    std::array<int, 3> dims{};
    SlicePair pair;
    try {
        dims = meta.at("dims").get<std::array<int, 3>>();
        pair.case_id = meta.at("case_id").get<std::string>();
    } catch (const json::exception& e) {
        throw DataError("malformed sidecar " + path.string() + ": " + e.what());
    }
    if (dims[0] < 1 || dims[0] > 2 || dims[1] < 1 || dims[2] < 1) throw DataError("bad slice2d dims: " + path.string());
    const std::size_t plane = static_cast<std::size_t>(dims[1]) * dims[2];
    auto bytes = read_gz(path, plane * dims[0]);
    check_binary(bytes, path);
    pair.coronal = Image2D(dims[1], dims[2]);
    std::copy_n(bytes.begin(), plane, pair.coronal.data.begin());
    if (dims[0] == 2) {
        Image2D t(dims[1], dims[2]);
        std::copy_n(bytes.begin() + static_cast<std::ptrdiff_t>(plane), plane, t.data.begin());
        pair.transverse = std::move(t);
    }
    return pair;
}

void write_png(const Image2D& img, const fs::path& path) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    FILE* fp = std::fopen(path.string().c_str(), "wb");
    if (!fp) throw DataError("cannot open for writing: " + path.string());
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info || setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        std::fclose(fp);
        throw DataError("png encode failed: " + path.string());
    }
    png_init_io(png, fp);
    png_set_IHDR(png, info, static_cast<png_uint_32>(img.cols), static_cast<png_uint_32>(img.rows), 8,
                 PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    std::vector<png_byte> row(static_cast<std::size_t>(img.cols));
    for (int r = 0; r < img.rows; ++r) {
        for (int c = 0; c < img.cols; ++c) row[static_cast<std::size_t>(c)] = img.at(r, c) ? 255 : 0;
        png_write_row(png, row.data());
    }
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
    std::fclose(fp);
}

std::string format_fixed(double v, int digits) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::fixed, digits);
    if (res.ec != std::errc{}) return "nan";
    std::string s(buf, res.ptr);
    if (s == "-0" || s.find_first_not_of("-0.") == std::string::npos) {
        if (!s.empty() && s[0] == '-') s.erase(0, 1);
    }
    return s;
}

void write_manifest(const std::vector<CaseRecord>& records, const fs::path& path) {
    std::ostringstream out;
    out << "case_id,volume_mL,splenomegaly,L_mm,W_mm,Th_mm,fold\n";
    for (const auto& r : records) {
        out << r.case_id << ',' << format_fixed(r.volume_mL) << ',' << (r.splenomegaly ? 1 : 0) << ','
            << format_fixed(r.measurements.length_mm) << ',' << format_fixed(r.measurements.max_width_mm) << ','
            << format_fixed(r.measurements.thickness_at_hilum_mm) << ',';
        if (r.fold) out << *r.fold;
        out << '\n';
    }
    write_text(path, out.str());
}

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream ss(line);
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    return cells;
}

std::vector<CaseRecord> read_manifest(const fs::path& path) {
    std::istringstream in(read_text(path));
    std::string line;
    if (!std::getline(in, line)) throw DataError("empty manifest: " + path.string());
    auto header = split_csv_line(line);
    const std::vector<std::string> want{"case_id", "volume_mL", "splenomegaly", "L_mm", "W_mm", "Th_mm", "fold"};
    if (std::find(header.begin(), header.end(), "volume_mL") == header.end())
        throw DataError("manifest has no volume_mL column: " + path.string());
    if (header != want) throw DataError("unexpected manifest header in " + path.string());
    std::vector<CaseRecord> out;
    int lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        auto cells = split_csv_line(line);
        if (cells.size() != want.size())
            throw DataError("manifest line " + std::to_string(lineno) + ": expected 7 columns");
        try {
            CaseRecord r;
            r.case_id = cells[0];
            r.volume_mL = std::stod(cells[1]);
            r.splenomegaly = cells[2] == "1" || cells[2] == "true";
            r.measurements = {std::stod(cells[3]), std::stod(cells[4]), std::stod(cells[5])};
            if (!cells[6].empty()) r.fold = std::stoi(cells[6]);
            out.push_back(std::move(r));
        } catch (const std::logic_error&) {
            throw DataError("manifest line " + std::to_string(lineno) + ": unparsable value");
        }
    }
    return out;
}

void write_text(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream f(path, std::ios::binary);
    if (!f) throw DataError("cannot open for writing: " + path.string());
    f << text;
    if (!f) throw DataError("write failed: " + path.string());
}

std::string read_text(const fs::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw DataError("cannot open: " + path.string());
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

std::string file_digest(const fs::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw DataError("cannot open: " + path.string());
    std::uint64_t h = 1469598103934665603ull;
    char buf[1 << 16];
    while (f) {
        f.read(buf, sizeof(buf));
        for (std::streamsize i = 0; i < f.gcount(); ++i) {
            h ^= static_cast<unsigned char>(buf[i]);
            h *= 1099511628211ull;
        }
    }
    char out[17];
    std::snprintf(out, sizeof(out), "%016llx", static_cast<unsigned long long>(h));
    return out;
}

} // namespace slicevol::io
