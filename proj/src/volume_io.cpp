#include "bcseg/volume_io.hpp"

#include <zlib.h>

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <string>

#include <nlohmann/json.hpp>

#include "bcseg/error.hpp"

namespace bcseg {

namespace fs = std::filesystem;
using nlohmann::json;

static_assert(std::endian::native == std::endian::little, "payload I/O assumes a little-endian host");

namespace {

constexpr std::int16_t kNiftiUint8 = 2;
constexpr std::int16_t kNiftiInt16 = 4;
constexpr std::int16_t kNiftiFloat32 = 16;
constexpr std::size_t kNiftiHeaderSize = 348;
constexpr std::size_t kNiftiDataOffset = 352;

bool ends_with(const std::string& s, std::string_view suffix) {
    return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

std::vector<std::uint8_t> read_all_gz(const fs::path& path) {
    gzFile f = gzopen(path.c_str(), "rb");
    if (f == nullptr) {
        throw DataError("cannot open '" + path.string() + "'");
    }
    std::vector<std::uint8_t> bytes;
    std::array<std::uint8_t, 1 << 16> chunk{};
    for (;;) {
        const int n = gzread(f, chunk.data(), static_cast<unsigned>(chunk.size()));
        if (n < 0) {
            gzclose(f);
            throw DataError("read error in '" + path.string() + "'");
        }
        if (n == 0) {
            break;
        }
        bytes.insert(bytes.end(), chunk.begin(), chunk.begin() + n);
    }
    gzclose(f);
    return bytes;
}

std::vector<std::uint8_t> read_all(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw DataError("cannot open '" + path.string() + "'");
    }
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_all(const fs::path& path, const void* data, std::size_t size) {
    if (path.has_parent_path()) {
        fs::create_directories(path.parent_path());
    }
    if (ends_with(path.string(), ".gz")) {
        gzFile f = gzopen(path.c_str(), "wb");
        if (f == nullptr) {
            throw DataError("cannot write '" + path.string() + "'");
        }
        const auto* p = static_cast<const std::uint8_t*>(data);
        std::size_t left = size;
        while (left > 0) {
            const auto n = static_cast<unsigned>(std::min<std::size_t>(left, 1U << 30));
            if (gzwrite(f, p, n) != static_cast<int>(n)) {
                gzclose(f);
                throw DataError("write error in '" + path.string() + "'");
            }
            p += n;
            left -= n;
        }
        gzclose(f);
        return;
    }
    std::ofstream out(path, std::ios::binary);
    out.write(static_cast<const char*>(data), static_cast<std::streamsize>(size));
    if (!out) {
        throw DataError("cannot write '" + path.string() + "'");
    }
}

template <typename T>
T get(const std::vector<std::uint8_t>& b, std::size_t off) {
    T v;
    std::memcpy(&v, b.data() + off, sizeof(T));
    return v;
}

template <typename T>
void put(std::vector<std::uint8_t>& b, std::size_t off, T v) {
    std::memcpy(b.data() + off, &v, sizeof(T));
}

/// Raw samples plus the geometry recovered from either file format.
struct RawImage {
    Geometry geometry;
    enum class Type { u8, i16, f32 } type{Type::f32};
    std::vector<std::uint8_t> payload;
    double slope = 1.0;
    double inter = 0.0;
};

std::size_t type_size(RawImage::Type t) {
    switch (t) {
        case RawImage::Type::u8: return 1;
        case RawImage::Type::i16: return 2;
        case RawImage::Type::f32: return 4;
    }
    return 0;
}

RawImage read_nifti(const fs::path& path) {
    const auto bytes = read_all_gz(path);
    if (bytes.size() < kNiftiHeaderSize) {
        throw DataError("nifti: truncated header in '" + path.string() + "'");
    }
    if (get<std::int32_t>(bytes, 0) != 348) {
        throw DataError("nifti: bad sizeof_hdr (big-endian files are not supported)");
    }
    if (std::memcmp(bytes.data() + 344, "n+1", 4) != 0) {
        throw DataError("nifti: only single-file NIfTI-1 (magic n+1) is supported");
    }
    RawImage img;
    const auto ndim = get<std::int16_t>(bytes, 40);
    if (ndim < 1 || ndim > 7) {
        throw DataError("nifti: invalid dim[0]");
    }
    for (int a = 0; a < 3; ++a) {
        img.geometry.dims[a] = a < ndim ? get<std::int16_t>(bytes, 42 + 2 * a) : 1;
    }
    for (int a = 3; a < ndim; ++a) {
        if (get<std::int16_t>(bytes, 42 + 2 * a) != 1) {
            throw DataError("nifti: only 3-D images are supported");
        }
    }
    switch (get<std::int16_t>(bytes, 70)) {
        case kNiftiUint8: img.type = RawImage::Type::u8; break;
        case kNiftiInt16: img.type = RawImage::Type::i16; break;
        case kNiftiFloat32: img.type = RawImage::Type::f32; break;
        default: throw DataError("nifti: unsupported dtype " + std::to_string(get<std::int16_t>(bytes, 70)));
    }
    Vec3 pixdim{};
    for (int a = 0; a < 3; ++a) {
        pixdim[a] = get<float>(bytes, 80 + 4 * a);
    }
    const float slope = get<float>(bytes, 112);
    if (slope != 0.0F && std::isfinite(slope)) {
        img.slope = slope;
        img.inter = get<float>(bytes, 116);
    }
    const auto qform_code = get<std::int16_t>(bytes, 252);
    const auto sform_code = get<std::int16_t>(bytes, 254);
    constexpr double kTol = 1e-6;
    if (sform_code > 0) {
        double m[3][4];
        for (int r = 0; r < 3; ++r) {
            for (int c = 0; c < 4; ++c) {
                m[r][c] = get<float>(bytes, 280 + 16 * r + 4 * c);
            }
        }
        for (int r = 0; r < 3; ++r) {
            for (int c = 0; c < 3; ++c) {
                if (r != c && std::abs(m[r][c]) > kTol * std::abs(m[c][c])) {
                    throw DataError("nifti: oblique or sheared sform is not supported");
                }
            }
            img.geometry.spacing[r] = std::abs(m[r][r]);
            img.geometry.origin[r] = m[r][3];
        }
    } else if (qform_code > 0) {
        const double b = get<float>(bytes, 256);
        const double c = get<float>(bytes, 260);
        const double d = get<float>(bytes, 264);
        const double a = std::sqrt(std::max(0.0, 1.0 - (b * b + c * c + d * d)));
        const double rot[3][3] = {
            {a * a + b * b - c * c - d * d, 2 * (b * c - a * d), 2 * (b * d + a * c)},
            {2 * (b * c + a * d), a * a + c * c - b * b - d * d, 2 * (c * d - a * b)},
            {2 * (b * d - a * c), 2 * (c * d + a * b), a * a + d * d - b * b - c * c}};
        for (int r = 0; r < 3; ++r) {
            for (int col = 0; col < 3; ++col) {
                if (r != col && std::abs(rot[r][col]) > kTol) {
                    throw DataError("nifti: oblique qform is not supported");
                }
            }
        }
        img.geometry.spacing = pixdim;
        img.geometry.origin = {get<float>(bytes, 268), get<float>(bytes, 272), get<float>(bytes, 276)};
    } else {
        img.geometry.spacing = pixdim;
    }
    img.geometry.validate();
    auto offset = static_cast<std::size_t>(get<float>(bytes, 108));
    if (offset < kNiftiDataOffset) {
        offset = kNiftiDataOffset;
    }
    const std::size_t expected = img.geometry.voxel_count() * type_size(img.type);
    if (bytes.size() < offset || bytes.size() - offset != expected) {
        throw DataError("nifti: dims/payload mismatch in '" + path.string() + "'");
    }
    img.payload.assign(bytes.begin() + static_cast<std::ptrdiff_t>(offset), bytes.end());
    return img;
}

void write_nifti(const fs::path& path, const Geometry& g, std::int16_t datatype, const void* data,
                 std::size_t data_bytes) {
    std::vector<std::uint8_t> out(kNiftiDataOffset + data_bytes, 0);
    put<std::int32_t>(out, 0, 348);
    out[38] = 'r';
    put<std::int16_t>(out, 40, 3);
    for (int a = 0; a < 3; ++a) {
        if (g.dims[a] > 32767) {
            throw DataError("nifti: dimension exceeds the int16 header limit");
        }
        put<std::int16_t>(out, 42 + 2 * a, static_cast<std::int16_t>(g.dims[a]));
    }
    for (int a = 4; a < 8; ++a) {
        put<std::int16_t>(out, 40 + 2 * a, 1);
    }
    const std::int16_t bitpix = datatype == kNiftiUint8 ? 8 : (datatype == kNiftiInt16 ? 16 : 32);
    put<std::int16_t>(out, 70, datatype);
    put<std::int16_t>(out, 72, bitpix);
    put<float>(out, 76, 1.0F);
    for (int a = 0; a < 3; ++a) {
        put<float>(out, 80 + 4 * a, static_cast<float>(g.spacing[a]));
    }
    put<float>(out, 108, static_cast<float>(kNiftiDataOffset));
    out[123] = 2;  // mm
    put<std::int16_t>(out, 252, 1);
    put<std::int16_t>(out, 254, 1);
    for (int a = 0; a < 3; ++a) {
        put<float>(out, 268 + 4 * a, static_cast<float>(g.origin[a]));
        put<float>(out, 280 + 16 * a + 4 * a, static_cast<float>(g.spacing[a]));
        put<float>(out, 280 + 16 * a + 12, static_cast<float>(g.origin[a]));
    }
    std::memcpy(out.data() + 344, "n+1", 4);
    std::memcpy(out.data() + kNiftiDataOffset, data, data_bytes);
    write_all(path, out.data(), out.size());
}

RawImage read_rvol(const fs::path& path) {
    const fs::path base = rvol_base(path);
    fs::path sidecar = base;
    sidecar += ".json";
    fs::path raw = base;
    raw += ".raw";
    const auto text = read_all(sidecar);
    json meta;
    try {
        meta = json::parse(text.begin(), text.end());
    } catch (const json::exception& e) {
        throw DataError("rvol: cannot parse sidecar '" + sidecar.string() + "': " + e.what());
    }
    RawImage img;
    try {
        const auto dims = meta.at("dims").get<std::vector<std::int64_t>>();
        const auto spacing = meta.at("spacing_mm").get<std::vector<double>>();
        const auto origin = meta.value("origin_mm", std::vector<double>{0.0, 0.0, 0.0});
        if (dims.size() != 3 || spacing.size() != 3 || origin.size() != 3) {
            throw DataError("rvol: dims, spacing_mm and origin_mm must have 3 entries");
        }
        for (int a = 0; a < 3; ++a) {
            img.geometry.dims[a] = dims[a];
            img.geometry.spacing[a] = spacing[a];
            img.geometry.origin[a] = origin[a];
        }
        const auto dtype = meta.at("dtype").get<std::string>();
        if (dtype == "f32") {
            img.type = RawImage::Type::f32;
        } else if (dtype == "u8") {
            img.type = RawImage::Type::u8;
        } else {
            throw DataError("rvol: unsupported dtype '" + dtype + "'");
        }
        if (meta.value("order", std::string("zyx")) != "zyx") {
            throw DataError("rvol: only order \"zyx\" is supported");
        }
    } catch (const json::exception& e) {
        throw DataError("rvol: malformed sidecar '" + sidecar.string() + "': " + e.what());
    }
    img.geometry.validate();
    img.payload = read_all(raw);
    if (img.payload.size() != img.geometry.voxel_count() * type_size(img.type)) {
        throw DataError("rvol: dims/payload mismatch in '" + raw.string() + "' (" +
                        std::to_string(img.payload.size() / type_size(img.type)) + " samples for " +
                        std::to_string(img.geometry.voxel_count()) + " voxels)");
    }
    return img;
}

void write_rvol(const fs::path& path, const Geometry& g, const char* dtype, const void* data, std::size_t bytes) {
    const fs::path base = rvol_base(path);
    json meta = {{"dims", g.dims},
                 {"spacing_mm", g.spacing},
                 {"origin_mm", g.origin},
                 {"dtype", dtype},
                 {"order", "zyx"}};
    const std::string text = meta.dump(2) + "\n";
    fs::path sidecar = base;
    sidecar += ".json";
    fs::path raw = base;
    raw += ".raw";
    write_all(sidecar, text.data(), text.size());
    write_all(raw, data, bytes);
}

RawImage read_raw(const fs::path& path, VolumeFormat format) {
    return format == VolumeFormat::nifti1 ? read_nifti(path) : read_rvol(path);
}

}  // namespace

VolumeFormat format_from_path(const fs::path& path) {
    const std::string s = path.string();
    return ends_with(s, ".nii") || ends_with(s, ".nii.gz") ? VolumeFormat::nifti1 : VolumeFormat::rvol;
}

fs::path rvol_base(const fs::path& path) {
    if (path.extension() == ".json" || path.extension() == ".raw") {
        fs::path p = path;
        return p.replace_extension();
    }
    return path;
}

Volume load_volume(const fs::path& path, VolumeFormat format) {
    RawImage img = read_raw(path, format);
    const std::size_t n = img.geometry.voxel_count();
    std::vector<float> values(n);
    switch (img.type) {
        case RawImage::Type::f32:
            std::memcpy(values.data(), img.payload.data(), n * sizeof(float));
            break;
        case RawImage::Type::i16:
            for (std::size_t i = 0; i < n; ++i) {
                values[i] = static_cast<float>(get<std::int16_t>(img.payload, 2 * i));
            }
            break;
        case RawImage::Type::u8:
            throw DataError("volume: unsupported dtype u8 (masks only)");
    }
    if (img.slope != 1.0 || img.inter != 0.0) {
        for (auto& v : values) {
            v = static_cast<float>(img.slope * v + img.inter);
        }
    }
    return make_volume(img.geometry, std::move(values));
}

Volume load_volume(const fs::path& path) { return load_volume(path, format_from_path(path)); }

LabelMask load_mask(const fs::path& path, VolumeFormat format) {
    RawImage img = read_raw(path, format);
    const std::size_t n = img.geometry.voxel_count();
    std::vector<std::uint8_t> codes(n);
    switch (img.type) {
        case RawImage::Type::u8:
            std::memcpy(codes.data(), img.payload.data(), n);
            break;
        case RawImage::Type::i16:
            for (std::size_t i = 0; i < n; ++i) {
                const auto v = get<std::int16_t>(img.payload, 2 * i);
                if (v < 0 || v >= kClassCount) {
                    throw DataError("mask: invalid class code " + std::to_string(v));
                }
                codes[i] = static_cast<std::uint8_t>(v);
            }
            break;
        case RawImage::Type::f32:
            throw DataError("mask: unsupported dtype f32");
    }
    LabelMask mask(img.geometry, std::move(codes));
    validate_mask(mask);
    return mask;
}

LabelMask load_mask(const fs::path& path) { return load_mask(path, format_from_path(path)); }

void save_volume(const Volume& volume, const fs::path& path, VolumeFormat format) {
    const auto bytes = volume.size() * sizeof(float);
    if (format == VolumeFormat::nifti1) {
        write_nifti(path, volume.geometry(), kNiftiFloat32, volume.data().data(), bytes);
    } else {
        write_rvol(path, volume.geometry(), "f32", volume.data().data(), bytes);
    }
}

void save_volume(const Volume& volume, const fs::path& path) { save_volume(volume, path, format_from_path(path)); }

void save_mask(const LabelMask& mask, const fs::path& path, VolumeFormat format) {
    if (format == VolumeFormat::nifti1) {
        write_nifti(path, mask.geometry(), kNiftiUint8, mask.data().data(), mask.size());
    } else {
        write_rvol(path, mask.geometry(), "u8", mask.data().data(), mask.size());
    }
}

void save_mask(const LabelMask& mask, const fs::path& path) { save_mask(mask, path, format_from_path(path)); }

}  // namespace bcseg
