#include "lvseg/volume.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

#include "json.hpp"

namespace lvseg {

using nlohmann::json;

void Spacing::validate() const {
    auto ok = [](double v) { return std::isfinite(v) && v > 0.0; };
    if (!ok(x_mm) || !ok(y_mm) || !ok(z_mm))
        throw std::runtime_error("spacing components must be positive and finite");
    if (z_mm < 0.5 || z_mm > 10.0)
        throw std::runtime_error("slice thickness out of accepted range [0.5, 10] mm");
}

std::string to_string(IntensityState s) {
    switch (s) {
        case IntensityState::raw: return "raw";
        case IntensityState::bias_corrected: return "bias_corrected";
        case IntensityState::standardized: return "standardized";
    }
    throw std::logic_error("bad intensity state");
}

IntensityState intensity_state_from_string(const std::string& s) {
    if (s == "raw") return IntensityState::raw;
    if (s == "bias_corrected") return IntensityState::bias_corrected;
    if (s == "standardized") return IntensityState::standardized;
    throw std::runtime_error("unknown intensity state: " + s);
}

void Volume::validate() const {
    if (nx <= 0 || ny <= 0 || nz <= 0) throw std::runtime_error("volume dims must be positive");
    if (voxels.size() != size()) throw std::runtime_error("voxel count does not match dims");
    spacing.validate();
    for (float v : voxels)
        if (!std::isfinite(v)) throw std::runtime_error("non-finite voxel value");
    if (intensity_state == IntensityState::standardized) {
        for (float v : voxels)
            if (v < 0.0f || v > 1023.0f)
                throw std::runtime_error("standardized volume has values outside [0, 1023]");
    }
    if (acpc_z && (*acpc_z < 0 || *acpc_z >= nz))
        throw std::runtime_error("acpc_z outside [0, nz)");
}

void BinaryMask::validate() const {
    if (nx <= 0 || ny <= 0 || nz <= 0) throw std::runtime_error("mask dims must be positive");
    if (bits.size() != size()) throw std::runtime_error("bit count does not match dims");
    spacing.validate();
    for (std::uint8_t b : bits)
        if (b > 1) throw std::runtime_error("invalid mask byte");
}

std::size_t BinaryMask::count() const {
    std::size_t n = 0;
    for (std::uint8_t b : bits) n += b;
    return n;
}

std::string VolumeHeader::to_json_line() const {
    json j;
    j["dims"] = dims;
    j["spacing"] = {spacing.x_mm, spacing.y_mm, spacing.z_mm};
    j["site_id"] = site_id;
    j["intensity_state"] = to_string(intensity_state);
    j["kind"] = kind == VolumeKind::image ? "image" : "mask";
    if (acpc_z) j["acpc_z"] = *acpc_z; else j["acpc_z"] = nullptr;
    return j.dump();
}

VolumeHeader VolumeHeader::from_json_line(const std::string& line) {
    json j;
    try {
        j = json::parse(line);
    } catch (const json::exception& e) {
        throw std::runtime_error(std::string("malformed header: ") + e.what());
    }
    VolumeHeader h;
    try {
        h.dims = j.at("dims").get<std::array<int, 3>>();
        auto sp = j.at("spacing").get<std::array<double, 3>>();
        h.spacing = {sp[0], sp[1], sp[2]};
        h.site_id = j.at("site_id").get<std::string>();
        h.intensity_state = intensity_state_from_string(j.at("intensity_state").get<std::string>());
        std::string kind = j.at("kind").get<std::string>();
        if (kind == "image") h.kind = VolumeKind::image;
        else if (kind == "mask") h.kind = VolumeKind::mask;
        else throw std::runtime_error("unknown kind: " + kind);
        if (j.contains("acpc_z") && !j.at("acpc_z").is_null())
            h.acpc_z = j.at("acpc_z").get<int>();
    } catch (const json::exception& e) {
        throw std::runtime_error(std::string("malformed header: ") + e.what());
    }
    if (h.dims[0] <= 0 || h.dims[1] <= 0 || h.dims[2] <= 0)
        throw std::runtime_error("malformed header: non-positive dims");
    if (h.acpc_z && (*h.acpc_z < 0 || *h.acpc_z >= h.dims[2]))
        throw std::runtime_error("malformed header: acpc_z outside [0, nz)");
    return h;
}

namespace {

void write_file(const std::string& path, const std::string& header, const char* payload, std::size_t bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open for writing: " + path);
    out << header << '\n';
    out.write(payload, static_cast<std::streamsize>(bytes));
    if (!out) throw std::runtime_error("write failed: " + path);
}

std::pair<VolumeHeader, std::vector<char>> read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open for reading: " + path);
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error("malformed header: empty file");
    VolumeHeader h = VolumeHeader::from_json_line(line);

    std::size_t n = static_cast<std::size_t>(h.dims[0]) * h.dims[1] * h.dims[2];
    std::size_t expected = n * (h.kind == VolumeKind::image ? sizeof(float) : sizeof(std::uint8_t));
    std::vector<char> payload(expected);
    in.read(payload.data(), static_cast<std::streamsize>(expected));
    if (static_cast<std::size_t>(in.gcount()) != expected)
        throw std::runtime_error("payload length mismatch: " + path);
    // No trailing bytes allowed either.
    char extra;
    if (in.read(&extra, 1); in.gcount() != 0)
        throw std::runtime_error("payload length mismatch: " + path);
    return {h, std::move(payload)};
}

}  // namespace

void write_volume(const Volume& v, const std::string& path) {
    v.validate();
    VolumeHeader h;
    h.dims = {v.nx, v.ny, v.nz};
    h.spacing = v.spacing;
    h.site_id = v.site_id;
    h.intensity_state = v.intensity_state;
    h.kind = VolumeKind::image;
    h.acpc_z = v.acpc_z;
    write_file(path, h.to_json_line(), reinterpret_cast<const char*>(v.voxels.data()),
               v.voxels.size() * sizeof(float));
}

void write_volume(const BinaryMask& m, const std::string& path) {
    m.validate();
    VolumeHeader h;
    h.dims = {m.nx, m.ny, m.nz};
    h.spacing = m.spacing;
    h.kind = VolumeKind::mask;
    write_file(path, h.to_json_line(), reinterpret_cast<const char*>(m.bits.data()),
               m.bits.size() * sizeof(std::uint8_t));
}

std::variant<Volume, BinaryMask> read_any(const std::string& path) {
    auto [h, payload] = read_file(path);
    if (h.kind == VolumeKind::image) {
        Volume v;
        v.nx = h.dims[0]; v.ny = h.dims[1]; v.nz = h.dims[2];
        v.spacing = h.spacing;
        v.site_id = h.site_id;
        v.intensity_state = h.intensity_state;
        v.acpc_z = h.acpc_z;
        v.voxels.resize(v.size());
        std::copy_n(reinterpret_cast<const float*>(payload.data()), v.size(), v.voxels.begin());
        v.validate();
        return v;
    }
    BinaryMask m;
    m.nx = h.dims[0]; m.ny = h.dims[1]; m.nz = h.dims[2];
    m.spacing = h.spacing;
    m.bits.assign(payload.begin(), payload.end());
    m.validate();
    return m;
}

Volume read_image(const std::string& path) {
    auto v = read_any(path);
    if (!std::holds_alternative<Volume>(v))
        throw std::runtime_error("expected image volume, got mask: " + path);
    return std::get<Volume>(std::move(v));
}

BinaryMask read_mask(const std::string& path) {
    auto v = read_any(path);
    if (!std::holds_alternative<BinaryMask>(v))
        throw std::runtime_error("expected mask, got image volume: " + path);
    return std::get<BinaryMask>(std::move(v));
}

double mask_volume_ml(const BinaryMask& m) {
    return static_cast<double>(m.count()) * m.spacing.voxel_mm3() / 1000.0;
}

}  // namespace lvseg
