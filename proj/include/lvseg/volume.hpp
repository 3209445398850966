#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace lvseg {

// Voxel-grid data model shared by the whole pipeline. Grids are row-major
// x-fastest, so slice k is the contiguous block [k*nx*ny, (k+1)*nx*ny) and
// 2D operations work on contiguous slabs.

struct Spacing {
    double x_mm = 1.0;
    double y_mm = 1.0;
    double z_mm = 1.0;

    // Strictly positive and finite; slice thickness restricted to [0.5, 10] mm.
    void validate() const;
    double voxel_mm3() const { return x_mm * y_mm * z_mm; }
    bool operator==(const Spacing&) const = default;
};

enum class IntensityState { raw, bias_corrected, standardized };
enum class VolumeKind { image, mask };

std::string to_string(IntensityState s);
IntensityState intensity_state_from_string(const std::string& s);

struct Volume {
    int nx = 0, ny = 0, nz = 0;
    std::vector<float> voxels;  // nx*ny*nz, x-fastest
    Spacing spacing;
    std::string site_id;
    IntensityState intensity_state = IntensityState::raw;
    std::optional<int> acpc_z;  // slice index of the AC-PC cutoff, if known

    std::size_t size() const { return static_cast<std::size_t>(nx) * ny * nz; }
    std::size_t index(int i, int j, int k) const {
        return static_cast<std::size_t>(i) + static_cast<std::size_t>(nx) * (static_cast<std::size_t>(j) + static_cast<std::size_t>(ny) * k);
    }
    float at(int i, int j, int k) const { return voxels[index(i, j, k)]; }
    float& at(int i, int j, int k) { return voxels[index(i, j, k)]; }

    // Checks dims/layout consistency, finiteness, spacing, the [0, 1023]
    // range when standardized, and acpc_z in [0, nz).
    void validate() const;
};

struct BinaryMask {
    int nx = 0, ny = 0, nz = 0;
    std::vector<std::uint8_t> bits;  // exactly 0 or 1, same layout as Volume
    Spacing spacing;

    std::size_t size() const { return static_cast<std::size_t>(nx) * ny * nz; }
    std::size_t index(int i, int j, int k) const {
        return static_cast<std::size_t>(i) + static_cast<std::size_t>(nx) * (static_cast<std::size_t>(j) + static_cast<std::size_t>(ny) * k);
    }
    bool at(int i, int j, int k) const { return bits[index(i, j, k)] != 0; }
    void set(int i, int j, int k, bool v) { bits[index(i, j, k)] = v ? 1 : 0; }

    std::size_t count() const;
    bool same_grid(const BinaryMask& o) const {
        return nx == o.nx && ny == o.ny && nz == o.nz && spacing == o.spacing;
    }

    void validate() const;
};

inline Volume make_volume(int nx, int ny, int nz, Spacing sp, float fill = 0.0f) {
    Volume v;
    v.nx = nx; v.ny = ny; v.nz = nz;
    v.spacing = sp;
    v.voxels.assign(static_cast<std::size_t>(nx) * ny * nz, fill);
    return v;
}

inline BinaryMask make_mask(int nx, int ny, int nz, Spacing sp, bool fill = false) {
    BinaryMask m;
    m.nx = nx; m.ny = ny; m.nz = nz;
    m.spacing = sp;
    m.bits.assign(static_cast<std::size_t>(nx) * ny * nz, fill ? 1 : 0);
    return m;
}

struct VolumeHeader {
    std::array<int, 3> dims{0, 0, 0};
    Spacing spacing;
    std::string site_id;
    IntensityState intensity_state = IntensityState::raw;
    VolumeKind kind = VolumeKind::image;
    std::optional<int> acpc_z;

    std::string to_json_line() const;
    static VolumeHeader from_json_line(const std::string& line);
};

// On-disk format (extensions .mvol for images, .mmask for masks):
//   one UTF-8 JSON header line, '\n', then the raw little-endian payload
//   (float32 per voxel for images, uint8 per voxel for masks), x-fastest
//   row-major. Bit-exact by contract: write/read round trips reproduce the
//   value exactly.
void write_volume(const Volume& v, const std::string& path);
void write_volume(const BinaryMask& m, const std::string& path);

std::variant<Volume, BinaryMask> read_any(const std::string& path);
Volume read_image(const std::string& path);
BinaryMask read_mask(const std::string& path);

// Mask volume in millilitres: true-voxel count times voxel volume / 1000.
double mask_volume_ml(const BinaryMask& m);

}  // namespace lvseg
