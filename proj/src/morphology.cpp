#include "lvseg/morphology.hpp"

#include <cmath>
#include <stdexcept>

#include "lvseg/parallel.hpp"

namespace lvseg {

DiskElement make_disk_px(int radius_px) {
    if (radius_px < 0) throw std::runtime_error("disk radius must be nonnegative");
    DiskElement se;
    se.radius_px = radius_px;
    const int r2 = radius_px * radius_px;
    for (int dy = -radius_px; dy <= radius_px; ++dy)
        for (int dx = -radius_px; dx <= radius_px; ++dx)
            if (dx * dx + dy * dy <= r2) se.offsets.emplace_back(dx, dy);
    return se;
}

DiskElement make_disk(double radius_mm, const Spacing& spacing) {
    if (radius_mm < 0.0) throw std::runtime_error("disk radius must be nonnegative");
    if (std::abs(spacing.x_mm - spacing.y_mm) > 0.01 * spacing.x_mm)
        throw std::runtime_error("anisotropic in-plane spacing: disk element undefined");
    int radius_px = static_cast<int>(std::llround(radius_mm / spacing.x_mm));
    return make_disk_px(radius_px);
}

BinaryMask erode_slicewise(const BinaryMask& m, const DiskElement& se) {
    BinaryMask out = make_mask(m.nx, m.ny, m.nz, m.spacing);
    const int nx = m.nx, ny = m.ny;
    parallel_for(static_cast<std::size_t>(m.nz), [&](std::size_t k) {
        const std::uint8_t* in = m.bits.data() + k * static_cast<std::size_t>(nx) * ny;
        std::uint8_t* dst = out.bits.data() + k * static_cast<std::size_t>(nx) * ny;
        for (int j = 0; j < ny; ++j) {
            for (int i = 0; i < nx; ++i) {
                if (!in[i + static_cast<std::size_t>(nx) * j]) continue;
                bool keep = true;
                for (const auto& [dx, dy] : se.offsets) {
                    const int x = i + dx, y = j + dy;
                    if (x < 0 || x >= nx || y < 0 || y >= ny ||
                        !in[x + static_cast<std::size_t>(nx) * y]) {
                        keep = false;
                        break;
                    }
                }
                if (keep) dst[i + static_cast<std::size_t>(nx) * j] = 1;
            }
        }
    });
    return out;
}

namespace {

// 6- and 26-neighborhood offset tables.
constexpr int kNeigh6[6][3] = {{1, 0, 0}, {-1, 0, 0}, {0, 1, 0}, {0, -1, 0}, {0, 0, 1}, {0, 0, -1}};

std::vector<std::array<int, 3>> neighbor_offsets(Connectivity conn) {
    std::vector<std::array<int, 3>> n;
    if (conn == Connectivity::six) {
        for (const auto& d : kNeigh6) n.push_back({d[0], d[1], d[2]});
    } else {
        for (int dz = -1; dz <= 1; ++dz)
            for (int dy = -1; dy <= 1; ++dy)
                for (int dx = -1; dx <= 1; ++dx)
                    if (dx || dy || dz) n.push_back({dx, dy, dz});
    }
    return n;
}

}  // namespace

LabeledComponents connected_components(const BinaryMask& m, Connectivity conn) {
    LabeledComponents cc;
    cc.nx = m.nx; cc.ny = m.ny; cc.nz = m.nz;
    cc.labels.assign(m.size(), 0);
    const auto neigh = neighbor_offsets(conn);

    cc.sizes.push_back(0);
    cc.centroids_mm.push_back({0, 0, 0});

    std::vector<std::size_t> stack;
    for (int k = 0; k < m.nz; ++k) {
        for (int j = 0; j < m.ny; ++j) {
            for (int i = 0; i < m.nx; ++i) {
                const std::size_t seed = m.index(i, j, k);
                if (!m.bits[seed] || cc.labels[seed] != 0) continue;
                const std::int32_t label = ++cc.count;
                std::size_t voxels = 0;
                double sx = 0, sy = 0, sz = 0;
                cc.labels[seed] = label;
                stack.clear();
                stack.push_back(seed);
                while (!stack.empty()) {
                    const std::size_t cur = stack.back();
                    stack.pop_back();
                    const int ck = static_cast<int>(cur / (static_cast<std::size_t>(m.nx) * m.ny));
                    const std::size_t rem = cur % (static_cast<std::size_t>(m.nx) * m.ny);
                    const int cj = static_cast<int>(rem / m.nx);
                    const int ci = static_cast<int>(rem % m.nx);
                    ++voxels;
                    sx += ci + 0.5; sy += cj + 0.5; sz += ck + 0.5;
                    for (const auto& d : neigh) {
                        const int x = ci + d[0], y = cj + d[1], z = ck + d[2];
                        if (x < 0 || x >= m.nx || y < 0 || y >= m.ny || z < 0 || z >= m.nz) continue;
                        const std::size_t q = m.index(x, y, z);
                        if (m.bits[q] && cc.labels[q] == 0) {
                            cc.labels[q] = label;
                            stack.push_back(q);
                        }
                    }
                }
                cc.sizes.push_back(voxels);
                cc.centroids_mm.push_back({sx / voxels * m.spacing.x_mm,
                                           sy / voxels * m.spacing.y_mm,
                                           sz / voxels * m.spacing.z_mm});
            }
        }
    }
    return cc;
}

BinaryMask component_mask(const LabeledComponents& cc, const BinaryMask& grid_like, std::int32_t label) {
    BinaryMask out = make_mask(grid_like.nx, grid_like.ny, grid_like.nz, grid_like.spacing);
    for (std::size_t i = 0; i < cc.labels.size(); ++i)
        if (cc.labels[i] == label) out.bits[i] = 1;
    return out;
}

BinaryMask fill_holes(const BinaryMask& m) {
    // Flood the complement from the border with 6-connectivity; complement
    // voxels never reached are enclosed holes. "Border" is the in-plane
    // (x/y) boundary: the z extent of a scan truncates anatomy, so a region
    // open only through the first or last slice still counts as a hole
    // (a per-slice donut fills on every slice).
    std::vector<std::uint8_t> outside(m.size(), 0);
    std::vector<std::size_t> stack;
    auto push_if_bg = [&](int i, int j, int k) {
        const std::size_t q = m.index(i, j, k);
        if (!m.bits[q] && !outside[q]) {
            outside[q] = 1;
            stack.push_back(q);
        }
    };
    for (int k = 0; k < m.nz; ++k)
        for (int j = 0; j < m.ny; ++j)
            for (int i = 0; i < m.nx; ++i)
                if (i == 0 || i == m.nx - 1 || j == 0 || j == m.ny - 1)
                    push_if_bg(i, j, k);
    while (!stack.empty()) {
        const std::size_t cur = stack.back();
        stack.pop_back();
        const int ck = static_cast<int>(cur / (static_cast<std::size_t>(m.nx) * m.ny));
        const std::size_t rem = cur % (static_cast<std::size_t>(m.nx) * m.ny);
        const int cj = static_cast<int>(rem / m.nx);
        const int ci = static_cast<int>(rem % m.nx);
        for (const auto& d : kNeigh6) {
            const int x = ci + d[0], y = cj + d[1], z = ck + d[2];
            if (x < 0 || x >= m.nx || y < 0 || y >= m.ny || z < 0 || z >= m.nz) continue;
            push_if_bg(x, y, z);
        }
    }
    BinaryMask out = m;
    for (std::size_t i = 0; i < m.size(); ++i)
        if (!m.bits[i] && !outside[i]) out.bits[i] = 1;
    return out;
}

std::array<double, 3> centroid_mm(const BinaryMask& m) {
    double sx = 0, sy = 0, sz = 0;
    std::size_t n = 0;
    for (int k = 0; k < m.nz; ++k)
        for (int j = 0; j < m.ny; ++j)
            for (int i = 0; i < m.nx; ++i)
                if (m.at(i, j, k)) {
                    sx += i + 0.5; sy += j + 0.5; sz += k + 0.5;
                    ++n;
                }
    if (n == 0) throw std::runtime_error("empty mask has no centroid");
    return {sx / n * m.spacing.x_mm, sy / n * m.spacing.y_mm, sz / n * m.spacing.z_mm};
}

}  // namespace lvseg
