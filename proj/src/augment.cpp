#include "lvseg/augment.hpp"

#include <cmath>

namespace lvseg {

SlicePair apply_affine(const SlicePair& in, double rot_deg, double scale, double shear_deg,
                       double tx_px, double ty_px) {
    const int h = in.h, w = in.w;
    SlicePair out;
    out.h = h;
    out.w = w;
    out.image.assign(in.image.size(), 0.0);
    out.mask.assign(in.mask.size(), 0);

    const double th = rot_deg * 3.14159265358979323846 / 180.0;
    const double sh = std::tan(shear_deg * 3.14159265358979323846 / 180.0);
    // forward map: p_out = R(th) * Shear(sh) * Scale(s) * (p_in - c) + c + t;
    // sample through the inverse: p_in = M^-1 (p_out - c - t) + c
    const double m00 = std::cos(th) * scale;
    const double m01 = std::cos(th) * (sh * scale) - std::sin(th) * scale;
    const double m10 = std::sin(th) * scale;
    const double m11 = std::sin(th) * (sh * scale) + std::cos(th) * scale;
    const double det = m00 * m11 - m01 * m10;
    const double i00 = m11 / det, i01 = -m01 / det, i10 = -m10 / det, i11 = m00 / det;
    const double cx = (w - 1) / 2.0, cy = (h - 1) / 2.0;

    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const double dx = x - cx - tx_px;
            const double dy = y - cy - ty_px;
            const double sx = i00 * dx + i01 * dy + cx;
            const double sy = i10 * dx + i11 * dy + cy;

            // bilinear image sample
            const int x0 = static_cast<int>(std::floor(sx));
            const int y0 = static_cast<int>(std::floor(sy));
            const double fx = sx - x0, fy = sy - y0;
            double val = 0.0;
            for (int oy = 0; oy <= 1; ++oy)
                for (int ox = 0; ox <= 1; ++ox) {
                    const int xi = x0 + ox, yi = y0 + oy;
                    if (xi < 0 || xi >= w || yi < 0 || yi >= h) continue;
                    const double wgt = (ox ? fx : 1.0 - fx) * (oy ? fy : 1.0 - fy);
                    val += wgt * in.image[static_cast<std::size_t>(yi) * w + xi];
                }
            out.image[static_cast<std::size_t>(y) * w + x] = val;

            // nearest-neighbor mask sample
            const int xn = static_cast<int>(std::lround(sx));
            const int yn = static_cast<int>(std::lround(sy));
            if (xn >= 0 && xn < w && yn >= 0 && yn < h)
                out.mask[static_cast<std::size_t>(y) * w + x] =
                    in.mask[static_cast<std::size_t>(yn) * w + xn];
        }
    }
    return out;
}

SlicePair augment_pair(const SlicePair& in, const AugmentConfig& cfg, Rng& rng) {
    if (rng.uniform01() >= cfg.probability) return in;
    const double rot = rng.uniform(-cfg.rotate_deg, cfg.rotate_deg);
    const double scale = rng.uniform(cfg.scale_lo, cfg.scale_hi);
    const double shear = rng.uniform(-cfg.shear_deg, cfg.shear_deg);
    const double tx = rng.uniform(-cfg.translate_frac, cfg.translate_frac) * in.w;
    const double ty = rng.uniform(-cfg.translate_frac, cfg.translate_frac) * in.h;
    return apply_affine(in, rot, scale, shear, tx, ty);
}

}  // namespace lvseg
