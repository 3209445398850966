#include "lvseg/layers.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "lvseg/parallel.hpp"

namespace lvseg {

namespace {

void require_4d(const Tensor& t, const char* what) {
    if (t.shape.size() != 4) throw std::runtime_error(std::string(what) + ": expected a 4D tensor");
}

}  // namespace

Conv2d Conv2d::he_init(int in_ch, int out_ch, int k, Rng& rng) {
    if (k % 2 == 0) throw std::runtime_error("conv kernel must be odd");
    Conv2d c;
    c.in_ch = in_ch;
    c.out_ch = out_ch;
    c.k = k;
    c.w = Tensor({static_cast<std::size_t>(out_ch), static_cast<std::size_t>(in_ch),
                  static_cast<std::size_t>(k), static_cast<std::size_t>(k)});
    c.b = Tensor({static_cast<std::size_t>(out_ch)});
    const double sd = std::sqrt(2.0 / (in_ch * k * k));
    for (auto& v : c.w.data) v = rng.normal(0.0, sd);
    return c;
}

Tensor conv2d_fwd(const Conv2d& c, const Tensor& x) {
    require_4d(x, "conv2d");
    const std::size_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    if (C != static_cast<std::size_t>(c.in_ch)) throw std::runtime_error("conv2d: channel mismatch");
    const int k = c.k, p = c.k / 2;
    Tensor y({N, static_cast<std::size_t>(c.out_ch), H, W});

    parallel_for(N * c.out_ch, [&](std::size_t task) {
        const std::size_t n = task / c.out_ch;
        const std::size_t oc = task % c.out_ch;
        double* yp = &y.data[((n * c.out_ch + oc) * H) * W];
        for (std::size_t i = 0; i < H * W; ++i) yp[i] = c.b.data[oc];
        for (std::size_t ic = 0; ic < C; ++ic) {
            const double* xp = &x.data[((n * C + ic) * H) * W];
            const double* wp = &c.w.data[((oc * C + ic) * k) * k];
            for (int ky = 0; ky < k; ++ky) {
                for (int kx = 0; kx < k; ++kx) {
                    const double wv = wp[ky * k + kx];
                    if (wv == 0.0) continue;
                    const int dy = ky - p, dx = kx - p;
                    const int y0 = std::max(0, -dy), y1 = static_cast<int>(H) - std::max(0, dy);
                    const int x0 = std::max(0, -dx), x1 = static_cast<int>(W) - std::max(0, dx);
                    for (int yy = y0; yy < y1; ++yy) {
                        double* orow = yp + yy * W;
                        const double* irow = xp + (yy + dy) * W + dx;
                        for (int xx = x0; xx < x1; ++xx) orow[xx] += wv * irow[xx];
                    }
                }
            }
        }
    });
    return y;
}

void conv2d_bwd(const Conv2d& c, const Tensor& x, const Tensor& dy, Tensor& dx, Tensor& dw,
                Tensor& db) {
    const std::size_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    const int k = c.k, p = c.k / 2;
    const std::size_t OC = c.out_ch;
    dx = Tensor(x.shape);
    dw = Tensor(c.w.shape);
    db = Tensor(c.b.shape);

    // dx: full correlation of dy with the flipped kernel; one task owns one
    // (n, ic) plane
    parallel_for(N * C, [&](std::size_t task) {
        const std::size_t n = task / C;
        const std::size_t ic = task % C;
        double* dxp = &dx.data[((n * C + ic) * H) * W];
        for (std::size_t oc = 0; oc < OC; ++oc) {
            const double* dyp = &dy.data[((n * OC + oc) * H) * W];
            const double* wp = &c.w.data[((oc * C + ic) * k) * k];
            for (int ky = 0; ky < k; ++ky) {
                for (int kx = 0; kx < k; ++kx) {
                    const double wv = wp[ky * k + kx];
                    if (wv == 0.0) continue;
                    // x[y+dy] contributes to y via w[ky]; reverse direction
                    const int dyo = ky - p, dxo = kx - p;
                    const int y0 = std::max(0, dyo), y1 = static_cast<int>(H) + std::min(0, dyo);
                    const int x0 = std::max(0, dxo), x1 = static_cast<int>(W) + std::min(0, dxo);
                    for (int yy = y0; yy < y1; ++yy) {
                        double* drow = dxp + yy * W;
                        const double* grow = dyp + (yy - dyo) * W - dxo;
                        for (int xx = x0; xx < x1; ++xx) drow[xx] += wv * grow[xx];
                    }
                }
            }
        }
    });

    // dw: one task owns one (oc, ic) kernel slice
    parallel_for(OC * C, [&](std::size_t task) {
        const std::size_t oc = task / C;
        const std::size_t ic = task % C;
        double* dwp = &dw.data[((oc * C + ic) * k) * k];
        for (int ky = 0; ky < k; ++ky) {
            for (int kx = 0; kx < k; ++kx) {
                const int dyo = ky - p, dxo = kx - p;
                const int y0 = std::max(0, -dyo), y1 = static_cast<int>(H) - std::max(0, dyo);
                const int x0 = std::max(0, -dxo), x1 = static_cast<int>(W) - std::max(0, dxo);
                double acc = 0.0;
                for (std::size_t n = 0; n < N; ++n) {
                    const double* xp = &x.data[((n * C + ic) * H) * W];
                    const double* dyp = &dy.data[((n * OC + oc) * H) * W];
                    for (int yy = y0; yy < y1; ++yy) {
                        const double* irow = xp + (yy + dyo) * W + dxo;
                        const double* grow = dyp + yy * W;
                        for (int xx = x0; xx < x1; ++xx) acc += irow[xx] * grow[xx];
                    }
                }
                dwp[ky * k + kx] = acc;
            }
        }
    });

    // db: one task per output channel
    parallel_for(OC, [&](std::size_t oc) {
        double acc = 0.0;
        for (std::size_t n = 0; n < N; ++n) {
            const double* dyp = &dy.data[((n * OC + oc) * H) * W];
            for (std::size_t i = 0; i < H * W; ++i) acc += dyp[i];
        }
        db.data[oc] = acc;
    });
}

Tensor maxpool2x2_fwd(const Tensor& x, std::vector<std::int64_t>& argmax) {
    require_4d(x, "maxpool");
    const std::size_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    if (H % 2 || W % 2) throw std::runtime_error("maxpool: H and W must be even");
    Tensor y({N, C, H / 2, W / 2});
    argmax.assign(y.numel(), 0);
    parallel_for(N * C, [&](std::size_t task) {
        const std::size_t n = task / C, ch = task % C;
        const double* xp = &x.data[((n * C + ch) * H) * W];
        const std::size_t plane = ((n * C + ch) * H) * W;
        double* yp = &y.data[((n * C + ch) * (H / 2)) * (W / 2)];
        std::int64_t* ap = &argmax[((n * C + ch) * (H / 2)) * (W / 2)];
        for (std::size_t oy = 0; oy < H / 2; ++oy) {
            for (std::size_t ox = 0; ox < W / 2; ++ox) {
                double best = -1e300;
                std::size_t best_idx = 0;
                for (int ky = 0; ky < 2; ++ky)
                    for (int kx = 0; kx < 2; ++kx) {
                        const std::size_t idx = (2 * oy + ky) * W + (2 * ox + kx);
                        if (xp[idx] > best) {  // strict: ties keep the first
                            best = xp[idx];
                            best_idx = idx;
                        }
                    }
                yp[oy * (W / 2) + ox] = best;
                ap[oy * (W / 2) + ox] = static_cast<std::int64_t>(plane + best_idx);
            }
        }
    });
    return y;
}

Tensor maxpool2x2_bwd(const Tensor& dy, const std::vector<std::int64_t>& argmax,
                      const std::vector<std::size_t>& x_shape) {
    Tensor dx(x_shape);
    for (std::size_t i = 0; i < dy.numel(); ++i)
        dx.data[static_cast<std::size_t>(argmax[i])] += dy.data[i];
    return dx;
}

TConv2d TConv2d::he_init(int in_ch, int out_ch, Rng& rng) {
    TConv2d c;
    c.in_ch = in_ch;
    c.out_ch = out_ch;
    c.w = Tensor({static_cast<std::size_t>(in_ch), static_cast<std::size_t>(out_ch), 2, 2});
    c.b = Tensor({static_cast<std::size_t>(out_ch)});
    const double sd = std::sqrt(2.0 / (in_ch * 4));
    for (auto& v : c.w.data) v = rng.normal(0.0, sd);
    return c;
}

Tensor tconv2x2_fwd(const TConv2d& c, const Tensor& x) {
    require_4d(x, "tconv2x2");
    const std::size_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    if (C != static_cast<std::size_t>(c.in_ch)) throw std::runtime_error("tconv: channel mismatch");
    const std::size_t OC = c.out_ch;
    Tensor y({N, OC, 2 * H, 2 * W});
    // kernel 2 stride 2: each output element receives exactly one contribution
    parallel_for(N * OC, [&](std::size_t task) {
        const std::size_t n = task / OC, oc = task % OC;
        double* yp = &y.data[((n * OC + oc) * 2 * H) * 2 * W];
        for (std::size_t i = 0; i < 4 * H * W; ++i) yp[i] = c.b.data[oc];
        for (std::size_t ic = 0; ic < C; ++ic) {
            const double* xp = &x.data[((n * C + ic) * H) * W];
            const double* wp = &c.w.data[((ic * OC + oc) * 2) * 2];
            for (std::size_t yy = 0; yy < H; ++yy)
                for (std::size_t xx = 0; xx < W; ++xx) {
                    const double v = xp[yy * W + xx];
                    double* orow = yp + (2 * yy) * (2 * W) + 2 * xx;
                    orow[0] += v * wp[0];
                    orow[1] += v * wp[1];
                    orow[2 * W] += v * wp[2];
                    orow[2 * W + 1] += v * wp[3];
                }
        }
    });
    return y;
}

void tconv2x2_bwd(const TConv2d& c, const Tensor& x, const Tensor& dy, Tensor& dx, Tensor& dw,
                  Tensor& db) {
    const std::size_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    const std::size_t OC = c.out_ch;
    dx = Tensor(x.shape);
    dw = Tensor(c.w.shape);
    db = Tensor(c.b.shape);

    parallel_for(N * C, [&](std::size_t task) {
        const std::size_t n = task / C, ic = task % C;
        double* dxp = &dx.data[((n * C + ic) * H) * W];
        for (std::size_t oc = 0; oc < OC; ++oc) {
            const double* dyp = &dy.data[((n * OC + oc) * 2 * H) * 2 * W];
            const double* wp = &c.w.data[((ic * OC + oc) * 2) * 2];
            for (std::size_t yy = 0; yy < H; ++yy)
                for (std::size_t xx = 0; xx < W; ++xx) {
                    const double* grow = dyp + (2 * yy) * (2 * W) + 2 * xx;
                    dxp[yy * W + xx] += wp[0] * grow[0] + wp[1] * grow[1] +
                                        wp[2] * grow[2 * W] + wp[3] * grow[2 * W + 1];
                }
        }
    });

    parallel_for(C * OC, [&](std::size_t task) {
        const std::size_t ic = task / OC, oc = task % OC;
        double acc[4] = {0, 0, 0, 0};
        for (std::size_t n = 0; n < N; ++n) {
            const double* xp = &x.data[((n * C + ic) * H) * W];
            const double* dyp = &dy.data[((n * OC + oc) * 2 * H) * 2 * W];
            for (std::size_t yy = 0; yy < H; ++yy)
                for (std::size_t xx = 0; xx < W; ++xx) {
                    const double v = xp[yy * W + xx];
                    const double* grow = dyp + (2 * yy) * (2 * W) + 2 * xx;
                    acc[0] += v * grow[0];
                    acc[1] += v * grow[1];
                    acc[2] += v * grow[2 * W];
                    acc[3] += v * grow[2 * W + 1];
                }
        }
        double* dwp = &dw.data[((ic * OC + oc) * 2) * 2];
        for (int i = 0; i < 4; ++i) dwp[i] = acc[i];
    });

    parallel_for(OC, [&](std::size_t oc) {
        double acc = 0.0;
        for (std::size_t n = 0; n < N; ++n) {
            const double* dyp = &dy.data[((n * OC + oc) * 2 * H) * 2 * W];
            for (std::size_t i = 0; i < 4 * H * W; ++i) acc += dyp[i];
        }
        db.data[oc] = acc;
    });
}

BatchNorm2d BatchNorm2d::init(int ch) {
    BatchNorm2d bn;
    bn.ch = ch;
    bn.gamma = Tensor({static_cast<std::size_t>(ch)});
    bn.beta = Tensor({static_cast<std::size_t>(ch)});
    bn.running_mean = Tensor({static_cast<std::size_t>(ch)});
    bn.running_var = Tensor({static_cast<std::size_t>(ch)});
    bn.gamma.fill(1.0);
    bn.running_var.fill(1.0);
    return bn;
}

Tensor batchnorm_fwd(BatchNorm2d& bn, const Tensor& x, bool train, BnCache* cache) {
    require_4d(x, "batchnorm");
    const std::size_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    if (C != static_cast<std::size_t>(bn.ch)) throw std::runtime_error("batchnorm: channel mismatch");
    Tensor y(x.shape);
    const std::size_t m = N * H * W;

    if (!train) {
        parallel_for(C, [&](std::size_t c) {
            const double inv = 1.0 / std::sqrt(bn.running_var.data[c] + bn.eps);
            const double g = bn.gamma.data[c], b = bn.beta.data[c], mu = bn.running_mean.data[c];
            for (std::size_t n = 0; n < N; ++n) {
                const double* xp = &x.data[((n * C + c) * H) * W];
                double* yp = &y.data[((n * C + c) * H) * W];
                for (std::size_t i = 0; i < H * W; ++i) yp[i] = g * (xp[i] - mu) * inv + b;
            }
        });
        return y;
    }

    if (!cache) throw std::runtime_error("batchnorm: train mode needs a cache");
    cache->mean.assign(C, 0.0);
    cache->var.assign(C, 0.0);
    cache->xhat = Tensor(x.shape);
    parallel_for(C, [&](std::size_t c) {
        double s = 0.0;
        for (std::size_t n = 0; n < N; ++n) {
            const double* xp = &x.data[((n * C + c) * H) * W];
            for (std::size_t i = 0; i < H * W; ++i) s += xp[i];
        }
        const double mu = s / static_cast<double>(m);
        double ss = 0.0;
        for (std::size_t n = 0; n < N; ++n) {
            const double* xp = &x.data[((n * C + c) * H) * W];
            for (std::size_t i = 0; i < H * W; ++i) ss += (xp[i] - mu) * (xp[i] - mu);
        }
        const double var = ss / static_cast<double>(m);
        cache->mean[c] = mu;
        cache->var[c] = var;
        const double inv = 1.0 / std::sqrt(var + bn.eps);
        const double g = bn.gamma.data[c], b = bn.beta.data[c];
        for (std::size_t n = 0; n < N; ++n) {
            const double* xp = &x.data[((n * C + c) * H) * W];
            double* hp = &cache->xhat.data[((n * C + c) * H) * W];
            double* yp = &y.data[((n * C + c) * H) * W];
            for (std::size_t i = 0; i < H * W; ++i) {
                hp[i] = (xp[i] - mu) * inv;
                yp[i] = g * hp[i] + b;
            }
        }
        bn.running_mean.data[c] = bn.momentum * bn.running_mean.data[c] + (1.0 - bn.momentum) * mu;
        bn.running_var.data[c] = bn.momentum * bn.running_var.data[c] + (1.0 - bn.momentum) * var;
    });
    return y;
}

void batchnorm_bwd(const BatchNorm2d& bn, const BnCache& cache, const Tensor& dy, Tensor& dx,
                   Tensor& dgamma, Tensor& dbeta) {
    const std::size_t N = dy.dim(0), C = dy.dim(1), H = dy.dim(2), W = dy.dim(3);
    const double m = static_cast<double>(N * H * W);
    dx = Tensor(dy.shape);
    dgamma = Tensor(bn.gamma.shape);
    dbeta = Tensor(bn.beta.shape);
    parallel_for(C, [&](std::size_t c) {
        const double inv = 1.0 / std::sqrt(cache.var[c] + bn.eps);
        const double g = bn.gamma.data[c];
        double sum_dy = 0.0, sum_dy_xhat = 0.0;
        for (std::size_t n = 0; n < N; ++n) {
            const double* dyp = &dy.data[((n * C + c) * H) * W];
            const double* hp = &cache.xhat.data[((n * C + c) * H) * W];
            for (std::size_t i = 0; i < H * W; ++i) {
                sum_dy += dyp[i];
                sum_dy_xhat += dyp[i] * hp[i];
            }
        }
        dgamma.data[c] = sum_dy_xhat;
        dbeta.data[c] = sum_dy;
        // dx = g*inv/m * (m*dy - sum(dy) - xhat * sum(dy*xhat))
        const double a = g * inv / m;
        for (std::size_t n = 0; n < N; ++n) {
            const double* dyp = &dy.data[((n * C + c) * H) * W];
            const double* hp = &cache.xhat.data[((n * C + c) * H) * W];
            double* dxp = &dx.data[((n * C + c) * H) * W];
            for (std::size_t i = 0; i < H * W; ++i)
                dxp[i] = a * (m * dyp[i] - sum_dy - hp[i] * sum_dy_xhat);
        }
    });
}

Tensor relu_fwd(const Tensor& x) {
    Tensor y = x;
    for (auto& v : y.data) v = v > 0.0 ? v : 0.0;
    return y;
}

Tensor relu_bwd(const Tensor& x, const Tensor& dy) {
    Tensor dx = dy;
    for (std::size_t i = 0; i < x.numel(); ++i)
        if (x.data[i] <= 0.0) dx.data[i] = 0.0;
    return dx;
}

Tensor softmax_fwd(const Tensor& logits) {
    require_4d(logits, "softmax");
    const std::size_t N = logits.dim(0), C = logits.dim(1), H = logits.dim(2), W = logits.dim(3);
    Tensor p(logits.shape);
    parallel_for(N, [&](std::size_t n) {
        for (std::size_t y = 0; y < H; ++y)
            for (std::size_t x = 0; x < W; ++x) {
                double mx = -1e300;
                for (std::size_t c = 0; c < C; ++c) mx = std::max(mx, logits.at4(n, c, y, x));
                double z = 0.0;
                for (std::size_t c = 0; c < C; ++c) z += std::exp(logits.at4(n, c, y, x) - mx);
                for (std::size_t c = 0; c < C; ++c)
                    p.at4(n, c, y, x) = std::exp(logits.at4(n, c, y, x) - mx) / z;
            }
    });
    return p;
}

Tensor softmax_bwd(const Tensor& probs, const Tensor& dprobs) {
    const std::size_t N = probs.dim(0), C = probs.dim(1), H = probs.dim(2), W = probs.dim(3);
    Tensor dz(probs.shape);
    parallel_for(N, [&](std::size_t n) {
        for (std::size_t y = 0; y < H; ++y)
            for (std::size_t x = 0; x < W; ++x) {
                double dot = 0.0;
                for (std::size_t c = 0; c < C; ++c) dot += dprobs.at4(n, c, y, x) * probs.at4(n, c, y, x);
                for (std::size_t c = 0; c < C; ++c)
                    dz.at4(n, c, y, x) = probs.at4(n, c, y, x) * (dprobs.at4(n, c, y, x) - dot);
            }
    });
    return dz;
}

double generalized_dice_loss(const Tensor& probs, const Tensor& target, Tensor* dprobs) {
    if (!probs.same_shape(target)) throw std::runtime_error("gdl: shape mismatch");
    require_4d(probs, "gdl");
    const std::size_t N = probs.dim(0), C = probs.dim(1), H = probs.dim(2), W = probs.dim(3);
    constexpr double eps = 1e-6;

    std::vector<double> r_sum(C, 0.0), rp_sum(C, 0.0), p_sum(C, 0.0);
    for (std::size_t n = 0; n < N; ++n)
        for (std::size_t c = 0; c < C; ++c) {
            const double* pp = &probs.data[((n * C + c) * H) * W];
            const double* tp = &target.data[((n * C + c) * H) * W];
            double rs = 0.0, rps = 0.0, ps = 0.0;
            for (std::size_t i = 0; i < H * W; ++i) {
                rs += tp[i];
                rps += tp[i] * pp[i];
                ps += pp[i];
            }
            r_sum[c] += rs;
            rp_sum[c] += rps;
            p_sum[c] += ps;
        }

    std::vector<double> wgt(C);
    double num = 0.0, den = 0.0;
    for (std::size_t c = 0; c < C; ++c) {
        wgt[c] = 1.0 / ((r_sum[c] + eps) * (r_sum[c] + eps));
        num += wgt[c] * rp_sum[c];
        den += wgt[c] * (r_sum[c] + p_sum[c]);
    }
    const double loss = 1.0 - 2.0 * num / den;

    if (dprobs) {
        *dprobs = Tensor(probs.shape);
        // d/dp_li = 2 (w_l num - w_l r_li den) / den^2 ... sign: d(-2num/den)
        const double den2 = den * den;
        for (std::size_t n = 0; n < N; ++n)
            for (std::size_t c = 0; c < C; ++c) {
                const double* tp = &target.data[((n * C + c) * H) * W];
                double* dp = &dprobs->data[((n * C + c) * H) * W];
                const double w = wgt[c];
                for (std::size_t i = 0; i < H * W; ++i)
                    dp[i] = 2.0 * (w * num - w * tp[i] * den) / den2;
            }
    }
    return loss;
}

}  // namespace lvseg
