#include "lvseg/unet.hpp"

#include <stdexcept>

#include "lvseg/rng.hpp"

namespace lvseg {

void UNetConfig::validate() const {
    if (levels < 2) throw std::runtime_error("unet needs at least 2 levels");
    if (base_filters < 1) throw std::runtime_error("base_filters must be positive");
    if (in_channels != 1 || out_channels != 2)
        throw std::runtime_error("unet is built for 1 input channel and 2 classes");
    const int div = 1 << (levels - 1);
    if (input_h % div || input_w % div)
        throw std::runtime_error("input size must be divisible by 2^(levels-1)");
}

namespace {

ConvBlock make_block(int in_ch, int out_ch, Rng& rng) {
    ConvBlock b;
    b.c1 = Conv2d::he_init(in_ch, out_ch, 3, rng);
    b.bn1 = BatchNorm2d::init(out_ch);
    b.c2 = Conv2d::he_init(out_ch, out_ch, 3, rng);
    b.bn2 = BatchNorm2d::init(out_ch);
    return b;
}

Tensor block_fwd(ConvBlock& b, const Tensor& x, bool train, ConvBlockCache* cache) {
    if (cache) cache->x = x;
    Tensor t = conv2d_fwd(b.c1, x);
    if (cache) cache->c1_out = t;
    t = batchnorm_fwd(b.bn1, t, train, cache ? &cache->bn1 : nullptr);
    if (cache) cache->r1_in = t;
    t = relu_fwd(t);
    if (cache) cache->r1_out = t;
    Tensor u = conv2d_fwd(b.c2, t);
    if (cache) cache->c2_out = u;
    u = batchnorm_fwd(b.bn2, u, train, cache ? &cache->bn2 : nullptr);
    if (cache) cache->r2_in = u;
    return relu_fwd(u);
}

// Returns dL/dx of the block; accumulates parameter grads into the provided
// slots (which must be zero-initialized or freshly assigned).
Tensor block_bwd(const ConvBlock& b, const ConvBlockCache& cache, const Tensor& dout,
                 Tensor& dw1, Tensor& db1, Tensor& dg1, Tensor& dbeta1, Tensor& dw2, Tensor& db2,
                 Tensor& dg2, Tensor& dbeta2) {
    Tensor d = relu_bwd(cache.r2_in, dout);
    Tensor dc2;
    batchnorm_bwd(b.bn2, cache.bn2, d, dc2, dg2, dbeta2);
    Tensor dr1;
    conv2d_bwd(b.c2, cache.r1_out, dc2, dr1, dw2, db2);
    d = relu_bwd(cache.r1_in, dr1);
    Tensor dc1;
    batchnorm_bwd(b.bn1, cache.bn1, d, dc1, dg1, dbeta1);
    Tensor dx;
    conv2d_bwd(b.c1, cache.x, dc1, dx, dw1, db1);
    return dx;
}

Tensor concat_channels(const Tensor& a, const Tensor& b) {
    const std::size_t N = a.dim(0), Ca = a.dim(1), Cb = b.dim(1), H = a.dim(2), W = a.dim(3);
    if (b.dim(0) != N || b.dim(2) != H || b.dim(3) != W)
        throw std::runtime_error("concat: spatial shape mismatch");
    Tensor out({N, Ca + Cb, H, W});
    for (std::size_t n = 0; n < N; ++n) {
        std::copy_n(&a.data[(n * Ca) * H * W], Ca * H * W, &out.data[(n * (Ca + Cb)) * H * W]);
        std::copy_n(&b.data[(n * Cb) * H * W], Cb * H * W,
                    &out.data[(n * (Ca + Cb) + Ca) * H * W]);
    }
    return out;
}

void split_channels(const Tensor& d, std::size_t Ca, Tensor& da, Tensor& db) {
    const std::size_t N = d.dim(0), C = d.dim(1), H = d.dim(2), W = d.dim(3);
    const std::size_t Cb = C - Ca;
    da = Tensor({N, Ca, H, W});
    db = Tensor({N, Cb, H, W});
    for (std::size_t n = 0; n < N; ++n) {
        std::copy_n(&d.data[(n * C) * H * W], Ca * H * W, &da.data[(n * Ca) * H * W]);
        std::copy_n(&d.data[(n * C + Ca) * H * W], Cb * H * W, &db.data[(n * Cb) * H * W]);
    }
}

}  // namespace

UNet UNet::he_init(const UNetConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    Rng rng(mix_seed(seed, 0x0e7a11ULL));
    UNet net;
    net.cfg = cfg;
    const int L = cfg.levels, f = cfg.base_filters;
    for (int i = 0; i < L - 1; ++i)
        net.enc.push_back(make_block(i == 0 ? cfg.in_channels : f << (i - 1), f << i, rng));
    net.bottom = make_block(f << (L - 2), f << (L - 1), rng);
    for (int i = L - 2; i >= 0; --i) {
        net.up.push_back(TConv2d::he_init(f << (i + 1), f << i, rng));
        net.dec.push_back(make_block(f << (i + 1), f << i, rng));
    }
    net.head = Conv2d::he_init(f, cfg.out_channels, 3, rng);
    return net;
}

Tensor UNet::forward(const Tensor& x, bool train, UNetCache* cache) {
    require_shape(x, {x.dim(0), static_cast<std::size_t>(cfg.in_channels),
                      static_cast<std::size_t>(cfg.input_h), static_cast<std::size_t>(cfg.input_w)},
                  "unet input");
    if (train && !cache) throw std::runtime_error("unet: train-mode forward needs a cache");
    const int L = cfg.levels;
    if (cache) {
        cache->input = x;
        cache->enc.resize(L - 1);
        cache->pool_argmax.resize(L - 1);
        cache->pool_in_shape.resize(L - 1);
        cache->up_in.resize(L - 1);
        cache->concat.resize(L - 1);
        cache->dec.resize(L - 1);
    }

    std::vector<Tensor> skips(L - 1);
    Tensor cur = x;
    for (int i = 0; i < L - 1; ++i) {
        skips[i] = block_fwd(enc[i], cur, train, cache ? &cache->enc[i] : nullptr);
        std::vector<std::int64_t> argmax;
        if (cache) cache->pool_in_shape[i] = skips[i].shape;
        cur = maxpool2x2_fwd(skips[i], argmax);
        if (cache) cache->pool_argmax[i] = std::move(argmax);
    }
    cur = block_fwd(bottom, cur, train, cache ? &cache->bottom : nullptr);
    for (int d = 0; d < L - 1; ++d) {
        const int level = L - 2 - d;  // deepest first
        if (cache) cache->up_in[d] = cur;
        Tensor upsampled = tconv2x2_fwd(up[d], cur);
        Tensor cat = concat_channels(upsampled, skips[level]);
        if (cache) cache->concat[d] = cat;
        cur = block_fwd(dec[d], cat, train, cache ? &cache->dec[d] : nullptr);
    }
    if (cache) cache->head_in = cur;
    Tensor logits = conv2d_fwd(head, cur);
    Tensor probs = softmax_fwd(logits);
    if (cache) cache->probs = probs;
    return probs;
}

std::vector<std::string> UNet::param_names() const {
    std::vector<std::string> names;
    auto block = [&names](const std::string& prefix) {
        for (const char* s : {".c1.w", ".c1.b", ".bn1.gamma", ".bn1.beta", ".c2.w", ".c2.b",
                              ".bn2.gamma", ".bn2.beta"})
            names.push_back(prefix + s);
    };
    for (std::size_t i = 0; i < enc.size(); ++i) block("enc" + std::to_string(i));
    block("bottom");
    for (std::size_t i = 0; i < up.size(); ++i) {
        names.push_back("up" + std::to_string(i) + ".w");
        names.push_back("up" + std::to_string(i) + ".b");
        block("dec" + std::to_string(i));
    }
    names.push_back("head.w");
    names.push_back("head.b");
    return names;
}

std::vector<Tensor*> UNet::params() {
    std::vector<Tensor*> out;
    auto block = [&out](ConvBlock& b) {
        out.push_back(&b.c1.w);
        out.push_back(&b.c1.b);
        out.push_back(&b.bn1.gamma);
        out.push_back(&b.bn1.beta);
        out.push_back(&b.c2.w);
        out.push_back(&b.c2.b);
        out.push_back(&b.bn2.gamma);
        out.push_back(&b.bn2.beta);
    };
    for (auto& e : enc) block(e);
    block(bottom);
    for (std::size_t i = 0; i < up.size(); ++i) {
        out.push_back(&up[i].w);
        out.push_back(&up[i].b);
        block(dec[i]);
    }
    out.push_back(&head.w);
    out.push_back(&head.b);
    return out;
}

std::vector<const Tensor*> UNet::params() const {
    auto mut = const_cast<UNet*>(this)->params();
    return {mut.begin(), mut.end()};
}

std::vector<std::string> UNet::buffer_names() const {
    std::vector<std::string> names;
    auto block = [&names](const std::string& prefix) {
        for (const char* s : {".bn1.running_mean", ".bn1.running_var", ".bn2.running_mean",
                              ".bn2.running_var"})
            names.push_back(prefix + s);
    };
    for (std::size_t i = 0; i < enc.size(); ++i) block("enc" + std::to_string(i));
    block("bottom");
    for (std::size_t i = 0; i < dec.size(); ++i) block("dec" + std::to_string(i));
    return names;
}

std::vector<Tensor*> UNet::buffers() {
    std::vector<Tensor*> out;
    auto block = [&out](ConvBlock& b) {
        out.push_back(&b.bn1.running_mean);
        out.push_back(&b.bn1.running_var);
        out.push_back(&b.bn2.running_mean);
        out.push_back(&b.bn2.running_var);
    };
    for (auto& e : enc) block(e);
    block(bottom);
    for (auto& d : dec) block(d);
    return out;
}

std::vector<const Tensor*> UNet::buffers() const {
    auto mut = const_cast<UNet*>(this)->buffers();
    return {mut.begin(), mut.end()};
}

UNetGrads UNet::backward(const UNetCache& cache, const Tensor& dprobs) {
    const int L = cfg.levels;
    UNetGrads g;
    g.tensors.resize(params().size());

    // indices into the flat grad vector follow param_names() order
    std::size_t enc_base = 0;                            // enc blocks: 8 each
    std::size_t bottom_base = (L - 1) * 8;               // bottom block
    std::size_t up_base = bottom_base + 8;               // per decoder: 2 (tconv) + 8 (block)
    std::size_t head_base = up_base + (L - 1) * 10;

    Tensor d = softmax_bwd(cache.probs, dprobs);
    Tensor dhead_in;
    conv2d_bwd(head, cache.head_in, d, dhead_in, g.tensors[head_base], g.tensors[head_base + 1]);

    std::vector<Tensor> dskips(L - 1);
    Tensor cur = dhead_in;
    for (int di = L - 2; di >= 0; --di) {
        const int level = L - 2 - di;  // dec[di] corresponds to skip[level]
        const std::size_t base = up_base + di * 10;
        Tensor dcat = block_bwd(dec[di], cache.dec[di], cur, g.tensors[base + 2],
                                g.tensors[base + 3], g.tensors[base + 4], g.tensors[base + 5],
                                g.tensors[base + 6], g.tensors[base + 7], g.tensors[base + 8],
                                g.tensors[base + 9]);
        Tensor dup, dskip;
        split_channels(dcat, up[di].out_ch, dup, dskip);
        dskips[level] = std::move(dskip);
        Tensor dprev;
        tconv2x2_bwd(up[di], cache.up_in[di], dup, dprev, g.tensors[base], g.tensors[base + 1]);
        cur = std::move(dprev);
    }

    Tensor dbottom = block_bwd(bottom, cache.bottom, cur, g.tensors[bottom_base],
                               g.tensors[bottom_base + 1], g.tensors[bottom_base + 2],
                               g.tensors[bottom_base + 3], g.tensors[bottom_base + 4],
                               g.tensors[bottom_base + 5], g.tensors[bottom_base + 6],
                               g.tensors[bottom_base + 7]);
    cur = std::move(dbottom);

    for (int i = L - 2; i >= 0; --i) {
        Tensor dpool = maxpool2x2_bwd(cur, cache.pool_argmax[i], cache.pool_in_shape[i]);
        // gradient reaches the skip both through the pool and the decoder concat
        for (std::size_t q = 0; q < dpool.numel(); ++q) dpool.data[q] += dskips[i].data[q];
        const std::size_t base = enc_base + i * 8;
        cur = block_bwd(enc[i], cache.enc[i], dpool, g.tensors[base], g.tensors[base + 1],
                        g.tensors[base + 2], g.tensors[base + 3], g.tensors[base + 4],
                        g.tensors[base + 5], g.tensors[base + 6], g.tensors[base + 7]);
    }
    return g;
}

}  // namespace lvseg
