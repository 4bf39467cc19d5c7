#pragma once

#include <cstdint>
#include <numeric>
#include <string>
#include <unordered_map>
#include <vector>

#include "esrt/nn_ops.hpp"
#include "esrt/rng.hpp"

// The ESRT architecture: shallow feature extraction, a CNN backbone of high
// preserving blocks, a Transformer backbone over unfolded patch sequences,
// and a pixel-shuffle reconstruction head with a global skip.

namespace esrt {

struct Conv2dSpec {
    int64_t in_channels = 0;
    int64_t out_channels = 0;
    int64_t kernel = 3;  // stride 1, padding (kernel-1)/2, bias always present
};

struct UnfoldSpec {
    int64_t kernel = 3;  // stride 1, padding (kernel-1)/2, N = H*W
};

struct ModelConfig {
    int64_t channels = 32;       // feature width everywhere outside fusion layers
    int64_t n_hpb = 3;           // high preserving blocks
    int64_t n_et = 1;            // efficient Transformer encoders
    int64_t pool_k = 2;          // HFM average-pool kernel/stride
    int64_t unfold_k = 3;        // patch kernel for the Transformer pre/post-process
    int64_t split_s = 4;         // feature split factor in EMHA
    int64_t heads = 8;           // attention heads
    int64_t scale = 2;           // upscaling factor r
    int64_t hpb_shared_reps = 5; // applications of the weight-shared ARFB
    int64_t mlp_ratio = 2;       // ET MLP hidden width multiplier
    int64_t ca_reduction = 4;    // channel attention bottleneck divisor

    int64_t embed_dim() const { return channels * unfold_k * unfold_k; }
    int64_t reduced_dim() const { return embed_dim() / 2; }
    int64_t head_dim() const { return reduced_dim() / heads; }

    void validate() const {
        if (channels < 2 || channels % 2 != 0)
            throw ConfigError("channels must be even and >= 2 (Reduction halves them)");
        if (n_hpb < 1 || n_et < 1) throw ConfigError("n_hpb and n_et must be >= 1");
        if (pool_k < 1) throw ConfigError("pool_k must be >= 1");
        if (unfold_k < 1 || unfold_k % 2 == 0) throw ConfigError("unfold_k must be odd");
        if (split_s < 1) throw ConfigError("split_s must be >= 1");
        if (heads < 1) throw ConfigError("heads must be >= 1");
        if (scale < 2 || scale > 4) throw ConfigError("scale must be 2, 3 or 4");
        if (hpb_shared_reps < 1) throw ConfigError("hpb_shared_reps must be >= 1");
        if (mlp_ratio < 1) throw ConfigError("mlp_ratio must be >= 1");
        if (ca_reduction < 1 || channels % ca_reduction != 0)
            throw ConfigError("ca_reduction must divide channels");
        if (embed_dim() % 2 != 0) throw ConfigError("embed dim must be even");
        if (reduced_dim() % heads != 0)
            throw ConfigError("reduced embed dim " + std::to_string(reduced_dim()) +
                              " not divisible by " + std::to_string(heads) + " heads");
    }
};

// Ordered name -> tensor map for all trainable weights. Insertion order is
// the canonical order for init, checkpoints and the optimizer.
template <typename T>
class ParamStore {
public:
    Tensor<T>& add(const std::string& name, Tensor<T> t) {
        if (index_.count(name)) throw ConfigError("duplicate parameter name: " + name);
        index_[name] = names_.size();
        names_.push_back(name);
        tensors_.push_back(std::move(t));
        return tensors_.back();
    }

    bool has(const std::string& name) const { return index_.count(name) != 0; }

    Tensor<T>& at(const std::string& name) {
        auto it = index_.find(name);
        if (it == index_.end()) throw ConfigError("unknown parameter: " + name);
        return tensors_[it->second];
    }
    const Tensor<T>& at(const std::string& name) const {
        auto it = index_.find(name);
        if (it == index_.end()) throw ConfigError("unknown parameter: " + name);
        return tensors_[it->second];
    }

    size_t count() const { return names_.size(); }
    const std::vector<std::string>& names() const { return names_; }

    int64_t total_elements() const {
        int64_t n = 0;
        for (const auto& t : tensors_) n += t.size();
        return n;
    }

    void watch_all(GradTape<T>& tape) {
        for (size_t i = 0; i < names_.size(); ++i) tape.watch(tensors_[i], names_[i]);
    }

    template <typename U>
    ParamStore<U> cast() const {
        ParamStore<U> out;
        for (size_t i = 0; i < names_.size(); ++i)
            out.add(names_[i], tensors_[i].template cast<U>());
        return out;
    }

private:
    std::vector<std::string> names_;
    std::unordered_map<std::string, size_t> index_;
    std::vector<Tensor<T>> tensors_;
};

// ---------------------------------------------------------------------------
// blocks
// ---------------------------------------------------------------------------

// High-frequency filtering: subtract the blockwise-average expansion from the
// input. upsample_nearest replicates each pooled cell, so input == result +
// upsampled average holds exactly.
template <typename T>
Tensor<T> hfm(GradTape<T>* tape, const Tensor<T>& t_l, int64_t k) {
    Tensor<T> t_a = avg_pool2d(tape, t_l, k);
    Tensor<T> t_u = upsample_nearest(tape, t_a, k);
    return sub(tape, t_l, t_u);
}

// Residual unit: 1x1 reduction to half channels, ReLU, 3x3 expansion back,
// with trainable weights on the residual and identity paths.
template <typename T>
Tensor<T> residual_unit(GradTape<T>* tape, const Tensor<T>& x, const ParamStore<T>& ps,
                        const std::string& p) {
    if (x.dim(1) % 2 != 0) throw ConfigError("residual_unit needs an even channel count");
    Tensor<T> h = conv2d(tape, x, ps.at(p + ".re.w"), ps.at(p + ".re.b"));
    h = relu(tape, h);
    h = conv2d(tape, h, ps.at(p + ".ex.w"), ps.at(p + ".ex.b"));
    Tensor<T> res = scale_by(tape, h, ps.at(p + ".lam_res"));
    Tensor<T> idn = scale_by(tape, x, ps.at(p + ".lam_x"));
    return add(tape, res, idn);
}

// Adaptive residual feature block: two chained RUs, concat of their outputs,
// 1x1 fuse back to C, 3x3 tail.
template <typename T>
Tensor<T> arfb(GradTape<T>* tape, const Tensor<T>& x, const ParamStore<T>& ps,
               const std::string& p) {
    Tensor<T> r1 = residual_unit(tape, x, ps, p + ".ru1");
    Tensor<T> r2 = residual_unit(tape, r1, ps, p + ".ru2");
    Tensor<T> cat = concat(tape, {r1, r2}, 1);
    Tensor<T> fused = conv2d(tape, cat, ps.at(p + ".fuse.w"), ps.at(p + ".fuse.b"));
    return conv2d(tape, fused, ps.at(p + ".tail.w"), ps.at(p + ".tail.b"));
}

// Squeeze-and-excitation style per-channel gating.
template <typename T>
Tensor<T> channel_attention(GradTape<T>* tape, const Tensor<T>& x, const ParamStore<T>& ps,
                            const std::string& p) {
    Tensor<T> g = global_avg_pool(tape, x);
    g = conv2d(tape, g, ps.at(p + ".fc1.w"), ps.at(p + ".fc1.b"));
    g = relu(tape, g);
    g = conv2d(tape, g, ps.at(p + ".fc2.w"), ps.at(p + ".fc2.b"));
    g = sigmoid(tape, g);
    return mul_channel(tape, x, g);
}

// High preserving block. The main branch runs at half resolution through one
// weight-shared ARFB applied hpb_shared_reps times; the high-frequency branch
// keeps full resolution. Odd inputs are reflect-padded to even and cropped
// back after fusion.
template <typename T>
Tensor<T> hpb(GradTape<T>* tape, const Tensor<T>& x, const ParamStore<T>& ps,
              const std::string& p, const ModelConfig& cfg) {
    const int64_t h = x.dim(2), w = x.dim(3);
    const int64_t unit = std::lcm<int64_t>(2, cfg.pool_k);
    const int64_t ph = (unit - h % unit) % unit;
    const int64_t pw = (unit - w % unit) % unit;

    Tensor<T> feat = arfb(tape, x, ps, p + ".pre");
    if (ph || pw) feat = reflect_pad2d(tape, feat, 0, ph, 0, pw);
    const int64_t fh = h + ph, fw = w + pw;

    Tensor<T> p_high = hfm(tape, feat, cfg.pool_k);
    Tensor<T> high = arfb(tape, p_high, ps, p + ".high");

    Tensor<T> low = resize_bilinear(tape, feat, fh / 2, fw / 2);
    for (int64_t i = 0; i < cfg.hpb_shared_reps; ++i) low = arfb(tape, low, ps, p + ".shared");
    low = resize_bilinear(tape, low, fh, fw);

    Tensor<T> cat = concat(tape, {high, low}, 1);
    Tensor<T> fused = conv2d(tape, cat, ps.at(p + ".fuse.w"), ps.at(p + ".fuse.b"));
    fused = channel_attention(tape, fused, ps, p + ".ca");
    Tensor<T> out = arfb(tape, fused, ps, p + ".tail");
    if (ph || pw) out = crop2d(tape, out, h, w);
    return add(tape, out, x);
}

namespace detail {

// EMHA over a B x N x C sequence. Reduction halves the channels, one linear
// produces Q/K/V, the feature split module cuts the sequence into s segments
// and each segment runs scaled dot-product attention independently, so the
// score tensors never exceed B x m x (N/s) x (N/s).
template <typename T>
Tensor<T> emha_seq(GradTape<T>* tape, const Tensor<T>& x, const ParamStore<T>& ps,
                   const std::string& p, int64_t s, int64_t m) {
    const int64_t bsz = x.dim(0), n = x.dim(1);
    const int64_t c1 = ps.at(p + ".reduce.w").dim(0);
    if (c1 % m != 0)
        throw ConfigError("EMHA: reduced dim " + std::to_string(c1) + " not divisible by " +
                          std::to_string(m) + " heads");
    const int64_t d = c1 / m;

    Tensor<T> e1 = linear(tape, x, ps.at(p + ".reduce.w"), ps.at(p + ".reduce.b"));
    Tensor<T> qkv = linear(tape, e1, ps.at(p + ".qkv.w"), ps.at(p + ".qkv.b"));

    auto heads_of = [&](int64_t off) {
        Tensor<T> t = slice(tape, qkv, 2, off, c1);
        t = reshape(tape, t, Shape{bsz, n, m, d});
        return permute(tape, t, {0, 2, 1, 3});  // B x m x N x d
    };
    Tensor<T> q = heads_of(0);
    Tensor<T> k = heads_of(c1);
    Tensor<T> v = heads_of(2 * c1);

    // pad the sequence to a multiple of s by replicating the final position;
    // padded outputs are dropped after attention.
    const int64_t pad = (s - n % s) % s;
    if (pad) {
        auto pad_seq = [&](const Tensor<T>& t) {
            Tensor<T> last = slice(tape, t, 2, n - 1, 1);
            std::vector<Tensor<T>> parts{t};
            for (int64_t i = 0; i < pad; ++i) parts.push_back(last);
            return concat(tape, parts, 2);
        };
        q = pad_seq(q);
        k = pad_seq(k);
        v = pad_seq(v);
    }
    const int64_t np = n + pad;
    const int64_t seg = np / s;

    const double scale = 1.0 / std::sqrt(double(d));
    std::vector<Tensor<T>> outs;
    outs.reserve(size_t(s));
    for (int64_t i = 0; i < s; ++i) {
        Tensor<T> qi = slice(tape, q, 2, i * seg, seg);
        Tensor<T> ki = slice(tape, k, 2, i * seg, seg);
        Tensor<T> vi = slice(tape, v, 2, i * seg, seg);
        Tensor<T> scores = matmul(tape, qi, transpose(tape, ki, 2, 3));
        scores = mul_scalar(tape, scores, scale);
        Tensor<T> attn = softmax(tape, scores, 3);
        outs.push_back(matmul(tape, attn, vi));
    }
    Tensor<T> o = s == 1 ? outs[0] : concat(tape, outs, 2);
    if (pad) o = slice(tape, o, 2, 0, n);

    o = permute(tape, o, {0, 2, 1, 3});             // B x N x m x d
    o = reshape(tape, o, Shape{bsz, n, c1});
    o = linear(tape, o, ps.at(p + ".proj.w"), ps.at(p + ".proj.b"));
    return linear(tape, o, ps.at(p + ".expand.w"), ps.at(p + ".expand.b"));
}

}  // namespace detail

// EMHA on the paper's B x C x N embedding layout.
template <typename T>
Tensor<T> emha(GradTape<T>* tape, const Tensor<T>& e, const ParamStore<T>& ps,
               const std::string& p, int64_t s, int64_t m) {
    require_rank(e, 3, "emha input");
    Tensor<T> x = transpose(tape, e, 1, 2);
    Tensor<T> y = detail::emha_seq(tape, x, ps, p, s, m);
    return transpose(tape, y, 1, 2);
}

// Pre-norm Transformer encoder: EMHA and MLP sub-blocks, each with a
// residual connection.
template <typename T>
Tensor<T> et_encoder(GradTape<T>* tape, const Tensor<T>& e, const ParamStore<T>& ps,
                     const std::string& p, const ModelConfig& cfg) {
    require_rank(e, 3, "et_encoder input");
    Tensor<T> x = transpose(tape, e, 1, 2);  // B x N x C

    Tensor<T> h = layer_norm(tape, x, ps.at(p + ".norm1.g"), ps.at(p + ".norm1.b"));
    h = detail::emha_seq(tape, h, ps, p, cfg.split_s, cfg.heads);
    Tensor<T> m1 = add(tape, x, h);

    Tensor<T> h2 = layer_norm(tape, m1, ps.at(p + ".norm2.g"), ps.at(p + ".norm2.b"));
    h2 = linear(tape, h2, ps.at(p + ".mlp.fc1.w"), ps.at(p + ".mlp.fc1.b"));
    h2 = gelu(tape, h2);
    h2 = linear(tape, h2, ps.at(p + ".mlp.fc2.w"), ps.at(p + ".mlp.fc2.b"));
    Tensor<T> out = add(tape, m1, h2);

    return transpose(tape, out, 1, 2);
}

// Full model: LR image in [0,1], B x 3 x H x W -> B x 3 x rH x rW.
template <typename T>
Tensor<T> esrt_forward(GradTape<T>* tape, const Tensor<T>& lr, const ParamStore<T>& ps,
                       const ModelConfig& cfg) {
    cfg.validate();
    require_rank(lr, 4, "esrt_forward input");
    if (lr.dim(2) < 4 || lr.dim(3) < 4)
        throw ArgError("esrt_forward: input must be at least 4x4");
    const int64_t h = lr.dim(2), w = lr.dim(3);

    Tensor<T> f0 = conv2d(tape, lr, ps.at("head.w"), ps.at("head.b"));

    std::vector<Tensor<T>> hpb_outs;
    Tensor<T> f = f0;
    for (int64_t i = 0; i < cfg.n_hpb; ++i) {
        f = hpb(tape, f, ps, "hpb" + std::to_string(i), cfg);
        hpb_outs.push_back(f);
    }

    Tensor<T> cat = concat(tape, hpb_outs, 1);
    Tensor<T> fused = conv2d(tape, cat, ps.at("fusion.w"), ps.at("fusion.b"));

    Tensor<T> cols = unfold(tape, fused, cfg.unfold_k);
    for (int64_t j = 0; j < cfg.n_et; ++j)
        cols = et_encoder(tape, cols, ps, "et" + std::to_string(j), cfg);
    Tensor<T> fd = fold(tape, cols, cfg.unfold_k, h, w);

    Tensor<T> main = conv2d(tape, fd, ps.at("recon.pre.w"), ps.at("recon.pre.b"));
    main = pixel_shuffle(tape, main, cfg.scale);
    main = conv2d(tape, main, ps.at("recon.final.w"), ps.at("recon.final.b"));

    Tensor<T> skip = conv2d(tape, f0, ps.at("recon.skip.w"), ps.at("recon.skip.b"));
    skip = pixel_shuffle(tape, skip, cfg.scale);

    return add(tape, main, skip);
}

// ---------------------------------------------------------------------------
// initialization
// ---------------------------------------------------------------------------

namespace detail {

inline Tensor<float> kaiming_conv(Rng& rng, const Conv2dSpec& spec) {
    const double bound = 1.0 / std::sqrt(double(spec.in_channels * spec.kernel * spec.kernel));
    Tensor<float> w(Shape{spec.out_channels, spec.in_channels, spec.kernel, spec.kernel});
    for (int64_t i = 0; i < w.size(); ++i) w[i] = float(rng.uniform(-bound, bound));
    return w;
}

inline Tensor<float> kaiming_linear(Rng& rng, int64_t dout, int64_t din) {
    const double bound = 1.0 / std::sqrt(double(din));
    Tensor<float> w(Shape{dout, din});
    for (int64_t i = 0; i < w.size(); ++i) w[i] = float(rng.uniform(-bound, bound));
    return w;
}

inline void add_conv(ParamStore<float>& ps, Rng& rng, const std::string& name,
                     const Conv2dSpec& spec) {
    ps.add(name + ".w", kaiming_conv(rng, spec));
    ps.add(name + ".b", Tensor<float>(Shape{spec.out_channels}));
}

inline void add_linear(ParamStore<float>& ps, Rng& rng, const std::string& name, int64_t dout,
                       int64_t din) {
    ps.add(name + ".w", kaiming_linear(rng, dout, din));
    ps.add(name + ".b", Tensor<float>(Shape{dout}));
}

inline void add_arfb(ParamStore<float>& ps, Rng& rng, const std::string& p, int64_t c) {
    for (const char* ru : {".ru1", ".ru2"}) {
        add_conv(ps, rng, p + ru + ".re", {c, c / 2, 1});
        add_conv(ps, rng, p + ru + ".ex", {c / 2, c, 3});
        ps.add(p + ru + ".lam_res", Tensor<float>::scalar(1.0f));
        ps.add(p + ru + ".lam_x", Tensor<float>::scalar(1.0f));
    }
    add_conv(ps, rng, p + ".fuse", {2 * c, c, 1});
    add_conv(ps, rng, p + ".tail", {c, c, 3});
}

}  // namespace detail

// Deterministic parameter initialization: Kaiming-uniform weights with the
// framework-default bound 1/sqrt(fan_in), zero biases, unit norm scales and
// unit lambda path weights.
inline ParamStore<float> init_params(const ModelConfig& cfg, uint64_t seed) {
    cfg.validate();
    Rng rng(seed);
    ParamStore<float> ps;
    const int64_t c = cfg.channels;

    detail::add_conv(ps, rng, "head", {3, c, 3});

    for (int64_t i = 0; i < cfg.n_hpb; ++i) {
        const std::string p = "hpb" + std::to_string(i);
        detail::add_arfb(ps, rng, p + ".pre", c);
        detail::add_arfb(ps, rng, p + ".shared", c);
        detail::add_arfb(ps, rng, p + ".high", c);
        detail::add_conv(ps, rng, p + ".fuse", {2 * c, c, 1});
        detail::add_conv(ps, rng, p + ".ca.fc1", {c, c / cfg.ca_reduction, 1});
        detail::add_conv(ps, rng, p + ".ca.fc2", {c / cfg.ca_reduction, c, 1});
        detail::add_arfb(ps, rng, p + ".tail", c);
    }

    detail::add_conv(ps, rng, "fusion", {cfg.n_hpb * c, c, 1});

    const int64_t ce = cfg.embed_dim();
    const int64_t c1 = cfg.reduced_dim();
    for (int64_t j = 0; j < cfg.n_et; ++j) {
        const std::string p = "et" + std::to_string(j);
        ps.add(p + ".norm1.g", Tensor<float>::full(Shape{ce}, 1.0f));
        ps.add(p + ".norm1.b", Tensor<float>(Shape{ce}));
        detail::add_linear(ps, rng, p + ".reduce", c1, ce);
        detail::add_linear(ps, rng, p + ".qkv", 3 * c1, c1);
        detail::add_linear(ps, rng, p + ".proj", c1, c1);
        detail::add_linear(ps, rng, p + ".expand", ce, c1);
        ps.add(p + ".norm2.g", Tensor<float>::full(Shape{ce}, 1.0f));
        ps.add(p + ".norm2.b", Tensor<float>(Shape{ce}));
        detail::add_linear(ps, rng, p + ".mlp.fc1", cfg.mlp_ratio * ce, ce);
        detail::add_linear(ps, rng, p + ".mlp.fc2", ce, cfg.mlp_ratio * ce);
    }

    const int64_t r2 = cfg.scale * cfg.scale;
    detail::add_conv(ps, rng, "recon.pre", {c, 3 * r2, 3});
    detail::add_conv(ps, rng, "recon.skip", {c, 3 * r2, 3});
    detail::add_conv(ps, rng, "recon.final", {3, 3, 3});
    return ps;
}

}  // namespace esrt
