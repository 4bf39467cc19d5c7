#pragma once

#include <functional>
#include <string>
#include <vector>

#include "esrt/model.hpp"

// Central finite-difference verification of the tape gradients, run in
// double precision. Each parameter tensor (and the input) is probed at a
// few seeded coordinates; the analytic gradient must match (f(x+h)-f(x-h))/2h.

namespace esrt {

struct GradCheckReport {
    std::string block;
    double max_rel_err = 0;
    std::string worst;  // "param[flat_index]"
    int64_t probes = 0;
    double tol = 0;
    bool pass = false;
};

namespace detail {

template <typename Fwd>
GradCheckReport fd_check(const std::string& block, ParamStore<double>& ps, Tensor<double>& input,
                         Fwd&& fwd, double tol, uint64_t seed, int probes_per_tensor,
                         double h = 1e-3, const std::string& tamper = "") {
    GradCheckReport rep;
    rep.block = block;
    rep.tol = tol;

    std::map<std::string, Tensor<double>> grads;
    {
        GradTape<double> tape;
        ps.watch_all(tape);
        tape.watch(input, "#input");
        Tensor<double> out = fwd(&tape, ps, input);
        Tensor<double> loss = sum_all(&tape, out);
        grads = tape.backward(loss);
    }
    if (!tamper.empty()) {
        // test fixture: simulate a broken backward rule
        Tensor<double>& g = grads.at(tamper);
        for (int64_t i = 0; i < g.size(); ++i) g[i] = 1.5 * g[i] + 0.5;
    }

    auto loss_of = [&]() {
        Tensor<double> out = fwd(static_cast<GradTape<double>*>(nullptr), ps, input);
        double acc = 0;
        for (int64_t i = 0; i < out.size(); ++i) acc += out[i];
        return acc;
    };
    const double f0 = loss_of();

    // A step that straddles a ReLU kink makes central differences converge
    // to the mean of the two one-sided slopes, which the analytic
    // (sub)gradient legitimately does not match at any step size. The
    // second difference |f(+h)+f(-h)-2f0|/h exposes such a kink: it decays
    // like h*|f''| for smooth coordinates but stays at the slope jump (or
    // grows, for a cancelling pair) while the interval still covers the
    // kink. The step is shrunk 8x until the split collapses relative to
    // the previous level; coordinates that stay contaminated at every
    // scale are given up and redrawn.
    auto probe_coord = [&](Tensor<double>& t, int64_t c, double& fd) {
        const double keep = t[c];
        auto measure = [&](double hs, double& split) {
            t[c] = keep + hs;
            const double fp = loss_of();
            t[c] = keep - hs;
            const double fm = loss_of();
            t[c] = keep;
            split = std::fabs(fp + fm - 2 * f0) / hs;
            return (fp - fm) / (2 * hs);
        };
        double split_prev = 0;
        (void)measure(h, split_prev);
        double hs = h;
        for (int level = 0; level < 4; ++level) {
            hs /= 8;
            double split = 0;
            fd = measure(hs, split);
            const double negligible = 0.25 * tol * std::max(std::fabs(fd), 1e-3);
            if (split <= std::max(0.3 * split_prev, negligible)) return true;
            split_prev = split;
        }
        return false;
    };

    Rng probe_rng(seed ^ 0x517cc1b727220a95ull);
    auto probe_tensor = [&](const std::string& name, Tensor<double>& t) {
        const Tensor<double>& g = grads.at(name);
        const int64_t want = std::min<int64_t>(probes_per_tensor, t.size());
        const int64_t attempts = want * 4;
        int64_t done = 0;
        for (int64_t k = 0; k < attempts && done < want; ++k) {
            const int64_t c =
                t.size() <= probes_per_tensor ? k % t.size() : probe_rng.below(t.size());
            double fd = 0;
            if (!probe_coord(t, c, fd)) continue;  // kink-contaminated, redraw
            const double a = g[c];
            const double rel = std::fabs(a - fd) / std::max({std::fabs(a), std::fabs(fd), 1e-6});
            rep.probes++;
            ++done;
            if (rel > rep.max_rel_err) {
                rep.max_rel_err = rel;
                rep.worst = name + "[" + std::to_string(c) + "]";
            }
        }
    };

    for (const auto& name : ps.names()) probe_tensor(name, ps.at(name));
    probe_tensor("#input", input);
    rep.pass = rep.max_rel_err < tol;
    return rep;
}

inline ParamStore<double> mini_et_params(uint64_t seed, int64_t ce, int64_t c1, int64_t ratio,
                                         bool with_encoder) {
    Rng rng(seed);
    ParamStore<float> ps;
    if (with_encoder) {
        ps.add("et0.norm1.g", Tensor<float>::full(Shape{ce}, 1.0f));
        ps.add("et0.norm1.b", Tensor<float>(Shape{ce}));
    }
    detail::add_linear(ps, rng, "et0.reduce", c1, ce);
    detail::add_linear(ps, rng, "et0.qkv", 3 * c1, c1);
    detail::add_linear(ps, rng, "et0.proj", c1, c1);
    detail::add_linear(ps, rng, "et0.expand", ce, c1);
    if (with_encoder) {
        ps.add("et0.norm2.g", Tensor<float>::full(Shape{ce}, 1.0f));
        ps.add("et0.norm2.b", Tensor<float>(Shape{ce}));
        detail::add_linear(ps, rng, "et0.mlp.fc1", ratio * ce, ce);
        detail::add_linear(ps, rng, "et0.mlp.fc2", ce, ratio * ce);
    }
    return ps.cast<double>();
}

inline Tensor<double> random_input(Rng& rng, Shape shape, double lo = -1.0, double hi = 1.0) {
    Tensor<double> t(std::move(shape));
    for (int64_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(lo, hi);
    return t;
}

}  // namespace detail

// blocks: hfm, arfb, emha, et, hpb, model. Tolerances are 1e-4 at block
// level and 1e-3 for the full model.
inline GradCheckReport gradcheck_block(const std::string& block, uint64_t seed,
                                       int probes_per_tensor = 2,
                                       const std::string& tamper = "") {
    Rng rng(seed);
    if (block == "hfm") {
        ParamStore<double> ps;
        Tensor<double> x = detail::random_input(rng, {1, 3, 6, 8});
        return detail::fd_check(
            block, ps, x,
            [](GradTape<double>* t, ParamStore<double>&, const Tensor<double>& in) {
                return hfm(t, in, 2);
            },
            1e-4, seed, probes_per_tensor, 1e-3, tamper);
    }
    if (block == "arfb") {
        Rng init(seed + 1);
        ParamStore<float> psf;
        detail::add_arfb(psf, init, "blk", 8);
        ParamStore<double> ps = psf.cast<double>();
        Tensor<double> x = detail::random_input(rng, {1, 8, 7, 6});
        return detail::fd_check(
            block, ps, x,
            [](GradTape<double>* t, ParamStore<double>& p, const Tensor<double>& in) {
                return arfb(t, in, p, "blk");
            },
            1e-4, seed, probes_per_tensor, 1e-3, tamper);
    }
    if (block == "emha") {
        ParamStore<double> ps = detail::mini_et_params(seed + 1, 24, 12, 2, false);
        Tensor<double> x = detail::random_input(rng, {1, 24, 7});  // N=7 exercises padding
        return detail::fd_check(
            block, ps, x,
            [](GradTape<double>* t, ParamStore<double>& p, const Tensor<double>& in) {
                return emha(t, in, p, "et0", 2, 3);
            },
            1e-4, seed, probes_per_tensor, 1e-3, tamper);
    }
    if (block == "et") {
        ParamStore<double> ps = detail::mini_et_params(seed + 1, 24, 12, 2, true);
        ModelConfig mini;
        mini.split_s = 2;
        mini.heads = 3;
        Tensor<double> x = detail::random_input(rng, {1, 24, 6});
        return detail::fd_check(
            block, ps, x,
            [mini](GradTape<double>* t, ParamStore<double>& p, const Tensor<double>& in) {
                return et_encoder(t, in, p, "et0", mini);
            },
            1e-4, seed, probes_per_tensor, 1e-3, tamper);
    }
    if (block == "hpb") {
        ModelConfig mini;
        mini.channels = 8;
        mini.ca_reduction = 4;
        Rng init(seed + 1);
        ParamStore<float> psf;
        detail::add_arfb(psf, init, "hpb0.pre", 8);
        detail::add_arfb(psf, init, "hpb0.shared", 8);
        detail::add_arfb(psf, init, "hpb0.high", 8);
        detail::add_conv(psf, init, "hpb0.fuse", {16, 8, 1});
        detail::add_conv(psf, init, "hpb0.ca.fc1", {8, 2, 1});
        detail::add_conv(psf, init, "hpb0.ca.fc2", {2, 8, 1});
        detail::add_arfb(psf, init, "hpb0.tail", 8);
        ParamStore<double> ps = psf.cast<double>();
        Tensor<double> x = detail::random_input(rng, {1, 8, 7, 9});  // odd dims hit pad/crop
        return detail::fd_check(
            block, ps, x,
            [mini](GradTape<double>* t, ParamStore<double>& p, const Tensor<double>& in) {
                return hpb(t, in, p, "hpb0", mini);
            },
            1e-4, seed, probes_per_tensor, 1e-3, tamper);
    }
    if (block == "model") {
        ModelConfig cfg;
        cfg.scale = 2;
        ParamStore<double> ps = init_params(cfg, seed + 1).cast<double>();
        Tensor<double> x = detail::random_input(rng, {1, 3, 8, 8}, 0.0, 1.0);
        return detail::fd_check(
            block, ps, x,
            [cfg](GradTape<double>* t, ParamStore<double>& p, const Tensor<double>& in) {
                return esrt_forward(t, in, p, cfg);
            },
            1e-3, seed, probes_per_tensor, 1e-3, tamper);
    }
    throw ArgError("unknown gradcheck block: " + block);
}

inline const std::vector<std::string>& gradcheck_blocks() {
    static const std::vector<std::string> blocks{"hfm", "arfb", "emha", "et", "hpb", "model"};
    return blocks;
}

}  // namespace esrt
