#include "esrt/cost.hpp"

#include <cmath>
#include <numeric>
#include <sstream>

#include "json.hpp"

namespace esrt {

namespace {

int64_t conv_flops(int64_t cin, int64_t cout, int64_t k, int64_t h, int64_t w) {
    return 2 * k * k * cin * cout * h * w + cout * h * w;  // MACs*2 + bias adds
}

int64_t linear_flops(int64_t din, int64_t dout, int64_t rows) {
    return 2 * din * dout * rows + dout * rows;
}

int64_t arfb_flops(int64_t c, int64_t h, int64_t w) {
    int64_t f = 0;
    for (int ru = 0; ru < 2; ++ru) {
        f += conv_flops(c, c / 2, 1, h, w);
        f += c / 2 * h * w;                  // relu
        f += conv_flops(c / 2, c, 3, h, w);
        f += 3 * c * h * w;                  // two lambda scalings + add
    }
    f += conv_flops(2 * c, c, 1, h, w);      // fuse
    f += conv_flops(c, c, 3, h, w);          // tail
    return f;
}

int64_t ca_flops(int64_t c, int64_t red, int64_t h, int64_t w) {
    int64_t f = c * h * w;                   // global average pool
    f += conv_flops(c, c / red, 1, 1, 1) + c / red;
    f += conv_flops(c / red, c, 1, 1, 1) + 4 * c;  // second 1x1 + sigmoid
    f += c * h * w;                          // gate
    return f;
}

int64_t hpb_flops(const ModelConfig& cfg, int64_t h, int64_t w) {
    const int64_t unit = std::lcm<int64_t>(2, cfg.pool_k);
    const int64_t fh = h + (unit - h % unit) % unit;
    const int64_t fw = w + (unit - w % unit) % unit;
    const int64_t c = cfg.channels;

    int64_t f = arfb_flops(c, h, w);                       // pre
    f += 2 * c * fh * fw;                                  // HFM pool + subtract
    f += arfb_flops(c, fh, fw);                            // high branch
    f += 8 * c * (fh / 2) * (fw / 2);                      // bilinear down
    f += cfg.hpb_shared_reps * arfb_flops(c, fh / 2, fw / 2);
    f += 8 * c * fh * fw;                                  // bilinear up
    f += conv_flops(2 * c, c, 1, fh, fw);                  // fuse
    f += ca_flops(c, cfg.ca_reduction, fh, fw);
    f += arfb_flops(c, fh, fw);                            // tail
    f += c * h * w;                                        // global residual add
    return f;
}

int64_t et_flops(const ModelConfig& cfg, int64_t n) {
    const int64_t ce = cfg.embed_dim();
    const int64_t c1 = cfg.reduced_dim();
    const int64_t d = cfg.head_dim();
    const int64_t s = cfg.split_s;
    const int64_t np = n + (s - n % s) % s;

    int64_t f = 2 * 8 * ce * n;  // two layer norms, ~8 flops/elem
    f += linear_flops(ce, c1, n);                 // reduction
    f += linear_flops(c1, 3 * c1, n);             // qkv projection
    // per segment per head: QK^T and attn*V, each 2*(np/s)^2*d MACs
    f += 2 * 2 * 2 * cfg.heads * (np / s) * (np / s) * d * s;
    f += 6 * cfg.heads * (np / s) * (np / s) * s;  // scale + softmax
    f += linear_flops(c1, c1, n);                 // output projection
    f += linear_flops(c1, ce, n);                 // expansion
    f += linear_flops(ce, cfg.mlp_ratio * ce, n);
    f += 8 * cfg.mlp_ratio * ce * n;              // gelu
    f += linear_flops(cfg.mlp_ratio * ce, ce, n);
    f += 2 * ce * n;                              // two residual adds
    return f;
}

std::map<std::string, int64_t> flops_breakdown(const ModelConfig& cfg, int64_t h, int64_t w) {
    std::map<std::string, int64_t> by;
    const int64_t c = cfg.channels;
    const int64_t r = cfg.scale;
    const int64_t n = h * w;

    by["head"] = conv_flops(3, c, 3, h, w);
    for (int64_t i = 0; i < cfg.n_hpb; ++i) by["hpb" + std::to_string(i)] = hpb_flops(cfg, h, w);
    by["fusion"] = conv_flops(cfg.n_hpb * c, c, 1, h, w);
    for (int64_t j = 0; j < cfg.n_et; ++j) by["et" + std::to_string(j)] = et_flops(cfg, n);
    by["fold"] = cfg.unfold_k * cfg.unfold_k * c * n;  // overlap-add + normalize
    by["recon"] = conv_flops(c, 3 * r * r, 3, h, w)    // main pre-shuffle conv
                  + conv_flops(3, 3, 3, r * h, r * w)  // final conv at HR size
                  + conv_flops(c, 3 * r * r, 3, h, w)  // skip conv
                  + 3 * r * h * r * w;                 // branch sum
    return by;
}

}  // namespace

int64_t attn_score_memory(int64_t n, int64_t m, int64_t s, int64_t b) {
    if (n < 1 || m < 1 || s < 1 || b < 1) throw ArgError("attn_score_memory: all args must be >= 1");
    if (n % s != 0) throw ArgError("attn_score_memory expects N padded to a multiple of s");
    return b * m * (n / s) * (n / s) * s;  // == b*m*n^2/s
}

int64_t count_flops(const ModelConfig& cfg, int64_t in_h, int64_t in_w) {
    cfg.validate();
    if (in_h < 1 || in_w < 1) throw ArgError("count_flops: input size must be positive");
    int64_t total = 0;
    for (const auto& [_, f] : flops_breakdown(cfg, in_h, in_w)) total += f;
    return total;
}

CostReport cost_report(const ModelConfig& cfg, int64_t h, int64_t w) {
    cfg.validate();
    CostReport rep;

    ParamStore<float> ps = init_params(cfg, 0);
    rep.params_total = count_params(ps);
    for (const auto& name : ps.names()) {
        const std::string block = name.substr(0, name.find('.'));
        rep.params_by_block[block] += ps.at(name).size();
    }

    const int64_t ce = cfg.embed_dim();
    const int64_t c1 = cfg.reduced_dim();
    for (int64_t j = 0; j < cfg.n_et; ++j) {
        const std::string p = "et" + std::to_string(j);
        rep.param_delta_sources.emplace_back(
            p + " mlp (ratio " + std::to_string(cfg.mlp_ratio) + ")",
            ps.at(p + ".mlp.fc1.w").size() + ps.at(p + ".mlp.fc1.b").size() +
                ps.at(p + ".mlp.fc2.w").size() + ps.at(p + ".mlp.fc2.b").size());
        rep.param_delta_sources.emplace_back(
            p + " output projection", ps.at(p + ".proj.w").size() + ps.at(p + ".proj.b").size());
    }
    (void)ce;
    (void)c1;

    rep.in_h = h;
    rep.in_w = w;
    rep.flops_by_block = flops_breakdown(cfg, h, w);
    rep.flops_total = 0;
    for (const auto& [_, f] : rep.flops_by_block) rep.flops_total += f;

    rep.hr_in_h = (h + cfg.scale - 1) / cfg.scale;
    rep.hr_in_w = (w + cfg.scale - 1) / cfg.scale;
    rep.flops_total_hr_reading = count_flops(cfg, rep.hr_in_h, rep.hr_in_w);

    const int64_t n = h * w;
    rep.attn_tokens = n + (cfg.split_s - n % cfg.split_s) % cfg.split_s;
    rep.attn_score_elems = attn_score_memory(rep.attn_tokens, cfg.heads, cfg.split_s, 1);
    rep.attn_score_bytes = rep.attn_score_elems * 4;
    return rep;
}

std::string format_cost_report(const CostReport& rep, const ModelConfig& cfg) {
    std::ostringstream os;
    os << "ESRT cost report (convention: 1 MAC = 2 FLOPs)\n";
    os << "scale x" << cfg.scale << ", split s=" << cfg.split_s << ", heads m=" << cfg.heads
       << "\n\n";

    os << "parameters: " << rep.params_total << " total\n";
    for (const auto& [block, num] : rep.params_by_block)
        os << "  " << block << ": " << num << "\n";
    os << "  delta sources vs published count:\n";
    for (const auto& [what, num] : rep.param_delta_sources)
        os << "    " << what << ": " << num << "\n";

    auto gf = [](int64_t f) { return double(f) * 1e-9; };
    os << "\nFLOPs, input " << rep.in_h << "x" << rep.in_w << " read as LR input: " << gf(rep.flops_total)
       << " GFLOPs\n";
    for (const auto& [block, f] : rep.flops_by_block) os << "  " << block << ": " << gf(f) << " G\n";
    os << "FLOPs, " << rep.in_h << "x" << rep.in_w << " read as HR output (LR " << rep.hr_in_h << "x"
       << rep.hr_in_w << "): " << gf(rep.flops_total_hr_reading) << " GFLOPs\n";

    os << "\nattention scores at LR input (batch 1): N=" << rep.attn_tokens << " tokens, "
       << rep.attn_score_elems << " elems, " << double(rep.attn_score_bytes) / (1 << 20)
       << " MiB (fp32)\n";
    os << "score-memory sweep over s (elems, relative to s=1):\n";
    for (int64_t s : {1, 2, 4, 6}) {
        const int64_t np = rep.attn_tokens + (s - rep.attn_tokens % s) % s;
        const int64_t e = attn_score_memory(np, cfg.heads, s, 1);
        os << "  s=" << s << ": " << e << "  (x" << double(e) / double(attn_score_memory(np, cfg.heads, 1, 1))
           << ")\n";
    }
    return os.str();
}

std::string cost_report_json(const CostReport& rep, const ModelConfig& cfg) {
    nlohmann::json j;
    j["convention"] = "1 MAC = 2 FLOPs";
    j["scale"] = cfg.scale;
    j["split_s"] = cfg.split_s;
    j["heads"] = cfg.heads;
    j["params_total"] = rep.params_total;
    j["params_by_block"] = rep.params_by_block;
    nlohmann::json deltas = nlohmann::json::array();
    for (const auto& [what, num] : rep.param_delta_sources)
        deltas.push_back({{"source", what}, {"params", num}});
    j["param_delta_sources"] = deltas;
    j["flops"] = {{"lr_input",
                   {{"h", rep.in_h}, {"w", rep.in_w}, {"total", rep.flops_total},
                    {"by_block", rep.flops_by_block}}},
                  {"hr_output_reading",
                   {{"h", rep.hr_in_h}, {"w", rep.hr_in_w}, {"total", rep.flops_total_hr_reading}}}};
    nlohmann::json sweep = nlohmann::json::array();
    for (int64_t s : {1, 2, 4, 6}) {
        const int64_t np = rep.attn_tokens + (s - rep.attn_tokens % s) % s;
        sweep.push_back({{"s", s}, {"elems", attn_score_memory(np, cfg.heads, s, 1)}});
    }
    j["attn_scores"] = {{"tokens", rep.attn_tokens},
                        {"elems", rep.attn_score_elems},
                        {"bytes", rep.attn_score_bytes},
                        {"sweep", sweep}};
    return j.dump(2);
}

}  // namespace esrt
