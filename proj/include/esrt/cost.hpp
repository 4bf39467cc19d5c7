#pragma once

#include <map>
#include <string>
#include <vector>

#include "esrt/model.hpp"

// Analytic accounting of parameters, FLOPs and attention-score memory.
// Convention: 1 multiply-accumulate = 2 FLOPs, stated in every report.

namespace esrt {

struct CostReport {
    int64_t params_total = 0;
    std::map<std::string, int64_t> params_by_block;
    // named contributions that push the total away from the published count
    std::vector<std::pair<std::string, int64_t>> param_delta_sources;

    // FLOPs with the stated size read as the LR input ...
    int64_t in_h = 0, in_w = 0;
    int64_t flops_total = 0;
    std::map<std::string, int64_t> flops_by_block;
    // ... and with the stated size read as the HR output (LR = size / r)
    int64_t hr_in_h = 0, hr_in_w = 0;
    int64_t flops_total_hr_reading = 0;

    // attention-score tensor for the LR-input reading, batch 1
    int64_t attn_tokens = 0;  // N after padding to a multiple of s
    int64_t attn_score_elems = 0;
    int64_t attn_score_bytes = 0;
};

template <typename T>
int64_t count_params(const ParamStore<T>& store) {
    return store.total_elements();
}

// Score-tensor element count of segmented attention: s segments of
// B*m*(N/s)^2 each. N must already be padded to a multiple of s.
int64_t attn_score_memory(int64_t n, int64_t m, int64_t s, int64_t b);

// FLOPs of one full forward pass at the given LR input size (batch 1).
int64_t count_flops(const ModelConfig& cfg, int64_t in_h, int64_t in_w);

CostReport cost_report(const ModelConfig& cfg, int64_t h, int64_t w);

std::string format_cost_report(const CostReport& rep, const ModelConfig& cfg);
std::string cost_report_json(const CostReport& rep, const ModelConfig& cfg);

}  // namespace esrt
