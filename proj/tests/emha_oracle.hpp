#pragma once

#include <cmath>
#include <vector>

#include "esrt/model.hpp"

// Independent reference for EMHA: full (unsegmented) multi-head attention
// over the whole sequence with a block-diagonal additive mask (-1e30 off
// block), written as plain loops in double precision. N must divide by s.

namespace esrt_test {

inline esrt::Tensor<double> emha_masked_oracle(const esrt::Tensor<double>& e,
                                               const esrt::ParamStore<double>& ps,
                                               const std::string& p, int64_t s, int64_t m) {
    using esrt::Tensor;
    const int64_t bsz = e.dim(0), c = e.dim(1), n = e.dim(2);
    const Tensor<double>& rw = ps.at(p + ".reduce.w");
    const Tensor<double>& rb = ps.at(p + ".reduce.b");
    const Tensor<double>& qw = ps.at(p + ".qkv.w");
    const Tensor<double>& qb = ps.at(p + ".qkv.b");
    const Tensor<double>& pw = ps.at(p + ".proj.w");
    const Tensor<double>& pb = ps.at(p + ".proj.b");
    const Tensor<double>& ew = ps.at(p + ".expand.w");
    const Tensor<double>& eb = ps.at(p + ".expand.b");
    const int64_t c1 = rw.dim(0);
    const int64_t d = c1 / m;
    if (n % s != 0) throw esrt::ArgError("oracle expects N divisible by s");
    const int64_t seg = n / s;

    Tensor<double> out(esrt::Shape{bsz, c, n});
    std::vector<double> e1(size_t(n * c1)), qkv(size_t(n * 3 * c1)), att(size_t(n * c1)),
        proj(size_t(n * c1));
    for (int64_t b = 0; b < bsz; ++b) {
        for (int64_t t = 0; t < n; ++t)
            for (int64_t i = 0; i < c1; ++i) {
                double acc = rb[i];
                for (int64_t j = 0; j < c; ++j) acc += rw.at(i, j) * e.at(b, j, t);
                e1[size_t(t * c1 + i)] = acc;
            }
        for (int64_t t = 0; t < n; ++t)
            for (int64_t i = 0; i < 3 * c1; ++i) {
                double acc = qb[i];
                for (int64_t j = 0; j < c1; ++j) acc += qw.at(i, j) * e1[size_t(t * c1 + j)];
                qkv[size_t(t * 3 * c1 + i)] = acc;
            }
        auto qv = [&](int64_t t, int64_t h, int64_t j) { return qkv[size_t(t * 3 * c1 + h * d + j)]; };
        auto kv = [&](int64_t t, int64_t h, int64_t j) {
            return qkv[size_t(t * 3 * c1 + c1 + h * d + j)];
        };
        auto vv = [&](int64_t t, int64_t h, int64_t j) {
            return qkv[size_t(t * 3 * c1 + 2 * c1 + h * d + j)];
        };

        std::vector<double> row(size_t(n), 0.0);
        for (int64_t h = 0; h < m; ++h)
            for (int64_t t1 = 0; t1 < n; ++t1) {
                double mx = -1e300;
                for (int64_t t2 = 0; t2 < n; ++t2) {
                    double sc = 0;
                    for (int64_t j = 0; j < d; ++j) sc += qv(t1, h, j) * kv(t2, h, j);
                    sc /= std::sqrt(double(d));
                    if (t1 / seg != t2 / seg) sc += -1e30;  // block-diagonal mask
                    row[size_t(t2)] = sc;
                    mx = std::max(mx, sc);
                }
                double den = 0;
                for (int64_t t2 = 0; t2 < n; ++t2) {
                    row[size_t(t2)] = std::exp(row[size_t(t2)] - mx);
                    den += row[size_t(t2)];
                }
                for (int64_t j = 0; j < d; ++j) {
                    double acc = 0;
                    for (int64_t t2 = 0; t2 < n; ++t2) acc += row[size_t(t2)] / den * vv(t2, h, j);
                    att[size_t(t1 * c1 + h * d + j)] = acc;
                }
            }

        for (int64_t t = 0; t < n; ++t)
            for (int64_t i = 0; i < c1; ++i) {
                double acc = pb[i];
                for (int64_t j = 0; j < c1; ++j) acc += pw.at(i, j) * att[size_t(t * c1 + j)];
                proj[size_t(t * c1 + i)] = acc;
            }
        for (int64_t t = 0; t < n; ++t)
            for (int64_t i = 0; i < c; ++i) {
                double acc = eb[i];
                for (int64_t j = 0; j < c1; ++j) acc += ew.at(i, j) * proj[size_t(t * c1 + j)];
                out.at(b, i, t) = acc;
            }
    }
    return out;
}

}  // namespace esrt_test
