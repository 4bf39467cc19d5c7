#pragma once

#include <map>

#include "esrt/model.hpp"

namespace esrt {

// Adam with bias-corrected moments. beta2/eps are common defaults; beta1 is
// the paper's momentum 0.9. Updates are applied in store order, in place.
template <typename T>
struct AdamState {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    int64_t step = 0;
    std::vector<Tensor<T>> m, v;  // aligned with the parameter store order

    void init(const ParamStore<T>& ps) {
        m.clear();
        v.clear();
        step = 0;
        for (const auto& name : ps.names()) {
            m.push_back(Tensor<T>(ps.at(name).shape()));
            v.push_back(Tensor<T>(ps.at(name).shape()));
        }
    }
};

template <typename T>
void adam_step(ParamStore<T>& params, const std::map<std::string, Tensor<T>>& grads,
               AdamState<T>& st, double lr) {
    if (st.m.size() != params.count()) throw ConfigError("adam state does not match parameters");
    st.step += 1;
    const double bc1 = 1.0 - std::pow(st.beta1, double(st.step));
    const double bc2 = 1.0 - std::pow(st.beta2, double(st.step));
    const auto& names = params.names();
    for (size_t i = 0; i < names.size(); ++i) {
        auto it = grads.find(names[i]);
        if (it == grads.end()) throw ConfigError("missing gradient for " + names[i]);
        const Tensor<T>& g = it->second;
        Tensor<T>& p = params.at(names[i]);
        if (!same_shape(g, p)) throw ShapeError("gradient shape mismatch for " + names[i]);
        T* pm = st.m[i].data();
        T* pv = st.v[i].data();
        T* pp = p.data();
        const T* pg = g.data();
        for (int64_t j = 0; j < p.size(); ++j) {
            const double gj = double(pg[j]);
            const double mj = st.beta1 * double(pm[j]) + (1.0 - st.beta1) * gj;
            const double vj = st.beta2 * double(pv[j]) + (1.0 - st.beta2) * gj * gj;
            pm[j] = T(mj);
            pv[j] = T(vj);
            pp[j] = T(double(pp[j]) - lr * (mj / bc1) / (std::sqrt(vj / bc2) + st.eps));
        }
    }
}

// Step-decay schedule: the rate is halved once every `half_every` epochs
// (1-indexed), so epoch `half_every` already runs at half the initial rate.
inline double lr_at_epoch(double lr0, int64_t epoch, int64_t half_every) {
    if (epoch < 1 || half_every < 1) throw ArgError("lr_at_epoch: epoch and period must be >= 1");
    return lr0 * std::pow(0.5, double(epoch / half_every));
}

}  // namespace esrt
