#pragma once

#include <cmath>

#include "recfill/glm.hpp"

namespace recfill {

// Linear warmup to peak, constant afterwards.
inline double schedule(long step, double peak_lr, long warmup_steps) {
    if (warmup_steps < 1) throw ConfigError("warmup_steps must be >= 1");
    double frac = double(step) / double(warmup_steps);
    return peak_lr * (frac < 1.0 ? frac : 1.0);
}

template <typename T>
struct OptimState {
    std::vector<Mat<T>> m, v;
    long step = 0;
    double peak_lr = 1e-5;
    long warmup_steps = 100;
    double weight_decay = 0.01;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;

    template <typename Model>
    static OptimState init(const Model& net, double peak_lr, long warmup_steps,
                           double weight_decay) {
        OptimState s;
        s.peak_lr = peak_lr;
        s.warmup_steps = warmup_steps;
        s.weight_decay = weight_decay;
        for (std::size_t i = 0; i < net.tensor_count(); ++i) {
            const auto& t = net.tensor_at(i);
            s.m.push_back(Mat<T>::Zero(t.value.rows(), t.value.cols()));
            s.v.push_back(Mat<T>::Zero(t.value.rows(), t.value.cols()));
        }
        return s;
    }
};

// Decoupled weight decay: p ← p − lr·m̂/(√v̂+ε) − lr·wd·p. Frozen tensors are
// skipped entirely (no decay drift on parameters that receive no gradient).
template <typename T>
void adamw_step(Net<T>& net, const typename Net<T>::Grads& grads, OptimState<T>& state) {
    if (state.m.size() != net.tensor_count()) throw ConfigError("optimizer/model shape mismatch");
    ++state.step;
    double lr = schedule(state.step, state.peak_lr, state.warmup_steps);
    double bc1 = 1.0 - std::pow(state.beta1, double(state.step));
    double bc2 = 1.0 - std::pow(state.beta2, double(state.step));
    for (std::size_t i = 0; i < net.tensor_count(); ++i) {
        auto& t = net.tensor_at(i);
        if (!t.trainable) continue;
        const Mat<T>& g = grads.g[i];
        if (!g.allFinite()) throw NumericError("non-finite gradient: " + t.name);
        state.m[i] = T(state.beta1) * state.m[i] + T(1.0 - state.beta1) * g;
        state.v[i] = T(state.beta2) * state.v[i] +
                     T(1.0 - state.beta2) * g.cwiseProduct(g);
        Mat<T> m_hat = state.m[i] / T(bc1);
        Mat<T> v_hat = state.v[i] / T(bc2);
        t.value *= T(1.0 - lr * state.weight_decay);  // decay off the pre-step value
        t.value -= T(lr) * m_hat.cwiseQuotient(
                       (v_hat.cwiseSqrt().array() + T(state.eps)).matrix());
    }
}

}  // namespace recfill
