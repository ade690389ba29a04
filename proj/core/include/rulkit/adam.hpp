#pragma once

#include <cmath>
#include <map>
#include <string>

#include "rulkit/errors.hpp"
#include "rulkit/param_store.hpp"
#include "rulkit/tensor.hpp"

namespace rulkit {

struct AdamConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// First/second moment estimates and step counter for one parameter tensor.
template <typename T>
struct AdamEntry {
    Tensor<T> m;
    Tensor<T> v;
    long step = 0;
};

/// Optimizer state keyed by parameter name.  Parameters that are never
/// stepped (frozen ones) never get an entry, so their state observably
/// stays at initialization.
template <typename T>
using AdamState = std::map<std::string, AdamEntry<T>>;

/// One Adam update with bias correction.  The weight-decay term of the loss,
/// lambda * ||theta||^2, enters as 2*lambda*theta added to each gradient
/// (classic L2 regularization, not decoupled decay).  Every name present in
/// `grads` is stepped; the caller supplies zero gradients for trainable
/// parameters that received none.
template <typename T>
void adam_step(ParameterStore<T>& params,
               const std::map<std::string, Tensor<T>>& grads,
               AdamState<T>& state, double eta, double lambda,
               const AdamConfig& cfg = {}) {
    if (eta <= 0) throw ConfigError("adam_step: eta must be positive");
    if (lambda < 0) throw ConfigError("adam_step: lambda must be non-negative");
    for (const auto& [name, g] : grads) {
        Tensor<T>& theta = params.at(name);
        if (!theta.same_shape(g))
            throw ShapeError("adam_step: gradient shape " + g.shape_str() +
                             " does not match parameter " + name + " " +
                             theta.shape_str());
        auto& st = state[name];
        if (st.step == 0) {
            st.m = Tensor<T>::zeros(theta.shape());
            st.v = Tensor<T>::zeros(theta.shape());
        }
        st.step += 1;
        const double c1 = 1.0 - std::pow(cfg.beta1, double(st.step));
        const double c2 = 1.0 - std::pow(cfg.beta2, double(st.step));
        T* th = theta.ptr();
        T* m = st.m.ptr();
        T* v = st.v.ptr();
        const T* gp = g.ptr();
        for (std::size_t i = 0; i < theta.size(); ++i) {
            const double ge = double(gp[i]) + 2.0 * lambda * double(th[i]);
            const double mi = cfg.beta1 * double(m[i]) + (1.0 - cfg.beta1) * ge;
            const double vi = cfg.beta2 * double(v[i]) + (1.0 - cfg.beta2) * ge * ge;
            m[i] = T(mi);
            v[i] = T(vi);
            const double mhat = mi / c1;
            const double vhat = vi / c2;
            th[i] = T(double(th[i]) - eta * mhat / (std::sqrt(vhat) + cfg.eps));
        }
    }
}

} // namespace rulkit
