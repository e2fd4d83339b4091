#pragma once

// Adam optimizer and the training loop. All randomness (parameter init,
// per-epoch shuffles) flows from one master PRNG seeded by TrainConfig::seed:
// the first draw seeds init_params, subsequent draws drive the shuffles. Two
// runs with the same seed, dataset and build produce bit-identical parameters.

#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "maskrefine/errors.hpp"
#include "maskrefine/refiner.hpp"
#include "maskrefine/rng.hpp"
#include "maskrefine/synth.hpp"

namespace maskrefine {

struct TrainConfig {
    int epochs = 30;
    int batch_size = 8;
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps_adam = 1e-8;
    std::uint64_t seed = 0;
};

// First/second moment per scalar parameter, canonical flat order.
struct AdamState {
    std::vector<float> m, v;
};

inline AdamState make_adam_state(std::size_t n_params) {
    return AdamState{std::vector<float>(n_params, 0.0f), std::vector<float>(n_params, 0.0f)};
}

namespace detail {

inline std::vector<KernelShape> shapes_of(const RefinerParams& p) {
    std::vector<KernelShape> v;
    for_each_kernel(p, [&](const ConvKernel& k) {
        v.push_back({k.out_channels(), k.in_channels(), k.k()});
    });
    return v;
}

} // namespace detail

// Standard Adam with bias correction, elementwise over the canonical flat
// parameter order. Update arithmetic runs in double; parameters and moments
// are stored as float32.
inline void adam_step(RefinerParams& params, const RefinerParams& grads, AdamState& state, int t,
                      const TrainConfig& cfg) {
    if (t < 1)
        throw ValueError("adam_step: step index must be >= 1");
    if (detail::shapes_of(params) != detail::shapes_of(grads))
        throw DimError("adam_step: params and grads shapes mismatch");
    const std::vector<float*> p = param_ptrs(params);
    const std::vector<float> g = flatten_params(grads);
    if (state.m.size() != p.size() || state.v.size() != p.size())
        throw DimError("adam_step: moment state size mismatch");
    const double bc1 = 1.0 - std::pow(cfg.beta1, t);
    const double bc2 = 1.0 - std::pow(cfg.beta2, t);
    for (std::size_t i = 0; i < p.size(); ++i) {
        const double gi = g[i];
        const double m = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * gi;
        const double v = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * gi * gi;
        state.m[i] = static_cast<float>(m);
        state.v[i] = static_cast<float>(v);
        const double step = cfg.lr * (m / bc1) / (std::sqrt(v / bc2) + cfg.eps_adam);
        *p[i] = static_cast<float>(*p[i] - step);
    }
}

struct TrainResult {
    RefinerParams params;
    std::vector<double> loss_history;  // per-epoch mean loss, one entry per epoch
};

// Mini-batch training: epochs x ceil(n/batch) Adam steps, batch order
// reshuffled every epoch, last partial batch kept. The per-epoch loss is the
// sample-weighted mean of the batch losses. With epochs >= 2 the final epoch
// must improve on the first; a run that fails to is an error, not a silent
// success. on_epoch (if given) is called after each epoch with (index, loss).
inline TrainResult train(const TrainConfig& tc, const RefinerConfig& nc,
                         std::span<const Sample> dataset,
                         const std::function<void(int, double)>& on_epoch = {}) {
    if (dataset.empty())
        throw TrainError("train: empty dataset");
    if (tc.epochs < 1)
        throw ValueError("train: epochs must be >= 1");
    if (tc.batch_size < 1)
        throw ValueError("train: batch_size must be >= 1");
    validate_config(nc);

    Rng master(tc.seed);
    TrainResult res;
    res.params = init_params(nc, master.next_u64());
    AdamState state = make_adam_state(param_count(res.params));

    std::vector<std::size_t> order(dataset.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::vector<Sample> scratch;
    scratch.reserve(static_cast<std::size_t>(tc.batch_size));

    int t = 0;
    for (int epoch = 0; epoch < tc.epochs; ++epoch) {
        shuffle(order, master);
        double weighted_loss = 0.0;
        for (std::size_t start = 0; start < order.size();
             start += static_cast<std::size_t>(tc.batch_size)) {
            const std::size_t end =
                std::min(order.size(), start + static_cast<std::size_t>(tc.batch_size));
            scratch.clear();
            for (std::size_t i = start; i < end; ++i)
                scratch.push_back(dataset[order[i]]);
            const LossGrads lg = loss_and_grads(nc, res.params, scratch);
            ++t;
            if (!std::isfinite(lg.loss))
                throw TrainError("train: non-finite loss at step " + std::to_string(t));
            adam_step(res.params, lg.grads, state, t, tc);
            weighted_loss += lg.loss * static_cast<double>(end - start);
        }
        const double epoch_loss = weighted_loss / static_cast<double>(order.size());
        res.loss_history.push_back(epoch_loss);
        if (on_epoch)
            on_epoch(epoch, epoch_loss);
    }

    if (tc.epochs >= 2 && !(res.loss_history.back() < res.loss_history.front()))
        throw TrainError("train: final epoch loss did not improve on first epoch loss");
    return res;
}

} // namespace maskrefine
