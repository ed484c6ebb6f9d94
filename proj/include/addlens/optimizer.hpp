#pragma once

// AdamW with decoupled weight decay.  Operates on a fixed list of named
// parameters; moment slots are keyed by list order, so the caller must pass
// the same list every step.

#include "addlens/tensor.hpp"

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

namespace addlens {

struct AdamConfig {
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.1;
};

class AdamW {
public:
    explicit AdamW(AdamConfig cfg = {}) : cfg_(cfg) {
        if (cfg_.lr < 0 || cfg_.beta1 < 0 || cfg_.beta1 >= 1 || cfg_.beta2 < 0 || cfg_.beta2 >= 1 ||
            cfg_.eps <= 0)
            throw std::invalid_argument("bad optimizer hyperparameters");
    }

    const AdamConfig& config() const { return cfg_; }
    long step_count() const { return step_; }

    // One update over every parameter.  Gradients are read from the tensors'
    // grad buffers and left untouched; callers zero them afterwards.
    void step(std::vector<NamedParam>& params) {
        if (slots_.empty()) {
            slots_.resize(params.size());
            for (size_t i = 0; i < params.size(); ++i) {
                slots_[i].m.assign(params[i].tensor.values().size(), 0.0);
                slots_[i].v.assign(params[i].tensor.values().size(), 0.0);
            }
        }
        if (slots_.size() != params.size())
            throw std::invalid_argument("optimizer saw " + std::to_string(params.size()) +
                                        " params, state holds " + std::to_string(slots_.size()));
        ++step_;
        const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step_));
        const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step_));
        for (size_t i = 0; i < params.size(); ++i) {
            auto& p = params[i].tensor;
            auto& val = p.values();
            const auto& g = p.grad();   // lazily zero when the tape never touched it
            auto& m = slots_[i].m;
            auto& v = slots_[i].v;
            for (size_t j = 0; j < val.size(); ++j) {
                if (!std::isfinite(g[j]))
                    throw std::runtime_error("non-finite gradient in parameter " + params[i].name +
                                             " at step " + std::to_string(step_));
                m[j] = cfg_.beta1 * m[j] + (1.0 - cfg_.beta1) * g[j];
                v[j] = cfg_.beta2 * v[j] + (1.0 - cfg_.beta2) * g[j] * g[j];
                const double mhat = m[j] / bc1;
                const double vhat = v[j] / bc2;
                val[j] -= cfg_.lr * (mhat / (std::sqrt(vhat) + cfg_.eps) + cfg_.weight_decay * val[j]);
            }
        }
    }

private:
    struct Slot {
        std::vector<double> m, v;
    };

    AdamConfig cfg_;
    long step_ = 0;
    std::vector<Slot> slots_;
};

} // namespace addlens
