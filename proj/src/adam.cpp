// Copyright (c) 2026 hyperlab authors
// SPDX-License-Identifier: Apache-2.0
#include "hlab/adam.hpp"

#include <cmath>
#include <stdexcept>

namespace hlab {

void Adam::step(const std::unordered_map<const Matrix*, Matrix>& grads) {
    ++step_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, step_);
    const double bc2 = 1.0 - std::pow(cfg_.beta2, step_);
    for (Matrix* p : params_) {
        auto git = grads.find(p);
        if (git == grads.end())
            throw std::invalid_argument("Adam::step: missing gradient for a registered leaf");
        const Matrix& g = git->second;
        if (!g.same_shape(*p))
            throw std::invalid_argument("Adam::step: gradient shape " + g.shape_str() +
                                        " != param shape " + p->shape_str());
        auto [it, fresh] = moments_.try_emplace(p);
        if (fresh) {
            it->second.m = Matrix(p->rows(), p->cols());
            it->second.v = Matrix(p->rows(), p->cols());
        }
        Matrix& m = it->second.m;
        Matrix& v = it->second.v;
        for (std::size_t i = 0; i < p->size(); ++i) {
            m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g[i];
            v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g[i] * g[i];
            const double mhat = m[i] / bc1;
            const double vhat = v[i] / bc2;
            (*p)[i] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
        }
    }
}

}  // namespace hlab
