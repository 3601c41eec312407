// Copyright (c) 2026 hyperlab authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <unordered_map>
#include <vector>

#include "hlab/matrix.hpp"

namespace hlab {

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// Standard Adam with bias correction, moments keyed by parameter identity.
class Adam {
public:
    explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}

    /// Register a trainable leaf. Every registered leaf must receive a
    /// gradient on each step() call.
    void add_param(Matrix* p) { params_.push_back(p); }

    const std::vector<Matrix*>& params() const { return params_; }

    /// One update over all registered leaves. grads maps leaf -> gradient;
    /// a registered leaf missing from the map is a contract violation.
    void step(const std::unordered_map<const Matrix*, Matrix>& grads);

    int step_count() const { return step_; }
    const AdamConfig& config() const { return cfg_; }

private:
    struct Moments {
        Matrix m, v;
    };
    AdamConfig cfg_;
    int step_ = 0;
    std::vector<Matrix*> params_;
    std::unordered_map<const Matrix*, Moments> moments_;
};

}  // namespace hlab
