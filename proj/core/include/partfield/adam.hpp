#pragma once

#include "partfield/tensor.hpp"

namespace partfield::ad {

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// First/second moment buffers for one parameter tensor.
struct AdamState {
    Tensor m;
    Tensor v;
    long t = 0;

    void reset() { m = Tensor{}; v = Tensor{}; t = 0; }
};

/// One bias-corrected Adam update, in place. Allocates the moment buffers
/// on first use; throws on shape mismatch.
void adam_step(Tensor& param, const Tensor& grad, AdamState& state, const AdamConfig& cfg);

}  // namespace partfield::ad
