#include "partfield/adam.hpp"

#include <cmath>
#include <stdexcept>

namespace partfield::ad {

void adam_step(Tensor& param, const Tensor& grad, AdamState& state, const AdamConfig& cfg) {
    if (!param.same_shape(grad))
        throw std::invalid_argument("adam_step: param/grad shape mismatch " + param.shape_str() +
                                    " vs " + grad.shape_str());
    if (state.m.empty()) {
        state.m = Tensor({param.rows(), param.cols()});
        state.v = Tensor({param.rows(), param.cols()});
    } else if (!state.m.same_shape(param)) {
        throw std::invalid_argument("adam_step: state shape mismatch");
    }

    state.t += 1;
    const double b1 = cfg.beta1, b2 = cfg.beta2;
    const double bc1 = 1.0 - std::pow(b1, static_cast<double>(state.t));
    const double bc2 = 1.0 - std::pow(b2, static_cast<double>(state.t));
    for (std::size_t i = 0; i < param.size(); ++i) {
        const double g = grad[i];
        state.m[i] = b1 * state.m[i] + (1.0 - b1) * g;
        state.v[i] = b2 * state.v[i] + (1.0 - b2) * g * g;
        const double mhat = state.m[i] / bc1;
        const double vhat = state.v[i] / bc2;
        param[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
    }
}

}  // namespace partfield::ad
