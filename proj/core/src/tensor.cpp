#include "partfield/tensor.hpp"

#include <cmath>
#include <sstream>

namespace partfield::ad {

bool Tensor::all_finite() const {
    for (double v : data_)
        if (!std::isfinite(v)) return false;
    return true;
}

void Tensor::require_finite(const char* what) const {
    if (!all_finite())
        throw std::runtime_error(std::string("non-finite value produced by ") + what);
}

std::string Tensor::shape_str() const {
    std::ostringstream os;
    os << "(";
    for (std::size_t i = 0; i < shape_.size(); ++i) {
        if (i) os << ",";
        os << shape_[i];
    }
    os << ")";
    return os.str();
}

}  // namespace partfield::ad
