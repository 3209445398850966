#include "lvseg/tensor.hpp"

#include <stdexcept>

namespace lvseg {

std::string shape_string(const Tensor& t) {
    std::string s = "[";
    for (std::size_t i = 0; i < t.shape.size(); ++i) {
        if (i) s += ", ";
        s += std::to_string(t.shape[i]);
    }
    return s + "]";
}

void require_shape(const Tensor& t, const std::vector<std::size_t>& shape, const char* what) {
    if (t.shape != shape) {
        Tensor want(shape);
        throw std::runtime_error(std::string("shape mismatch in ") + what + ": got " +
                                 shape_string(t) + ", want " + shape_string(want));
    }
}

}  // namespace lvseg
