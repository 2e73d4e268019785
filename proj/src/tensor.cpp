#include "ckt/tensor.hpp"

#include <cmath>
#include <cstring>
#include <sstream>
#include <stdexcept>

namespace ckt {

const char* dtype_name(DType d) {
    return d == DType::f32 ? "f32" : "f64";
}

DType dtype_from_name(const std::string& s) {
    if (s == "f32") return DType::f32;
    if (s == "f64") return DType::f64;
    throw std::runtime_error("unknown dtype '" + s + "' (expected f32 or f64)");
}

std::size_t dtype_size(DType d) {
    return d == DType::f32 ? 4 : 8;
}

Tensor Tensor::make(std::string name, DType dtype, std::vector<std::int64_t> shape,
                    std::vector<double> values) {
    Tensor t;
    t.name = std::move(name);
    t.dtype = dtype;
    t.shape = std::move(shape);
    t.values = std::move(values);

    std::int64_t n = 1;
    for (std::int64_t d : t.shape) {
        if (d <= 0) throw std::runtime_error("tensor '" + t.name + "': non-positive shape dimension");
        n *= d;
    }
    if (n != static_cast<std::int64_t>(t.values.size())) {
        throw std::runtime_error("tensor '" + t.name + "': shape product " + std::to_string(n) +
                                 " does not match element count " + std::to_string(t.values.size()));
    }
    if (t.dtype == DType::f32) {
        for (double& v : t.values) v = static_cast<double>(static_cast<float>(v));
    }
    return t;
}

std::int64_t Tensor::numel() const {
    std::int64_t n = 1;
    for (std::int64_t d : shape) n *= d;
    return n;
}

bool Tensor::all_finite() const {
    for (double v : values) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

bool Tensor::same_schema(const Tensor& other) const {
    return name == other.name && dtype == other.dtype && shape == other.shape;
}

bool Tensor::bitwise_equal(const Tensor& other) const {
    if (!same_schema(other)) return false;
    if (values.size() != other.values.size()) return false;
    return values.empty() ||
           std::memcmp(values.data(), other.values.data(), values.size() * sizeof(double)) == 0;
}

std::string shape_to_string(const std::vector<std::int64_t>& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ',';
        os << shape[i];
    }
    os << ']';
    return os.str();
}

}  // namespace ckt
