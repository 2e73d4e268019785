#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace ckt {

enum class DType { f32, f64 };

const char* dtype_name(DType d);
DType dtype_from_name(const std::string& s);
std::size_t dtype_size(DType d);

// Named dense tensor, row-major. Values are held as f64; tensors tagged f32
// are quantized through float on construction so that what is stored is
// always exactly representable in the declared dtype.
struct Tensor {
    std::string name;
    DType dtype = DType::f64;
    std::vector<std::int64_t> shape;
    std::vector<double> values;

    static Tensor make(std::string name, DType dtype, std::vector<std::int64_t> shape,
                       std::vector<double> values);

    std::int64_t numel() const;
    std::size_t nbytes() const { return static_cast<std::size_t>(numel()) * dtype_size(dtype); }
    bool all_finite() const;
    bool same_schema(const Tensor& other) const;
    bool bitwise_equal(const Tensor& other) const;
};

std::string shape_to_string(const std::vector<std::int64_t>& shape);

}  // namespace ckt
