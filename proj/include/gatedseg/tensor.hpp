#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <variant>
#include <vector>

namespace gatedseg {

enum class DType { f32, i32, u8 };

const char* dtype_name(DType dtype);

template <class T>
struct DTypeOf;
template <>
struct DTypeOf<float> {
    static constexpr DType value = DType::f32;
};
template <>
struct DTypeOf<std::int32_t> {
    static constexpr DType value = DType::i32;
};
template <>
struct DTypeOf<std::uint8_t> {
    static constexpr DType value = DType::u8;
};

using Shape = std::vector<std::size_t>;

/// Product of extents; 1 for a rank-0 shape.
std::size_t element_count(const Shape& shape);

std::string shape_string(const Shape& shape);

/// Dense row-major array. `data.size() == element_count(shape)` is kept by
/// every constructor in this library; direct mutation of `shape` is the
/// caller's responsibility.
template <class T>
struct Array {
    Shape shape;
    std::vector<T> data;

    Array() = default;
    explicit Array(Shape s) : shape(std::move(s)), data(element_count(shape)) {}
    Array(Shape s, T fill) : shape(std::move(s)), data(element_count(shape), fill) {}
    Array(Shape s, std::vector<T> values) : shape(std::move(s)), data(std::move(values)) {}

    static constexpr DType dtype = DTypeOf<T>::value;

    std::size_t rank() const { return shape.size(); }
    std::size_t size() const { return data.size(); }
    std::size_t dim(std::size_t axis) const { return shape.at(axis); }

    bool operator==(const Array&) const = default;
};

using ArrayF32 = Array<float>;
using ArrayI32 = Array<std::int32_t>;
using ArrayU8 = Array<std::uint8_t>;

/// A tensor of any supported dtype, as read from disk.
using Tensor = std::variant<ArrayF32, ArrayI32, ArrayU8>;

DType tensor_dtype(const Tensor& t);
const Shape& tensor_shape(const Tensor& t);

/// Serialize to NPY v1.0 bytes (little-endian, C order).
std::vector<std::uint8_t> encode_npy(const Tensor& t);

/// Parse NPY v1.0 bytes. Throws FormatError, CorruptionError, or
/// ValidationError (non-finite f32 values).
Tensor decode_npy(const std::vector<std::uint8_t>& bytes);

Tensor read_tensor(const std::filesystem::path& path);
void write_tensor(const std::filesystem::path& path, const Tensor& t);

/// Read and require a specific dtype; throws ValidationError otherwise.
ArrayF32 read_f32(const std::filesystem::path& path);
ArrayI32 read_i32(const std::filesystem::path& path);
ArrayU8 read_u8(const std::filesystem::path& path);

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes);
void write_text_file(const std::filesystem::path& path, const std::string& text);
std::string read_text_file(const std::filesystem::path& path);

}  // namespace gatedseg
