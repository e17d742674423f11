#include "gatedseg/tensor.hpp"

#include <bit>
#include <cctype>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "gatedseg/error.hpp"

static_assert(std::endian::native == std::endian::little,
              "NPY payloads are copied verbatim; a big-endian host needs byte swapping");

namespace gatedseg {

namespace {

constexpr std::uint8_t kMagic[6] = {0x93, 'N', 'U', 'M', 'P', 'Y'};
constexpr std::size_t kPreambleSize = 10;  // magic + version + u16 header length
constexpr std::size_t kAlign = 64;

const char* descr_for(DType dtype) {
    switch (dtype) {
        case DType::f32: return "<f4";
        case DType::i32: return "<i4";
        case DType::u8: return "|u1";
    }
    return "";
}

std::size_t itemsize(DType dtype) { return dtype == DType::u8 ? 1 : 4; }

std::string header_dict(DType dtype, const Shape& shape) {
    std::string s = "{'descr': '";
    s += descr_for(dtype);
    s += "', 'fortran_order': False, 'shape': (";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) s += ", ";
        s += std::to_string(shape[i]);
    }
    if (shape.size() == 1) s += ",";
    s += "), }";
    return s;
}

// Minimal reader for the Python-literal dict numpy writes.
class HeaderParser {
public:
    explicit HeaderParser(std::string_view text) : text_(text) {}

    void parse(std::string& descr, bool& fortran, Shape& shape) {
        bool have_descr = false, have_fortran = false, have_shape = false;
        expect('{');
        while (true) {
            skip_ws();
            if (peek() == '}') {
                ++pos_;
                break;
            }
            std::string key = quoted();
            expect(':');
            if (key == "descr") {
                descr = quoted();
                have_descr = true;
            } else if (key == "fortran_order") {
                fortran = boolean();
                have_fortran = true;
            } else if (key == "shape") {
                shape = tuple();
                have_shape = true;
            } else {
                throw FormatError("npy header: unexpected key '" + key + "'");
            }
            skip_ws();
            if (peek() == ',') {
                ++pos_;
            } else if (peek() != '}') {
                throw FormatError("npy header: expected ',' or '}'");
            }
        }
        if (!have_descr || !have_fortran || !have_shape)
            throw FormatError("npy header: missing one of descr/fortran_order/shape");
        skip_ws();
        if (pos_ != text_.size()) throw FormatError("npy header: trailing characters after dict");
    }

private:
    char peek() const {
        if (pos_ >= text_.size()) throw FormatError("npy header: unexpected end");
        return text_[pos_];
    }
    void skip_ws() {
        while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
    }
    void expect(char c) {
        skip_ws();
        if (peek() != c) throw FormatError(std::string("npy header: expected '") + c + "'");
        ++pos_;
    }
    std::string quoted() {
        skip_ws();
        char q = peek();
        if (q != '\'' && q != '"') throw FormatError("npy header: expected quoted string");
        ++pos_;
        std::size_t end = text_.find(q, pos_);
        if (end == std::string_view::npos) throw FormatError("npy header: unterminated string");
        std::string out(text_.substr(pos_, end - pos_));
        pos_ = end + 1;
        return out;
    }
    bool boolean() {
        skip_ws();
        if (text_.substr(pos_, 4) == "True") {
            pos_ += 4;
            return true;
        }
        if (text_.substr(pos_, 5) == "False") {
            pos_ += 5;
            return false;
        }
        throw FormatError("npy header: expected True/False");
    }
    Shape tuple() {
        expect('(');
        Shape shape;
        while (true) {
            skip_ws();
            if (peek() == ')') {
                ++pos_;
                return shape;
            }
            if (!std::isdigit(static_cast<unsigned char>(peek())))
                throw FormatError("npy header: bad shape entry");
            std::size_t v = 0;
            while (pos_ < text_.size() && std::isdigit(static_cast<unsigned char>(text_[pos_]))) {
                v = v * 10 + static_cast<std::size_t>(text_[pos_] - '0');
                ++pos_;
            }
            shape.push_back(v);
            skip_ws();
            if (peek() == ',') ++pos_;
        }
    }

    std::string_view text_;
    std::size_t pos_ = 0;
};

template <class T>
Tensor decode_payload(Shape shape, const std::uint8_t* payload, std::size_t bytes) {
    Array<T> a;
    a.shape = std::move(shape);
    std::size_t n = element_count(a.shape);
    if (bytes != n * sizeof(T)) {
        throw CorruptionError("npy payload has " + std::to_string(bytes) + " bytes, shape " +
                              shape_string(a.shape) + " needs " + std::to_string(n * sizeof(T)));
    }
    a.data.resize(n);
    if (n) std::memcpy(a.data.data(), payload, bytes);
    if constexpr (std::is_same_v<T, float>) {
        for (std::size_t i = 0; i < n; ++i) {
            if (!std::isfinite(a.data[i]))
                throw ValidationError("npy f32 payload holds a non-finite value at flat index " +
                                      std::to_string(i));
        }
    }
    return a;
}

template <class T>
Array<T> require(Tensor t, const std::filesystem::path& path) {
    if (auto* a = std::get_if<Array<T>>(&t)) return std::move(*a);
    throw ValidationError(path.string() + ": expected dtype " + dtype_name(DTypeOf<T>::value) +
                          ", found " + dtype_name(tensor_dtype(t)));
}

}  // namespace

const char* dtype_name(DType dtype) {
    switch (dtype) {
        case DType::f32: return "f32";
        case DType::i32: return "i32";
        case DType::u8: return "u8";
    }
    return "?";
}

std::size_t element_count(const Shape& shape) {
    std::size_t n = 1;
    for (auto e : shape) n *= e;
    return n;
}

std::string shape_string(const Shape& shape) {
    std::string s = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) s += ", ";
        s += std::to_string(shape[i]);
    }
    return s + "]";
}

DType tensor_dtype(const Tensor& t) {
    return std::visit([](const auto& a) { return std::decay_t<decltype(a)>::dtype; }, t);
}

const Shape& tensor_shape(const Tensor& t) {
    return std::visit([](const auto& a) -> const Shape& { return a.shape; }, t);
}

std::vector<std::uint8_t> encode_npy(const Tensor& t) {
    DType dtype = tensor_dtype(t);
    const Shape& shape = tensor_shape(t);
    std::string header = header_dict(dtype, shape);
    // Pad with spaces so that preamble + header + '\n' is a multiple of 64.
    std::size_t total = kPreambleSize + header.size() + 1;
    std::size_t padded = (total + kAlign - 1) / kAlign * kAlign;
    header.append(padded - total, ' ');
    header.push_back('\n');
    if (header.size() > 0xFFFF) throw ArgumentError("npy header too long for format v1.0");

    std::size_t payload = element_count(shape) * itemsize(dtype);
    std::vector<std::uint8_t> out;
    out.reserve(kPreambleSize + header.size() + payload);
    out.insert(out.end(), std::begin(kMagic), std::end(kMagic));
    out.push_back(1);
    out.push_back(0);
    out.push_back(static_cast<std::uint8_t>(header.size() & 0xFF));
    out.push_back(static_cast<std::uint8_t>(header.size() >> 8));
    out.insert(out.end(), header.begin(), header.end());
    std::visit(
        [&](const auto& a) {
            const auto* p = reinterpret_cast<const std::uint8_t*>(a.data.data());
            out.insert(out.end(), p, p + a.data.size() * sizeof(a.data[0]));
        },
        t);
    return out;
}

Tensor decode_npy(const std::vector<std::uint8_t>& bytes) {
    if (bytes.size() < kPreambleSize || std::memcmp(bytes.data(), kMagic, 6) != 0)
        throw FormatError("not an npy file (bad magic)");
    if (bytes[6] != 1 || bytes[7] != 0)
        throw FormatError("unsupported npy version " + std::to_string(bytes[6]) + "." +
                          std::to_string(bytes[7]));
    std::size_t header_len = bytes[8] | (static_cast<std::size_t>(bytes[9]) << 8);
    if (kPreambleSize + header_len > bytes.size()) throw CorruptionError("npy header truncated");

    std::string_view header(reinterpret_cast<const char*>(bytes.data() + kPreambleSize), header_len);
    std::string descr;
    bool fortran = false;
    Shape shape;
    HeaderParser(header).parse(descr, fortran, shape);
    if (fortran) throw FormatError("fortran_order arrays are not supported");

    const std::uint8_t* payload = bytes.data() + kPreambleSize + header_len;
    std::size_t payload_bytes = bytes.size() - kPreambleSize - header_len;
    if (descr == "<f4") return decode_payload<float>(std::move(shape), payload, payload_bytes);
    if (descr == "<i4") return decode_payload<std::int32_t>(std::move(shape), payload, payload_bytes);
    if (descr == "|u1" || descr == "<u1")
        return decode_payload<std::uint8_t>(std::move(shape), payload, payload_bytes);
    throw FormatError("unsupported npy descr '" + descr + "'");
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (in.bad()) throw IoError("read failed: " + path.string());
    return bytes;
}

void write_file_bytes(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open for writing: " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("write failed: " + path.string());
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open for writing: " + path.string());
    out << text;
    if (!out) throw IoError("write failed: " + path.string());
}

std::string read_text_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

Tensor read_tensor(const std::filesystem::path& path) {
    auto bytes = read_file_bytes(path);
    try {
        return decode_npy(bytes);
    } catch (const FormatError& e) {
        throw FormatError(path.string() + ": " + e.what());
    } catch (const CorruptionError& e) {
        throw CorruptionError(path.string() + ": " + e.what());
    } catch (const ValidationError& e) {
        throw ValidationError(path.string() + ": " + e.what());
    }
}

void write_tensor(const std::filesystem::path& path, const Tensor& t) {
    write_file_bytes(path, encode_npy(t));
}

ArrayF32 read_f32(const std::filesystem::path& path) { return require<float>(read_tensor(path), path); }
ArrayI32 read_i32(const std::filesystem::path& path) {
    return require<std::int32_t>(read_tensor(path), path);
}
ArrayU8 read_u8(const std::filesystem::path& path) { return require<std::uint8_t>(read_tensor(path), path); }

}  // namespace gatedseg
