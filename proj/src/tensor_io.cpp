#include "tensor_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

namespace bbq {

namespace {

static_assert(std::endian::native == std::endian::little,
              "tensor file I/O assumes a little-endian host");

void put_bytes(std::ostream& os, const void* p, size_t n) {
    os.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
}

template <typename T>
void put_le(std::ostream& os, T v) {
    put_bytes(os, &v, sizeof(T));
}

template <typename T>
T get_le(std::istream& is) {
    T v{};
    is.read(reinterpret_cast<char*>(&v), sizeof(T));
    require(is.good(), ErrorCode::truncated, "tensor file truncated in header");
    return v;
}

struct Header {
    uint8_t dtype = 0;
    std::vector<size_t> shape;
};

void write_header(std::ostream& os, uint8_t dtype, const std::vector<size_t>& shape) {
    put_bytes(os, kTensorFileMagic, 4);
    put_le<uint32_t>(os, kTensorFileVersion);
    put_le<uint8_t>(os, dtype);
    put_le<uint32_t>(os, static_cast<uint32_t>(shape.size()));
    for (size_t d : shape) put_le<uint64_t>(os, static_cast<uint64_t>(d));
}

Header read_header(std::istream& is, const std::string& path) {
    char magic[4];
    is.read(magic, 4);
    require(is.good(), ErrorCode::truncated, path + ": file too short for magic");
    require(std::memcmp(magic, kTensorFileMagic, 4) == 0, ErrorCode::bad_magic,
            path + ": bad magic, not a tensor file");
    uint32_t version = get_le<uint32_t>(is);
    require(version == kTensorFileVersion, ErrorCode::bad_dtype,
            path + ": unsupported version " + std::to_string(version));
    Header h;
    h.dtype = get_le<uint8_t>(is);
    require(h.dtype == kDtypeReal32 || h.dtype == kDtypePackedNibbles, ErrorCode::bad_dtype,
            path + ": unknown dtype " + std::to_string(h.dtype));
    uint32_t ndim = get_le<uint32_t>(is);
    h.shape.resize(ndim);
    for (uint32_t i = 0; i < ndim; ++i) {
        uint64_t d = get_le<uint64_t>(is);
        require(d > 0, ErrorCode::bad_dtype, path + ": zero dimension in header");
        h.shape[i] = static_cast<size_t>(d);
    }
    return h;
}

std::vector<uint8_t> read_payload(std::istream& is, size_t expected, const std::string& path) {
    std::vector<uint8_t> payload(expected);
    if (expected > 0) {
        is.read(reinterpret_cast<char*>(payload.data()), static_cast<std::streamsize>(expected));
        require(static_cast<size_t>(is.gcount()) == expected, ErrorCode::truncated,
                path + ": payload shorter than header promises");
    }
    // Exactly `expected` bytes must remain: trailing garbage means a corrupt file.
    is.peek();
    require(is.eof(), ErrorCode::truncated, path + ": payload longer than header promises");
    return payload;
}

}  // namespace

void write_tensor(const Tensor& t, const std::string& path) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    require(os.good(), ErrorCode::io, path + ": cannot open for writing");
    write_header(os, kDtypeReal32, t.shape());
    put_bytes(os, t.data().data(), t.numel() * sizeof(float));
    os.flush();
    require(os.good(), ErrorCode::io, path + ": write failed");
}

Tensor read_tensor(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    require(is.good(), ErrorCode::io, path + ": cannot open for reading");
    Header h = read_header(is, path);
    require(h.dtype == kDtypeReal32, ErrorCode::bad_dtype,
            path + ": expected real32 payload, found packed nibbles");
    size_t n = shape_numel(h.shape);
    std::vector<uint8_t> payload = read_payload(is, n * sizeof(float), path);
    std::vector<float> data(n);
    std::memcpy(data.data(), payload.data(), payload.size());
    return Tensor(std::move(h.shape), std::move(data));
}

void write_packed(const std::vector<size_t>& shape, const std::vector<uint8_t>& packed,
                  const std::string& path) {
    size_t n = shape_numel(shape);
    require(packed.size() == (n + 1) / 2, ErrorCode::invalid_argument,
            path + ": packed payload length does not match shape");
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    require(os.good(), ErrorCode::io, path + ": cannot open for writing");
    write_header(os, kDtypePackedNibbles, shape);
    put_bytes(os, packed.data(), packed.size());
    os.flush();
    require(os.good(), ErrorCode::io, path + ": write failed");
}

void read_packed(const std::string& path, std::vector<size_t>& shape,
                 std::vector<uint8_t>& packed) {
    std::ifstream is(path, std::ios::binary);
    require(is.good(), ErrorCode::io, path + ": cannot open for reading");
    Header h = read_header(is, path);
    require(h.dtype == kDtypePackedNibbles, ErrorCode::bad_dtype,
            path + ": expected packed nibbles, found real32");
    size_t n = shape_numel(h.shape);
    packed = read_payload(is, (n + 1) / 2, path);
    shape = std::move(h.shape);
}

uint8_t read_dtype(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    require(is.good(), ErrorCode::io, path + ": cannot open for reading");
    return read_header(is, path).dtype;
}

namespace {

std::string csv_escape(const std::string& field) {
    bool needs_quotes = field.find_first_of(",\"\n\r") != std::string::npos;
    if (!needs_quotes) return field;
    std::string out = "\"";
    for (char c : field) {
        if (c == '"') out += '"';
        out += c;
    }
    out += '"';
    return out;
}

void append_row(std::ostringstream& os, const std::vector<std::string>& row) {
    for (size_t i = 0; i < row.size(); ++i) os << (i ? "," : "") << csv_escape(row[i]);
}

}  // namespace

std::string csv_to_string(const CsvTable& table) {
    require(!table.header.empty(), ErrorCode::invalid_argument, "csv table needs a header");
    for (const auto& row : table.rows)
        require(row.size() == table.header.size(), ErrorCode::invalid_argument,
                "csv row width does not match header");
    std::ostringstream os;
    append_row(os, table.header);
    for (const auto& row : table.rows) {
        os << '\n';
        append_row(os, row);
    }
    return os.str();
}

void emit_csv(const CsvTable& table, const std::string& path) {
    std::string body = csv_to_string(table);
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    require(os.good(), ErrorCode::io, path + ": cannot open for writing");
    os << body;
    os.flush();
    require(os.good(), ErrorCode::io, path + ": write failed");
}

}  // namespace bbq
