#include "doctest.h"

#include <cstdint>
#include <filesystem>
#include <fstream>

#include "tensor_io.hpp"
#include "test_util.hpp"

using namespace bbq;
using testutil::error_code_of;
using testutil::temp_path;

namespace {

std::vector<uint8_t> file_bytes(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    REQUIRE(is.good());
    return std::vector<uint8_t>(std::istreambuf_iterator<char>(is),
                                std::istreambuf_iterator<char>());
}

void write_bytes(const std::string& path, const std::vector<uint8_t>& bytes) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    os.write(reinterpret_cast<const char*>(bytes.data()),
             static_cast<std::streamsize>(bytes.size()));
}

}  // namespace

TEST_CASE("zero tensor writes the exact documented layout") {
    std::string path = temp_path("bbqt_zero.bbqt");
    write_tensor(Tensor::zeros({2, 2}), path);
    std::vector<uint8_t> bytes = file_bytes(path);
    // 4 magic + 4 version + 1 dtype + 4 ndim + 2*8 dims + 4*4 payload
    REQUIRE(bytes.size() == 45);
    CHECK(bytes[0] == 'B');
    CHECK(bytes[1] == 'B');
    CHECK(bytes[2] == 'Q');
    CHECK(bytes[3] == 'T');
    CHECK(bytes[4] == 1);  // version, little-endian
    CHECK(bytes[5] == 0);
    CHECK(bytes[6] == 0);
    CHECK(bytes[7] == 0);
    CHECK(bytes[8] == 0);  // dtype real32
    CHECK(bytes[9] == 2);  // ndim
    CHECK(bytes[13] == 2);  // dims[0] low byte
    CHECK(bytes[21] == 2);  // dims[1] low byte
    for (size_t i = 29; i < 45; ++i) CHECK(bytes[i] == 0);
    std::filesystem::remove(path);
}

TEST_CASE("payload offset is 13 + 8*ndim") {
    for (std::vector<size_t> shape : {std::vector<size_t>{5}, {3, 4}, {2, 3, 4}}) {
        std::string path = temp_path("bbqt_offset.bbqt");
        write_tensor(Tensor::zeros(shape), path);
        size_t expected = 13 + 8 * shape.size() + 4 * shape_numel(shape);
        CHECK(std::filesystem::file_size(path) == expected);
        std::filesystem::remove(path);
    }
}

TEST_CASE("payload bytes are little-endian IEEE-754 singles") {
    std::string path = temp_path("bbqt_ieee.bbqt");
    write_tensor(Tensor({3}, {1.0f, -1.0f, 0.5f}), path);
    std::vector<uint8_t> bytes = file_bytes(path);
    const size_t off = 13 + 8;
    // Encoded by hand: 1.0 = 0x3F800000, -1.0 = 0xBF800000, 0.5 = 0x3F000000.
    const uint8_t expected[12] = {0x00, 0x00, 0x80, 0x3F, 0x00, 0x00,
                                  0x80, 0xBF, 0x00, 0x00, 0x00, 0x3F};
    REQUIRE(bytes.size() == off + 12);
    for (size_t i = 0; i < 12; ++i) CHECK(bytes[off + i] == expected[i]);
    std::filesystem::remove(path);
}

TEST_CASE("round trip is bit exact") {
    std::string path = temp_path("bbqt_roundtrip.bbqt");
    Tensor t = testutil::random_tensor({128, 128}, 7);
    write_tensor(t, path);
    Tensor back = read_tensor(path);
    REQUIRE(back.shape() == t.shape());
    for (size_t i = 0; i < t.numel(); ++i) REQUIRE(back[i] == t[i]);
    std::filesystem::remove(path);
}

TEST_CASE("round trip across shapes and odd sizes") {
    Rng rng(9);
    for (int trial = 0; trial < 10; ++trial) {
        std::vector<size_t> shape;
        size_t ndim = 1 + rng.below(3);
        for (size_t i = 0; i < ndim; ++i) shape.push_back(1 + rng.below(17));
        Tensor t = testutil::random_tensor(shape, 100 + trial, 10.0);
        std::string path = temp_path("bbqt_shapes.bbqt");
        write_tensor(t, path);
        Tensor back = read_tensor(path);
        REQUIRE(back.shape() == t.shape());
        for (size_t i = 0; i < t.numel(); ++i) REQUIRE(back[i] == t[i]);
        std::filesystem::remove(path);
    }
}

TEST_CASE("bad magic, truncation, and unknown dtype are distinct errors") {
    std::string path = temp_path("bbqt_bad.bbqt");
    write_tensor(Tensor({2, 2}, {1, 2, 3, 4}), path);
    std::vector<uint8_t> good = file_bytes(path);

    std::vector<uint8_t> bad_magic = good;
    bad_magic[0] = 'X';
    bad_magic[1] = 'X';
    write_bytes(path, bad_magic);
    CHECK(error_code_of([&] { read_tensor(path); }) == ErrorCode::bad_magic);

    std::vector<uint8_t> truncated(good.begin(), good.end() - 4);  // 12-byte payload
    write_bytes(path, truncated);
    CHECK(error_code_of([&] { read_tensor(path); }) == ErrorCode::truncated);

    std::vector<uint8_t> bad_dtype = good;
    bad_dtype[8] = 7;
    write_bytes(path, bad_dtype);
    CHECK(error_code_of([&] { read_tensor(path); }) == ErrorCode::bad_dtype);

    std::vector<uint8_t> trailing = good;
    trailing.push_back(0);
    write_bytes(path, trailing);
    CHECK(error_code_of([&] { read_tensor(path); }) == ErrorCode::truncated);

    CHECK(error_code_of([&] { read_tensor(temp_path("bbqt_missing.bbqt")); }) ==
          ErrorCode::io);
    std::filesystem::remove(path);
}

TEST_CASE("packed nibble files round trip and reject real32 readers") {
    std::string path = temp_path("bbqt_packed.bbqt");
    std::vector<uint8_t> packed = {0x21, 0x43, 0x05};
    write_packed({5}, packed, path);
    std::vector<size_t> shape;
    std::vector<uint8_t> back;
    read_packed(path, shape, back);
    CHECK(shape == std::vector<size_t>{5});
    CHECK(back == packed);
    CHECK(error_code_of([&] { read_tensor(path); }) == ErrorCode::bad_dtype);
    std::filesystem::remove(path);
}

TEST_CASE("non-finite values are rejected at construction") {
    CHECK(error_code_of([&] {
        Tensor({2}, {1.0f, std::numeric_limits<float>::quiet_NaN()});
    }) == ErrorCode::invalid_argument);
    CHECK(error_code_of([&] {
        Tensor({2}, {std::numeric_limits<float>::infinity(), 0.0f});
    }) == ErrorCode::invalid_argument);
    CHECK(error_code_of([&] { Tensor({2, 2}, {1.0f, 2.0f}); }) ==
          ErrorCode::invalid_argument);
}

TEST_CASE("csv emission matches the documented examples") {
    CsvTable empty{{"iter", "loss"}, {}};
    CHECK(csv_to_string(empty) == "iter,loss");

    CsvTable one{{"iter", "loss"}, {{"0", "2.5"}}};
    CHECK(csv_to_string(one) == "iter,loss\n0,2.5");

    CsvTable three{{"a"}, {{"1"}, {"2"}, {"3"}}};
    std::string text = csv_to_string(three);
    CHECK(std::count(text.begin(), text.end(), '\n') == 3);  // 4 lines

    CsvTable quoted{{"name"}, {{"a,b"}, {"say \"hi\""}}};
    CHECK(csv_to_string(quoted) == "name\n\"a,b\"\n\"say \"\"hi\"\"\"");

    std::string path = temp_path("bbqt_csv.csv");
    emit_csv(one, path);
    std::ifstream is(path);
    std::string body((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
    CHECK(body == "iter,loss\n0,2.5");
    std::filesystem::remove(path);
}
