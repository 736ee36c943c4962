#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tensor.hpp"

namespace bbq {

// On-disk tensor container. Little-endian layout:
//   magic   4 bytes  "BBQT"
//   version u32      1
//   dtype   u8       0 = real32, 1 = packed nibbles (two 4-bit fields/byte)
//   ndim    u32
//   dims    ndim x u64
//   payload raw bytes (numel*4 for real32, ceil(numel/2) for nibbles)
// Payload starts at byte offset 13 + 8*ndim.
inline constexpr char kTensorFileMagic[4] = {'B', 'B', 'Q', 'T'};
inline constexpr uint32_t kTensorFileVersion = 1;
inline constexpr uint8_t kDtypeReal32 = 0;
inline constexpr uint8_t kDtypePackedNibbles = 1;

void write_tensor(const Tensor& t, const std::string& path);
Tensor read_tensor(const std::string& path);

// dtype=1 container used for quantized codes; `shape` counts logical 4-bit
// elements, `packed` holds ceil(numel/2) bytes.
void write_packed(const std::vector<size_t>& shape, const std::vector<uint8_t>& packed,
                  const std::string& path);
void read_packed(const std::string& path, std::vector<size_t>& shape,
                 std::vector<uint8_t>& packed);

// Peeks at the header only.
uint8_t read_dtype(const std::string& path);

// Minimal RFC-4180-style CSV: header row, "\n" separators, fields quoted only
// when they contain a comma, quote, or newline. No trailing newline.
struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
};

std::string csv_to_string(const CsvTable& table);
void emit_csv(const CsvTable& table, const std::string& path);

}  // namespace bbq
