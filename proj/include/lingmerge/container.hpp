#pragma once

// Tensor container: 8-byte little-endian header length N, N bytes of JSON
// header, then the raw little-endian f32 payloads addressed by data_offsets
// relative to the end of the header.
//
//   { "<name>": {"dtype":"F32","shape":[...],"data_offsets":[begin,end]},
//     "__metadata__": {"rank":"64","alpha":"64","label":"en"} }
//
// Adapters use "<layer>.lora_A" / "<layer>.lora_B"; deltas use "<layer>.delta".

#include <cstddef>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "lingmerge/tensor.hpp"

namespace lingmerge {

struct TensorFile {
    std::map<std::string, std::string> metadata;
    std::vector<TensorBlock> tensors;
};

std::vector<std::byte> serialize_tensor_file(const TensorFile& file);
TensorFile parse_tensor_file(std::span<const std::byte> bytes);

TensorFile read_tensor_file(const std::filesystem::path& path);
void write_tensor_file(const std::filesystem::path& path, const TensorFile& file);

// Header JSON only; validates the length prefix but not the payload.
nlohmann::json read_header(const std::filesystem::path& path);

enum class FileKind { kAdapter, kDelta };

// Throws kFormat if the tensor names follow neither convention.
FileKind classify(const TensorFile& file);

LoraAdapter adapter_from_file(const TensorFile& file);
TensorFile adapter_to_file(const LoraAdapter& adapter);
DeltaMap delta_from_file(const TensorFile& file);
TensorFile delta_to_file(const DeltaMap& delta);

LoraAdapter load_adapter(const std::filesystem::path& path);
void save_adapter(const LoraAdapter& adapter, const std::filesystem::path& path);
DeltaMap load_delta(const std::filesystem::path& path);
void save_delta(const DeltaMap& delta, const std::filesystem::path& path);

}  // namespace lingmerge
