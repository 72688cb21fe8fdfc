#include "lingmerge/container.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cstring>
#include <fstream>

#include "lingmerge/error.hpp"

namespace lingmerge {

static_assert(std::endian::native == std::endian::little, "container payloads are written in host order");

namespace {

constexpr std::string_view kMetadataKey = "__metadata__";
constexpr std::string_view kSuffixA = ".lora_A";
constexpr std::string_view kSuffixB = ".lora_B";
constexpr std::string_view kSuffixDelta = ".delta";

bool ends_with(std::string_view s, std::string_view suffix) {
    return s.size() > suffix.size() && s.substr(s.size() - suffix.size()) == suffix;
}

std::string format_double(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

double parse_double(const std::string& s, const char* what) {
    double v = 0.0;
    auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
        throw Error(ErrorCode::kFormat, std::string("metadata '") + what + "' is not a number: '" + s + "'");
    }
    return v;
}

std::uint64_t read_u64_le(std::span<const std::byte> bytes) {
    std::uint64_t v = 0;
    for (int i = 7; i >= 0; --i) v = (v << 8) | std::to_integer<std::uint64_t>(bytes[static_cast<std::size_t>(i)]);
    return v;
}

std::span<const std::byte> header_bytes(std::span<const std::byte> bytes) {
    if (bytes.size() < 8) throw Error(ErrorCode::kFormat, "file shorter than the 8-byte header length");
    const std::uint64_t n = read_u64_le(bytes);
    if (n == 0 || n > bytes.size() - 8) {
        throw Error(ErrorCode::kFormat, "header length " + std::to_string(n) + " exceeds file size " +
                                            std::to_string(bytes.size()));
    }
    return bytes.subspan(8, static_cast<std::size_t>(n));
}

nlohmann::json parse_header(std::span<const std::byte> header) {
    const auto* p = reinterpret_cast<const char*>(header.data());
    auto j = nlohmann::json::parse(p, p + header.size(), nullptr, false);
    if (j.is_discarded() || !j.is_object()) throw Error(ErrorCode::kFormat, "header is not a JSON object");
    return j;
}

std::vector<std::byte> read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::kIo, "cannot open '" + path.string() + "'");
    in.seekg(0, std::ios::end);
    const auto size = static_cast<std::size_t>(in.tellg());
    in.seekg(0);
    std::vector<std::byte> bytes(size);
    if (size > 0 && !in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(size))) {
        throw Error(ErrorCode::kIo, "read failed on '" + path.string() + "'");
    }
    return bytes;
}

struct Entry {
    std::string name;
    std::vector<std::size_t> shape;
    std::uint64_t begin = 0;
    std::uint64_t end = 0;
};

Entry parse_entry(const std::string& name, const nlohmann::json& j) {
    if (!j.is_object()) throw Error(ErrorCode::kFormat, "entry '" + name + "' is not an object");
    if (!j.contains("dtype") || j["dtype"] != "F32") {
        throw Error(ErrorCode::kFormat, "entry '" + name + "' must have dtype F32");
    }
    const auto& shape = j.value("shape", nlohmann::json());
    const auto& offsets = j.value("data_offsets", nlohmann::json());
    if (!shape.is_array() || !offsets.is_array() || offsets.size() != 2) {
        throw Error(ErrorCode::kFormat, "entry '" + name + "' needs shape and two data_offsets");
    }
    Entry e{name, {}, 0, 0};
    for (const auto& d : shape) {
        if (!d.is_number_unsigned()) throw Error(ErrorCode::kFormat, "entry '" + name + "' has a bad dimension");
        e.shape.push_back(d.get<std::size_t>());
    }
    if (!offsets[0].is_number_unsigned() || !offsets[1].is_number_unsigned()) {
        throw Error(ErrorCode::kFormat, "entry '" + name + "' has non-integer offsets");
    }
    e.begin = offsets[0].get<std::uint64_t>();
    e.end = offsets[1].get<std::uint64_t>();
    if (e.end < e.begin) throw Error(ErrorCode::kFormat, "entry '" + name + "' has end before begin");
    return e;
}

}  // namespace

std::vector<std::byte> serialize_tensor_file(const TensorFile& file) {
    std::vector<const TensorBlock*> order;
    for (const auto& t : file.tensors) order.push_back(&t);
    std::sort(order.begin(), order.end(), [](auto* a, auto* b) { return a->name() < b->name(); });

    nlohmann::json header = nlohmann::json::object();
    std::uint64_t offset = 0;
    for (const auto* t : order) {
        if (t->name() == kMetadataKey || header.contains(t->name())) {
            throw Error(ErrorCode::kValidation, "duplicate or reserved tensor name '" + t->name() + "'");
        }
        const std::uint64_t len = t->size() * sizeof(float);
        header[t->name()] = {{"dtype", "F32"}, {"shape", t->shape()}, {"data_offsets", {offset, offset + len}}};
        offset += len;
    }
    if (!file.metadata.empty()) header[std::string(kMetadataKey)] = file.metadata;

    std::string text = header.dump();
    // Pad so the payload starts 8-byte aligned.
    text.append((8 - text.size() % 8) % 8, ' ');

    std::vector<std::byte> out(8 + text.size() + offset);
    std::uint64_t n = text.size();
    for (int i = 0; i < 8; ++i) out[static_cast<std::size_t>(i)] = static_cast<std::byte>((n >> (8 * i)) & 0xff);
    std::memcpy(out.data() + 8, text.data(), text.size());
    std::byte* payload = out.data() + 8 + text.size();
    for (const auto* t : order) {
        std::memcpy(payload, t->data().data(), t->size() * sizeof(float));
        payload += t->size() * sizeof(float);
    }
    return out;
}

TensorFile parse_tensor_file(std::span<const std::byte> bytes) {
    const auto header = header_bytes(bytes);
    const auto j = parse_header(header);
    const auto payload = bytes.subspan(8 + header.size());

    TensorFile file;
    std::vector<Entry> entries;
    for (const auto& [key, value] : j.items()) {
        if (key == kMetadataKey) {
            if (!value.is_object()) throw Error(ErrorCode::kFormat, "__metadata__ must be an object");
            for (const auto& [mk, mv] : value.items()) {
                if (!mv.is_string()) throw Error(ErrorCode::kFormat, "metadata '" + mk + "' must be a string");
                file.metadata[mk] = mv.get<std::string>();
            }
            continue;
        }
        entries.push_back(parse_entry(key, value));
    }

    std::vector<const Entry*> by_offset;
    for (const auto& e : entries) by_offset.push_back(&e);
    std::sort(by_offset.begin(), by_offset.end(),
              [](auto* a, auto* b) { return std::tie(a->begin, a->end) < std::tie(b->begin, b->end); });
    std::uint64_t cursor = 0;
    for (const auto* e : by_offset) {
        if (e->begin < cursor) {
            throw Error(ErrorCode::kOverlap, "tensor '" + e->name + "' overlaps the preceding tensor");
        }
        if (e->begin > cursor) throw Error(ErrorCode::kFormat, "gap before tensor '" + e->name + "'");
        cursor = e->end;
    }
    if (cursor != payload.size()) {
        throw Error(ErrorCode::kFormat, "payload is " + std::to_string(payload.size()) + " bytes but offsets cover " +
                                            std::to_string(cursor));
    }

    for (const auto& e : entries) {
        const std::uint64_t len = e.end - e.begin;
        if (len % sizeof(float) != 0) throw Error(ErrorCode::kFormat, "tensor '" + e.name + "' length not a multiple of 4");
        std::vector<float> data(len / sizeof(float));
        std::memcpy(data.data(), payload.data() + e.begin, len);
        TensorBlock t(e.name, e.shape, std::move(data));
        if (!t.all_finite()) throw Error(ErrorCode::kData, "tensor '" + e.name + "' contains NaN or Inf");
        file.tensors.push_back(std::move(t));
    }
    return file;
}

TensorFile read_tensor_file(const std::filesystem::path& path) {
    return parse_tensor_file(read_file(path));
}

void write_tensor_file(const std::filesystem::path& path, const TensorFile& file) {
    const auto bytes = serialize_tensor_file(file);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::kIo, "cannot open '" + path.string() + "' for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error(ErrorCode::kIo, "write failed on '" + path.string() + "'");
}

nlohmann::json read_header(const std::filesystem::path& path) {
    const auto bytes = read_file(path);
    return parse_header(header_bytes(bytes));
}

FileKind classify(const TensorFile& file) {
    if (file.tensors.empty()) throw Error(ErrorCode::kFormat, "file holds no tensors");
    const bool all_delta = std::all_of(file.tensors.begin(), file.tensors.end(),
                                       [](const auto& t) { return ends_with(t.name(), kSuffixDelta); });
    if (all_delta) return FileKind::kDelta;
    const bool all_lora = std::all_of(file.tensors.begin(), file.tensors.end(), [](const auto& t) {
        return ends_with(t.name(), kSuffixA) || ends_with(t.name(), kSuffixB);
    });
    if (all_lora) return FileKind::kAdapter;
    throw Error(ErrorCode::kFormat, "tensor names follow neither the adapter nor the delta convention");
}

LoraAdapter adapter_from_file(const TensorFile& file) {
    LoraAdapter adapter;
    std::map<std::string, const TensorBlock*> as;
    std::map<std::string, const TensorBlock*> bs;
    for (const auto& t : file.tensors) {
        if (ends_with(t.name(), kSuffixA)) {
            as[t.name().substr(0, t.name().size() - kSuffixA.size())] = &t;
        } else if (ends_with(t.name(), kSuffixB)) {
            bs[t.name().substr(0, t.name().size() - kSuffixB.size())] = &t;
        } else {
            throw Error(ErrorCode::kFormat, "tensor '" + t.name() + "' is not named <layer>.lora_A or <layer>.lora_B");
        }
    }
    for (const auto& [layer, a] : as) {
        if (!bs.contains(layer)) throw Error(ErrorCode::kPairing, "layer '" + layer + "' has lora_A but no lora_B");
    }
    for (const auto& [layer, b] : bs) {
        if (!as.contains(layer)) throw Error(ErrorCode::kPairing, "layer '" + layer + "' has lora_B but no lora_A");
        LoraLayer l{*as.at(layer), *b};
        l.a.rename(layer);
        l.b.rename(layer);
        adapter.layers.emplace(layer, std::move(l));
    }

    auto meta = [&](const char* key) -> const std::string& {
        auto it = file.metadata.find(key);
        if (it == file.metadata.end()) throw Error(ErrorCode::kFormat, std::string("adapter metadata lacks '") + key + "'");
        return it->second;
    };
    const double rank = parse_double(meta("rank"), "rank");
    if (!(rank >= 1.0) || rank != static_cast<double>(static_cast<std::uint32_t>(rank))) {
        throw Error(ErrorCode::kValidation, "rank must be a positive integer");
    }
    adapter.rank = static_cast<std::uint32_t>(rank);
    adapter.alpha = parse_double(meta("alpha"), "alpha");
    adapter.label = meta("label");
    adapter.validate();
    return adapter;
}

TensorFile adapter_to_file(const LoraAdapter& adapter) {
    adapter.validate();
    TensorFile file;
    file.metadata = {{"rank", std::to_string(adapter.rank)},
                     {"alpha", format_double(adapter.alpha)},
                     {"label", adapter.label}};
    for (const auto& [layer, l] : adapter.layers) {
        TensorBlock a = l.a;
        TensorBlock b = l.b;
        a.rename(layer + std::string(kSuffixA));
        b.rename(layer + std::string(kSuffixB));
        file.tensors.push_back(std::move(a));
        file.tensors.push_back(std::move(b));
    }
    return file;
}

DeltaMap delta_from_file(const TensorFile& file) {
    DeltaMap delta;
    for (const auto& t : file.tensors) {
        if (!ends_with(t.name(), kSuffixDelta)) {
            throw Error(ErrorCode::kFormat, "tensor '" + t.name() + "' is not named <layer>.delta");
        }
        std::string layer = t.name().substr(0, t.name().size() - kSuffixDelta.size());
        TensorBlock block = t;
        block.rename(layer);
        delta.layers.emplace(std::move(layer), std::move(block));
    }
    if (auto it = file.metadata.find("label"); it != file.metadata.end()) delta.label = it->second;
    delta.validate();
    return delta;
}

TensorFile delta_to_file(const DeltaMap& delta) {
    delta.validate();
    TensorFile file;
    file.metadata = {{"label", delta.label}};
    for (const auto& [layer, t] : delta.layers) {
        TensorBlock block = t;
        block.rename(layer + std::string(kSuffixDelta));
        file.tensors.push_back(std::move(block));
    }
    return file;
}

LoraAdapter load_adapter(const std::filesystem::path& path) { return adapter_from_file(read_tensor_file(path)); }

void save_adapter(const LoraAdapter& adapter, const std::filesystem::path& path) {
    write_tensor_file(path, adapter_to_file(adapter));
}

DeltaMap load_delta(const std::filesystem::path& path) { return delta_from_file(read_tensor_file(path)); }

void save_delta(const DeltaMap& delta, const std::filesystem::path& path) {
    write_tensor_file(path, delta_to_file(delta));
}

}  // namespace lingmerge
