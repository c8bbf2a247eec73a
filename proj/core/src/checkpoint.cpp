#include "cascadeflow/checkpoint.hpp"

#include "cascadeflow/hashing.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace cascadeflow {

using nlohmann::json;

const NamedTensor& Container::at(const std::string& name) const {
    for (const auto& t : tensors)
        if (t.name == name) return t;
    throw std::out_of_range("container has no tensor named '" + name + "'");
}

bool Container::has(const std::string& name) const {
    for (const auto& t : tensors)
        if (t.name == name) return true;
    return false;
}

double to_f32_precision(double x) { return static_cast<double>(static_cast<float>(x)); }

namespace {

void append_f32_le(std::string& out, double v) {
    auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(v));
    out.push_back(static_cast<char>(bits & 0xFF));
    out.push_back(static_cast<char>((bits >> 8) & 0xFF));
    out.push_back(static_cast<char>((bits >> 16) & 0xFF));
    out.push_back(static_cast<char>((bits >> 24) & 0xFF));
}

double read_f32_le(const unsigned char* p) {
    std::uint32_t bits = static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
                         (static_cast<std::uint32_t>(p[2]) << 16) |
                         (static_cast<std::uint32_t>(p[3]) << 24);
    return static_cast<double>(std::bit_cast<float>(bits));
}

void append_u32_le(std::string& out, std::uint32_t v) {
    out.push_back(static_cast<char>(v & 0xFF));
    out.push_back(static_cast<char>((v >> 8) & 0xFF));
    out.push_back(static_cast<char>((v >> 16) & 0xFF));
    out.push_back(static_cast<char>((v >> 24) & 0xFF));
}

std::uint32_t read_u32_le(const unsigned char* p) {
    return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

}  // namespace

void save_container(const std::string& path, const Container& c) {
    if (!c.meta.is_object() && !c.meta.is_null())
        throw std::invalid_argument("container metadata must be a JSON object");

    // Payload plus manifest entries, offsets assigned in entry order.
    std::string payload;
    json entries = json::array();
    for (const auto& t : c.tensors) {
        if (t.name.empty()) throw std::invalid_argument("container tensor with empty name");
        if (shape_numel(t.shape) != static_cast<std::int64_t>(t.data.size()))
            throw std::invalid_argument("tensor '" + t.name + "' data does not match shape " +
                                        shape_str(t.shape));
        std::size_t offset = payload.size();
        for (double v : t.data) append_f32_le(payload, v);
        std::size_t nbytes = payload.size() - offset;
        std::uint32_t crc = crc32(payload.data() + offset, nbytes);
        json e;
        e["name"] = t.name;
        e["shape"] = t.shape;
        e["dtype"] = "f32";
        e["offset"] = offset;
        e["bytes"] = nbytes;
        e["crc32"] = crc;
        entries.push_back(std::move(e));
    }
    json header;
    header["meta"] = c.meta.is_null() ? json::object() : c.meta;
    header["entries"] = std::move(entries);
    std::string header_text = header.dump();  // keys sorted: deterministic bytes

    std::string blob;
    blob.reserve(8 + 4 + header_text.size() + payload.size());
    blob.append(kContainerMagic, sizeof(kContainerMagic));
    append_u32_le(blob, static_cast<std::uint32_t>(header_text.size()));
    blob += header_text;
    blob += payload;

    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("cannot open '" + path + "' for writing");
    f.write(blob.data(), static_cast<std::streamsize>(blob.size()));
    if (!f) throw std::runtime_error("short write to '" + path + "'");
}

Container load_container(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open container '" + path + "'");
    std::string blob((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    if (blob.size() < 12 || std::memcmp(blob.data(), kContainerMagic, 8) != 0)
        throw std::runtime_error("'" + path + "' is not a tensor-pack container (bad magic)");
    const auto* bytes = reinterpret_cast<const unsigned char*>(blob.data());
    std::uint32_t header_len = read_u32_le(bytes + 8);
    if (12ull + header_len > blob.size())
        throw std::runtime_error("container '" + path + "' truncated in header");
    json header;
    try {
        header = json::parse(blob.substr(12, header_len));
    } catch (const json::exception& e) {
        throw std::runtime_error("container '" + path + "' has malformed header: " + e.what());
    }
    if (!header.contains("entries") || !header["entries"].is_array())
        throw std::runtime_error("container '" + path + "' missing entry manifest");

    std::size_t payload_off = 12ull + header_len;
    std::size_t payload_len = blob.size() - payload_off;
    Container c;
    c.meta = header.value("meta", json::object());
    std::size_t expected_next = 0;
    for (const auto& e : header["entries"]) {
        NamedTensor t;
        t.name = e.at("name").get<std::string>();
        t.shape = e.at("shape").get<std::vector<std::int64_t>>();
        std::size_t offset = e.at("offset").get<std::size_t>();
        std::size_t nbytes = e.at("bytes").get<std::size_t>();
        std::uint32_t crc_expect = e.at("crc32").get<std::uint32_t>();
        std::string dtype = e.at("dtype").get<std::string>();
        if (dtype != "f32")
            throw std::runtime_error("tensor '" + t.name + "' has unsupported dtype " + dtype);
        std::int64_t numel = shape_numel(t.shape);
        if (nbytes != static_cast<std::size_t>(numel) * 4)
            throw std::runtime_error("tensor '" + t.name + "' byte size mismatches shape");
        if (offset != expected_next)
            throw std::runtime_error("tensor '" + t.name + "' offset overlaps or leaves a gap");
        if (offset + nbytes > payload_len)
            throw std::runtime_error("tensor '" + t.name + "' extends past end of payload");
        expected_next = offset + nbytes;
        const unsigned char* p = bytes + payload_off + offset;
        std::uint32_t crc_got = crc32(p, nbytes);
        if (crc_got != crc_expect)
            throw std::runtime_error("checksum mismatch on tensor '" + t.name + "' in '" + path +
                                     "' (corrupt container)");
        t.data.resize(static_cast<std::size_t>(numel));
        for (std::int64_t i = 0; i < numel; ++i) t.data[static_cast<std::size_t>(i)] = read_f32_le(p + i * 4);
        c.tensors.push_back(std::move(t));
    }
    if (expected_next != payload_len)
        throw std::runtime_error("container '" + path + "' has trailing bytes after payload");
    return c;
}

NamedTensor video_tensor_entry(const std::string& name, const VideoTensor& v) {
    return NamedTensor{name, {v.frames, v.height, v.width, v.channels}, v.data};
}

VideoTensor entry_to_video(const NamedTensor& t) {
    if (t.shape.size() != 4)
        throw std::invalid_argument("tensor '" + t.name + "' is not a 4-axis clip");
    VideoTensor v(t.shape[0], t.shape[1], t.shape[2], t.shape[3]);
    v.data = t.data;
    return v;
}

NamedTensor latent_tensor_entry(const std::string& name, const LatentTensor& z) {
    return NamedTensor{name, {z.t, z.h, z.w, z.c}, z.data};
}

LatentTensor entry_to_latent(const NamedTensor& t) {
    if (t.shape.size() != 4)
        throw std::invalid_argument("tensor '" + t.name + "' is not a 4-axis latent");
    LatentTensor z(t.shape[0], t.shape[1], t.shape[2], t.shape[3]);
    z.data = t.data;
    return z;
}

}  // namespace cascadeflow
