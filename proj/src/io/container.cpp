#include "csd/io/container.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

#include "csd/error.hpp"
#include "csd/io/hash.hpp"

namespace csd::io {

static_assert(std::endian::native == std::endian::little || std::endian::native == std::endian::big);

namespace {

template <typename U>
void put_le(std::string& buf, U value)
{
    unsigned char bytes[sizeof(U)];
    std::memcpy(bytes, &value, sizeof(U));
    if constexpr (std::endian::native == std::endian::big) std::reverse(std::begin(bytes), std::end(bytes));
    buf.append(reinterpret_cast<const char*>(bytes), sizeof(U));
}

template <typename U>
U get_le(const std::string& buf, std::size_t offset)
{
    unsigned char bytes[sizeof(U)];
    std::memcpy(bytes, buf.data() + offset, sizeof(U));
    if constexpr (std::endian::native == std::endian::big) std::reverse(std::begin(bytes), std::end(bytes));
    U value;
    std::memcpy(&value, bytes, sizeof(U));
    return value;
}

std::uint64_t checksum(const std::string& buf, std::size_t len)
{
    return fnv1a(std::span(reinterpret_cast<const unsigned char*>(buf.data()), len));
}

}  // namespace

std::string to_hex(std::uint64_t value)
{
    static const char* digits = "0123456789abcdef";
    std::string s(16, '0');
    for (int i = 15; i >= 0; --i, value >>= 4) s[static_cast<std::size_t>(i)] = digits[value & 0xf];
    return s;
}

void write_container(std::ostream& out, const std::string& magic, std::uint32_t version, const Container& c)
{
    if (magic.size() != 8) throw ContractViolation("container magic must be 8 bytes");
    nlohmann::json desc = c.descriptor;
    desc["blocks"] = nlohmann::json::array();
    for (const auto& b : c.blocks) desc["blocks"].push_back(b.shape());
    const std::string text = desc.dump();

    std::string buf = magic;
    put_le<std::uint32_t>(buf, version);
    put_le<std::uint64_t>(buf, text.size());
    buf += text;
    for (const auto& b : c.blocks)
        for (float v : b.data()) put_le<std::uint32_t>(buf, std::bit_cast<std::uint32_t>(v));
    put_le<std::uint64_t>(buf, checksum(buf, buf.size()));
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!out) throw IoError("failed writing container");
}

Container read_container(std::istream& in, const std::string& magic, std::uint32_t version)
{
    const std::string buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    const std::size_t header = 8 + 4 + 8;
    if (buf.size() < 8 || buf.compare(0, 8, magic) != 0) {
        if (buf.size() < 8 && magic.compare(0, buf.size(), buf) == 0)
            throw TruncatedFileError("file ends inside the header");
        throw SchemaError("not a " + magic + " file (bad magic)");
    }
    if (buf.size() < header) throw TruncatedFileError("file ends inside the header");
    const auto found = get_le<std::uint32_t>(buf, 8);
    if (found != version)
        throw VersionMismatchError("format version " + std::to_string(found) + ", expected " + std::to_string(version));
    const auto desc_len = get_le<std::uint64_t>(buf, 12);
    if (buf.size() < header + desc_len) throw TruncatedFileError("file ends inside the descriptor");

    Container c;
    try {
        c.descriptor = nlohmann::json::parse(buf.begin() + header, buf.begin() + static_cast<long>(header + desc_len));
    } catch (const nlohmann::json::exception& e) {
        throw SchemaError(std::string("malformed descriptor: ") + e.what());
    }
    if (!c.descriptor.contains("blocks") || !c.descriptor["blocks"].is_array())
        throw SchemaError("descriptor lacks a blocks array");

    std::size_t offset = header + desc_len;
    std::vector<num::Shape> shapes;
    std::size_t floats = 0;
    try {
        for (const auto& s : c.descriptor["blocks"]) {
            shapes.push_back(s.get<num::Shape>());
            floats += num::shape_size(shapes.back());
        }
    } catch (const nlohmann::json::exception& e) {
        throw SchemaError(std::string("malformed block shape: ") + e.what());
    }
    const std::size_t expected = offset + 4 * floats + 8;
    if (buf.size() < expected) throw TruncatedFileError("file ends inside the parameter blocks");
    if (buf.size() > expected) throw SchemaError("trailing bytes after checksum");
    if (get_le<std::uint64_t>(buf, expected - 8) != checksum(buf, expected - 8))
        throw ChecksumError("checksum mismatch");

    for (auto& shape : shapes) {
        num::Tensor t(shape);
        for (auto& v : t.vec()) {
            v = std::bit_cast<float>(get_le<std::uint32_t>(buf, offset));
            offset += 4;
        }
        c.blocks.push_back(std::move(t));
    }
    c.descriptor.erase("blocks");
    return c;
}

void save_container(const std::filesystem::path& path, const std::string& magic, std::uint32_t version,
                    const Container& c)
{
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    write_container(out, magic, version, c);
}

Container load_container(const std::filesystem::path& path, const std::string& magic, std::uint32_t version)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    return read_container(in, magic, version);
}

}  // namespace csd::io
