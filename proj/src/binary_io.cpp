#include "smtm/binary_io.hpp"

#include <fstream>
#include <sstream>

#include "smtm/errors.hpp"

namespace smtm::io {

std::string_view Reader::bytes(std::size_t n) {
    if (n > remaining()) {
        throw SizeError("unexpected end of data: need " + std::to_string(n) + " bytes at offset " +
                        std::to_string(pos_) + ", " + std::to_string(remaining()) + " left");
    }
    auto out = data_.substr(pos_, n);
    pos_ += n;
    return out;
}

std::uint32_t Reader::u32() {
    auto raw = bytes(4);
    std::uint32_t v = 0;
    for (int i = 3; i >= 0; --i) v = (v << 8) | static_cast<std::uint8_t>(raw[i]);
    return v;
}

std::uint64_t Reader::u64() {
    auto raw = bytes(8);
    std::uint64_t v = 0;
    for (int i = 7; i >= 0; --i) v = (v << 8) | static_cast<std::uint8_t>(raw[i]);
    return v;
}

void Reader::f32s(std::span<float> out) {
    if (out.size() * 4 > remaining()) {
        throw SizeError("unexpected end of data: need " + std::to_string(out.size() * 4) + " bytes at offset " +
                        std::to_string(pos_) + ", " + std::to_string(remaining()) + " left");
    }
    for (float& v : out) v = f32();
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return std::move(ss).str();
}

void write_file(const std::filesystem::path& path, std::string_view contents) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    if (!out) throw IoError("short write to " + path.string());
}

}  // namespace smtm::io
