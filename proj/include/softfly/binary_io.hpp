#pragma once

#include <bit>
#include <cstdint>
#include <fstream>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <vector>

namespace softfly {

static_assert(std::endian::native == std::endian::little, "binary formats are little-endian");

class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed or incompatible file contents.
class FormatError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class BinaryWriter {
public:
    explicit BinaryWriter(const std::string& path) : path_(path), out_(path, std::ios::binary | std::ios::trunc) {
        if (!out_) throw IoError("cannot open " + path + " for writing");
    }

    template <typename T>
        requires std::is_trivially_copyable_v<T>
    void put(const T& v) {
        out_.write(reinterpret_cast<const char*>(&v), sizeof(T));
    }

    void put_bytes(const void* data, std::size_t n) { out_.write(static_cast<const char*>(data), static_cast<std::streamsize>(n)); }

    void put_string(const std::string& s) {
        put(static_cast<std::uint32_t>(s.size()));
        put_bytes(s.data(), s.size());
    }

    void close() {
        out_.close();
        if (!out_) throw IoError("write failed for " + path_);
    }

private:
    std::string path_;
    std::ofstream out_;
};

class BinaryReader {
public:
    explicit BinaryReader(const std::string& path) : path_(path), in_(path, std::ios::binary) {
        if (!in_) throw IoError("cannot open " + path + " for reading");
    }

    template <typename T>
        requires std::is_trivially_copyable_v<T>
    T get() {
        T v;
        in_.read(reinterpret_cast<char*>(&v), sizeof(T));
        if (!in_) throw FormatError("unexpected end of file in " + path_);
        return v;
    }

    void get_bytes(void* data, std::size_t n) {
        in_.read(static_cast<char*>(data), static_cast<std::streamsize>(n));
        if (!in_) throw FormatError("unexpected end of file in " + path_);
    }

    std::string get_string(std::uint32_t max_len = 1u << 20) {
        const auto n = get<std::uint32_t>();
        if (n > max_len) throw FormatError("string field too long in " + path_);
        std::string s(n, '\0');
        get_bytes(s.data(), n);
        return s;
    }

    bool at_end() { return in_.peek() == std::char_traits<char>::eof(); }

private:
    std::string path_;
    std::ifstream in_;
};

}  // namespace softfly
