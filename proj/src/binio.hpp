#pragma once

// Little-endian binary file helpers shared by the QARF/QARW/QARX writers.

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "qar/error.hpp"

static_assert(std::endian::native == std::endian::little,
              "file formats are little-endian; big-endian hosts are unsupported");

namespace qar::binio {

class Reader {
public:
    explicit Reader(const std::string& path) : path_(path), in_(path, std::ios::binary) {
        if (!in_) fail(ErrorCode::Io, "cannot open file: " + path);
    }

    const std::string& path() const { return path_; }
    uint64_t offset() const { return offset_; }

    void read_bytes(void* dst, size_t n) {
        in_.read(static_cast<char*>(dst), static_cast<std::streamsize>(n));
        if (static_cast<size_t>(in_.gcount()) != n) {
            fail(ErrorCode::Format, path_ + ": truncated at byte offset " +
                                        std::to_string(offset_ + static_cast<uint64_t>(in_.gcount())));
        }
        offset_ += n;
    }

    template <typename T>
    T read() {
        T value;
        read_bytes(&value, sizeof(T));
        return value;
    }

    template <typename T>
    void read_array(T* dst, size_t count) {
        read_bytes(dst, count * sizeof(T));
    }

    void expect_magic(const char magic[4]) {
        char got[4];
        read_bytes(got, 4);
        if (std::memcmp(got, magic, 4) != 0) {
            fail(ErrorCode::Format, path_ + ": bad magic, expected \"" + std::string(magic, 4) + "\"");
        }
    }

    bool at_eof() {
        return in_.peek() == std::char_traits<char>::eof();
    }

private:
    std::string path_;
    std::ifstream in_;
    uint64_t offset_ = 0;
};

class Writer {
public:
    explicit Writer(const std::string& path) : path_(path), out_(path, std::ios::binary | std::ios::trunc) {
        if (!out_) fail(ErrorCode::Io, "cannot open file for writing: " + path);
    }

    void write_bytes(const void* src, size_t n) {
        out_.write(static_cast<const char*>(src), static_cast<std::streamsize>(n));
    }

    template <typename T>
    void write(T value) {
        write_bytes(&value, sizeof(T));
    }

    template <typename T>
    void write_array(const T* src, size_t count) {
        write_bytes(src, count * sizeof(T));
    }

    void write_magic(const char magic[4]) { write_bytes(magic, 4); }

    void close() {
        out_.flush();
        if (!out_) fail(ErrorCode::Io, "write failed: " + path_);
        out_.close();
    }

private:
    std::string path_;
    std::ofstream out_;
};

} // namespace qar::binio
