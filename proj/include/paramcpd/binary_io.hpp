#pragma once

#include <bit>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>

#include "paramcpd/errors.hpp"

namespace paramcpd {

static_assert(std::endian::native == std::endian::little,
              "binary formats are defined as little-endian");

// Thin wrappers over fstream for the little-endian record formats.
class BinaryWriter {
public:
    explicit BinaryWriter(const std::filesystem::path& path)
        : path_(path), out_(path, std::ios::binary | std::ios::trunc) {
        if (!out_) throw DataError("cannot open " + path.string() + " for writing");
    }
    void bytes(const void* p, std::size_t n) { out_.write(static_cast<const char*>(p), n); }
    void u32(std::uint32_t v) { bytes(&v, sizeof v); }
    void u64(std::uint64_t v) { bytes(&v, sizeof v); }
    void f64(double v) { bytes(&v, sizeof v); }
    void finish() {
        out_.flush();
        if (!out_) throw DataError("write failed: " + path_.string());
    }

private:
    std::filesystem::path path_;
    std::ofstream out_;
};

class BinaryReader {
public:
    explicit BinaryReader(const std::filesystem::path& path)
        : path_(path), in_(path, std::ios::binary) {
        if (!in_) throw DataError("cannot open " + path.string());
    }
    void bytes(void* p, std::size_t n) {
        in_.read(static_cast<char*>(p), n);
        if (in_.gcount() != static_cast<std::streamsize>(n)) {
            throw DataError(path_.string() + ": truncated file");
        }
    }
    std::uint32_t u32() { std::uint32_t v; bytes(&v, sizeof v); return v; }
    std::uint64_t u64() { std::uint64_t v; bytes(&v, sizeof v); return v; }
    double f64() { double v; bytes(&v, sizeof v); return v; }
    void expect_end() {
        if (in_.peek() != std::char_traits<char>::eof()) {
            throw DataError(path_.string() + ": trailing bytes after record");
        }
    }

private:
    std::filesystem::path path_;
    std::ifstream in_;
};

}  // namespace paramcpd
