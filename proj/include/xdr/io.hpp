#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace xdr::io {

// Little-endian primitives with hard failure on short reads. All on-disk
// artifacts go through these, so files are identical across runs and hosts.

void write_bytes(std::ostream& out, const void* data, std::size_t n);
void write_u32(std::ostream& out, std::uint32_t v);
void write_u64(std::ostream& out, std::uint64_t v);
void write_f32(std::ostream& out, float v);
void write_f64(std::ostream& out, double v);
void write_string(std::ostream& out, const std::string& s);  // u32 length + bytes

void read_bytes(std::istream& in, void* data, std::size_t n,
                const char* what);
std::uint32_t read_u32(std::istream& in, const char* what);
std::uint64_t read_u64(std::istream& in, const char* what);
float read_f32(std::istream& in, const char* what);
double read_f64(std::istream& in, const char* what);
std::string read_string(std::istream& in, const char* what);

void expect_magic(std::istream& in, const char* magic, const char* what);
void write_magic(std::ostream& out, const char* magic);

std::ofstream open_out(const std::string& path, bool binary);
std::ifstream open_in(const std::string& path, bool binary);

}  // namespace xdr::io
