#include "xdr/io.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>

namespace xdr::io {

namespace {
[[noreturn]] void fail(const char* what) {
  throw std::runtime_error(std::string("truncated or corrupt input while reading ") + what);
}
}  // namespace

void write_bytes(std::ostream& out, const void* data, std::size_t n) {
  out.write(static_cast<const char*>(data), static_cast<std::streamsize>(n));
}

void write_u32(std::ostream& out, std::uint32_t v) { write_bytes(out, &v, 4); }
void write_u64(std::ostream& out, std::uint64_t v) { write_bytes(out, &v, 8); }
void write_f32(std::ostream& out, float v) { write_bytes(out, &v, 4); }
void write_f64(std::ostream& out, double v) { write_bytes(out, &v, 8); }

void write_string(std::ostream& out, const std::string& s) {
  write_u32(out, static_cast<std::uint32_t>(s.size()));
  write_bytes(out, s.data(), s.size());
}

void read_bytes(std::istream& in, void* data, std::size_t n, const char* what) {
  in.read(static_cast<char*>(data), static_cast<std::streamsize>(n));
  if (static_cast<std::size_t>(in.gcount()) != n) fail(what);
}

std::uint32_t read_u32(std::istream& in, const char* what) {
  std::uint32_t v;
  read_bytes(in, &v, 4, what);
  return v;
}

std::uint64_t read_u64(std::istream& in, const char* what) {
  std::uint64_t v;
  read_bytes(in, &v, 8, what);
  return v;
}

float read_f32(std::istream& in, const char* what) {
  float v;
  read_bytes(in, &v, 4, what);
  return v;
}

double read_f64(std::istream& in, const char* what) {
  double v;
  read_bytes(in, &v, 8, what);
  return v;
}

std::string read_string(std::istream& in, const char* what) {
  std::uint32_t n = read_u32(in, what);
  std::string s(n, '\0');
  if (n > 0) read_bytes(in, s.data(), n, what);
  return s;
}

void write_magic(std::ostream& out, const char* magic) {
  write_bytes(out, magic, std::strlen(magic));
}

void expect_magic(std::istream& in, const char* magic, const char* what) {
  std::size_t n = std::strlen(magic);
  std::string got(n, '\0');
  read_bytes(in, got.data(), n, what);
  if (got != magic)
    throw std::runtime_error(std::string(what) + ": bad magic, not a recognized file");
}

std::ofstream open_out(const std::string& path, bool binary) {
  std::ofstream out(path, binary ? std::ios::binary : std::ios::out);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  return out;
}

std::ifstream open_in(const std::string& path, bool binary) {
  std::ifstream in(path, binary ? std::ios::binary : std::ios::in);
  if (!in) throw std::runtime_error("cannot open for reading: " + path);
  return in;
}

}  // namespace xdr::io
