#include "xdr/serialize.hpp"

#include <fstream>
#include <stdexcept>

#include "xdr/io.hpp"

namespace xdr {

namespace {
constexpr char kFeatureMagic[] = "XDRFEA1\n";
constexpr char kCheckpointMagic[] = "XDRCKP1\n";

void write_f32_matrix(std::ostream& out, const Matrix& m) {
  io::write_u64(out, m.rows);
  io::write_u64(out, m.cols);
  for (double v : m.data) io::write_f32(out, static_cast<float>(v));
}

Matrix read_f32_matrix(std::istream& in, const char* what) {
  std::uint64_t r = io::read_u64(in, what);
  std::uint64_t c = io::read_u64(in, what);
  Matrix m(r, c);
  for (auto& v : m.data) v = static_cast<double>(io::read_f32(in, what));
  return m;
}
}  // namespace

void quantize_f32(Matrix& m) {
  for (auto& v : m.data) v = static_cast<double>(static_cast<float>(v));
}

void export_features(const TextualFeatures& f, const std::string& path) {
  auto out = io::open_out(path, /*binary=*/true);
  io::write_magic(out, kFeatureMagic);
  write_f32_matrix(out, f.user);
  write_f32_matrix(out, f.item);
}

TextualFeatures import_features(const std::string& path) {
  auto in = io::open_in(path, /*binary=*/true);
  io::expect_magic(in, kFeatureMagic, "feature file");
  TextualFeatures f;
  f.user = read_f32_matrix(in, "user features");
  f.item = read_f32_matrix(in, "item features");
  if (f.user.cols != f.item.cols)
    throw std::runtime_error(path + ": user/item feature widths differ");
  return f;
}

const Matrix* Checkpoint::find(const std::string& name) const {
  for (const auto& [n, m] : blocks)
    if (n == name) return &m;
  return nullptr;
}

const Matrix& Checkpoint::require(const std::string& name) const {
  const Matrix* m = find(name);
  if (!m) throw std::runtime_error("checkpoint missing block '" + name + "'");
  return *m;
}

void Checkpoint::add(std::string name, Matrix m) {
  blocks.emplace_back(std::move(name), std::move(m));
}

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  auto out = io::open_out(path, /*binary=*/true);
  io::write_magic(out, kCheckpointMagic);
  io::write_string(out, ckpt.kind);
  io::write_string(out, ckpt.config_echo);
  io::write_u64(out, ckpt.seed);
  io::write_u32(out, static_cast<std::uint32_t>(ckpt.blocks.size()));
  for (const auto& [name, m] : ckpt.blocks) {
    io::write_string(out, name);
    io::write_u64(out, m.rows);
    io::write_u64(out, m.cols);
    for (double v : m.data) io::write_f64(out, v);
  }
}

Checkpoint load_checkpoint(const std::string& path) {
  auto in = io::open_in(path, /*binary=*/true);
  io::expect_magic(in, kCheckpointMagic, "checkpoint");
  Checkpoint c;
  c.kind = io::read_string(in, "checkpoint kind");
  c.config_echo = io::read_string(in, "checkpoint config");
  c.seed = io::read_u64(in, "checkpoint seed");
  std::uint32_t n = io::read_u32(in, "checkpoint block count");
  for (std::uint32_t b = 0; b < n; ++b) {
    std::string name = io::read_string(in, "block name");
    std::uint64_t r = io::read_u64(in, "block rows");
    std::uint64_t cc = io::read_u64(in, "block cols");
    Matrix m(r, cc);
    for (auto& v : m.data) v = io::read_f64(in, "block data");
    c.add(std::move(name), std::move(m));
  }
  return c;
}

}  // namespace xdr
