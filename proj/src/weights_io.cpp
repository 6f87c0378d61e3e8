#include "shapeseg/weights_io.hpp"

#include <bit>
#include <cstdint>
#include <fstream>
#include <sstream>

#include "shapeseg/error.hpp"

namespace shapeseg {
namespace {

constexpr char kMagic[] = "SSLW1\n";

void put_le64(std::ostream& os, double v) {
  const auto bits = std::bit_cast<std::uint64_t>(v);
  char bytes[8];
  for (int i = 0; i < 8; ++i) bytes[i] = static_cast<char>((bits >> (8 * i)) & 0xFF);
  os.write(bytes, 8);
}

double get_le64(const unsigned char* p) {
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  return std::bit_cast<double>(bits);
}

}  // namespace

void write_weight_file(const std::filesystem::path& path, const std::vector<NamedArray>& arrays) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open " + path.string() + " for writing");
  os.write(kMagic, sizeof(kMagic) - 1);
  for (const auto& a : arrays) {
    if (a.name.empty() || a.name.find_first_of(" \t\n") != std::string::npos)
      throw FormatError("array name '" + a.name + "' is not a single token");
    if (shape_numel(a.shape) != a.values.size()) throw FormatError("array " + a.name + " size disagrees with shape");
    os << a.name << ' ' << a.shape.size();
    for (auto d : a.shape) os << ' ' << d;
    os << '\n';
    for (double v : a.values) put_le64(os, v);
  }
  if (!os) throw IoError("write failed for " + path.string());
}

std::vector<NamedArray> read_weight_file(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());

  const std::string magic(kMagic);
  if (bytes.compare(0, magic.size(), magic) != 0) throw FormatError(path.string() + ": bad magic");
  std::size_t pos = magic.size();
  std::vector<NamedArray> out;
  while (pos < bytes.size()) {
    const std::size_t eol = bytes.find('\n', pos);
    if (eol == std::string::npos) throw FormatError(path.string() + ": truncated header");
    std::istringstream header(bytes.substr(pos, eol - pos));
    NamedArray a;
    std::size_t ndim = 0;
    if (!(header >> a.name >> ndim) || ndim == 0 || ndim > 8)
      throw FormatError(path.string() + ": malformed header '" + bytes.substr(pos, eol - pos) + "'");
    a.shape.resize(ndim);
    for (auto& d : a.shape)
      if (!(header >> d) || d == 0) throw FormatError(path.string() + ": bad dimension in header of " + a.name);
    std::string extra;
    if (header >> extra) throw FormatError(path.string() + ": trailing tokens in header of " + a.name);
    pos = eol + 1;
    const std::size_t n = shape_numel(a.shape);
    if (bytes.size() - pos < n * 8) throw FormatError(path.string() + ": truncated data for " + a.name);
    a.values.resize(n);
    const auto* p = reinterpret_cast<const unsigned char*>(bytes.data() + pos);
    for (std::size_t i = 0; i < n; ++i) a.values[i] = get_le64(p + 8 * i);
    pos += n * 8;
    out.push_back(std::move(a));
  }
  return out;
}

void expect_layout(const std::vector<NamedArray>& arrays, const std::vector<NamedArray>& expected) {
  if (arrays.size() != expected.size())
    throw FormatError("expected " + std::to_string(expected.size()) + " arrays, file has " +
                      std::to_string(arrays.size()));
  for (std::size_t i = 0; i < arrays.size(); ++i) {
    if (arrays[i].name != expected[i].name)
      throw FormatError("array " + std::to_string(i) + " is '" + arrays[i].name + "', expected '" +
                        expected[i].name + "'");
    if (arrays[i].shape != expected[i].shape)
      throw FormatError("array " + arrays[i].name + " has shape " + shape_string(arrays[i].shape) +
                        ", expected " + shape_string(expected[i].shape));
  }
}

}  // namespace shapeseg
