#include "core/archive.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>

namespace cantm::core {

namespace {

constexpr char kMagic[8] = {'C', 'N', 'T', 'M', 'A', 'R', 'C', '1'};

void write_u64(std::ostream& os, std::uint64_t x) {
  char buf[8];
  for (int i = 0; i < 8; ++i) buf[i] = static_cast<char>((x >> (8 * i)) & 0xff);
  os.write(buf, 8);
}

void write_u32(std::ostream& os, std::uint32_t x) {
  char buf[4];
  for (int i = 0; i < 4; ++i) buf[i] = static_cast<char>((x >> (8 * i)) & 0xff);
  os.write(buf, 4);
}

std::uint64_t read_u64(std::istream& is) {
  unsigned char buf[8];
  if (!is.read(reinterpret_cast<char*>(buf), 8))
    throw std::runtime_error("archive: truncated file");
  std::uint64_t x = 0;
  for (int i = 0; i < 8; ++i) x |= static_cast<std::uint64_t>(buf[i]) << (8 * i);
  return x;
}

std::uint32_t read_u32(std::istream& is) {
  unsigned char buf[4];
  if (!is.read(reinterpret_cast<char*>(buf), 4))
    throw std::runtime_error("archive: truncated file");
  std::uint32_t x = 0;
  for (int i = 0; i < 4; ++i) x |= static_cast<std::uint32_t>(buf[i]) << (8 * i);
  return x;
}

}  // namespace

void Archive::save(const std::string& path) const {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("archive: cannot open for write: " + path);
  os.write(kMagic, 8);
  write_u64(os, tensors.size() + strings.size());
  for (const auto& [key, t] : tensors) {
    os.put(0);
    write_u32(os, static_cast<std::uint32_t>(key.size()));
    os.write(key.data(), static_cast<std::streamsize>(key.size()));
    write_u64(os, static_cast<std::uint64_t>(t.rows));
    write_u64(os, static_cast<std::uint64_t>(t.cols));
    os.write(reinterpret_cast<const char*>(t.v.data()),
             static_cast<std::streamsize>(t.v.size() * sizeof(double)));
  }
  for (const auto& [key, s] : strings) {
    os.put(1);
    write_u32(os, static_cast<std::uint32_t>(key.size()));
    os.write(key.data(), static_cast<std::streamsize>(key.size()));
    write_u64(os, s.size());
    os.write(s.data(), static_cast<std::streamsize>(s.size()));
  }
  if (!os) throw std::runtime_error("archive: write failed: " + path);
}

Archive Archive::load(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("archive: cannot open: " + path);
  char magic[8];
  if (!is.read(magic, 8) || std::memcmp(magic, kMagic, 8) != 0)
    throw std::runtime_error("archive: bad magic in " + path);
  Archive out;
  std::uint64_t count = read_u64(is);
  for (std::uint64_t e = 0; e < count; ++e) {
    int kind = is.get();
    if (kind != 0 && kind != 1)
      throw std::runtime_error("archive: corrupt entry in " + path);
    std::uint32_t klen = read_u32(is);
    std::string key(klen, '\0');
    if (!is.read(key.data(), klen))
      throw std::runtime_error("archive: truncated key in " + path);
    if (kind == 0) {
      std::uint64_t rows = read_u64(is);
      std::uint64_t cols = read_u64(is);
      if (rows > (1u << 26) || cols > (1u << 26))
        throw std::runtime_error("archive: implausible shape in " + path);
      Tensor t(static_cast<int>(rows), static_cast<int>(cols));
      if (!is.read(reinterpret_cast<char*>(t.v.data()),
                   static_cast<std::streamsize>(t.v.size() * sizeof(double))))
        throw std::runtime_error("archive: truncated tensor '" + key + "' in " +
                                 path);
      out.tensors[key] = std::move(t);
    } else {
      std::uint64_t len = read_u64(is);
      std::string s(len, '\0');
      if (!is.read(s.data(), static_cast<std::streamsize>(len)))
        throw std::runtime_error("archive: truncated string '" + key +
                                 "' in " + path);
      out.strings[key] = std::move(s);
    }
  }
  return out;
}

const Tensor& Archive::tensor(const std::string& key) const {
  auto it = tensors.find(key);
  if (it == tensors.end())
    throw std::runtime_error("archive: missing tensor '" + key + "'");
  return it->second;
}

const std::string& Archive::string(const std::string& key) const {
  auto it = strings.find(key);
  if (it == strings.end())
    throw std::runtime_error("archive: missing string '" + key + "'");
  return it->second;
}

const Tensor& Archive::tensor_checked(const std::string& key, int rows,
                                      int cols) const {
  const Tensor& t = tensor(key);
  if (t.rows != rows || t.cols != cols)
    throw std::runtime_error("archive: tensor '" + key + "' has shape " +
                             std::to_string(t.rows) + "x" +
                             std::to_string(t.cols) + ", expected " +
                             std::to_string(rows) + "x" +
                             std::to_string(cols));
  return t;
}

}  // namespace cantm::core
