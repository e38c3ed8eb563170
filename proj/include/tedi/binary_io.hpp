#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <type_traits>
#include <vector>

#include "tedi/errors.hpp"

namespace tedi::io {

// Little-endian POD stream used by the dataset cache and checkpoints.
class BinaryWriter {
 public:
  explicit BinaryWriter(std::ostream& os) : os_(os) {}

  template <class T>
    requires std::is_trivially_copyable_v<T>
  void pod(const T& v) {
    os_.write(reinterpret_cast<const char*>(&v), sizeof(T));
  }

  void string(const std::string& s) {
    pod<std::uint64_t>(s.size());
    os_.write(s.data(), static_cast<std::streamsize>(s.size()));
  }

  template <class T>
    requires std::is_trivially_copyable_v<T>
  void array(const T* data, std::size_t n) {
    pod<std::uint64_t>(n);
    os_.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(n * sizeof(T)));
  }

  void magic(const char (&tag)[9], std::uint32_t version) {
    os_.write(tag, 8);
    pod(version);
  }

 private:
  std::ostream& os_;
};

class BinaryReader {
 public:
  BinaryReader(std::istream& is, std::string what) : is_(is), what_(std::move(what)) {}

  template <class T>
    requires std::is_trivially_copyable_v<T>
  T pod() {
    T v;
    read(reinterpret_cast<char*>(&v), sizeof(T));
    return v;
  }

  std::string string() {
    const auto n = pod<std::uint64_t>();
    guard(n);
    std::string s(n, '\0');
    read(s.data(), n);
    return s;
  }

  template <class T>
    requires std::is_trivially_copyable_v<T>
  std::vector<T> array() {
    const auto n = pod<std::uint64_t>();
    guard(n * sizeof(T));
    std::vector<T> v(n);
    read(reinterpret_cast<char*>(v.data()), n * sizeof(T));
    return v;
  }

  // Returns the stored version; throws if the tag does not match.
  std::uint32_t magic(const char (&tag)[9]) {
    char got[8];
    read(got, 8);
    if (std::memcmp(got, tag, 8) != 0) throw ParseError(what_ + ": bad magic header");
    return pod<std::uint32_t>();
  }

 private:
  void read(char* dst, std::size_t n) {
    is_.read(dst, static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(is_.gcount()) != n) throw ParseError(what_ + ": truncated file");
  }
  void guard(std::uint64_t bytes) {
    if (bytes > (std::uint64_t{1} << 36)) throw ParseError(what_ + ": implausible record size");
  }

  std::istream& is_;
  std::string what_;
};

// Write to `path.tmp` then rename over `path`.
template <class Fn>
void atomic_write(const std::filesystem::path& path, Fn&& fn) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw Error("cannot open " + tmp.string() + " for writing");
    fn(os);
    os.flush();
    if (!os) throw Error("write failed: " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace tedi::io
