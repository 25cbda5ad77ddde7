#include "rfusion/container.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "rfusion/error.hpp"

namespace rfusion {

namespace {

constexpr char kMagic[8] = {'R', 'F', 'U', 'S', 'I', 'O', 'N', '\0'};

template <typename U>
void put_le(std::string& out, U v) {
  for (std::size_t i = 0; i < sizeof(U); ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_string(std::string& out, const std::string& s) {
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(s.size()));
  out += s;
}

class Reader {
 public:
  explicit Reader(const std::string& bytes) : bytes_(bytes) {}

  template <typename U>
  U le() {
    need(sizeof(U));
    U v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) {
      v |= static_cast<U>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    }
    pos_ += sizeof(U);
    return v;
  }

  std::string string() {
    const auto n = le<std::uint32_t>();
    need(n);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) throw DataError("container truncated at byte " + std::to_string(pos_));
  }

  bool done() const { return pos_ == bytes_.size(); }
  std::size_t pos() const { return pos_; }
  void skip(std::size_t n) { pos_ += n; }

 private:
  const std::string& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

const NamedMatrix& Container::matrix(const std::string& name) const {
  for (const auto& m : matrices)
    if (m.name == name) return m;
  throw DataError("container has no matrix '" + name + "'");
}

const std::string& Container::meta(const std::string& key) const {
  const auto it = metadata.find(key);
  if (it == metadata.end()) throw DataError("container has no metadata key '" + key + "'");
  return it->second;
}

std::string encode_container(const Container& c) {
  std::string out(kMagic, sizeof kMagic);
  put_le<std::uint32_t>(out, kContainerVersion);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(c.kind));
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(c.metadata.size()));
  for (const auto& [k, v] : c.metadata) {
    put_string(out, k);
    put_string(out, v);
  }
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(c.matrices.size()));
  for (const auto& m : c.matrices) {
    if (m.data.size() != m.rows * m.cols) {
      throw ContractError("matrix '" + m.name + "' holds " + std::to_string(m.data.size()) +
                          " values for shape " + std::to_string(m.rows) + "x" + std::to_string(m.cols));
    }
    put_string(out, m.name);
    put_le<std::uint64_t>(out, m.rows);
    put_le<std::uint64_t>(out, m.cols);
    for (double x : m.data) put_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(x));
  }
  return out;
}

Container decode_container(const std::string& bytes) {
  Reader r(bytes);
  r.need(sizeof kMagic);
  if (std::memcmp(bytes.data(), kMagic, sizeof kMagic) != 0) throw DataError("not an rfusion container (bad magic)");
  r.skip(sizeof kMagic);
  const auto version = r.le<std::uint32_t>();
  if (version != kContainerVersion) {
    throw DataError("unsupported container version " + std::to_string(version));
  }
  Container c;
  const auto kind = r.le<std::uint32_t>();
  if (kind != 1 && kind != 2) throw DataError("unknown container kind " + std::to_string(kind));
  c.kind = static_cast<ContainerKind>(kind);
  const auto n_meta = r.le<std::uint32_t>();
  for (std::uint32_t i = 0; i < n_meta; ++i) {
    std::string k = r.string();
    c.metadata[k] = r.string();
  }
  const auto n_mat = r.le<std::uint32_t>();
  for (std::uint32_t i = 0; i < n_mat; ++i) {
    NamedMatrix m;
    m.name = r.string();
    m.rows = r.le<std::uint64_t>();
    m.cols = r.le<std::uint64_t>();
    if (m.cols != 0 && m.rows > (bytes.size() / 8) / m.cols) throw DataError("matrix '" + m.name + "' is truncated");
    m.data.resize(m.rows * m.cols);
    r.need(8 * m.data.size());
    for (auto& x : m.data) x = std::bit_cast<double>(r.le<std::uint64_t>());
    c.matrices.push_back(std::move(m));
  }
  if (!r.done()) throw DataError("trailing bytes after container payload");
  return c;
}

void save_container(const std::filesystem::path& path, const Container& c) {
  const std::string bytes = encode_container(c);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw DataError("cannot write " + path.string());
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw DataError("write failed for " + path.string());
}

Container load_container(const std::filesystem::path& path, ContainerKind expected) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot read " + path.string());
  const std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  Container c = decode_container(bytes);
  if (c.kind != expected) {
    throw DataError(path.string() + " is a " + (c.kind == ContainerKind::dataset ? "dataset" : "checkpoint") +
                    ", expected a " + (expected == ContainerKind::dataset ? "dataset" : "checkpoint"));
  }
  return c;
}

}  // namespace rfusion
