#include "mtsd/checksum.hpp"

#include <cstring>
#include <fstream>
#include <sstream>
#include <vector>

namespace mtsd {

std::uint64_t fnv1a(std::span<const unsigned char> bytes, std::uint64_t h) {
  for (unsigned char b : bytes) {
    h ^= b;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t checksum_doubles(std::span<const double> values, std::uint64_t h) {
  for (double v : values) {
    unsigned char buf[sizeof(double)];
    std::memcpy(buf, &v, sizeof(double));
    h = fnv1a({buf, sizeof(double)}, h);
  }
  return h;
}

std::uint64_t checksum_model(const MultitaskModel& model) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const Tensor* t : model.parameters()) h = checksum_doubles(t->data, h);
  return h;
}

std::uint64_t checksum_ensemble(std::span<const MultitaskModel> members) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const MultitaskModel& m : members) {
    const std::uint64_t mh = checksum_model(m);
    unsigned char buf[sizeof(mh)];
    std::memcpy(buf, &mh, sizeof(mh));
    h = fnv1a({buf, sizeof(mh)}, h);
  }
  return h;
}

std::uint64_t checksum_file(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw std::runtime_error("checksum_file: cannot read " + file.string());
  std::vector<unsigned char> buf(1 << 16);
  std::uint64_t h = 0xcbf29ce484222325ULL;
  while (in) {
    in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    h = fnv1a({buf.data(), static_cast<std::size_t>(in.gcount())}, h);
  }
  return h;
}

std::string checksum_hex(std::uint64_t h) {
  std::ostringstream os;
  os << std::hex << h;
  return os.str();
}

}  // namespace mtsd
